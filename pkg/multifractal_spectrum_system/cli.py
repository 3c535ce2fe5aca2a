"""
多重分形谱计算 命令行入口

子命令:
  validate   校验迭代函数系统 / 势函数 / 共轭对
  spectrum   压力曲线、Legendre谱与谱范围
  staircase  分布函数阶梯
  hoelder    点态Hölder指数估计
  coarse     粗粒化谱并与 t(q) 比较
  conjugacy  共轭映射 Θ 的取样与Hölder谱

退出码: 0 成功, 1 I/O 错误, 2 校验错误, 3 数值错误
"""
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from artifact_writer import TOOL_VERSION, config_hash, write_csv, write_json
from conjugacy import (ConjugacyPair, attractor_samples, conjugacy_spectrum,
                       functional_equation_residual, theta, theta_as_distribution, theta_frame,
                       validate_conjugacy_pair)
from distribution import (coarse_frame, coarse_spectrum, hoelder_frame, pointwise_hoelder,
                          staircase, staircase_frame)
from exceptions import EXIT_IO, EXIT_OK, MultifractalError, SpecValidationError
from ifs_geometry import distortion_probe, require_valid_ifs, validate_ifs
from multifractal import (MultifractalSettings, PressureCurve, PressureEquationSolver, SpectrumCurve,
                          SpectrumRange, classify_spectrum, hoelder_spectrum)
from scene_config import SceneConfig, load_scene
from symbolic_core import PotentialSpec
from thermodynamics import CombinedPotential, build_gibbs_measure, pressure_periodic

logger = logging.getLogger(__name__)

THREADS_ENV = "MULTIFRAC_THREADS"
PERIODIC_SLACK = 1e-10
COMMANDS = ("validate", "spectrum", "staircase", "hoelder", "coarse", "conjugacy")


class RunContext:
    """一次命令运行的共享信息: 场景、输出目录、线程数与元数据"""

    def __init__(self, scene: SceneConfig, command: str, out_dir: str, threads: int,
                 depth_override: Optional[int] = None):
        self.scene = scene
        self.command = command
        self.out_dir = out_dir
        self.threads = threads
        self.measure_depth = depth_override if depth_override is not None else scene.depths.measure
        self.config_hash = config_hash(scene.raw)

    @property
    def settings(self) -> MultifractalSettings:
        return MultifractalSettings(depth=self.measure_depth, threads=self.threads)

    @property
    def phi(self) -> PotentialSpec:
        return PotentialSpec.geometric(self.scene.ifs)

    def path(self, filename: str) -> str:
        return os.path.join(self.out_dir, filename)

    def metadata(self, normalization: Optional[float] = None) -> Dict[str, str]:
        meta = {"tool_version": TOOL_VERSION, "config_hash": self.config_hash}
        if normalization is not None:
            meta["normalization"] = f"psi <- psi - P(psi), P(psi)={normalization:.17g}"
        else:
            meta["normalization"] = "none"
        meta["command"] = self.command
        return meta

    def measure(self):
        return build_gibbs_measure(self.scene.potential, self.measure_depth)


def _spectrum_frames(spectrum: SpectrumCurve, errors: np.ndarray):
    pressure = pd.DataFrame({"beta": spectrum.betas, "t": spectrum.ts, "alpha": spectrum.alphas,
                             "f": spectrum.f_raw, "err": errors})
    legendre = pd.DataFrame({"beta": spectrum.betas, "t": spectrum.ts, "alpha": spectrum.alphas,
                             "f": spectrum.f, "err": spectrum.tolerances})
    return pressure, legendre


def _range_payload(curve: PressureCurve, spectrum: SpectrumCurve, range_estimate: SpectrumRange) -> Dict:
    label = classify_spectrum(range_estimate, spectrum.apex_f)
    return {
        "alpha_minus": range_estimate.alpha_minus,
        "alpha_plus": range_estimate.alpha_plus,
        "cycle": {"length": range_estimate.cycle_length, "alpha_minus": range_estimate.cycle[0],
                  "alpha_plus": range_estimate.cycle[1]},
        "asymptotic": {"beta_max": range_estimate.beta_max, "alpha_minus": range_estimate.asymptotic[0],
                       "alpha_plus": range_estimate.asymptotic[1]},
        "disagreement": range_estimate.disagreement,
        "disagreement_flag": range_estimate.flagged,
        "classification": label.label,
        "degenerate_consistent": label.consistent,
        "apex": {"alpha": spectrum.apex_alpha, "f": spectrum.apex_f},
        "legendre_consistent": spectrum.legendre_consistent,
        "clamped_values": spectrum.clamped,
        "normalization": curve.normalization,
        "depth": curve.depth,
        "endpoints": "asymptotic",
    }


def _write_spectrum(ctx: RunContext, curve: PressureCurve, spectrum: SpectrumCurve,
                    range_estimate: SpectrumRange) -> Dict:
    pressure_frame, legendre_frame = _spectrum_frames(spectrum, curve.errors)
    meta = ctx.metadata(curve.normalization)
    write_csv(ctx.path("pressure.csv"), pressure_frame, meta)
    write_csv(ctx.path("spectrum.csv"), legendre_frame, meta)
    return _range_payload(curve, spectrum, range_estimate)


def cmd_validate(ctx: RunContext) -> int:
    """校验报告写入 validation.json; 任何失败返回 2"""
    scene = ctx.scene
    report = validate_ifs(scene.ifs)
    payload: Dict = {"ifs": report.to_dict()}
    failures: List[str] = list(report.errors)
    if report.passed:
        payload["ifs"]["distortion"] = {str(k): v for k, v in distortion_probe(scene.ifs, range(1, 9)).items()}
    if scene.ifs_g is not None:
        report_g = validate_ifs(scene.ifs_g)
        payload["ifs_g"] = report_g.to_dict()
        pair_errors = validate_conjugacy_pair(ConjugacyPair(scene.ifs, scene.ifs_g))
        payload["pair"] = {"passed": not pair_errors, "errors": list(pair_errors)}
        failures.extend(pair_errors)
    payload["potential"] = {"kind": scene.potential.kind, "alphabet_size": scene.potential.alphabet_size}
    payload["passed"] = not failures
    write_json(ctx.path("validation.json"), payload)
    if failures:
        raise SpecValidationError("; ".join(failures))
    print(f"✅ 校验通过: {scene.name}")
    return EXIT_OK


def _periodic_check(ctx: RunContext, curve: PressureCurve) -> Dict:
    """depths.pressure 上周期点配分和给出的 𝒫(t(β)φ + βψ) 上下界, β ∈ {0, 1} 且在网格上"""
    n = ctx.scene.depths.pressure
    psi = ctx.scene.potential.shifted(-curve.normalization)
    extension = 0 if ctx.scene.ifs.is_affine else 2
    brackets = []
    for beta in (0.0, 1.0):
        if not np.any(np.abs(curve.betas - beta) <= 1e-9):
            continue
        t = curve.t_at(beta)
        estimate = pressure_periodic(CombinedPotential(t, beta, ctx.phi, psi), n, extension)
        contains_zero = estimate.lower - PERIODIC_SLACK <= 0.0 <= estimate.upper + PERIODIC_SLACK
        if not contains_zero:
            logger.warning(f"⚠️ β={beta}: 周期点上下界 [{estimate.lower:.3e}, {estimate.upper:.3e}] 不含 0")
        brackets.append({"beta": beta, "t": t, "value": estimate.value, "lower": estimate.lower,
                         "upper": estimate.upper, "contains_zero": contains_zero})
    return {"depth": n, "extension": extension, "brackets": brackets}


def cmd_spectrum(ctx: RunContext) -> int:
    """pressure.csv + spectrum.csv + range.json (含 depths.pressure 上的周期点压力检查)"""
    scene = ctx.scene
    require_valid_ifs(scene.ifs)
    curve, spectrum, range_estimate = hoelder_spectrum(ctx.phi, scene.potential, scene.beta_grid.values(),
                                                       scene.cycle_length, ctx.settings, scene.beta_max)
    payload = _write_spectrum(ctx, curve, spectrum, range_estimate)
    payload["periodic_check"] = _periodic_check(ctx, curve)
    write_json(ctx.path("range.json"), payload)
    print(f"✅ 谱范围 [{payload['alpha_minus']:.6f}, {payload['alpha_plus']:.6f}], {payload['classification']}")
    return EXIT_OK


def cmd_staircase(ctx: RunContext) -> int:
    require_valid_ifs(ctx.scene.ifs)
    measure = ctx.measure()
    samples = staircase(measure, ctx.scene.ifs, ctx.scene.depths.staircase)
    F = np.array([s.F for s in samples])
    if np.any(np.diff(F) < 0):
        logger.warning("⚠️ 阶梯函数单调性检查未通过")
    write_csv(ctx.path("staircase.csv"), staircase_frame(samples), ctx.metadata(measure.pressure_shift))
    print(f"✅ 阶梯函数: {len(samples)} 个样本")
    return EXIT_OK


def cmd_hoelder(ctx: RunContext, xs: Optional[Sequence[float]] = None) -> int:
    """每个点写出 hoelder_<i>.csv, 汇总写入 hoelder.json"""
    require_valid_ifs(ctx.scene.ifs)
    measure = ctx.measure()
    schedule = ctx.scene.radius_schedule
    points = list(xs) if xs else list(ctx.scene.hoelder_points)
    summary = []
    for i, x in enumerate(points):
        estimate = pointwise_hoelder(measure, ctx.scene.ifs, x, schedule.r0, schedule.rho, schedule.K,
                                     schedule.window, schedule.depth)
        write_csv(ctx.path(f"hoelder_{i}.csv"), hoelder_frame(estimate), ctx.metadata(measure.pressure_shift))
        summary.append({"x": x, "liminf": estimate.liminf_est, "limsup": estimate.limsup_est,
                        "uncertainty": estimate.uncertainty, "depth": estimate.depth,
                        "gap_truncated": estimate.gap_truncated, "file": f"hoelder_{i}.csv"})
    write_json(ctx.path("hoelder.json"), {"points": summary, "window": schedule.window,
                                          "rho": schedule.rho, "r0": schedule.r0, "K": schedule.K})
    print(f"✅ Hölder估计: {len(points)} 个点")
    return EXIT_OK


def cmd_coarse(ctx: RunContext) -> int:
    """coarse.csv 以及与 t(q) 的比较 comparison.json"""
    require_valid_ifs(ctx.scene.ifs)
    measure = ctx.measure()
    result = coarse_spectrum(measure, ctx.scene.ifs, ctx.scene.depths.coarse, ctx.scene.q_grid)
    write_csv(ctx.path("coarse.csv"), coarse_frame(result), ctx.metadata(measure.pressure_shift))
    solver = PressureEquationSolver(ctx.phi, ctx.scene.potential, ctx.settings)
    ts = np.array([solver.solve(q).t for q in result.q])
    deviations = np.abs(result.T - ts)
    payload = {
        "q": result.q,
        "T_n": result.T,
        "t": ts,
        "deviation": deviations,
        "max_deviation": float(deviations.max()),
        "depth": result.depth,
    }
    write_json(ctx.path("comparison.json"), payload)
    print(f"✅ 粗粒化谱: max |T_n(q) − t(q)| = {payload['max_deviation']:.3e}")
    return EXIT_OK


def cmd_conjugacy(ctx: RunContext) -> int:
    """theta.csv + spectrum.csv (+ pressure.csv, range.json)"""
    scene = ctx.scene
    if scene.ifs_g is None:
        raise SpecValidationError("conjugacy 命令需要配置 ifs_g")
    pair = ConjugacyPair(scene.ifs, scene.ifs_g)
    errors = validate_conjugacy_pair(pair)
    if errors:
        raise SpecValidationError("; ".join(errors))
    n = scene.depths.theta
    xs = attractor_samples(pair, scene.conjugacy_samples, n, scene.seed)
    values = [theta(pair, float(x), n) for x in xs]
    meta = ctx.metadata()
    write_csv(ctx.path("theta.csv"), theta_frame(values), meta)
    checks = [theta_as_distribution(pair, float(x), n, ctx.measure_depth) for x in xs]
    functional = functional_equation_residual(pair, xs, n)
    curve, spectrum, range_estimate = conjugacy_spectrum(pair, scene.beta_grid.values(), scene.cycle_length,
                                                         ctx.settings, scene.beta_max)
    payload = _write_spectrum(ctx, curve, spectrum, range_estimate)
    payload["distribution_identity"] = {
        "max_residual": max(c.residual for c in checks),
        "within_bound": all(c.within_bound for c in checks),
    }
    payload["functional_equation"] = {
        "max_residual": functional.max_residual,
        "max_bound": functional.max_bound,
        "within_bound": functional.within_bound,
    }
    write_json(ctx.path("range.json"), payload)
    print(f"✅ 共轭映射: {len(values)} 个样本, 谱范围 [{payload['alpha_minus']:.6f}, {payload['alpha_plus']:.6f}]")
    return EXIT_OK


HANDLERS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "staircase": cmd_staircase,
    "hoelder": cmd_hoelder,
    "coarse": cmd_coarse,
    "conjugacy": cmd_conjugacy,
}


def _threads(value: Optional[int]) -> int:
    if value is not None:
        threads = value
    else:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(env)
        except ValueError:
            raise SpecValidationError(f"环境变量 {THREADS_ENV}={env!r} 不是整数")
    if threads < 1:
        raise SpecValidationError(f"线程数必须 ≥ 1, 实际为 {threads}")
    return threads


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multifractal",
        description="共形迭代函数系统的多重分形谱计算",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=f"{name} 子命令")
        sub.add_argument("--config", required=True, help="场景配置 JSON 文件")
        sub.add_argument("--out", default=None, help="输出目录 (缺省取配置中的 outputs.dir)")
        sub.add_argument("--threads", type=int, default=None,
                         help=f"β 网格并行线程数 (缺省读取 {THREADS_ENV})")
        sub.add_argument("--depth-override", type=int, default=None,
                         help="覆盖近似深度 m")
        sub.add_argument("--verbose", action="store_true", help="输出 INFO 级日志")
        if name == "hoelder":
            sub.add_argument("--x", type=float, nargs="+", default=None, help="求值点列表")
    return parser


def _fail(kind: str, code: int, reason: str) -> int:
    reason = " ".join(str(reason).split())
    print(f"error={kind} exit={code} reason={reason}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        scene = load_scene(args.config)
        if args.depth_override is not None and args.depth_override < 1:
            raise SpecValidationError(f"--depth-override 必须 ≥ 1, 实际为 {args.depth_override}")
        out_dir = args.out or scene.output_dir
        ctx = RunContext(scene, args.command, out_dir, _threads(args.threads), args.depth_override)
        if args.command == "hoelder":
            return cmd_hoelder(ctx, args.x)
        return HANDLERS[args.command](ctx)
    except MultifractalError as exc:
        return _fail(exc.kind, exc.exit_code, str(exc))
    except OSError as exc:
        return _fail("io", EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
