"""
多重分形谱计算器
求解压力方程 P(t(β)φ + βψ) = 0, 计算 α(β) = −t'(β),
Legendre 变换 f(α) = −t*(−α) 以及谱的范围 [α₋, α₊]
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from exceptions import BracketError, NumericalError, SpecValidationError
from symbolic_core import PotentialSpec, periodic_sums
from thermodynamics import (DEFAULT_POWER_SETTINGS, CombinedPotential, PowerIterationSettings,
                            combined_tables, equilibrium_integrals, log_spectral_radius,
                            normalize_potential, resolve_depth)

logger = logging.getLogger(__name__)

# 数值容差
CONVEXITY_TOL = 1e-8
DEGENERATE_WIDTH = 1e-6
DEGENERATE_APEX_TOL = 1e-5
RANGE_DISAGREEMENT_FLAG = 1e-3


@dataclass(frozen=True)
class MultifractalSettings:
    """
    求解器配置

    depth: 局部常值近似深度 m, None 表示取精确深度或缺省深度
    t_tol: t 的二分容差
    h: α 交叉检验的中心差分步长
    threads: β 网格扫描的线程数
    """
    depth: Optional[int] = None
    pressure_tol: float = 1e-10
    t_tol: float = 1e-12
    h: float = 1e-4
    threads: int = 1
    max_bracket_expansions: int = 60
    power: PowerIterationSettings = DEFAULT_POWER_SETTINGS


DEFAULT_MULTIFRACTAL_SETTINGS = MultifractalSettings()


def beta_grid(beta_min: float = -20.0, beta_max: float = 20.0, step: float = 0.1) -> np.ndarray:
    """等距 β 网格, 取整到 12 位小数使 0 和 1 精确落在网格上"""
    if not step > 0:
        raise SpecValidationError(f"β 网格步长必须为正, 实际为 {step}")
    if beta_max < beta_min:
        raise SpecValidationError(f"β 网格上限 {beta_max} 小于下限 {beta_min}")
    count = int(math.floor((beta_max - beta_min) / step + 1e-9)) + 1
    return np.round(beta_min + step * np.arange(count), 12)


@dataclass(frozen=True)
class TSolution:
    beta: float
    t: float
    error: float
    lower: float
    upper: float
    residual: float
    depth: int


@dataclass(frozen=True)
class AlphaEstimate:
    beta: float
    alpha: float
    crosscheck: float

    @property
    def discrepancy(self) -> float:
        return abs(self.alpha - self.crosscheck)


@dataclass(frozen=True, eq=False)
class PressureCurve:
    """β 网格上的 t(β), α(β) 及误差界"""
    betas: np.ndarray
    ts: np.ndarray
    alphas: np.ndarray
    crosschecks: np.ndarray
    errors: np.ndarray
    degenerate: bool
    normalization: float
    depth: int

    def t_at(self, beta: float) -> float:
        index = int(np.argmin(np.abs(self.betas - beta)))
        if abs(self.betas[index] - beta) > 1e-9:
            raise SpecValidationError(f"β={beta} 不在网格上")
        return float(self.ts[index])

    def alpha_at(self, beta: float) -> float:
        index = int(np.argmin(np.abs(self.betas - beta)))
        if abs(self.betas[index] - beta) > 1e-9:
            raise SpecValidationError(f"β={beta} 不在网格上")
        return float(self.alphas[index])


@dataclass(frozen=True)
class SpectrumRange:
    alpha_minus: float
    alpha_plus: float
    cycle: Tuple[float, float]
    asymptotic: Tuple[float, float]
    cycle_length: int
    beta_max: float
    disagreement: float

    def __post_init__(self):
        if self.alpha_minus > self.alpha_plus:
            raise NumericalError(f"谱范围颠倒: α₋={self.alpha_minus} > α₊={self.alpha_plus}")

    @property
    def width(self) -> float:
        return self.alpha_plus - self.alpha_minus

    @property
    def flagged(self) -> bool:
        return self.disagreement > RANGE_DISAGREEMENT_FLAG


@dataclass(frozen=True, eq=False)
class SpectrumCurve:
    """
    Legendre 谱

    f: 报告值 (截断到 ≥ 0); f_raw: 参数化原始值 t + βα; f_direct: 网格上的直接下确界
    """
    betas: np.ndarray
    ts: np.ndarray
    alphas: np.ndarray
    f: np.ndarray
    f_raw: np.ndarray
    f_direct: np.ndarray
    tolerances: np.ndarray
    alpha_minus: float
    alpha_plus: float
    apex_alpha: float
    apex_f: float
    legendre_consistent: bool
    clamped: int = 0

    @property
    def samples(self) -> List[Tuple[float, float]]:
        return list(zip(self.alphas.tolist(), self.f.tolist()))


@dataclass(frozen=True)
class SpectrumClass:
    label: str  # "degenerate" 或 "nondegenerate"
    width: float
    consistent: bool = True


def _require_geometric(phi: PotentialSpec) -> None:
    if phi.kind != "geometric":
        raise SpecValidationError(f"φ 必须是几何势, 实际为 {phi.kind}")


class PressureEquationSolver:
    """
    固定 (φ, ψ, 深度 m) 的压力方程求解器

    ψ 在构造时归一化为零压力; 查找表只计算一次, 供整个 β 网格复用
    """

    def __init__(self, phi: PotentialSpec, psi: PotentialSpec,
                 settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS):
        _require_geometric(phi)
        if phi.alphabet_size != psi.alphabet_size:
            raise SpecValidationError("φ 与 ψ 的字母表大小不一致")
        self.phi = phi
        self.settings = settings
        self.depth = resolve_depth(CombinedPotential(1.0, 1.0, phi, psi), settings.depth)
        self.psi, self.normalization = normalize_potential(psi, self.depth, settings.power)
        combined = CombinedPotential(1.0, 1.0, self.phi, self.psi)
        self.exact = combined.native_depth is not None
        self.alphabet_size = phi.alphabet_size
        self._phi_tables = combined_tables(CombinedPotential(1.0, 0.0, self.phi, None), self.depth)
        self._psi_tables = combined_tables(CombinedPotential(0.0, 1.0, None, self.psi), self.depth)

    def _table(self, t: float, beta: float, which: int) -> np.ndarray:
        phi_mid, phi_lo, phi_hi = self._phi_tables
        psi_mid, psi_lo, psi_hi = self._psi_tables
        if which == 0:
            return t * phi_mid + beta * psi_mid
        pick_low = which < 0
        phi_part = t * (phi_lo if (t >= 0) == pick_low else phi_hi)
        psi_part = beta * (psi_lo if (beta >= 0) == pick_low else psi_hi)
        return phi_part + psi_part

    def pressure(self, t: float, beta: float, which: int = 0) -> float:
        """which: 0 中值表, −1 下界表, +1 上界表"""
        return log_spectral_radius(self._table(t, beta, which), self.alphabet_size, self.depth,
                                   self.settings.power)

    def _root(self, beta: float, which: int) -> float:
        def g(t: float) -> float:
            return self.pressure(t, beta, which)

        lo, hi = -1.0, 2.0
        width = hi - lo
        for _ in range(self.settings.max_bracket_expansions):
            g_lo, g_hi = g(lo), g(hi)
            if g_lo == 0:
                return lo
            if g_hi == 0:
                return hi
            if g_lo > 0 > g_hi:
                return optimize.bisect(g, lo, hi, xtol=self.settings.t_tol, maxiter=400)
            width *= 2.0
            if g_lo <= 0:
                lo -= width
            if g_hi >= 0:
                hi += width
        raise BracketError(f"β={beta} 时 t 的区间扩展失败, φ 可能没有远离 0")

    def solve(self, beta: float) -> TSolution:
        """
        求解 t(β)

        返回:
            TSolution; 非精确深度时同时求解上下界查找表得到包络 [t_lo, t_hi]
        """
        t = self._root(beta, 0)
        residual = self.pressure(t, beta)
        if abs(residual) > self.settings.pressure_tol:
            raise NumericalError(f"β={beta} 时压力残差 {residual:.3e} 超过 {self.settings.pressure_tol}")
        if self.exact:
            lower = upper = t
        else:
            lower = min(self._root(beta, -1), t)
            upper = max(self._root(beta, 1), t)
        error = max(upper - t, t - lower) + self.settings.t_tol
        return TSolution(float(beta), t, error, lower, upper, residual, self.depth)

    def alpha(self, beta: float, solution: Optional[TSolution] = None) -> AlphaEstimate:
        """α = ∫ψ dμ / ∫φ dμ, 交叉检验 −(t(β+h) − t(β−h))/(2h)"""
        solution = solution or self.solve(beta)
        int_phi, int_psi = equilibrium_integrals(solution.t, beta, self.phi, self.psi, self.depth,
                                                 self.settings.power)
        h = self.settings.h
        crosscheck = -(self._root(beta + h, 0) - self._root(beta - h, 0)) / (2 * h)
        return AlphaEstimate(float(beta), int_psi / int_phi, crosscheck)

    def sample(self, beta: float) -> Tuple[TSolution, AlphaEstimate]:
        solution = self.solve(beta)
        return solution, self.alpha(beta, solution)


def solve_t(phi: PotentialSpec, psi: PotentialSpec, beta: float,
            settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS) -> TSolution:
    """压力方程 P(tφ + βψ) = 0 的唯一解 t(β) 及误差界"""
    return PressureEquationSolver(phi, psi, settings).solve(beta)


def alpha_of_beta(phi: PotentialSpec, psi: PotentialSpec, beta: float,
                  settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS) -> AlphaEstimate:
    return PressureEquationSolver(phi, psi, settings).alpha(beta)


def second_differences(betas: np.ndarray, values: np.ndarray) -> np.ndarray:
    """非等距网格上的二阶差分 (等距时即 v[i+1] − 2v[i] + v[i−1])"""
    spacing = np.diff(betas)
    slopes = np.diff(values) / spacing
    return np.diff(slopes) * 0.5 * (spacing[1:] + spacing[:-1])


def pressure_curve(phi: PotentialSpec, psi: PotentialSpec, betas: Sequence[float],
                   settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS) -> PressureCurve:
    """
    在 β 网格上计算 t(β) 与 α(β)

    参数:
        betas: 严格递增的 β 网格
        settings.threads: 并行线程数, 结果按网格顺序汇总
    """
    betas = np.asarray(betas, dtype=float)
    if betas.size == 0 or np.any(np.diff(betas) <= 0):
        raise SpecValidationError("β 网格必须非空且严格递增")
    solver = PressureEquationSolver(phi, psi, settings)
    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as executor:
            results = list(executor.map(solver.sample, betas.tolist()))
    else:
        results = [solver.sample(beta) for beta in betas.tolist()]

    ts = np.array([r[0].t for r in results])
    alphas = np.array([r[1].alpha for r in results])
    crosschecks = np.array([r[1].crosscheck for r in results])
    errors = np.array([r[0].error for r in results])
    degenerate = float(alphas.max() - alphas.min()) <= DEGENERATE_WIDTH
    if betas.size >= 2 and np.any(np.diff(alphas) > CONVEXITY_TOL):
        logger.warning("⚠️ α(β) 在网格上不是单调不增的")
    logger.info(f"✅ 压力曲线完成: {betas.size} 个 β, 深度 {solver.depth}, "
                f"P(ψ) = {solver.normalization:.12g}")
    return PressureCurve(betas, ts, alphas, crosschecks, errors, degenerate,
                         solver.normalization, solver.depth)


def legendre_spectrum(curve: PressureCurve,
                      spectrum_range_estimate: Optional[SpectrumRange] = None) -> SpectrumCurve:
    """
    Legendre 谱 f(α) = −t*(−α)

    主算法: 参数化 f(α(β)) = t(β) + β·α(β)
    副算法: 直接计算 inf_β (t(β) + βα), 两者差异须在 2 倍网格容差内

    异常:
        NumericalError: t 的离散二阶差分低于 −1e−8 (非凸)
    """
    betas, ts, alphas = curve.betas, curve.ts, curve.alphas
    for required in (0.0, 1.0):
        if not np.any(np.abs(betas - required) <= 1e-12):
            raise SpecValidationError(f"β 网格必须包含 {required}")
    if betas.size >= 3:
        worst = float(np.min(second_differences(betas, ts)))
        if worst < -CONVEXITY_TOL:
            raise NumericalError(f"t(β) 不是凸的: 最小二阶差分 {worst:.3e}, 曲线被拒绝")

    f_raw = ts + betas * alphas
    f_direct = np.min(ts[None, :] + betas[None, :] * alphas[:, None], axis=1)
    span = float(betas.max() - betas.min())
    tolerances = span * np.abs(alphas - curve.crosschecks) + 1e-9
    disagreement = np.abs(f_direct - f_raw)
    consistent = bool(np.all(disagreement <= 2 * tolerances))
    if not consistent:
        logger.warning(f"⚠️ 参数化与直接 Legendre 变换不一致: 最大差异 {disagreement.max():.3e}")

    clamped = int(np.sum(f_raw < 0))
    if clamped:
        logger.warning(f"⚠️ {clamped} 个 Legendre 值为负, 报告时截断为 0")
    f = np.maximum(f_raw, 0.0)

    apex_alpha, apex_f = curve.alpha_at(0.0), curve.t_at(0.0)
    if np.any(f > apex_f + CONVEXITY_TOL):
        logger.warning("⚠️ 存在超过顶点 t(0) 的谱值")
    if spectrum_range_estimate is not None:
        alpha_minus, alpha_plus = spectrum_range_estimate.alpha_minus, spectrum_range_estimate.alpha_plus
    else:
        alpha_minus, alpha_plus = float(alphas.min()), float(alphas.max())
    return SpectrumCurve(betas, ts, alphas, f, f_raw, f_direct, tolerances, alpha_minus, alpha_plus,
                         apex_alpha, apex_f, consistent, clamped)


def cycle_extremal_ratios(phi: PotentialSpec, psi: PotentialSpec, cycle_length: int) -> Tuple[float, float]:
    """所有 |γ| ≤ L 的周期点上 S ψ / S φ 的最小值与最大值"""
    if cycle_length < 1:
        raise SpecValidationError(f"周期长度 L 必须 ≥ 1, 实际为 {cycle_length}")
    lows, highs = [], []
    for n in range(1, cycle_length + 1):
        ratios = periodic_sums(psi, n) / periodic_sums(phi, n)
        lows.append(float(ratios.min()))
        highs.append(float(ratios.max()))
    return min(lows), max(highs)


def spectrum_range(phi: PotentialSpec, psi: PotentialSpec, cycle_length: int, beta_max: float,
                   settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS) -> SpectrumRange:
    """
    谱范围 [α₋, α₊]

    周期点极值法与渐近法 α(∓β_max) 取较宽的范围, 两者差异超过 1e−3 时告警
    """
    solver = PressureEquationSolver(phi, psi, settings)
    cycle = cycle_extremal_ratios(phi, solver.psi, cycle_length)
    asymptotic = (solver.alpha(beta_max).alpha, solver.alpha(-beta_max).alpha)
    disagreement = max(abs(cycle[0] - asymptotic[0]), abs(cycle[1] - asymptotic[1]))
    result = SpectrumRange(
        alpha_minus=min(cycle[0], asymptotic[0]),
        alpha_plus=max(cycle[1], asymptotic[1]),
        cycle=cycle,
        asymptotic=asymptotic,
        cycle_length=cycle_length,
        beta_max=beta_max,
        disagreement=disagreement,
    )
    if result.flagged:
        logger.warning(f"⚠️ 谱范围两种估计差异 {disagreement:.3e} 超过 {RANGE_DISAGREEMENT_FLAG}")
    return result


def classify_spectrum(range_estimate: SpectrumRange, t0: Optional[float] = None) -> SpectrumClass:
    """α₊ − α₋ ≤ 1e−6 为退化; 退化时检查 |α₋ − t(0)| ≤ 1e−5"""
    width = range_estimate.width
    if width > DEGENERATE_WIDTH:
        return SpectrumClass("nondegenerate", width, True)
    consistent = True
    if t0 is not None and abs(range_estimate.alpha_minus - t0) > DEGENERATE_APEX_TOL:
        consistent = False
        logger.warning(f"⚠️ 退化谱 α₋={range_estimate.alpha_minus:.9g} 与 t(0)={t0:.9g} 不一致")
    return SpectrumClass("degenerate", width, consistent)


def level_set_dimension(spectrum: SpectrumCurve, alpha: float, tol: float = 1e-9) -> Optional[float]:
    """
    水平集 {x : 指数 = α} 的维数 −t*(−α); α 在 [α₋, α₊] 之外时水平集为空, 返回 None
    """
    if alpha < spectrum.alpha_minus - tol or alpha > spectrum.alpha_plus + tol:
        return None
    value = float(np.min(spectrum.ts + spectrum.betas * alpha))
    return max(value, 0.0)


def hoelder_spectrum(phi: PotentialSpec, psi: PotentialSpec, betas: Sequence[float],
                     cycle_length: int = 1,
                     settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS,
                     beta_max: Optional[float] = None
                     ) -> Tuple[PressureCurve, SpectrumCurve, SpectrumRange]:
    """
    分布函数 F_μ 的点态Hölder谱: (几何势 φ, μ 的势 ψ) 的 Legendre 谱
    beta_max 缺省取网格两端绝对值的较大者

    返回:
        (压力曲线, 谱曲线, 谱范围)
    """
    curve = pressure_curve(phi, psi, betas, settings)
    if beta_max is None:
        beta_max = float(max(abs(curve.betas.min()), abs(curve.betas.max())))
    range_estimate = spectrum_range(phi, psi, cycle_length, beta_max, settings)
    return curve, legendre_spectrum(curve, range_estimate), range_estimate
