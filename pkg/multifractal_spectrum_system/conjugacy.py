"""
两个满分支扩张系统之间的共轭映射 Θ = π_g ∘ π_f⁻¹

g 系统的一层像区间必须首尾相接铺满凸包, 此时 Θ 恰为 μ_{φ_g}∘π_f⁻¹ 的分布函数
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import GapPointError, NumericalError, SpecValidationError
from distribution import distribution_function
from ifs_geometry import (ENDPOINT_TOL, IFSSpec, cylinder_interval, digits_of_point, validate_ifs)
from multifractal import (DEFAULT_MULTIFRACTAL_SETTINGS, MultifractalSettings, PressureCurve,
                          SpectrumCurve, SpectrumRange, hoelder_spectrum)
from symbolic_core import PotentialSpec
from thermodynamics import MarkovMeasure, build_gibbs_measure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConjugacyPair:
    """ifs_f: f 的逆分支 (吸引子可以是真子集); ifs_g: g 的逆分支 (必须铺满凸包)"""
    ifs_f: IFSSpec
    ifs_g: IFSSpec


@dataclass(frozen=True)
class ThetaValue:
    x: float
    value: float
    error: float
    codings: Tuple[Tuple[int, ...], ...] = ()

    @property
    def boundary(self) -> bool:
        return len(self.codings) > 1


@dataclass(frozen=True)
class DistributionCheck:
    """Θ(x) 与分布函数两条路径的比较"""
    x: float
    value: float
    error: float
    theta: float
    theta_error: float
    residual: float

    @property
    def within_bound(self) -> bool:
        return self.residual <= self.error + self.theta_error + ENDPOINT_TOL


@dataclass(frozen=True)
class FunctionalEquationCheck:
    max_residual: float
    max_bound: float
    within_bound: bool
    skipped: int = 0


def validate_conjugacy_pair(pair: ConjugacyPair) -> Tuple[str, ...]:
    """
    检查共轭对, 返回错误信息列表 (空表示通过)

    两个系统各自有效、分支数相同、g 的一层像区间以 1e−12 容差铺满凸包
    """
    errors: List[str] = []
    for label, spec in (("f", pair.ifs_f), ("g", pair.ifs_g)):
        report = validate_ifs(spec)
        errors.extend(f"{label} 系统: {e}" for e in report.errors)
    if pair.ifs_f.size != pair.ifs_g.size:
        errors.append(f"分支数不一致: f 有 {pair.ifs_f.size} 个, g 有 {pair.ifs_g.size} 个")
    if errors:
        return tuple(errors)

    g = pair.ifs_g
    lo, hi = g.hull
    images = [(float(b(lo)), float(b(hi))) for b in g.branches]
    if abs(images[0][0] - lo) > ENDPOINT_TOL:
        errors.append(f"g 的第 1 个像区间没有从凸包左端点 {lo} 开始")
    for i in range(len(images) - 1):
        if abs(images[i][1] - images[i + 1][0]) > ENDPOINT_TOL:
            errors.append(f"g 的像区间 {i + 1} 与 {i + 2} 之间有空隙或重叠")
    if abs(images[-1][1] - hi) > ENDPOINT_TOL:
        errors.append(f"g 的最后一个像区间没有到达凸包右端点 {hi}")
    return tuple(errors)


@lru_cache(maxsize=16)
def require_valid_pair(pair: ConjugacyPair) -> ConjugacyPair:
    errors = validate_conjugacy_pair(pair)
    if errors:
        raise SpecValidationError("共轭对校验失败: " + "; ".join(errors))
    return pair


def _attractor_extremes(spec: IFSSpec, n: int) -> Tuple[float, float]:
    first = cylinder_interval(spec, (1,) * n)
    last = cylinder_interval(spec, (spec.size,) * n)
    return first.lo, last.hi


def theta(pair: ConjugacyPair, x: float, n: int) -> ThetaValue:
    """
    Θ(x): 用 f 系统求 x 的深度 n 编码, 再取 g 系统对应柱集

    返回:
        ThetaValue, value 为 g 柱集 (边界点取两个柱集的包络) 中点, error 为半宽;
        x 在吸引子左侧为 0, 右侧为 1

    异常:
        GapPointError: x 位于吸引子内部的空隙中
    """
    require_valid_pair(pair)
    lowest, highest = _attractor_extremes(pair.ifs_f, n)
    if x < lowest:
        return ThetaValue(float(x), 0.0, 0.0)
    if x > highest:
        return ThetaValue(float(x), 1.0, 0.0)
    digits = digits_of_point(pair.ifs_f, x, n)
    cylinders = [cylinder_interval(pair.ifs_g, word) for word in digits.words]
    if len(cylinders) == 2 and cylinders[0].hi < cylinders[1].lo - ENDPOINT_TOL:
        raise NumericalError(f"x={x} 的两个编码在 g 系统中不相邻")
    lo = min(c.lo for c in cylinders)
    hi = max(c.hi for c in cylinders)
    return ThetaValue(float(x), 0.5 * (lo + hi), 0.5 * (hi - lo), digits.words)


@lru_cache(maxsize=16)
def conjugacy_measure(pair: ConjugacyPair, depth: Optional[int] = None) -> MarkovMeasure:
    """g 的几何势的 Gibbs 测度 μ_{φ_g}"""
    require_valid_pair(pair)
    return build_gibbs_measure(PotentialSpec.geometric(pair.ifs_g), depth)


def theta_as_distribution(pair: ConjugacyPair, x: float, n: int,
                          depth: Optional[int] = None) -> DistributionCheck:
    """用 μ_{φ_g}∘π_f⁻¹ 的分布函数计算 Θ(x), 并与直接计算的 Θ(x) 比较"""
    measure = conjugacy_measure(pair, depth)
    sample = distribution_function(measure, pair.ifs_f, x, n)
    direct = theta(pair, x, n)
    return DistributionCheck(float(x), sample.F, sample.error, direct.value, direct.error,
                             abs(sample.F - direct.value))


def functional_equation_residual(pair: ConjugacyPair, xs: Sequence[float], n: int) -> FunctionalEquationCheck:
    """
    检查 Θ(φ_i^f(x)) = φ_i^g(Θ(x)) 对每个分支 i 和样本 x 成立

    位于 f 吸引子空隙中的样本跳过并计数
    """
    require_valid_pair(pair)
    max_residual, max_bound, ok, skipped = 0.0, 0.0, True, 0
    for x in xs:
        try:
            base = theta(pair, x, n)
        except GapPointError:
            skipped += 1
            continue
        for branch_f, branch_g in zip(pair.ifs_f.branches, pair.ifs_g.branches):
            lhs = theta(pair, float(branch_f(x)), n)
            image_lo = float(branch_g(base.value - base.error))
            image_hi = float(branch_g(base.value + base.error))
            rhs, rhs_error = 0.5 * (image_lo + image_hi), 0.5 * (image_hi - image_lo)
            residual = abs(lhs.value - rhs)
            bound = lhs.error + rhs_error + ENDPOINT_TOL
            max_residual, max_bound = max(max_residual, residual), max(max_bound, bound)
            ok = ok and residual <= bound
    if skipped:
        logger.info(f"函数方程检验跳过 {skipped} 个空隙点")
    return FunctionalEquationCheck(max_residual, max_bound, ok, skipped)


def conjugacy_spectrum(pair: ConjugacyPair, betas: Sequence[float], cycle_length: int = 1,
                       settings: MultifractalSettings = DEFAULT_MULTIFRACTAL_SETTINGS,
                       beta_max: Optional[float] = None
                       ) -> Tuple[PressureCurve, SpectrumCurve, SpectrumRange]:
    """Θ 的点态Hölder谱: φ = f 的几何势, ψ = g 的几何势, 共用近似深度"""
    require_valid_pair(pair)
    phi = PotentialSpec.geometric(pair.ifs_f)
    psi = PotentialSpec.geometric(pair.ifs_g)
    return hoelder_spectrum(phi, psi, betas, cycle_length, settings, beta_max)


def attractor_samples(pair: ConjugacyPair, count: int, n: int, seed: int) -> np.ndarray:
    """f 吸引子上的随机样本点: 随机词 (长度 n+8) 的柱集中点, 按升序排列"""
    rng = np.random.default_rng(seed)
    words = rng.integers(1, pair.ifs_f.size + 1, size=(count, n + 8))
    points = [cylinder_interval(pair.ifs_f, tuple(int(a) for a in row)).midpoint for row in words]
    return np.sort(np.array(points))


def theta_frame(values: Sequence[ThetaValue]) -> pd.DataFrame:
    return pd.DataFrame({"x": [v.x for v in values],
                         "theta": [v.value for v in values],
                         "err": [v.error for v in values]})
