"""
推前测度 μ∘π⁻¹ 的分布函数、球测度、点态Hölder指数与粗粒化谱
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import logsumexp, softmax

from exceptions import BracketError, GapPointError, SpecValidationError
from ifs_geometry import (IFSSpec, all_cylinder_intervals, coding_point, cylinder_interval,
                          require_valid_ifs)
from symbolic_core import DEFAULT_SYMBOLIC_SETTINGS, SymbolicSettings, Word
from thermodynamics import MarkovMeasure

logger = logging.getLogger(__name__)

COARSE_TOL = 1e-10


@dataclass(frozen=True)
class StaircaseSample:
    x: float
    F: float
    error: float


@dataclass(frozen=True)
class BallMass:
    lower: float
    upper: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True, eq=False)
class HoelderEstimate:
    """
    点态Hölder指数估计

    log_r / log_mass_lower / log_mass_upper: 各半径上的球测度对数区间
    ratios: log μ(B(x,r)) / log r 原始样本
    window_slopes: 每个 w+1 点窗口上 log μ 对 log r 的最小二乘斜率
    """
    x: float
    log_r: np.ndarray
    log_mass_lower: np.ndarray
    log_mass_upper: np.ndarray
    ratios: np.ndarray
    window_slopes: np.ndarray
    liminf_est: float
    limsup_est: float
    uncertainty: float
    window: int
    r0: float
    rho: float
    depth: int
    gap_truncated: bool = False


@dataclass(frozen=True, eq=False)
class CoarseSpectrum:
    q: np.ndarray
    T: np.ndarray
    alpha: np.ndarray
    f: np.ndarray
    depth: int


def _check_measure(measure: MarkovMeasure, spec: IFSSpec) -> None:
    require_valid_ifs(spec)
    if measure.alphabet_size != spec.size:
        raise SpecValidationError(
            f"测度字母表大小 {measure.alphabet_size} 与迭代函数系统分支数 {spec.size} 不一致")


def distribution_bracket(measure: MarkovMeasure, spec: IFSSpec, x: float, n: int) -> Tuple[float, float]:
    """
    F(x) 的确定性区间 [F_lo, F_hi]

    沿柱集树下降: 完全位于 x 左侧的柱集质量计入 F_lo, 跨越 x 的柱集质量只计入 F_hi
    """
    _check_measure(measure, spec)
    if n < 1:
        raise SpecValidationError(f"深度必须 ≥ 1, 实际为 {n}")
    lo, hi = spec.hull
    if x < lo:
        return 0.0, 0.0
    if x >= hi:
        return 1.0, 1.0
    left: List[float] = []
    straddling: List[Word] = [()]
    for _ in range(n):
        children: List[Word] = []
        for word in straddling:
            for i in spec.alphabet.symbols:
                child = cylinder_interval(spec, word + (i,))
                if child.hi <= x:
                    left.append(measure.cylinder_mass(child.word))
                elif child.lo <= x:
                    children.append(child.word)
        straddling = children
    f_lo = math.fsum(left)
    f_hi = f_lo + math.fsum(measure.cylinder_mass(w) for w in straddling)
    return min(f_lo, 1.0), min(f_hi, 1.0)


def distribution_function(measure: MarkovMeasure, spec: IFSSpec, x: float, n: int) -> StaircaseSample:
    """
    分布函数 F_μ(x) = μ((−∞, x])

    参数:
        measure: 字母表与 spec 一致的 Gibbs 测度
        spec: 迭代函数系统
        x: 求值点 (凸包之外截断为 0 或 1)
        n: 柱集深度

    返回:
        StaircaseSample, F 为区间中点, error 为半宽 (不超过跨越 x 的柱集质量)
    """
    f_lo, f_hi = distribution_bracket(measure, spec, x, n)
    return StaircaseSample(float(x), 0.5 * (f_lo + f_hi), 0.5 * (f_hi - f_lo))


def staircase(measure: MarkovMeasure, spec: IFSSpec, n: int,
              settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> List[StaircaseSample]:
    """
    在所有深度 n 柱集的右端点处对 F 取样 (s^n 个样本, 按 x 排序)

    Gibbs 测度没有原子, 右端点处 F 恰为累计柱集质量
    """
    _check_measure(measure, spec)
    _, hi = all_cylinder_intervals(spec, n, settings)
    masses = measure.masses_at_depth(n)
    total = math.fsum(masses)
    cumulative = np.cumsum(masses) / total
    cumulative[-1] = 1.0
    error = abs(1.0 - total)
    return [StaircaseSample(float(x), float(F), error) for x, F in zip(hi, cumulative)]


def staircase_frame(samples: Sequence[StaircaseSample]) -> pd.DataFrame:
    return pd.DataFrame({"x": [s.x for s in samples],
                         "F": [s.F for s in samples],
                         "err": [s.error for s in samples]})


def ball_measure(measure: MarkovMeasure, spec: IFSSpec, x: float, r: float, n: int) -> BallMass:
    """μ((x−r, x+r)) 的区间, 宽度不超过两端跨越柱集的质量之和"""
    if not r > 0:
        raise SpecValidationError(f"半径必须为正, 实际为 {r}")
    right_lo, right_hi = distribution_bracket(measure, spec, x + r, n)
    left_lo, left_hi = distribution_bracket(measure, spec, x - r, n)
    lower = max(0.0, right_lo - left_hi)
    upper = min(1.0, right_hi - left_lo)
    return BallMass(lower, upper)


def default_hoelder_depth(spec: IFSSpec, smallest_radius: float, margin: int = 10) -> int:
    """柱集直径比最小半径小约 2^-margin 的深度"""
    factor = max(require_valid_ifs(spec).contraction_factors)
    target = smallest_radius * 2.0 ** (-margin) / spec.hull_diameter
    return max(1, int(math.ceil(math.log(target) / math.log(factor))))


def pointwise_hoelder(measure: MarkovMeasure, spec: IFSSpec, x: float, r0: float = 1.0,
                      rho: float = 0.5, K: int = 20, window: int = 2,
                      depth: Optional[int] = None) -> HoelderEstimate:
    """
    点态Hölder指数的 liminf/limsup 估计

    半径 r_k = r0·ρ^k (k = 1..K); 每个 w+1 点窗口上做最小二乘拟合,
    liminf/limsup 取窗口斜率的最小/最大值 (跳过最粗的 w 个半径)

    异常:
        GapPointError: 球测度下界为 0 导致没有可用窗口
    """
    if not 0 < rho < 1:
        raise SpecValidationError(f"半径比 ρ 必须在 (0,1) 内, 实际为 {rho}")
    if window < 1 or K < 2 * window:
        raise SpecValidationError(f"需要 window ≥ 1 且 K ≥ 2·window, 实际 K={K}, window={window}")
    if not r0 > 0:
        raise SpecValidationError(f"初始半径必须为正, 实际为 {r0}")
    radii = r0 * rho ** np.arange(1, K + 1)
    n = depth if depth is not None else default_hoelder_depth(spec, float(radii[-1]))

    lows, highs = [], []
    truncated = False
    for r in radii:
        mass = ball_measure(measure, spec, x, float(r), n)
        if mass.lower <= 0:
            truncated = True
            logger.warning(f"⚠️ x={x} 在半径 {r:.3e} 处球测度下界为 0, 斜率样本截断")
            break
        lows.append(mass.lower)
        highs.append(mass.upper)
    count = len(lows)
    if count < window + 1:
        raise GapPointError(f"x={x} 处可用的球测度样本不足 {window + 1} 个 (测度空隙)")

    log_r = np.log(radii[:count])
    log_lo, log_hi = np.log(lows), np.log(highs)
    log_mid = np.log(0.5 * (np.array(lows) + np.array(highs)))
    slopes, spreads = [], []
    # 最粗的 w 个半径受凸包边界影响, 窗口从第 w 个半径开始
    start = window if count - 2 * window >= 1 else 0
    for j in range(start, count - window):
        xs = log_r[j:j + window + 1]
        slopes.append(stats.linregress(xs, log_mid[j:j + window + 1]).slope)
        weights = np.abs(xs - xs.mean()) / np.sum((xs - xs.mean()) ** 2)
        deviation = np.maximum(log_hi[j:j + window + 1] - log_mid[j:j + window + 1],
                               log_mid[j:j + window + 1] - log_lo[j:j + window + 1])
        spreads.append(float(np.dot(weights, deviation)))
    slopes = np.array(slopes)
    return HoelderEstimate(
        x=float(x),
        log_r=log_r,
        log_mass_lower=log_lo,
        log_mass_upper=log_hi,
        ratios=log_mid / log_r,
        window_slopes=slopes,
        liminf_est=float(slopes.min()),
        limsup_est=float(slopes.max()),
        uncertainty=max(spreads),
        window=window,
        r0=r0,
        rho=rho,
        depth=n,
        gap_truncated=truncated,
    )


def hoelder_frame(estimate: HoelderEstimate) -> pd.DataFrame:
    return pd.DataFrame({"logr": estimate.log_r,
                         "logmass_lo": estimate.log_mass_lower,
                         "logmass_hi": estimate.log_mass_upper})


def divergence_word(levels: int, symbols: Tuple[int, int] = (1, 2)) -> Word:
    """块编码 1^{4^0} 2^{4^0} 1^{4^1} 2^{4^1} … (共 levels 组), 其 Birkhoff 比值振荡"""
    word: List[int] = []
    for j in range(levels):
        block = 4 ** j
        word.extend([symbols[0]] * block)
        word.extend([symbols[1]] * block)
    return tuple(word)


def block_coding_point(spec: IFSSpec, word: Sequence[int]) -> float:
    """有限块编码对应的点 (柱集中点)"""
    point, _ = coding_point(spec, word)
    return point


def coarse_spectrum(measure: MarkovMeasure, spec: IFSSpec, n: int, q_grid: Sequence[float],
                    settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> CoarseSpectrum:
    """
    粗粒化谱: 对每个 q 求 Σ μ[ω]^q diam(π[ω])^T = 1 的根 T_n(q), 并做 Legendre 变换

    α(q) = Σ w log μ / Σ w log diam, w ∝ μ^q diam^T; f = T + qα
    """
    _check_measure(measure, spec)
    log_mass = measure.log_masses_at_depth(n, settings)
    lo, hi = all_cylinder_intervals(spec, n, settings)
    log_diam = np.log(hi - lo)

    def partition(T: float, q: float) -> float:
        return float(logsumexp(q * log_mass + T * log_diam))

    qs = np.asarray(q_grid, dtype=float)
    Ts, alphas = [], []
    for q in qs:
        a, b = -1.0, 2.0
        width = b - a
        for _ in range(60):
            if partition(a, q) >= 0 >= partition(b, q):
                break
            width *= 2.0
            if partition(a, q) < 0:
                a -= width
            if partition(b, q) > 0:
                b += width
        else:
            raise BracketError(f"q={q} 时 T 的区间扩展失败, 柱集直径可能退化")
        T = optimize.bisect(partition, a, b, args=(q,), xtol=COARSE_TOL * 1e-2, maxiter=400)
        weights = softmax(q * log_mass + T * log_diam)
        Ts.append(T)
        alphas.append(float(np.dot(weights, log_mass) / np.dot(weights, log_diam)))
    Ts, alphas = np.array(Ts), np.array(alphas)
    return CoarseSpectrum(qs, Ts, alphas, Ts + qs * alphas, n)


def coarse_frame(spectrum: CoarseSpectrum) -> pd.DataFrame:
    return pd.DataFrame({"q": spectrum.q, "T": spectrum.T, "alpha": spectrum.alpha, "f": spectrum.f})
