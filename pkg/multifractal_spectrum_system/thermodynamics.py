"""
拓扑压力、Gibbs测度与平衡积分

压力有两种算法:
  周期点配分和 (带确定性上下界)
  深度 m 转移矩阵的谱半径 (幂迭代)
Gibbs测度由转移矩阵的左右特征向量构造为 m 步 Markov 测度
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from exceptions import ConvergenceError, SpecValidationError
from symbolic_core import (DEFAULT_SYMBOLIC_SETTINGS, PotentialSpec, SymbolicSettings,
                           check_enumeration_budget, cylinder_bounds_array, periodic_sums,
                           potential_tables, word_index)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerIterationSettings:
    """
    幂迭代参数: Rayleigh商相对变化连续 stable_steps 次小于 rel_tol 即收敛
    前 warmup 步按范数增长估计谱半径 ρ̂, 之后迭代 A + ρ̂·I
    """
    rel_tol: float = 1e-13
    stable_steps: int = 3
    max_iter: int = 20000
    warmup: int = 64


DEFAULT_POWER_SETTINGS = PowerIterationSettings()


def default_measure_depth(alphabet_size: int) -> int:
    """缺省近似深度: s=2 时为 8, 一般为 floor(8·ln2/ln s)"""
    return max(1, int(math.floor(8 * math.log(2) / math.log(alphabet_size) + 1e-12)))


@dataclass(frozen=True)
class CombinedPotential:
    """组合势 tφ + βψ; φ 可以缺省 (只研究 ψ 本身)"""
    t: float
    beta: float
    phi: Optional[PotentialSpec]
    psi: Optional[PotentialSpec]

    def __post_init__(self):
        parts = [p for p in (self.phi, self.psi) if p is not None]
        if not parts:
            raise SpecValidationError("组合势至少需要一个分量")
        if len({p.alphabet_size for p in parts}) > 1:
            raise SpecValidationError("φ 与 ψ 的字母表大小不一致")

    @property
    def alphabet_size(self) -> int:
        return (self.phi or self.psi).alphabet_size

    def active_parts(self) -> Tuple[Tuple[float, PotentialSpec], ...]:
        """系数非零的分量"""
        parts = []
        if self.phi is not None and self.t != 0:
            parts.append((self.t, self.phi))
        if self.psi is not None and self.beta != 0:
            parts.append((self.beta, self.psi))
        return tuple(parts)

    @property
    def native_depth(self) -> Optional[int]:
        depths = [p.native_depth for _, p in self.active_parts()]
        if any(d is None for d in depths):
            return None
        return max(depths, default=1)


@dataclass(frozen=True)
class PressureEstimate:
    value: float
    lower: float
    upper: float
    depth: int
    method: str  # "periodic" 或 "spectral"

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _scaled(coefficient: float, tables: Tuple[np.ndarray, np.ndarray, np.ndarray]):
    mid, lower, upper = tables
    if coefficient >= 0:
        return coefficient * mid, coefficient * lower, coefficient * upper
    return coefficient * mid, coefficient * upper, coefficient * lower


def combined_tables(f: CombinedPotential, depth: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """组合势在深度 depth 上的 (mid, lower, upper) 查找表, 系数为负时上下界互换"""
    size = f.alphabet_size ** depth
    mid, lower, upper = np.zeros(size), np.zeros(size), np.zeros(size)
    for coefficient, potential in f.active_parts():
        m, lo, hi = _scaled(coefficient, potential_tables(potential, depth))
        mid, lower, upper = mid + m, lower + lo, upper + hi
    return mid, lower, upper


class TransferOperator:
    """
    深度 m 转移矩阵 A[w, w'] = exp(f(w)), 仅当 w' = w2…wm a

    不显式构造 s^m × s^m 矩阵, 乘法利用移位结构 (reshape 后求和)
    """

    def __init__(self, log_table: np.ndarray, alphabet_size: int, depth: int,
                 settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS):
        self.alphabet_size = alphabet_size
        self.depth = depth
        self.settings = settings
        self.log_table = np.asarray(log_table, dtype=float)
        if self.log_table.size != alphabet_size ** depth:
            raise SpecValidationError(
                f"深度 {depth} 的转移矩阵需要 {alphabet_size ** depth} 个权重, 实际 {self.log_table.size} 个")
        # 指数化前减去最大值防止溢出
        self.log_scale = float(np.max(self.log_table))
        self.weights = np.exp(self.log_table - self.log_scale)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """A v: (Av)[w] = e^{f(w)} Σ_a v[w2…wm a]"""
        s = self.alphabet_size
        block = v.reshape(-1, s).sum(axis=1)
        return self.weights * np.tile(block, s)

    def apply_left(self, u: np.ndarray) -> np.ndarray:
        """u A: (uA)[w'] = Σ_{w: w2…wm = w'1…w'(m-1)} u[w] e^{f(w)}"""
        s = self.alphabet_size
        weighted = (u * self.weights).reshape(s, -1).sum(axis=0)
        return np.repeat(weighted, s)

    def _growth_estimate(self, step, v: np.ndarray) -> Tuple[float, np.ndarray]:
        """按 ‖A^k v‖₁ 的几何平均增长估计 ρ (取后一半步数)"""
        logs = []
        for _ in range(self.settings.warmup):
            w = step(v)
            total = float(np.sum(w))
            if total <= 0.0:
                break
            logs.append(math.log(total))
            v = w / total
        if not logs:
            return 0.0, v
        return math.exp(float(np.mean(logs[len(logs) // 2:]))), v

    def _power_iterate(self, step) -> Tuple[float, np.ndarray, int]:
        n = self.log_table.size
        v = np.full(n, 1.0 / n)
        # A + cI 与 A 特征向量相同, 主特征值与 −ρ 附近的特征值在模上分开
        shift, v = self._growth_estimate(step, v)
        previous = None
        stable = 0
        for iteration in range(1, self.settings.max_iter + 1):
            w = step(v) + shift * v
            quotient = float(np.dot(v, w) / np.dot(v, v)) - shift
            v = w / np.sum(w)
            if previous is not None and abs(quotient - previous) <= self.settings.rel_tol * abs(quotient):
                stable += 1
                if stable >= self.settings.stable_steps:
                    return quotient, v, iteration
            else:
                stable = 0
            previous = quotient
        raise ConvergenceError(f"幂迭代在 {self.settings.max_iter} 次内未收敛 (深度 {self.depth})")

    def log_spectral_radius(self) -> float:
        quotient, _, _ = self._power_iterate(self.apply)
        return math.log(quotient) + self.log_scale

    def eigendata(self) -> Tuple[float, np.ndarray, np.ndarray]:
        """返回 (log ρ, 左特征向量 l, 右特征向量 r)"""
        quotient, right, iterations = self._power_iterate(self.apply)
        _, left, _ = self._power_iterate(self.apply_left)
        logger.debug(f"✅ 幂迭代收敛: 迭代 {iterations} 次, log ρ = {math.log(quotient) + self.log_scale:.15g}")
        return math.log(quotient) + self.log_scale, left, right


def log_spectral_radius(log_table: np.ndarray, alphabet_size: int, depth: int,
                        settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS) -> float:
    return TransferOperator(log_table, alphabet_size, depth, settings).log_spectral_radius()


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """
    深度 m 的 Markov (Gibbs) 测度
    μ[γ] = l[W1] r[W_last] exp(Σ f(W_k)) / (ρ^{n−m} l·r), |γ| = n ≥ m
    """
    alphabet_size: int
    depth: int
    log_table: np.ndarray
    left: np.ndarray
    right: np.ndarray
    log_rho: float
    log_normalization: float
    pressure_shift: float

    @property
    def stationary(self) -> np.ndarray:
        """深度 m 柱集上的平稳分布 π[w] = l r / (l·r)"""
        return self.left * self.right / math.exp(self.log_normalization)

    def cylinder_log_mass(self, word: Sequence[int]) -> float:
        s, m = self.alphabet_size, self.depth
        n = len(word)
        if n < m:
            blocks = self.stationary.reshape(s ** n, s ** (m - n)).sum(axis=1)
            return math.log(blocks[word_index(word, s)])
        windows = [word_index(word[k:k + m], s) for k in range(n - m + 1)]
        total = math.log(self.left[windows[0]]) + math.log(self.right[windows[-1]])
        total += math.fsum(self.log_table[w] for w in windows[:-1])
        return total - (n - m) * self.log_rho - self.log_normalization

    def cylinder_mass(self, word: Sequence[int]) -> float:
        return math.exp(self.cylinder_log_mass(word))

    def log_masses_at_depth(self, n: int,
                            settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> np.ndarray:
        """所有深度 n 柱集的对数质量 (字典序)"""
        s, m = self.alphabet_size, self.depth
        check_enumeration_budget(s, n, settings)
        if n <= m:
            blocks = self.stationary.reshape(s ** n, s ** (m - n)).sum(axis=1)
            return np.log(blocks)
        logs = np.log(self.left) - self.log_normalization
        for k in range(m, n):
            last = np.arange(s ** k) % s ** m
            logs = np.repeat(logs + self.log_table[last] - self.log_rho, s)
        return logs + np.log(self.right[np.arange(s ** n) % s ** m])

    def masses_at_depth(self, n: int) -> np.ndarray:
        return np.exp(self.log_masses_at_depth(n))

    def expectation(self, table: np.ndarray) -> float:
        """深度 m 局部常值函数的期望"""
        return float(np.dot(self.stationary, table))


def build_markov_measure(log_table: np.ndarray, alphabet_size: int, depth: int,
                         settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS) -> MarkovMeasure:
    """
    由深度 m 查找表构造 Gibbs 测度; 查找表先减去其压力 (零压力归一化)
    """
    operator = TransferOperator(log_table, alphabet_size, depth, settings)
    log_rho, left, right = operator.eigendata()
    normalized = np.asarray(log_table, dtype=float) - log_rho
    # 归一化后谱半径为 1, 特征向量不变
    return MarkovMeasure(
        alphabet_size=alphabet_size,
        depth=depth,
        log_table=normalized,
        left=left,
        right=right,
        log_rho=0.0,
        log_normalization=math.log(float(np.dot(left, right))),
        pressure_shift=log_rho,
    )


def resolve_depth(f: CombinedPotential, depth: Optional[int]) -> int:
    """有精确深度时取精确深度, 否则取给定深度或缺省深度"""
    native = f.native_depth
    if depth is None:
        return native if native is not None else default_measure_depth(f.alphabet_size)
    return depth if native is None else max(depth, native)


def pressure_periodic(f: CombinedPotential, n: int, extension: int = 0,
                      settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> PressureEstimate:
    """
    周期点配分和计算压力

    参数:
        f: 组合势
        n: 词长
        extension: 柱集上下界的探测延拓长度 (探测深度 n + extension)

    返回:
        value = (1/n)·log Σ exp(S_n f(γ̄)); 上下界用柱集上的 inf/sup 代替周期点值
    """
    if n < 1:
        raise SpecValidationError(f"深度必须 ≥ 1, 实际为 {n}")
    s = f.alphabet_size
    check_enumeration_budget(s, n, settings)
    sums = np.zeros(s ** n)
    lower = np.zeros(s ** n)
    upper = np.zeros(s ** n)
    for coefficient, potential in f.active_parts():
        check_enumeration_budget(s, n + extension, settings)
        lo, hi = cylinder_bounds_array(potential, n, extension, settings)
        if coefficient < 0:
            lo, hi = hi, lo
        sums = sums + coefficient * periodic_sums(potential, n, settings)
        lower = lower + coefficient * lo
        upper = upper + coefficient * hi
    value = float(logsumexp(sums)) / n
    low = min(float(logsumexp(lower)) / n, value)
    high = max(float(logsumexp(upper)) / n, value)
    return PressureEstimate(value, low, high, n, "periodic")


def pressure_spectral(f: CombinedPotential, depth: Optional[int] = None,
                      settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS) -> PressureEstimate:
    """
    转移矩阵谱半径计算压力

    对精确局部常值的势 lower = upper = value; 否则上下界来自深度 m 的上下界查找表
    """
    m = resolve_depth(f, depth)
    mid, lo, hi = combined_tables(f, m)
    s = f.alphabet_size
    value = log_spectral_radius(mid, s, m, settings)
    if f.native_depth is not None:
        return PressureEstimate(value, value, value, m, "spectral")
    lower = min(log_spectral_radius(lo, s, m, settings), value)
    upper = max(log_spectral_radius(hi, s, m, settings), value)
    return PressureEstimate(value, lower, upper, m, "spectral")


@lru_cache(maxsize=64)
def normalize_potential(psi: PotentialSpec, depth: Optional[int] = None,
                        settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS
                        ) -> Tuple[PotentialSpec, float]:
    """ψ ← ψ − P(ψ), 返回 (归一化后的 ψ, 被减去的 P(ψ))"""
    pressure = pressure_spectral(CombinedPotential(0.0, 1.0, None, psi), depth, settings).value
    logger.info(f"ψ 零压力归一化: 减去 P(ψ) = {pressure:.12g}")
    return psi.shifted(-pressure), pressure


def build_gibbs_measure(psi: PotentialSpec, depth: Optional[int] = None,
                        settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS) -> MarkovMeasure:
    """ψ 的 Gibbs 测度, 在深度 m 上近似; pressure_shift 记录被减去的 P(ψ)"""
    f = CombinedPotential(0.0, 1.0, None, psi)
    m = resolve_depth(f, depth)
    mid, _, _ = combined_tables(f, m)
    measure = build_markov_measure(mid, psi.alphabet_size, m, settings)
    logger.info(f"✅ Gibbs测度构造完成: 深度 {m}, P(ψ) = {measure.pressure_shift:.12g}")
    return measure


def gibbs_cylinder_measure(measure: MarkovMeasure, word: Sequence[int]) -> float:
    """柱集 [γ] 的 Gibbs 测度"""
    if not word:
        return 1.0
    if any(a < 1 or a > measure.alphabet_size for a in word):
        raise SpecValidationError(f"词 {tuple(word)} 超出字母表范围")
    return measure.cylinder_mass(tuple(word))


@dataclass(frozen=True)
class GibbsConstantProbe:
    """各深度上 max |log μ[γ] − S_n ψ(γ̄)|"""
    per_depth: Dict[int, float]

    @property
    def bound(self) -> float:
        return max(self.per_depth.values())


def gibbs_constant_probe(measure: MarkovMeasure, psi: PotentialSpec, depths: Sequence[int],
                         settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> GibbsConstantProbe:
    """
    Gibbs常数探测

    参数:
        measure: 由归一化 ψ 构造的测度
        psi: 归一化后的 ψ
        depths: 要检查的深度列表
    """
    per_depth: Dict[int, float] = {}
    for n in depths:
        gaps = measure.log_masses_at_depth(n, settings) - periodic_sums(psi, n, settings)
        per_depth[int(n)] = float(np.max(np.abs(gaps)))
    return GibbsConstantProbe(per_depth)


def equilibrium_integrals(t: float, beta: float, phi: PotentialSpec, psi: PotentialSpec,
                          depth: int,
                          settings: PowerIterationSettings = DEFAULT_POWER_SETTINGS) -> Tuple[float, float]:
    """
    平衡测度 μ_{tφ+βψ} 下的 (∫φ dμ, ∫ψ dμ)

    期望对 φ, ψ 的深度 m 局部常值近似计算, 测度由组合势的转移矩阵给出
    """
    combined = CombinedPotential(t, beta, phi, psi)
    mid, _, _ = combined_tables(combined, depth)
    measure = build_markov_measure(mid, combined.alphabet_size, depth, settings)
    phi_table = potential_tables(phi, depth)[0]
    psi_table = potential_tables(psi, depth)[0]
    return measure.expectation(phi_table), measure.expectation(psi_table)
