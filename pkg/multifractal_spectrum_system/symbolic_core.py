"""
符号动力学核心
有限字母表上的词、柱集、周期点、Birkhoff和
以及势函数在柱集上的上下界
"""
import itertools
import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from exceptions import EnumerationBudgetError, SpecValidationError

logger = logging.getLogger(__name__)

Word = Tuple[int, ...]

POTENTIAL_KINDS = ("locally_constant", "symbol_log_weights", "geometric")


@dataclass(frozen=True)
class SymbolicSettings:
    """枚举预算：n·log s 不得超过 log(max_words)"""
    max_words: int = 2 ** 22


DEFAULT_SYMBOLIC_SETTINGS = SymbolicSettings()


@dataclass(frozen=True)
class Alphabet:
    """字母表 I = {1, ..., s}"""
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise SpecValidationError(f"字母表大小必须是不小于2的整数, 实际为 {self.size}")

    @property
    def symbols(self) -> Tuple[int, ...]:
        return tuple(range(1, self.size + 1))

    def validate_word(self, word: Sequence[int]) -> Word:
        """检查词非空且每个符号在 1..s 之内"""
        symbols = tuple(int(a) for a in word)
        if not symbols:
            raise SpecValidationError("词不能为空")
        bad = [a for a in symbols if a < 1 or a > self.size]
        if bad:
            raise SpecValidationError(f"符号 {bad} 超出字母表范围 1..{self.size}")
        return symbols


@dataclass(frozen=True)
class PeriodicPoint:
    """周期点 γ̄ = γγγ..."""
    word: Word

    def symbol_at(self, k: int) -> int:
        return self.word[k % len(self.word)]

    def prefix(self, n: int) -> Word:
        return tuple(self.symbol_at(k) for k in range(n))


@dataclass(frozen=True)
class CylinderBounds:
    """柱集 [γ] 上 S_|γ| f 的下界和上界"""
    lower: float
    upper: float
    source: str  # "hoelder", "enumeration" 或 "heuristic" (非仿射几何势的端点估计)

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class PotentialSpec:
    """
    移位空间上的Hölder势函数

    kind:
        locally_constant   -- 深度 depth 的查找表, 共 s^depth 个值 (字典序)
        symbol_log_weights -- 每个符号一个对数权重 (等价于深度1的查找表)
        geometric          -- 迭代函数系统诱导的几何势 scale·log φ'_{ω1}(π(σω))
    offset: 加在每个符号上的常数, 用于零压力归一化 ψ ← ψ − P(ψ)
    """
    kind: str
    alphabet_size: int
    depth: int = 1
    table: Tuple[float, ...] = ()
    ifs: Optional[object] = None
    scale: float = 1.0
    offset: float = 0.0
    hoelder_bound: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise SpecValidationError(f"不支持的势函数类型: {self.kind}")
        Alphabet(self.alphabet_size)
        if self.kind in ("locally_constant", "symbol_log_weights"):
            if self.depth < 1:
                raise SpecValidationError("查找表深度必须 ≥ 1")
            expected = self.alphabet_size ** self.depth
            if len(self.table) != expected:
                raise SpecValidationError(
                    f"深度 {self.depth} 的查找表需要 {expected} 个值, 实际 {len(self.table)} 个")
            if not all(math.isfinite(v) for v in self.table):
                raise SpecValidationError("查找表中存在非有限值")
        else:
            if self.ifs is None:
                raise SpecValidationError("几何势必须关联一个迭代函数系统")
            if not self.scale > 0:
                raise SpecValidationError(f"几何势的系数必须为正, 实际为 {self.scale}")
        if self.hoelder_bound is not None:
            c, theta = self.hoelder_bound
            if not (c > 0 and 0 < theta < 1):
                raise SpecValidationError(f"Hölder界需满足 C>0, 0<θ<1, 实际为 {self.hoelder_bound}")

    @classmethod
    def locally_constant(cls, table: Sequence[float], depth: int, alphabet_size: int,
                         hoelder_bound: Optional[Tuple[float, float]] = None) -> "PotentialSpec":
        return cls("locally_constant", alphabet_size, depth, tuple(float(v) for v in table),
                   hoelder_bound=hoelder_bound)

    @classmethod
    def symbol_log_weights(cls, values: Sequence[float],
                           hoelder_bound: Optional[Tuple[float, float]] = None) -> "PotentialSpec":
        return cls("symbol_log_weights", len(values), 1, tuple(float(v) for v in values),
                   hoelder_bound=hoelder_bound)

    @classmethod
    def from_probabilities(cls, probabilities: Sequence[float],
                           hoelder_bound: Optional[Tuple[float, float]] = None) -> "PotentialSpec":
        """Bernoulli概率向量 p → 对数权重 (ln p_1, ..., ln p_s)"""
        if any(p <= 0 for p in probabilities):
            raise SpecValidationError(f"概率必须为正: {list(probabilities)}")
        return cls.symbol_log_weights([math.log(p) for p in probabilities], hoelder_bound)

    @classmethod
    def geometric(cls, ifs, scale: float = 1.0) -> "PotentialSpec":
        return cls("geometric", ifs.size, 1, (), ifs=ifs, scale=float(scale))

    def shifted(self, c: float) -> "PotentialSpec":
        """返回 f + c"""
        return replace(self, offset=self.offset + float(c))

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.alphabet_size)

    @property
    def native_depth(self) -> Optional[int]:
        """精确局部常值的深度；非仿射几何势返回 None (需要近似)"""
        if self.kind == "geometric":
            return 1 if self.ifs.is_affine else None
        return self.depth


def check_enumeration_budget(alphabet_size: int, n: int,
                             settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> None:
    """n·log s 超过 log(max_words) 时抛出预算错误"""
    if n * math.log(alphabet_size) > math.log(settings.max_words) + 1e-12:
        raise EnumerationBudgetError(
            f"枚举 {alphabet_size}^{n} 个词超过预算 {settings.max_words}")


def enumerate_words(alphabet_size: int, n: int,
                    settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> List[Word]:
    """
    按字典序枚举所有长度为 n 的词

    参数:
        alphabet_size: 字母表大小 s
        n: 词长 (≥1)

    返回:
        s^n 个词组成的列表
    """
    if n < 1:
        raise SpecValidationError(f"词长必须 ≥ 1, 实际为 {n}")
    Alphabet(alphabet_size)
    check_enumeration_budget(alphabet_size, n, settings)
    return list(itertools.product(range(1, alphabet_size + 1), repeat=n))


def word_digits(alphabet_size: int, n: int,
                settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> np.ndarray:
    """所有长度为 n 的词的符号矩阵 (s^n, n), 符号从0开始, 行按字典序排列"""
    check_enumeration_budget(alphabet_size, n, settings)
    index = np.arange(alphabet_size ** n, dtype=np.int64)
    powers = alphabet_size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (index[:, None] // powers[None, :]) % alphabet_size


def word_index(word: Sequence[int], alphabet_size: int) -> int:
    """词在同长度词中的字典序位置"""
    index = 0
    for a in word:
        index = index * alphabet_size + (a - 1)
    return index


def _digits_to_index(digits: np.ndarray, alphabet_size: int) -> np.ndarray:
    index = np.zeros(digits.shape[0], dtype=np.int64)
    for j in range(digits.shape[1]):
        index = index * alphabet_size + digits[:, j]
    return index


def _table_array(f: PotentialSpec) -> np.ndarray:
    return np.asarray(f.table, dtype=float)


@lru_cache(maxsize=256)
def potential_tables(f: PotentialSpec, depth: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    势函数在深度 depth 上的局部常值近似

    返回:
        (mid, lower, upper) 三个长度为 s^depth 的数组;
        对精确局部常值的势三者相同
    """
    s = f.alphabet_size
    if f.kind == "geometric":
        from ifs_geometry import geometric_tables
        mid, lower, upper = geometric_tables(f.ifs, depth)
        mid, lower, upper = f.scale * mid, f.scale * lower, f.scale * upper
    else:
        table = _table_array(f)
        m0 = f.depth
        if depth >= m0:
            index = np.arange(s ** depth) // s ** (depth - m0)
            mid = lower = upper = table[index]
        else:
            blocks = table.reshape(s ** depth, s ** (m0 - depth))
            mid, lower, upper = blocks.mean(axis=1), blocks.min(axis=1), blocks.max(axis=1)
    result = tuple(np.array(a + f.offset, dtype=float) for a in (mid, lower, upper))
    for a in result:
        a.setflags(write=False)
    return result


def birkhoff_sum_periodic(f: PotentialSpec, word: Sequence[int]) -> float:
    """
    周期点上的Birkhoff和 S_|γ| f(γ̄) = Σ_{k<|γ|} f(σ^k γ̄)

    对几何势, 等于复合分支映射在其不动点处导数的对数 (链式法则)
    """
    gamma = f.alphabet.validate_word(word)
    n = len(gamma)
    if f.kind == "geometric":
        from ifs_geometry import log_derivative_at, require_valid_ifs
        require_valid_ifs(f.ifs)
        return f.scale * log_derivative_at(f.ifs, gamma) + n * f.offset
    table = f.table
    m0 = f.depth
    point = PeriodicPoint(gamma)
    total = math.fsum(table[word_index(point.prefix(k + m0)[k:], f.alphabet_size)] for k in range(n))
    return total + n * f.offset


@lru_cache(maxsize=128)
def periodic_sums(f: PotentialSpec, n: int,
                  settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> np.ndarray:
    """所有长度为 n 的词 (字典序) 的 S_n f(γ̄)"""
    s = f.alphabet_size
    if f.kind == "geometric":
        from ifs_geometry import periodic_log_derivatives, require_valid_ifs
        require_valid_ifs(f.ifs)
        sums = f.scale * periodic_log_derivatives(f.ifs, n, settings) + n * f.offset
    else:
        digits = word_digits(s, n, settings)
        table = _table_array(f)
        m0 = f.depth
        sums = np.zeros(digits.shape[0])
        for k in range(n):
            window = digits[:, [(k + j) % n for j in range(m0)]]
            sums += table[_digits_to_index(window, s)]
        sums += n * f.offset
    sums.setflags(write=False)
    return sums


def _window_bounds(f: PotentialSpec, digits: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    已知前 digits.shape[1] 个符号时, 对 S_n f 的每行给出下界和上界
    (超出已知长度的窗口用查找表在给定前缀下的最小/最大值)
    """
    s = f.alphabet_size
    table = _table_array(f)
    m0 = f.depth
    known = digits.shape[1]
    lower = np.zeros(digits.shape[0])
    upper = np.zeros(digits.shape[0])
    for j in range(n):
        length = min(m0, known - j)
        prefix = _digits_to_index(digits[:, j:j + length], s)
        if length == m0:
            lower += table[prefix]
            upper += table[prefix]
        else:
            blocks = table.reshape(s ** length, s ** (m0 - length))
            lower += blocks.min(axis=1)[prefix]
            upper += blocks.max(axis=1)[prefix]
    return lower + n * f.offset, upper + n * f.offset


def _hoelder_spread(f: PotentialSpec, n: int) -> float:
    c, theta = f.hoelder_bound
    return c * theta * (1 - theta ** n) / (1 - theta)


def cylinder_bounds(f: PotentialSpec, word: Sequence[int], probe_depth: int,
                    settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> CylinderBounds:
    """
    柱集 [γ] 上 S_|γ| f 的确定性上下界

    参数:
        f: 势函数
        word: 词 γ
        probe_depth: 枚举 γ 的所有延拓到该深度 (≥ |γ|)

    返回:
        CylinderBounds; 有Hölder界时用 C·θ/(1−θ) 放宽周期点值,
        否则枚举所有延拓
    """
    gamma = f.alphabet.validate_word(word)
    n = len(gamma)
    if probe_depth < n:
        raise SpecValidationError(f"探测深度 {probe_depth} 小于词长 {n}")
    if f.hoelder_bound is not None:
        centre = birkhoff_sum_periodic(f, gamma)
        spread = _hoelder_spread(f, n)
        return CylinderBounds(centre - spread, centre + spread, "hoelder")
    extension = probe_depth - n
    s = f.alphabet_size
    if f.kind == "geometric":
        from ifs_geometry import log_derivative_range, require_valid_ifs
        require_valid_ifs(f.ifs)
        check_enumeration_budget(s, extension, settings)
        lo, hi = log_derivative_range(f.ifs, gamma, extension)
        source = "enumeration" if f.ifs.is_affine else "heuristic"
        return CylinderBounds(f.scale * lo + n * f.offset, f.scale * hi + n * f.offset, source)
    tails = word_digits(s, extension, settings) if extension > 0 else np.zeros((1, 0), dtype=np.int64)
    head = np.broadcast_to(np.array(gamma, dtype=np.int64) - 1, (tails.shape[0], n))
    lower, upper = _window_bounds(f, np.hstack([head, tails]), n)
    return CylinderBounds(float(lower.min()), float(upper.max()), "enumeration")


@lru_cache(maxsize=128)
def cylinder_bounds_array(f: PotentialSpec, n: int, extension: int,
                          settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS
                          ) -> Tuple[np.ndarray, np.ndarray]:
    """所有长度为 n 的词的柱集上下界 (与 cylinder_bounds 逐词一致, 向量化)"""
    s = f.alphabet_size
    if f.hoelder_bound is not None:
        centre = periodic_sums(f, n, settings)
        spread = _hoelder_spread(f, n)
        return centre - spread, centre + spread
    if f.kind == "geometric":
        from ifs_geometry import log_derivative_range_array, require_valid_ifs
        require_valid_ifs(f.ifs)
        lo, hi = log_derivative_range_array(f.ifs, n, extension, settings)
        return f.scale * lo + n * f.offset, f.scale * hi + n * f.offset
    digits = word_digits(s, n + extension, settings)
    lower, upper = _window_bounds(f, digits, n)
    lower = lower.reshape(s ** n, s ** extension).min(axis=1)
    upper = upper.reshape(s ** n, s ** extension).max(axis=1)
    return lower, upper
