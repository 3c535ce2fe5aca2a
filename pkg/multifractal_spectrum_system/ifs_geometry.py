"""
实直线上的共形迭代函数系统
仿射/Möbius分支映射、开集条件校验、柱集区间、编码映射 π 及其逆 (数字提取),
以及几何势 φ(ω) = log φ'_{ω1}(π(σω)) 的数值后端
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from exceptions import ConvergenceError, GapPointError, SpecValidationError
from symbolic_core import (DEFAULT_SYMBOLIC_SETTINGS, Alphabet, SymbolicSettings, Word,
                           check_enumeration_budget, word_digits)

logger = logging.getLogger(__name__)

BRANCH_KINDS = ("affine", "moebius")

# 端点比较容差 (区间端点经过外向舍入)
ENDPOINT_TOL = 1e-12
FIXED_POINT_XTOL = 1e-14


def _round_down(value):
    return np.nextafter(value, -np.inf)


def _round_up(value):
    return np.nextafter(value, np.inf)


@dataclass(frozen=True)
class BranchMap:
    """
    单个保向分支映射
    affine:  x ↦ ratio·x + offset
    moebius: x ↦ (a·x + b)/(c·x + d), ad − bc > 0
    """
    kind: str
    ratio: float = 0.0
    offset: float = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0

    def __post_init__(self):
        if self.kind not in BRANCH_KINDS:
            raise SpecValidationError(f"不支持的分支类型: {self.kind}")

    @classmethod
    def affine(cls, ratio: float, offset: float) -> "BranchMap":
        return cls("affine", ratio=float(ratio), offset=float(offset))

    @classmethod
    def moebius(cls, a: float, b: float, c: float, d: float) -> "BranchMap":
        return cls("moebius", a=float(a), b=float(b), c=float(c), d=float(d))

    @classmethod
    def from_dict(cls, data: Dict) -> "BranchMap":
        kind = data.get("type")
        if kind == "affine":
            expected = {"type", "ratio", "offset"}
        elif kind == "moebius":
            expected = {"type", "a", "b", "c", "d"}
        else:
            raise SpecValidationError(f"不支持的分支类型: {kind}")
        unknown = sorted(set(data) - expected)
        missing = sorted(expected - set(data))
        if unknown or missing:
            raise SpecValidationError(f"分支参数错误: 未知键 {unknown}, 缺少键 {missing}")
        if kind == "affine":
            return cls.affine(data["ratio"], data["offset"])
        return cls.moebius(data["a"], data["b"], data["c"], data["d"])

    def to_dict(self) -> Dict:
        if self.kind == "affine":
            return {"type": "affine", "ratio": self.ratio, "offset": self.offset}
        return {"type": "moebius", "a": self.a, "b": self.b, "c": self.c, "d": self.d}

    @property
    def determinant(self) -> float:
        if self.kind == "affine":
            return self.ratio
        return self.a * self.d - self.b * self.c

    def __call__(self, x):
        if self.kind == "affine":
            return self.ratio * x + self.offset
        return (self.a * x + self.b) / (self.c * x + self.d)

    def derivative(self, x):
        if self.kind == "affine":
            return np.full_like(np.asarray(x, dtype=float), self.ratio)
        return self.determinant / (self.c * x + self.d) ** 2

    def log_derivative(self, x):
        if self.kind == "affine":
            return np.full_like(np.asarray(x, dtype=float), math.log(self.ratio))
        return math.log(self.determinant) - 2.0 * np.log(np.abs(self.c * x + self.d))

    def image(self, lo, hi):
        """区间 [lo, hi] 的像, 端点各向外舍入 1 ulp"""
        return _round_down(self(lo)), _round_up(self(hi))

    def has_pole_in(self, lo: float, hi: float) -> bool:
        if self.kind == "affine" or self.c == 0:
            return False
        return (self.c * lo + self.d) * (self.c * hi + self.d) <= 0

    def attracting_fixed_point(self) -> float:
        """单个分支的吸引不动点 (用于缺省凸包)"""
        if self.kind == "affine":
            return self.offset / (1.0 - self.ratio)
        if self.c == 0:
            return (self.b / self.d) / (1.0 - self.a / self.d)
        roots = np.roots([self.c, self.d - self.a, -self.b])
        candidates = [float(r.real) for r in roots
                      if abs(r.imag) < 1e-12 and self.c * r.real + self.d != 0
                      and float(self.derivative(r.real)) < 1.0]
        if not candidates:
            raise SpecValidationError(f"Möbius分支 {self.to_dict()} 没有吸引不动点")
        return candidates[0]


@dataclass(frozen=True)
class IFSSpec:
    """迭代函数系统: 按像区间递增排列的分支、凸包 X、开集 U"""
    branches: Tuple[BranchMap, ...]
    hull: Tuple[float, float]
    osc: Tuple[float, float]
    name: str = ""

    @classmethod
    def build(cls, branches: Sequence[BranchMap], hull: Optional[Sequence[float]] = None,
              osc: Optional[Sequence[float]] = None, name: str = "") -> "IFSSpec":
        """
        构造迭代函数系统

        参数:
            branches: 分支映射列表 (至少2个)
            hull: 紧区间 X, 缺省为 [首分支不动点, 末分支不动点]
            osc: 开区间 U, 缺省为 X 的内部
        """
        branches = tuple(branches)
        Alphabet(len(branches))
        if hull is None:
            hull = (branches[0].attracting_fixed_point(), branches[-1].attracting_fixed_point())
        hull = (float(hull[0]), float(hull[1]))
        osc = hull if osc is None else (float(osc[0]), float(osc[1]))
        return cls(branches, hull, osc, name)

    @classmethod
    def from_dict(cls, data: Dict, name: str = "") -> "IFSSpec":
        unknown = sorted(set(data) - {"branches", "hull", "osc", "name", "description"})
        if unknown:
            raise SpecValidationError(f"迭代函数系统配置中存在未知键: {unknown}")
        if "branches" not in data:
            raise SpecValidationError("迭代函数系统配置缺少 branches")
        branches = [BranchMap.from_dict(item) for item in data["branches"]]
        return cls.build(branches, data.get("hull"), data.get("osc"), data.get("name", name))

    def to_dict(self) -> Dict:
        return {"branches": [b.to_dict() for b in self.branches],
                "hull": list(self.hull), "osc": list(self.osc)}

    @property
    def size(self) -> int:
        return len(self.branches)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.size)

    @property
    def is_affine(self) -> bool:
        return all(b.kind == "affine" for b in self.branches)

    @property
    def hull_diameter(self) -> float:
        return self.hull[1] - self.hull[0]


@dataclass(frozen=True)
class ValidationReport:
    """校验报告; errors 为空即通过"""
    passed: bool
    contraction_factors: Tuple[float, ...]
    image_intervals: Tuple[Tuple[float, float], ...]
    errors: Tuple[str, ...] = ()
    offending: Tuple[Tuple[int, ...], ...] = ()

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "contraction_factors": list(self.contraction_factors),
            "image_intervals": [list(iv) for iv in self.image_intervals],
            "errors": list(self.errors),
            "offending": [list(o) for o in self.offending],
        }


@dataclass(frozen=True)
class CylinderInterval:
    word: Word
    lo: float
    hi: float

    @property
    def diameter(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class DigitsResult:
    """x 的深度 n 编码; 边界点有两个编码"""
    primary: Word
    secondary: Optional[Word] = None

    @property
    def boundary(self) -> bool:
        return self.secondary is not None

    @property
    def words(self) -> Tuple[Word, ...]:
        return (self.primary,) if self.secondary is None else (self.primary, self.secondary)


def _tol(*values: float) -> float:
    return ENDPOINT_TOL * max(1.0, *(abs(v) for v in values))


def validate_ifs(spec: IFSSpec) -> ValidationReport:
    """
    校验迭代函数系统: 保向、压缩、X 不变、开集条件 (φ_i(U) ⊂ U 且像两两不交) 和分支顺序

    返回:
        ValidationReport, 失败时 errors 给出出错的分支或分支对 (编号从1开始)
    """
    errors: List[str] = []
    offending: List[Tuple[int, ...]] = []
    factors: List[float] = []
    images: List[Tuple[float, float]] = []
    x_lo, x_hi = spec.hull
    u_lo, u_hi = spec.osc

    if not x_lo < x_hi:
        errors.append(f"凸包 X={spec.hull} 不是非退化区间")
    if not u_lo < u_hi:
        errors.append(f"开集 U={spec.osc} 不是非空开区间")
    if errors:
        return ValidationReport(False, (), (), tuple(errors), ())

    span_lo, span_hi = min(x_lo, u_lo), max(x_hi, u_hi)
    for i, branch in enumerate(spec.branches, start=1):
        if branch.determinant <= 0:
            errors.append(f"分支 {i} 不是保向映射 (行列式 {branch.determinant:.6g} ≤ 0)")
            offending.append((i,))
            factors.append(float("nan"))
            images.append((float("nan"), float("nan")))
            continue
        if branch.has_pole_in(span_lo, span_hi):
            errors.append(f"分支 {i} 在 [{span_lo}, {span_hi}] 上有极点")
            offending.append((i,))
            factors.append(float("nan"))
            images.append((float("nan"), float("nan")))
            continue
        d_lo, d_hi = float(branch.derivative(x_lo)), float(branch.derivative(x_hi))
        factor = max(d_lo, d_hi)
        factors.append(factor)
        if min(d_lo, d_hi) <= 0 or factor >= 1:
            errors.append(f"分支 {i} 在 X 上不是压缩映射 (导数范围 [{min(d_lo, d_hi):.6g}, {factor:.6g}])")
            offending.append((i,))
        img = (float(branch(x_lo)), float(branch(x_hi)))
        images.append(img)
        if img[0] < x_lo - _tol(x_lo) or img[1] > x_hi + _tol(x_hi):
            errors.append(f"分支 {i} 的像 {img} 不在 X={spec.hull} 内")
            offending.append((i,))
        u_img = (float(branch(u_lo)), float(branch(u_hi)))
        if u_img[0] < u_lo - _tol(u_lo) or u_img[1] > u_hi + _tol(u_hi):
            errors.append(f"分支 {i} 不满足 φ(U) ⊂ U")
            offending.append((i,))

    if not errors:
        u_images = [(float(b(u_lo)), float(b(u_hi))) for b in spec.branches]
        for i in range(spec.size):
            for j in range(i + 1, spec.size):
                lo_i, hi_i = u_images[i]
                lo_j, hi_j = u_images[j]
                if hi_i > lo_j + _tol(hi_i, lo_j) and hi_j > lo_i + _tol(hi_j, lo_i):
                    errors.append(f"分支 {i + 1} 与分支 {j + 1} 的像在 U 上重叠")
                    offending.append((i + 1, j + 1))
                elif hi_i > lo_j + _tol(hi_i, lo_j):
                    errors.append(f"分支 {i + 1} 与分支 {j + 1} 的像没有按递增顺序排列")
                    offending.append((i + 1, j + 1))

    passed = not errors
    if passed:
        logger.info(f"✅ 迭代函数系统 {spec.name or ''} 校验通过, 压缩系数 {factors}")
    else:
        logger.info(f"❌ 迭代函数系统 {spec.name or ''} 校验失败: {'; '.join(errors)}")
    return ValidationReport(passed, tuple(factors), tuple(images), tuple(errors), tuple(offending))


@lru_cache(maxsize=64)
def require_valid_ifs(spec: IFSSpec) -> ValidationReport:
    """校验失败时抛出 SpecValidationError"""
    report = validate_ifs(spec)
    if not report.passed:
        raise SpecValidationError("迭代函数系统校验失败: " + "; ".join(report.errors))
    return report


def compose(spec: IFSSpec, word: Sequence[int], x):
    """φ_{γ1}∘…∘φ_{γn}(x)"""
    for a in reversed(word):
        x = spec.branches[a - 1](x)
    return x


def cylinder_interval(spec: IFSSpec, word: Sequence[int]) -> CylinderInterval:
    """
    柱集区间 π[γ] = φ_{γ1}∘…∘φ_{γn}(X), 由内向外逐步复合并外向舍入
    """
    gamma = spec.alphabet.validate_word(word)
    require_valid_ifs(spec)
    lo, hi = spec.hull
    for a in reversed(gamma):
        lo, hi = spec.branches[a - 1].image(lo, hi)
    return CylinderInterval(gamma, float(lo), float(hi))


@lru_cache(maxsize=64)
def all_cylinder_intervals(spec: IFSSpec, n: int,
                           settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS
                           ) -> Tuple[np.ndarray, np.ndarray]:
    """所有深度 n 柱集区间的 (lo, hi) 数组, 按词的字典序排列"""
    require_valid_ifs(spec)
    check_enumeration_budget(spec.size, n, settings)
    lo = np.array([spec.hull[0]])
    hi = np.array([spec.hull[1]])
    for _ in range(n):
        images = [branch.image(lo, hi) for branch in spec.branches]
        lo = np.concatenate([img[0] for img in images])
        hi = np.concatenate([img[1] for img in images])
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


def coding_point(spec: IFSSpec, word: Sequence[int]) -> Tuple[float, float]:
    """返回 (柱集中点, 半径)"""
    cylinder = cylinder_interval(spec, word)
    return cylinder.midpoint, 0.5 * cylinder.diameter


def digits_of_point(spec: IFSSpec, x: float, n: int) -> DigitsResult:
    """
    求 x 的深度 n 编码 (柱集区间包含 x 的全部词, 至多两个)

    参数:
        spec: 已校验的迭代函数系统
        x: 实数点
        n: 深度

    返回:
        DigitsResult, primary 为字典序较小者

    异常:
        GapPointError: x 落在某一层柱集之间的空隙中, 附带两侧端点
    """
    require_valid_ifs(spec)
    if n < 1:
        raise SpecValidationError(f"深度必须 ≥ 1, 实际为 {n}")
    candidates: List[Word] = [()]
    for level in range(1, n + 1):
        children = [cylinder_interval(spec, word + (i,))
                    for word in candidates for i in spec.alphabet.symbols]
        hits = [c.word for c in children if c.contains(x)]
        if not hits:
            left = max((c.hi for c in children if c.hi < x), default=None)
            right = min((c.lo for c in children if c.lo > x), default=None)
            raise GapPointError(f"点 x={x} 在深度 {level} 处落在柱集之间的空隙中",
                                left=left, right=right)
        candidates = sorted(hits)
    if len(candidates) > 2:
        logger.warning(f"⚠️ 点 x={x} 在深度 {n} 有 {len(candidates)} 个编码, 只保留首尾两个")
    secondary = candidates[-1] if len(candidates) > 1 else None
    return DigitsResult(candidates[0], secondary)


def fixed_point(spec: IFSSpec, word: Sequence[int]) -> float:
    """
    复合映射 φ_γ 的唯一不动点
    仿射: 闭式 A/(1−R); Möbius: 在柱集内二分, 容差 1e−14
    """
    gamma = spec.alphabet.validate_word(word)
    if spec.is_affine:
        ratio, shift = 1.0, 0.0
        for a in reversed(gamma):
            branch = spec.branches[a - 1]
            ratio, shift = branch.ratio * ratio, branch.ratio * shift + branch.offset
        return shift / (1.0 - ratio)

    cylinder = cylinder_interval(spec, gamma)

    def residual(y: float) -> float:
        return float(compose(spec, gamma, y)) - y

    g_lo, g_hi = residual(cylinder.lo), residual(cylinder.hi)
    if g_lo <= 0:
        return cylinder.lo
    if g_hi >= 0:
        return cylinder.hi
    try:
        return optimize.bisect(residual, cylinder.lo, cylinder.hi,
                               xtol=FIXED_POINT_XTOL, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise ConvergenceError(f"词 {gamma} 的不动点求解失败, 系统可能已损坏: {exc}") from exc


def log_derivative_at(spec: IFSSpec, word: Sequence[int]) -> float:
    """log (φ_{γ1}∘…∘φ_{γn})' 在其不动点处的值, 即 S_n φ(γ̄)"""
    gamma = spec.alphabet.validate_word(word)
    if spec.is_affine:
        return math.fsum(math.log(spec.branches[a - 1].ratio) for a in gamma)
    y = fixed_point(spec, gamma)
    total = 0.0
    for a in reversed(gamma):
        branch = spec.branches[a - 1]
        total += float(branch.log_derivative(y))
        y = float(branch(y))
    return total


def _compose_digits(spec: IFSSpec, digits: np.ndarray, x: np.ndarray) -> np.ndarray:
    """逐行复合: digits 每行是一个词 (符号从0开始), x 的首维与之对齐"""
    x = np.array(x, dtype=float)
    for k in range(digits.shape[1] - 1, -1, -1):
        column = digits[:, k]
        out = np.empty_like(x)
        for i, branch in enumerate(spec.branches):
            mask = column == i
            out[mask] = branch(x[mask])
        x = out
    return x


def _log_derivative_digits(spec: IFSSpec, digits: np.ndarray, x: np.ndarray) -> np.ndarray:
    """逐行链式法则: 每行词的复合映射在 x 处的对数导数"""
    y = np.array(x, dtype=float)
    total = np.zeros_like(y)
    for k in range(digits.shape[1] - 1, -1, -1):
        column = digits[:, k]
        for i, branch in enumerate(spec.branches):
            mask = column == i
            total[mask] += branch.log_derivative(y[mask])
            y[mask] = branch(y[mask])
    return total


@lru_cache(maxsize=64)
def periodic_log_derivatives(spec: IFSSpec, n: int,
                             settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> np.ndarray:
    """所有长度为 n 的词 (字典序) 在各自不动点处的对数导数, 向量化"""
    require_valid_ifs(spec)
    digits = word_digits(spec.size, n, settings)
    if spec.is_affine:
        log_ratios = np.array([math.log(b.ratio) for b in spec.branches])
        return log_ratios[digits].sum(axis=1)
    lo, hi = (np.array(a) for a in all_cylinder_intervals(spec, n, settings))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = _compose_digits(spec, digits, mid) - mid > 0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.max(hi - lo) <= FIXED_POINT_XTOL:
            break
    else:
        raise ConvergenceError(f"深度 {n} 的周期点不动点二分未收敛")
    return _log_derivative_digits(spec, digits, 0.5 * (lo + hi))


def _probe_points(spec: IFSSpec, extension: int, settings: SymbolicSettings) -> np.ndarray:
    if extension == 0:
        return np.array(spec.hull)
    lo, hi = all_cylinder_intervals(spec, extension, settings)
    return np.concatenate([lo, hi])


def log_derivative_range(spec: IFSSpec, word: Sequence[int], extension: int,
                         settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS) -> Tuple[float, float]:
    """在柱集 [γ] 上 log φ_γ' 的范围: 在全部深度 extension 的延拓柱集端点处取值"""
    gamma = spec.alphabet.validate_word(word)
    points = _probe_points(spec, extension, settings)
    digits = np.array([[a - 1 for a in gamma]], dtype=np.int64)
    values = _log_derivative_digits(spec, digits, points[None, :])
    return float(values.min()), float(values.max())


@lru_cache(maxsize=64)
def log_derivative_range_array(spec: IFSSpec, n: int, extension: int,
                               settings: SymbolicSettings = DEFAULT_SYMBOLIC_SETTINGS
                               ) -> Tuple[np.ndarray, np.ndarray]:
    """log_derivative_range 对所有长度为 n 的词的向量化版本"""
    require_valid_ifs(spec)
    check_enumeration_budget(spec.size, n + extension + 1, settings)
    digits = word_digits(spec.size, n, settings)
    if spec.is_affine:
        sums = periodic_log_derivatives(spec, n, settings)
        return sums, sums
    points = _probe_points(spec, extension, settings)
    values = _log_derivative_digits(spec, digits, np.broadcast_to(points, (digits.shape[0], points.size)))
    return values.min(axis=1), values.max(axis=1)


@lru_cache(maxsize=64)
def geometric_tables(spec: IFSSpec, depth: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    几何势在深度 depth 上的查找表

    值 = log φ'_{w1}(π[w2…wm] 的中点); 上下界取该柱集端点处的值
    (Möbius 导数在 X 上单调). 仿射系统返回常数 log r_i
    """
    require_valid_ifs(spec)
    if depth < 1:
        raise SpecValidationError(f"查找表深度必须 ≥ 1, 实际为 {depth}")
    if depth == 1:
        lo, hi = np.array([spec.hull[0]]), np.array([spec.hull[1]])
    else:
        lo, hi = all_cylinder_intervals(spec, depth - 1)
    mids, lowers, uppers = [], [], []
    for branch in spec.branches:
        at_lo, at_hi = branch.log_derivative(lo), branch.log_derivative(hi)
        mids.append(branch.log_derivative(0.5 * (lo + hi)))
        lowers.append(np.minimum(at_lo, at_hi))
        uppers.append(np.maximum(at_lo, at_hi))
    return tuple(np.concatenate(parts) for parts in (mids, lowers, uppers))


def distortion_probe(spec: IFSSpec, depths: Sequence[int] = tuple(range(1, 11))) -> Dict[int, float]:
    """
    有界畸变检验: 每个深度上 max |log diam π[γ] − S_n φ(γ̄) − log diam X|
    """
    require_valid_ifs(spec)
    result: Dict[int, float] = {}
    log_hull = math.log(spec.hull_diameter)
    for n in depths:
        lo, hi = all_cylinder_intervals(spec, n)
        gaps = np.log(hi - lo) - periodic_log_derivatives(spec, n) - log_hull
        result[n] = float(np.max(np.abs(gaps)))
    return result


def max_cylinder_diameter(spec: IFSSpec, n: int) -> float:
    lo, hi = all_cylinder_intervals(spec, n)
    return float(np.max(hi - lo))
