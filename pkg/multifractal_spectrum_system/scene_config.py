"""
场景配置: 从单个 JSON 文档加载迭代函数系统、势函数、网格与深度 (严格键检查)
"""
import json
import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple

import numpy as np

from exceptions import ConfigError, SpecValidationError
from ifs_geometry import IFSSpec
from multifractal import beta_grid
from symbolic_core import PotentialSpec

logger = logging.getLogger(__name__)

PRESET_FILE = "预设系统表.json"

TOP_LEVEL_KEYS = {"name", "ifs", "ifs_g", "potential", "beta_grid", "depths", "q_grid",
                  "radius_schedule", "hoelder_points", "range", "conjugacy", "outputs", "seed"}
POTENTIAL_KEYS = {
    "symbol_log_weights": {"values"},
    "probabilities": {"values"},
    "locally_constant": {"depth", "table"},
    "random_locally_constant": {"depth", "low", "high"},
    "geometric": {"source", "scale"},
}


def _load_json_file(filename: str) -> Dict:
    """按多个候选路径加载 JSON 数据表"""
    search_paths = [
        filename,
        os.path.join('.', filename),
        os.path.join(os.path.dirname(os.path.abspath(__file__)), filename),
    ]
    for path in search_paths:
        if os.path.exists(path):
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
    raise FileNotFoundError(f"找不到文件: {filename}")


@lru_cache(maxsize=1)
def load_preset_systems() -> Dict[str, Dict]:
    """加载预设系统表, 返回 名称 → 配置"""
    data = _load_json_file(PRESET_FILE)
    return {item["name"]: item for item in data.get("data", [])}


def preset_ifs(name: str) -> IFSSpec:
    presets = load_preset_systems()
    if name not in presets:
        raise ConfigError(f"未知的预设系统 '{name}', 可选: {sorted(presets)}")
    item = presets[name]
    return IFSSpec.from_dict({k: v for k, v in item.items() if k != "description"}, name)


def _check_keys(section: str, data: Dict, allowed: set, required: set = frozenset()) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"配置项 {section} 必须是对象")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"配置项 {section} 中存在未知键: {unknown}")
    missing = sorted(set(required) - set(data))
    if missing:
        raise ConfigError(f"配置项 {section} 缺少键: {missing}")


@dataclass(frozen=True)
class BetaGrid:
    min: float = -20.0
    max: float = 20.0
    step: float = 0.1

    def values(self) -> np.ndarray:
        return beta_grid(self.min, self.max, self.step)


@dataclass(frozen=True)
class Depths:
    """pressure: 周期点深度 n; measure: 近似深度 m (None 为缺省); staircase: 阶梯深度; theta: Θ 深度"""
    pressure: int = 10
    measure: Optional[int] = None
    staircase: int = 10
    coarse: int = 10
    theta: int = 16


@dataclass(frozen=True)
class RadiusSchedule:
    r0: float = 1.0
    rho: float = 0.5
    K: int = 20
    window: int = 2
    depth: Optional[int] = None


@dataclass(frozen=True)
class SceneConfig:
    """一次运行的全部输入"""
    name: str
    ifs: IFSSpec
    potential: PotentialSpec
    raw: Dict[str, Any] = field(compare=False, hash=False)
    ifs_g: Optional[IFSSpec] = None
    beta_grid: BetaGrid = BetaGrid()
    depths: Depths = Depths()
    q_grid: Tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
    radius_schedule: RadiusSchedule = RadiusSchedule()
    hoelder_points: Tuple[float, ...] = (0.0,)
    cycle_length: int = 1
    beta_max: Optional[float] = None
    conjugacy_samples: int = 50
    output_dir: str = "out"
    seed: int = 0


def _parse_ifs(section: str, value: Any) -> IFSSpec:
    if isinstance(value, str):
        return preset_ifs(value)
    if not isinstance(value, dict):
        raise ConfigError(f"配置项 {section} 必须是预设名称或对象")
    try:
        return IFSSpec.from_dict(value, section)
    except SpecValidationError as exc:
        raise ConfigError(f"配置项 {section}: {exc}") from exc


def _parse_potential(data: Dict, ifs: IFSSpec, ifs_g: Optional[IFSSpec], seed: int) -> PotentialSpec:
    kind = data.get("type") if isinstance(data, dict) else None
    if kind not in POTENTIAL_KEYS:
        raise ConfigError(f"potential.type 必须是 {sorted(POTENTIAL_KEYS)} 之一, 实际为 {kind}")
    required = POTENTIAL_KEYS[kind] - {"scale", "source"}
    # 几何势的上下界由迭代函数系统给出, 不接受 hoelder_bound
    allowed = POTENTIAL_KEYS[kind] | {"type"} | (set() if kind == "geometric" else {"hoelder_bound"})
    _check_keys("potential", data, allowed, required)
    bound = tuple(data["hoelder_bound"]) if "hoelder_bound" in data else None
    s = ifs.size
    if kind == "symbol_log_weights":
        potential = PotentialSpec.symbol_log_weights(data["values"], bound)
    elif kind == "probabilities":
        potential = PotentialSpec.from_probabilities(data["values"], bound)
    elif kind == "locally_constant":
        potential = PotentialSpec.locally_constant(data["table"], int(data["depth"]), s, bound)
    elif kind == "random_locally_constant":
        depth = int(data["depth"])
        rng = np.random.default_rng(seed)
        table = rng.uniform(float(data["low"]), float(data["high"]), size=s ** depth)
        potential = PotentialSpec.locally_constant(table.tolist(), depth, s, bound)
    else:
        source = data.get("source", "ifs")
        if source == "ifs":
            target = ifs
        elif source == "ifs_g" and ifs_g is not None:
            target = ifs_g
        else:
            raise ConfigError(f"potential.source 必须是 'ifs' 或已配置的 'ifs_g', 实际为 {source}")
        potential = PotentialSpec.geometric(target, float(data.get("scale", 1.0)))
    if potential.alphabet_size != s:
        raise ConfigError(f"势函数字母表大小 {potential.alphabet_size} 与分支数 {s} 不一致")
    return potential


def _sorted_tuple(section: str, values: Any) -> Tuple[float, ...]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"配置项 {section} 必须是非空列表")
    result = tuple(float(v) for v in values)
    if any(b <= a for a, b in zip(result, result[1:])):
        raise ConfigError(f"配置项 {section} 必须严格递增")
    return result


def parse_scene(raw: Dict[str, Any]) -> SceneConfig:
    """
    解析并校验场景配置

    返回:
        SceneConfig; 任何未知键、非法网格都抛出 ConfigError
    """
    _check_keys("(顶层)", raw, TOP_LEVEL_KEYS, {"ifs"})
    seed = int(raw.get("seed", 0))
    ifs = _parse_ifs("ifs", raw["ifs"])
    ifs_g = _parse_ifs("ifs_g", raw["ifs_g"]) if "ifs_g" in raw else None

    if "potential" in raw:
        potential = _parse_potential(raw["potential"], ifs, ifs_g, seed)
    elif ifs_g is not None:
        potential = PotentialSpec.geometric(ifs_g)
    else:
        raise ConfigError("缺少 potential (只有配置了 ifs_g 时才可省略)")

    grid = raw.get("beta_grid", {})
    _check_keys("beta_grid", grid, {"min", "max", "step"})
    betas = BetaGrid(float(grid.get("min", -20.0)), float(grid.get("max", 20.0)),
                     float(grid.get("step", 0.1)))
    if not betas.step > 0 or betas.max < betas.min:
        raise ConfigError(f"beta_grid 非法: {grid}")

    depth_data = raw.get("depths", {})
    _check_keys("depths", depth_data, {"pressure", "measure", "staircase", "coarse", "theta"})
    depths = Depths(
        pressure=int(depth_data.get("pressure", 10)),
        measure=int(depth_data["measure"]) if depth_data.get("measure") is not None else None,
        staircase=int(depth_data.get("staircase", 10)),
        coarse=int(depth_data.get("coarse", 10)),
        theta=int(depth_data.get("theta", 16)),
    )
    if min(depths.pressure, depths.staircase, depths.coarse, depths.theta) < 1 or \
            (depths.measure is not None and depths.measure < 1):
        raise ConfigError(f"depths 中的深度必须 ≥ 1: {depth_data}")

    schedule_data = raw.get("radius_schedule", {})
    _check_keys("radius_schedule", schedule_data, {"r0", "rho", "K", "window", "depth"})
    schedule = RadiusSchedule(
        r0=float(schedule_data.get("r0", 1.0)),
        rho=float(schedule_data.get("rho", 0.5)),
        K=int(schedule_data.get("K", 20)),
        window=int(schedule_data.get("window", 2)),
        depth=int(schedule_data["depth"]) if schedule_data.get("depth") is not None else None,
    )
    if not 0 < schedule.rho < 1 or schedule.r0 <= 0 or schedule.window < 1 or schedule.K < 2 * schedule.window:
        raise ConfigError(f"radius_schedule 非法: {schedule_data}")

    range_data = raw.get("range", {})
    _check_keys("range", range_data, {"cycle_length", "beta_max"})
    conjugacy_data = raw.get("conjugacy", {})
    _check_keys("conjugacy", conjugacy_data, {"samples"})
    outputs = raw.get("outputs", {})
    _check_keys("outputs", outputs, {"dir"})

    cycle_length = int(range_data.get("cycle_length", 1))
    if cycle_length < 1:
        raise ConfigError("range.cycle_length 必须 ≥ 1")

    scene = SceneConfig(
        name=str(raw.get("name", ifs.name or "scene")),
        ifs=ifs,
        potential=potential,
        raw=raw,
        ifs_g=ifs_g,
        beta_grid=betas,
        depths=depths,
        q_grid=_sorted_tuple("q_grid", raw.get("q_grid", [-2, -1, 0, 1, 2, 3])),
        radius_schedule=schedule,
        hoelder_points=tuple(float(x) for x in raw.get("hoelder_points", [0.0])),
        cycle_length=cycle_length,
        beta_max=float(range_data["beta_max"]) if "beta_max" in range_data else None,
        conjugacy_samples=int(conjugacy_data.get("samples", 50)),
        output_dir=str(outputs.get("dir", "out")),
        seed=seed,
    )
    logger.info(f"✅ 场景 {scene.name} 加载完成: {ifs.size} 个分支, 势函数类型 {potential.kind}")
    return scene


def load_scene(path: str) -> SceneConfig:
    """读取 JSON 配置文件 (I/O 错误以 OSError 抛出)"""
    with open(path, 'r', encoding='utf-8') as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"配置文件 {path} 不是合法 JSON: {exc}") from exc
    return parse_scene(raw)
