"""
多重分形计算系统异常定义
命令行退出码与异常类别一一对应
"""
from typing import Optional

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class MultifractalError(Exception):
    """所有计算错误的基类"""

    kind = "error"
    exit_code = EXIT_NUMERICAL


class SpecValidationError(MultifractalError, ValueError):
    """迭代函数系统 / 势函数 / 共轭对不满足前提条件"""

    kind = "validation"
    exit_code = EXIT_VALIDATION


class ConfigError(SpecValidationError):
    """场景配置文件格式错误（未知字段、网格为空等）"""

    kind = "config"


class EnumerationBudgetError(MultifractalError):
    """词枚举规模超过预算 n·log s > log(max_words)"""

    kind = "budget"


class NumericalError(MultifractalError):
    """数值计算失败"""

    kind = "numerical"


class BracketError(NumericalError):
    """二分法初始区间无法包含根"""

    kind = "bracket"


class ConvergenceError(NumericalError):
    """幂迭代或不动点求解未收敛"""

    kind = "convergence"


class GapPointError(NumericalError):
    """
    点落在吸引子的间隙中

    参数:
        left: 左侧相邻柱集区间的右端点
        right: 右侧相邻柱集区间的左端点
    """

    kind = "gap"

    def __init__(self, message: str, left: Optional[float] = None, right: Optional[float] = None):
        super().__init__(message)
        self.left = left
        self.right = right
