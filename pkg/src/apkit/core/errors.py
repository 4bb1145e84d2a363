"""
异常定义
校验类错误对应 CLI 退出码 1，数值类错误对应退出码 2
"""


class ApkitError(Exception):
    """apkit 所有异常的基类"""

    exit_code = 2


class ValidationError(ApkitError, ValueError):
    """输入不满足前置条件"""

    exit_code = 1


class DimensionError(ValidationError):
    """矩阵/向量维度不匹配或越界"""


class RankError(ValidationError):
    """声明的秩与数值秩不符，或矩阵行秩不满"""


class BudgetExceededError(ValidationError):
    """穷举规模超出预算"""


class InsufficientDataError(ValidationError):
    """拟合所需的数据点不足"""


class ImageFormatError(ValidationError):
    """PGM 文件损坏或格式不受支持"""


class NumericalError(ApkitError, ArithmeticError):
    """数值计算失败（SVD 不收敛等）"""

    exit_code = 2


class SingularGapError(NumericalError):
    """σ_r 与 σ_{r+1} 之间没有足够的间隔，截断投影不可微"""


class ConvergenceError(NumericalError):
    """LAPACK 例程不收敛"""
