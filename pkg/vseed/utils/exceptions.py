"""自定义异常"""
from typing import List, Optional


class VseedError(Exception):
    """求解器基础异常"""
    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ConfigValidationError(VseedError):
    """实验配置校验错误（聚合所有违规项）"""
    def __init__(self, violations: List[str], error_code: Optional[str] = "config_invalid"):
        self.violations = list(violations)
        message = "配置校验失败：\n" + "\n".join(f"  - {item}" for item in self.violations)
        super().__init__(message, error_code)


class InvalidParameterError(VseedError):
    """参数越界（如 delta <= 0）"""
    pass


class FluxDataError(VseedError):
    """法向通量数据错误（不相容或格式错误）"""
    def __init__(self, message: str, worst_index: Optional[int] = None,
                 error_code: Optional[str] = "flux_invalid"):
        self.worst_index = worst_index
        super().__init__(message, error_code)


class SolverConvergenceError(VseedError):
    """鞍点迭代未收敛"""
    def __init__(self, message: str, residual_history: Optional[List[float]] = None,
                 error_code: Optional[str] = "not_converged"):
        self.residual_history = list(residual_history or [])
        super().__init__(message, error_code)


class CFLViolationError(VseedError):
    """时间步长违反 CFL 约束"""
    pass


class BlowUpError(VseedError):
    """能量爆破保护触发"""
    pass


class TrajectoryMismatchError(VseedError):
    """两条轨迹的网格或时间离散不一致"""
    pass


class StorageError(VseedError):
    """存储错误"""
    pass
