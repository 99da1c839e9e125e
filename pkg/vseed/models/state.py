"""求解器输出与分析结果的数据模型"""
from __future__ import annotations

from typing import Any, Callable, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from vseed.config import settings
from vseed.models.fields import ChannelGrid, PressureField, VelocityField


class StokesSolution(BaseModel):
    """单次鞍点求解结果"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    velocity: VelocityField
    pressure: PressureField
    residual: float = Field(default=0.0, description="动量/连续性相对残差")
    iterations: int = Field(default=0, description="Schur 补 CG 迭代次数")


class StokesTrajectory(BaseModel):
    """线性 Stokes 演化 z 及其逐层准定常提升 G"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    dt: float
    delta: float
    alpha: float
    states: List[StokesSolution] = Field(description="z(t_n)，n=0..nt")
    liftings: List[StokesSolution] = Field(description="G(t_n)，n=0..nt")

    @property
    def nt(self) -> int:
        return len(self.states) - 1

    @property
    def grid(self) -> ChannelGrid:
        return self.states[0].velocity.grid

    def perturbation(self, step: int) -> VelocityField:
        """Z = z - G（满足齐次边界条件）"""
        return self.states[step].velocity - self.liftings[step].velocity


class NseConfig(BaseModel):
    """非线性求解配置"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    delta: float = Field(default=1.0, gt=0.0, le=1.0)
    alpha: float = Field(default=1.0, ge=0.0)
    nu: float = Field(default=1.0, gt=0.0)
    dt: float = Field(gt=0.0)
    nt: int = Field(ge=1)
    forcing: Optional[Callable[[float], VelocityField]] = Field(default=None, description="体力 f(t)")
    mode: Literal["split", "monolithic", "noslip"] = "split"
    save_stride: int = Field(default=1, ge=1)
    initial_lifting: bool = Field(default=True, description="初值是否叠加 G(0)")
    solver_tol: float = Field(default_factory=lambda: settings.solver_tol, gt=0.0)
    projection_tol: float = Field(default_factory=lambda: settings.projection_tol, gt=0.0)
    max_iterations: int = Field(default_factory=lambda: settings.max_iterations, ge=1)
    blowup_factor: float = Field(default_factory=lambda: settings.blowup_factor, gt=1.0)
    cfl_safety: float = Field(default_factory=lambda: settings.cfl_safety, gt=0.0)

    @property
    def T(self) -> float:
        return self.dt * self.nt


class Snapshot(BaseModel):
    """某一时间层的速度与压力"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    step: int
    t: float
    velocity: VelocityField
    pressure: PressureField


class StepDiagnostics(BaseModel):
    """逐步诊断量"""
    step: int
    t: float
    energy: float = Field(description="动能 0.5||u||^2")
    deform_sq: float = Field(description="||D(u)||^2")
    boundary_diss: float = Field(description="delta^-1 ||u·tau||^2_Gamma")
    div_max: float = Field(description="max |div u|")
    gronwall_exceeded: bool = Field(default=False, description="分裂模式：sup ||U||^2 超出 Gronwall 上界")

    def to_row(self) -> List[Any]:
        return [self.step, self.t, self.energy, self.deform_sq, self.boundary_diss, self.div_max]


class LedgerEntry(BaseModel):
    """Gronwall 账本条目（分裂模式逐步记录，基线相关项由调用方补全）"""
    step: int
    t: float
    U_sq: float = Field(description="||U||^2")
    grad_U: float = Field(description="||grad U||")
    z_l2: float = Field(description="||z||")
    grad_z: float = Field(description="||grad z||")
    f_l2: float = Field(default=0.0, description="||f||")
    w_sq: float = Field(default=0.0, description="||U - v||^2")
    grad_v: float = Field(default=0.0, description="||grad v||")
    h2_v: float = Field(default=0.0, description="||v||_{H^2} 离散替代量")


class Trajectory(BaseModel):
    """非线性求解轨迹"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mode: Literal["split", "monolithic", "noslip"]
    dt: float
    nt: int
    delta: float
    alpha: float
    save_stride: int = 1
    snapshots: List[Snapshot] = Field(default_factory=list, description="u 的存档层")
    perturbation: List[Snapshot] = Field(default_factory=list, description="分裂模式下 U 的存档层")
    diagnostics: List[StepDiagnostics] = Field(default_factory=list)
    ledger: List[LedgerEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_lengths(self) -> "Trajectory":
        if self.diagnostics and len(self.diagnostics) != self.nt + 1:
            raise ValueError(f"诊断条目数应为 {self.nt + 1}，实际 {len(self.diagnostics)}")
        return self

    @property
    def grid(self) -> ChannelGrid:
        return self.snapshots[0].velocity.grid


class TimeSeries(BaseModel):
    """均匀时间网格上的（向量值）序列"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(description="(nt+1,) 或 (nt+1, m)")
    dt: float = Field(gt=0.0)

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value) -> np.ndarray:
        array = np.asarray(value, dtype=float)
        if array.ndim not in (1, 2):
            raise ValueError("时间序列必须是一维或二维数组")
        if array.shape[0] < 8:
            raise ValueError(f"时间序列至少需要 8 个采样点，实际 {array.shape[0]}")
        if not np.all(np.isfinite(array)):
            raise ValueError("时间序列含非有限值")
        return array

    @property
    def nt(self) -> int:
        return self.values.shape[0] - 1

    @property
    def T(self) -> float:
        return self.nt * self.dt


class ErrorRecord(BaseModel):
    """单个 delta 下的误差泛函"""
    delta: float
    sup_l2_sq: float = Field(description="sup_t ||u - v||^2")
    deform_l2_sq: float = Field(description="sum dt ||D(u - v)||^2")
    boundary_term: float = Field(description="delta^-1 sum dt ||(u - v)·tau||^2_Gamma")
    total: float
    trace_l2: float = Field(description="(sum dt ||(u - v)·tau||^2_Gamma)^(1/2)")


class SlopeFit(BaseModel):
    """对数-对数最小二乘拟合"""
    name: str
    slope: float
    intercept: float
    r2: float
    residual: float
    n_points: int


class RateCheck(BaseModel):
    """单条收敛阶断言"""
    name: str
    observed: Optional[float] = None
    threshold: float
    relation: Literal[">=", "<=", "=="]
    status: Literal["pass", "fail", "inconclusive", "not_applicable"]
    detail: str = ""


class RateReport(BaseModel):
    """delta 扫描报告"""
    alpha: float
    deltas: List[float]
    errors: List[ErrorRecord] = Field(default_factory=list, description="u - v")
    w_errors: List[ErrorRecord] = Field(default_factory=list, description="w = U - v")
    z_energy: List[float] = Field(default_factory=list, description="sup ||z||^2 + sum dt ||D z||^2")
    lifting_grad: List[float] = Field(default_factory=list, description="alpha=0 时 ||grad G||")
    psi_integrals: List[float] = Field(default_factory=list)
    gronwall_violations: List[int] = Field(default_factory=list)
    slopes: Dict[str, SlopeFit] = Field(default_factory=dict)
    checks: List[RateCheck] = Field(default_factory=list)
    failures: Dict[str, str] = Field(default_factory=dict, description="delta -> 失败原因")
    partial: bool = False

    @field_validator("deltas")
    @classmethod
    def _strictly_decreasing(cls, value: List[float]) -> List[float]:
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("deltas 必须严格递减")
        if any(d <= 0.0 or d > 1.0 for d in value):
            raise ValueError("deltas 必须位于 (0, 1]")
        return value

    @property
    def passed(self) -> bool:
        return not self.partial and all(c.status != "fail" for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump()
