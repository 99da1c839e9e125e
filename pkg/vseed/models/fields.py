"""网格与离散场数据模型"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ChannelGrid(BaseModel):
    """周期通道交错网格：x 方向周期，y=0 与 y=1 为平直壁面"""
    model_config = ConfigDict(frozen=True)

    nx: int = Field(ge=4, description="x 方向单元数")
    ny: int = Field(ge=4, description="y 方向单元数")
    lx: float = Field(default=1.0, gt=0.0, description="通道长度")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def x_faces(self) -> np.ndarray:
        """u 所在竖直面的 x 坐标"""
        return np.arange(self.nx) * self.hx

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    @property
    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    @property
    def y_ghosted(self) -> np.ndarray:
        """含上下虚拟层的 u 行坐标（长度 ny+2）"""
        return (np.arange(-1, self.ny + 1) + 0.5) * self.hy

    @property
    def y_nodes(self) -> np.ndarray:
        """v 所在水平面（以及网格节点）的 y 坐标，首末行在壁面上"""
        return np.arange(self.ny + 1) * self.hy

    def row_weights(self) -> np.ndarray:
        """节点/水平面行的中点求积权重，壁面行取半"""
        w = np.full(self.ny + 1, self.cell_volume)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


class VelocityField(BaseModel):
    """交错网格速度场

    u: (nx, ny+2)，第 0 行与第 ny+1 行为壁外虚拟层；
    v: (nx, ny+1)，第 0 行与第 ny 行恰在壁面上。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: ChannelGrid
    u: np.ndarray
    v: np.ndarray

    @model_validator(mode="after")
    def _check_shapes(self) -> "VelocityField":
        g = self.grid
        if self.u.shape != (g.nx, g.ny + 2):
            raise ValueError(f"u 形状应为 {(g.nx, g.ny + 2)}，实际 {self.u.shape}")
        if self.v.shape != (g.nx, g.ny + 1):
            raise ValueError(f"v 形状应为 {(g.nx, g.ny + 1)}，实际 {self.v.shape}")
        return self

    @classmethod
    def zeros(cls, grid: ChannelGrid) -> "VelocityField":
        return cls(grid=grid, u=np.zeros((grid.nx, grid.ny + 2)), v=np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def from_interior(
        cls,
        grid: ChannelGrid,
        u_interior: np.ndarray,
        v_interior: np.ndarray,
        v_bottom: Optional[np.ndarray] = None,
        v_top: Optional[np.ndarray] = None,
    ) -> "VelocityField":
        """由内部未知量构造（虚拟层置零，壁面 v 可选）"""
        field = cls.zeros(grid)
        field.u[:, 1:-1] = u_interior
        field.v[:, 1:-1] = v_interior
        if v_bottom is not None:
            field.v[:, 0] = v_bottom
        if v_top is not None:
            field.v[:, -1] = v_top
        return field

    @property
    def u_interior(self) -> np.ndarray:
        return self.u[:, 1:-1]

    @property
    def v_interior(self) -> np.ndarray:
        return self.v[:, 1:-1]

    def copy(self) -> "VelocityField":
        return VelocityField(grid=self.grid, u=self.u.copy(), v=self.v.copy())

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.u_interior)), np.max(np.abs(self.v))))

    def __add__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(grid=self.grid, u=self.u + other.u, v=self.v + other.v)

    def __sub__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(grid=self.grid, u=self.u - other.u, v=self.v - other.v)

    def __mul__(self, scalar: float) -> "VelocityField":
        return VelocityField(grid=self.grid, u=self.u * scalar, v=self.v * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "VelocityField":
        return self * -1.0


class PressureField(BaseModel):
    """单元中心压力场，规范代表元为零均值"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: ChannelGrid
    p: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self) -> "PressureField":
        if self.p.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"p 形状应为 {(self.grid.nx, self.grid.ny)}，实际 {self.p.shape}")
        return self

    @classmethod
    def zeros(cls, grid: ChannelGrid) -> "PressureField":
        return cls(grid=grid, p=np.zeros((grid.nx, grid.ny)))

    def with_zero_mean(self) -> "PressureField":
        return PressureField(grid=self.grid, p=self.p - self.p.mean())

    def __add__(self, other: "PressureField") -> "PressureField":
        return PressureField(grid=self.grid, p=self.p + other.p)


class DeformationField(BaseModel):
    """对称变形张量 D(u)：d11、d22 位于单元中心，d12 位于网格节点 (nx, ny+1)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: ChannelGrid
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray


class FieldNorms(BaseModel):
    """离散范数集合"""
    l2: float
    h1_semi: float
    l4: float
    boundary_l2_tangential: float


class WallData(BaseModel):
    """两壁面上随时间变化的法向通量采样 g(x_i, t_k)

    g > 0 表示流出（u·n > 0）。存储未缩放的 g，施加时才乘以 delta**alpha。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g_bottom: np.ndarray = Field(description="下壁通量 (nx, nt+1)")
    g_top: np.ndarray = Field(description="上壁通量 (nx, nt+1)")
    dt: float = Field(gt=0.0)
    alpha: float = Field(default=1.0, ge=1.0, description="通量指数")
    delta: float = Field(default=1.0, gt=0.0, le=1.0, description="边界层参数")
    lx: float = Field(default=1.0, gt=0.0)

    @field_validator("g_bottom", "g_top", mode="before")
    @classmethod
    def _freeze(cls, value) -> np.ndarray:
        array = np.array(value, dtype=float, copy=True)
        if array.ndim != 2:
            raise ValueError("通量数组必须是二维 (nx, nt+1)")
        if not np.all(np.isfinite(array)):
            raise ValueError("通量数组含非有限值")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shapes(self) -> "WallData":
        if self.g_bottom.shape != self.g_top.shape:
            raise ValueError("上下壁通量形状不一致")
        return self

    @classmethod
    def zeros(cls, nx: int, nt: int, dt: float, lx: float = 1.0, **kwargs) -> "WallData":
        return cls(g_bottom=np.zeros((nx, nt + 1)), g_top=np.zeros((nx, nt + 1)), dt=dt, lx=lx, **kwargs)

    @property
    def nx(self) -> int:
        return self.g_bottom.shape[0]

    @property
    def nt(self) -> int:
        return self.g_bottom.shape[1] - 1

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def T(self) -> float:
        return self.nt * self.dt

    def compatibility_defect(self) -> np.ndarray:
        """逐时间层的 sum_i (g_b + g_t) hx"""
        return (self.g_bottom + self.g_top).sum(axis=0) * self.hx

    def compatibility_scale(self) -> np.ndarray:
        return (np.abs(self.g_bottom) + np.abs(self.g_top)).sum(axis=0) * self.hx

    def is_compatible(self, rtol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.compatibility_defect()) <= rtol * self.compatibility_scale() + 1e-300))

    def is_zero(self) -> bool:
        return not (np.any(self.g_bottom) or np.any(self.g_top))

    def imposed(self, t_index: int, delta: float, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
        """壁面 v 值：v(x,0) = -delta^alpha g_b，v(x,1) = +delta^alpha g_t"""
        scale = delta ** alpha
        return -scale * self.g_bottom[:, t_index], scale * self.g_top[:, t_index]
