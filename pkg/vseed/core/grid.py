"""MAC 网格上的离散微分算子与范数

约定：数组第一维为 x（周期，np.roll 处理），第二维为 y。
u 含上下虚拟层，v 的首末行位于壁面。
"""
import logging
from typing import Callable, Tuple, Union

import numpy as np

from vseed.models.fields import (
    ChannelGrid,
    DeformationField,
    FieldNorms,
    PressureField,
    VelocityField,
)
from vseed.utils.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)


def divergence(f: VelocityField) -> np.ndarray:
    """单元中心散度 (nx, ny)"""
    g = f.grid
    u = f.u_interior
    return (np.roll(u, -1, axis=0) - u) / g.hx + (f.v[:, 1:] - f.v[:, :-1]) / g.hy


def gradient(p: Union[PressureField, np.ndarray], grid: ChannelGrid = None) -> VelocityField:
    """压力梯度，落在速度自由度上（壁面 v 行为零），是 divergence 的负伴随"""
    if isinstance(p, PressureField):
        grid = p.grid
        p = p.p
    if grid is None:
        raise InvalidParameterError("标量数组需要显式提供 grid")
    out = VelocityField.zeros(grid)
    out.u[:, 1:-1] = (p - np.roll(p, 1, axis=0)) / grid.hx
    out.v[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hy
    return out


def deformation(f: VelocityField) -> DeformationField:
    """对称变形张量 D(u) = (grad u + grad u^T) / 2"""
    g = f.grid
    u = f.u_interior
    d11 = (np.roll(u, -1, axis=0) - u) / g.hx
    d22 = (f.v[:, 1:] - f.v[:, :-1]) / g.hy
    dudy = (f.u[:, 1:] - f.u[:, :-1]) / g.hy
    dvdx = (f.v - np.roll(f.v, 1, axis=0)) / g.hx
    return DeformationField(grid=g, d11=d11, d22=d22, d12=0.5 * (dudy + dvdx))


def vorticity(f: VelocityField) -> np.ndarray:
    """节点上的涡量 v_x - u_y，形状 (nx, ny+1)"""
    g = f.grid
    dudy = (f.u[:, 1:] - f.u[:, :-1]) / g.hy
    dvdx = (f.v - np.roll(f.v, 1, axis=0)) / g.hx
    return dvdx - dudy


def inner(a: VelocityField, b: VelocityField) -> float:
    """离散 L2 内积（壁面 v 行半权重）"""
    g = a.grid
    w = g.row_weights()
    return float(
        np.sum(a.u_interior * b.u_interior) * g.cell_volume + np.sum(a.v * b.v * w[None, :])
    )


def l2_norm(f: VelocityField) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def field_vector(f: VelocityField) -> np.ndarray:
    """带权展平：欧氏范数等于离散 L2 范数"""
    g = f.grid
    w = np.sqrt(g.row_weights())
    return np.concatenate([
        (f.u_interior * np.sqrt(g.cell_volume)).ravel(),
        (f.v * w[None, :]).ravel(),
    ])


def deformation_norm_sq(f: VelocityField) -> float:
    """||D(u)||^2 = sum (d11^2 + d22^2) + 2 sum d12^2，节点壁面行半权重"""
    g = f.grid
    d = deformation(f)
    w = g.row_weights()
    return float(
        np.sum(d.d11 ** 2 + d.d22 ** 2) * g.cell_volume + 2.0 * np.sum(d.d12 ** 2 * w[None, :])
    )


def wall_tangential(f: VelocityField) -> Tuple[np.ndarray, np.ndarray]:
    """壁面切向速度（虚拟层与首个内部行平均）"""
    return 0.5 * (f.u[:, 0] + f.u[:, 1]), 0.5 * (f.u[:, -1] + f.u[:, -2])


def boundary_trace_sq(f: VelocityField) -> float:
    """||u·tau||^2_Gamma"""
    bottom, top = wall_tangential(f)
    return float(np.sum(bottom ** 2 + top ** 2) * f.grid.hx)


def gradient_norm(f: VelocityField) -> float:
    """||grad u||（分量逐个差分）"""
    g = f.grid
    u = f.u_interior
    w = g.row_weights()
    dudx = (np.roll(u, -1, axis=0) - u) / g.hx
    dvdy = (f.v[:, 1:] - f.v[:, :-1]) / g.hy
    dudy = (f.u[:, 1:] - f.u[:, :-1]) / g.hy
    dvdx = (f.v - np.roll(f.v, 1, axis=0)) / g.hx
    total = np.sum(dudx ** 2 + dvdy ** 2) * g.cell_volume + np.sum((dudy ** 2 + dvdx ** 2) * w[None, :])
    return float(np.sqrt(total))


def laplacian(f: VelocityField) -> VelocityField:
    """分量五点 Laplacian，作用于内部自由度（u 用虚拟层，v 用壁面行）"""
    g = f.grid
    out = VelocityField.zeros(g)
    u = f.u
    out.u[:, 1:-1] = (
        (np.roll(u, -1, axis=0) - 2.0 * u + np.roll(u, 1, axis=0))[:, 1:-1] / g.hx ** 2
        + (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / g.hy ** 2
    )
    v = f.v
    out.v[:, 1:-1] = (
        (np.roll(v, -1, axis=0) - 2.0 * v + np.roll(v, 1, axis=0))[:, 1:-1] / g.hx ** 2
        + (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / g.hy ** 2
    )
    return out


def h2_surrogate(f: VelocityField) -> float:
    """||u||_{H^2} 的离散替代量 ||Lap_h u|| + ||grad u||"""
    return l2_norm(laplacian(f)) + gradient_norm(f)


def cell_centered(f: VelocityField) -> Tuple[np.ndarray, np.ndarray]:
    """插值到单元中心"""
    u = f.u_interior
    return 0.5 * (u + np.roll(u, -1, axis=0)), 0.5 * (f.v[:, 1:] + f.v[:, :-1])


def _scalar_norms(grid: ChannelGrid, f: np.ndarray) -> FieldNorms:
    if f.shape != (grid.nx, grid.ny):
        raise InvalidParameterError(f"标量场应位于单元中心 {(grid.nx, grid.ny)}，实际 {f.shape}")
    vol = grid.cell_volume
    dx = (np.roll(f, -1, axis=0) - f) / grid.hx
    dy = (f[:, 1:] - f[:, :-1]) / grid.hy
    bottom = 1.5 * f[:, 0] - 0.5 * f[:, 1]
    top = 1.5 * f[:, -1] - 0.5 * f[:, -2]
    return FieldNorms(
        l2=float(np.sqrt(np.sum(f ** 2) * vol)),
        h1_semi=float(np.sqrt((np.sum(dx ** 2) + np.sum(dy ** 2)) * vol)),
        l4=float(np.sum(f ** 4) * vol) ** 0.25,
        boundary_l2_tangential=float(np.sqrt(np.sum(bottom ** 2 + top ** 2) * grid.hx)),
    )


def norms(f: Union[VelocityField, np.ndarray], grid: ChannelGrid = None) -> FieldNorms:
    """L2、H1 半范数、L4 与壁面切向 L2 范数

    标量数组（单元中心）需要传入 grid，壁面值用线性外推。
    """
    if not isinstance(f, VelocityField):
        if grid is None:
            raise InvalidParameterError("标量数组需要显式提供 grid")
        return _scalar_norms(grid, np.asarray(f, dtype=float))
    uc, vc = cell_centered(f)
    l4 = float(np.sum((uc ** 2 + vc ** 2) ** 2) * f.grid.cell_volume) ** 0.25
    return FieldNorms(
        l2=l2_norm(f),
        h1_semi=gradient_norm(f),
        l4=l4,
        boundary_l2_tangential=float(np.sqrt(boundary_trace_sq(f))),
    )


def gagliardo_nirenberg_ratio(f: VelocityField) -> float:
    """||u||_L4 / (||u||^{1/2} ||u||_{H1}^{1/2})，零场返回 0"""
    n = norms(f)
    h1 = np.sqrt(n.l2 ** 2 + n.h1_semi ** 2)
    if n.l2 == 0.0 or h1 == 0.0:
        return 0.0
    return float(n.l4 / (np.sqrt(n.l2) * np.sqrt(h1)))


def sample_velocity(
    grid: ChannelGrid,
    fu: Callable[[np.ndarray, np.ndarray], np.ndarray],
    fv: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> VelocityField:
    """在交错位置（含虚拟层）采样解析速度场"""
    xu, yu = np.meshgrid(grid.x_faces, grid.y_ghosted, indexing="ij")
    xv, yv = np.meshgrid(grid.x_centers, grid.y_nodes, indexing="ij")
    return VelocityField(
        grid=grid,
        u=np.asarray(fu(xu, yu), dtype=float) * np.ones_like(xu),
        v=np.asarray(fv(xv, yv), dtype=float) * np.ones_like(xv),
    )


def velocity_from_stream(grid: ChannelGrid, psi: np.ndarray) -> VelocityField:
    """节点流函数 psi (nx, ny+1) 生成离散无散速度 u = psi_y, v = -psi_x（虚拟层置零）"""
    if psi.shape != (grid.nx, grid.ny + 1):
        raise InvalidParameterError(f"流函数应位于节点 {(grid.nx, grid.ny + 1)}，实际 {psi.shape}")
    field = VelocityField.zeros(grid)
    field.u[:, 1:-1] = (psi[:, 1:] - psi[:, :-1]) / grid.hy
    field.v[:, :] = -(np.roll(psi, -1, axis=0) - psi) / grid.hx
    return field


def smooth_stream_field(grid: ChannelGrid, amplitudes: np.ndarray, phases: np.ndarray) -> VelocityField:
    """psi = sum_{k,m} a_km cos(2 pi k x / lx + phi_km) sin^2((m+1) pi y)

    壁面上速度两分量均为零；虚拟层按无滑移取反。
    """
    if amplitudes.shape != phases.shape or amplitudes.ndim != 2:
        raise InvalidParameterError(f"振幅与相位应为同形二维数组，实际 {amplitudes.shape} / {phases.shape}")
    x = grid.x_faces[:, None]
    y = grid.y_nodes[None, :]
    psi = np.zeros((grid.nx, grid.ny + 1))
    for k in range(amplitudes.shape[0]):
        for m in range(amplitudes.shape[1]):
            psi += (amplitudes[k, m] * np.cos(2.0 * np.pi * k * x / grid.lx + phases[k, m])
                    * np.sin((m + 1) * np.pi * y) ** 2)
    field = velocity_from_stream(grid, psi)
    field.u[:, 0] = -field.u[:, 1]
    field.u[:, -1] = -field.u[:, -2]
    return field
