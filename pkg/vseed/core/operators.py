"""粘性（应力散度）算子与散度算子的稀疏装配

未知量向量 x = [u 内部 (nx*ny), v 内部行 (nx*(ny-1))]，按 C 顺序展平。
壁面 v 与 u 虚拟层不进入未知量：虚拟层对内部 u 的依赖写进矩阵，
对壁面数据的依赖作为仿射项由 data_terms 单独给出。
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from vseed.core.boundary import apply_noslip_bc, close_robin_ghosts
from vseed.core.grid import deformation, divergence
from vseed.models.fields import ChannelGrid, VelocityField

logger = logging.getLogger(__name__)


def pack(f: VelocityField) -> np.ndarray:
    """速度场 -> 内部未知量向量"""
    return np.concatenate([f.u_interior.ravel(), f.v_interior.ravel()])


def unpack(grid: ChannelGrid, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n_u = grid.nx * grid.ny
    return x[:n_u].reshape(grid.nx, grid.ny), x[n_u:].reshape(grid.nx, grid.ny - 1)


def stress_divergence(f: VelocityField) -> Tuple[np.ndarray, np.ndarray]:
    """无矩阵形式的 div D(u)，返回 (u 内部面, v 内部行) 两个分量"""
    g = f.grid
    d = deformation(f)
    visc_u = (d.d11 - np.roll(d.d11, 1, axis=0)) / g.hx + (d.d12[:, 1:] - d.d12[:, :-1]) / g.hy
    visc_v = (
        (np.roll(d.d12, -1, axis=0) - d.d12)[:, 1:-1] / g.hx
        + (d.d22[:, 1:] - d.d22[:, :-1]) / g.hy
    )
    return visc_u, visc_v


def _periodic_forward(n: int, h: float) -> sp.csr_matrix:
    """(c[i+1] - c[i]) / h，周期"""
    return ((sp.eye(n, k=1) + sp.eye(n, k=-(n - 1)) - sp.eye(n)) / h).tocsr()


def _difference(rows: int, cols: int, h: float) -> sp.csr_matrix:
    """(c[j+1] - c[j]) / h，rows = cols - 1"""
    return ((sp.eye(rows, cols, k=1) - sp.eye(rows, cols)) / h).tocsr()


class ViscousOperator:
    """K = -div D_h 及散度矩阵 B

    delta 为 None 时采用无滑移闭合（虚拟层 = -首行），否则采用 Navier 滑移闭合。
    齐次数据下 x^T K x * hx * hy = ||D_h(u)||^2 + delta^-1 ||u·tau||^2_Gamma。
    """

    def __init__(self, grid: ChannelGrid, delta: Optional[float]):
        self.grid = grid
        self.delta = delta
        nx, ny = grid.nx, grid.ny
        hx, hy = grid.hx, grid.hy
        self.n_u = nx * ny
        self.n_v = nx * (ny - 1)
        self.n_p = nx * ny

        ghost = -1.0 if delta is None else (delta - hy) / (delta + hy)

        ix = sp.eye(nx)
        px_fwd = _periodic_forward(nx, hx)
        px_bwd = (-px_fwd.T).tocsr()

        # u 内部 ny 行 -> 含虚拟层 ny+2 行
        extend = sp.vstack([
            sp.csr_matrix(([ghost], ([0], [0])), shape=(1, ny)),
            sp.eye(ny),
            sp.csr_matrix(([ghost], ([0], [ny - 1])), shape=(1, ny)),
        ])
        # v 内部 ny-1 行 -> 全部 ny+1 行（壁面行置零）
        v_full = sp.eye(ny + 1, ny - 1, k=-1)
        # 节点行 1..ny-1
        node_interior = sp.eye(ny - 1, ny + 1, k=1)
        iy = sp.eye(ny)

        d11_u = sp.kron(px_fwd, iy)
        d22_v = sp.kron(ix, _difference(ny, ny + 1, hy) @ v_full)
        d12_u = 0.5 * sp.kron(ix, _difference(ny + 1, ny + 2, hy) @ extend)
        d12_v = 0.5 * sp.kron(px_bwd, v_full)

        div_x_c = sp.kron(px_bwd, iy)
        div_y_n = sp.kron(ix, _difference(ny, ny + 1, hy))
        div_x_n = sp.kron(px_fwd, node_interior)
        div_y_c = sp.kron(ix, (sp.eye(ny - 1, ny, k=1) - sp.eye(ny - 1, ny)) / hy)

        visc_uu = div_x_c @ d11_u + div_y_n @ d12_u
        visc_uv = div_y_n @ d12_v
        visc_vu = div_x_n @ d12_u
        visc_vv = div_x_n @ d12_v + div_y_c @ d22_v

        self.matrix = (-sp.bmat([[visc_uu, visc_uv], [visc_vu, visc_vv]])).tocsr()
        self.divergence_matrix = sp.hstack([d11_u, d22_v]).tocsr()
        logger.debug(f"装配粘性算子：网格 {nx}x{ny}，未知量 {self.n_u + self.n_v}，nnz={self.matrix.nnz}")

    def field(self, x: np.ndarray, v_bottom: Optional[np.ndarray] = None,
              v_top: Optional[np.ndarray] = None) -> VelocityField:
        """未知量向量 -> 完整速度场（含壁面 v 与闭合后的虚拟层）"""
        u_int, v_int = unpack(self.grid, x)
        f = VelocityField.from_interior(self.grid, u_int, v_int, v_bottom, v_top)
        if self.delta is None:
            return apply_noslip_bc(f)
        return close_robin_ghosts(f, self.delta)

    def data_terms(self, v_bottom: Optional[np.ndarray],
                   v_top: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """壁面法向数据带来的仿射项

        返回 (k_data, c)：K_full(x) = K x + k_data，连续性约束 B x = c。
        """
        if v_bottom is None and v_top is None:
            return np.zeros(self.n_u + self.n_v), np.zeros(self.n_p)
        f = self.field(np.zeros(self.n_u + self.n_v), v_bottom, v_top)
        visc_u, visc_v = stress_divergence(f)
        k_data = -np.concatenate([visc_u.ravel(), visc_v.ravel()])
        c = -divergence(f).ravel()
        return k_data, c
