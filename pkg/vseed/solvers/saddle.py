"""鞍点问题求解：预条件 Schur 补共轭梯度（Uzawa-CG）

    A x - B^T p = b,    B x = c,    A = inv_dt I + nu K

压力取零均值代表元。预条件子为 Cahouet-Chabard 型：
    P^{-1} r = nu r + inv_dt L_p^{-1} r,   L_p = B B^T（固定一个自由度后分解）
收敛后做一次精确投影 x += B^T phi, B B^T phi = c - B x，使散度达到机器精度。
"""
import logging
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse.linalg import factorized

from vseed.config import settings
from vseed.core.operators import ViscousOperator
from vseed.models.fields import ChannelGrid
from vseed.utils.exceptions import InvalidParameterError, SolverConvergenceError

logger = logging.getLogger(__name__)


class SaddleResult(BaseModel):
    """鞍点求解结果（未知量向量形式）"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    p: np.ndarray
    residual: float = Field(description="max(动量相对残差, Schur 相对残差)")
    iterations: int
    history: List[float] = Field(default_factory=list)
    divergence_max: float = 0.0


class SaddlePointSolver:
    """固定 (grid, nu, delta, inv_dt) 的鞍点求解器，矩阵分解只做一次"""

    def __init__(
        self,
        grid: ChannelGrid,
        nu: float,
        delta: Optional[float],
        inv_dt: float = 0.0,
        tol: Optional[float] = None,
        max_iterations: Optional[int] = None,
    ):
        if nu <= 0.0:
            raise InvalidParameterError(f"nu 必须为正数，实际 {nu}")
        if delta is not None and delta <= 0.0:
            raise InvalidParameterError(f"delta 必须为正数，实际 {delta}", error_code="invalid_delta")
        self.grid = grid
        self.nu = nu
        self.inv_dt = inv_dt
        self.tol = tol if tol is not None else settings.solver_tol
        self.max_iterations = max_iterations if max_iterations is not None else settings.max_iterations

        self.operator = ViscousOperator(grid, delta)
        n = self.operator.n_u + self.operator.n_v
        self.A = (inv_dt * sp.identity(n) + nu * self.operator.matrix).tocsc()
        self.B = self.operator.divergence_matrix
        self.BT = self.B.T.tocsr()
        self._solve_A = factorized(self.A)
        laplace = (self.B @ self.BT).tocsc()
        self._solve_L = factorized(laplace[1:, 1:].tocsc())
        logger.debug(f"鞍点求解器就绪：nu={nu}, delta={delta}, inv_dt={inv_dt}, tol={self.tol}")

    def _solve_laplace(self, r: np.ndarray) -> np.ndarray:
        phi = np.zeros_like(r)
        phi[1:] = self._solve_L(r[1:])
        return phi

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        z = self.nu * r
        if self.inv_dt > 0.0:
            z = z + self.inv_dt * self._solve_laplace(r)
        return z - z.mean()

    def solve(
        self,
        rhs: np.ndarray,
        v_bottom: Optional[np.ndarray] = None,
        v_top: Optional[np.ndarray] = None,
        constraint: Optional[np.ndarray] = None,
        pressure_guess: Optional[np.ndarray] = None,
    ) -> SaddleResult:
        """求解 A x - B^T p = rhs - nu k_data, B x = c

        壁面法向数据 (v_bottom, v_top) 产生仿射项 k_data 与约束右端 c；
        constraint 非空时覆盖 c（用于提升的齐次修正问题）。
        """
        k_data, c = self.operator.data_terms(v_bottom, v_top)
        if constraint is not None:
            c = np.asarray(constraint, dtype=float)
        b = rhs - self.nu * k_data

        p = np.zeros(self.operator.n_p) if pressure_guess is None else pressure_guess - pressure_guess.mean()
        x_free = self._solve_A(b)
        scale = float(np.linalg.norm(c - self.B @ x_free))
        if pressure_guess is None:
            x = x_free
        else:
            x = self._solve_A(b + self.BT @ p)
        r = c - self.B @ x
        history = [float(np.linalg.norm(r))]
        scale = max(scale, history[0])
        threshold = self.tol * max(scale, np.finfo(float).tiny)

        iterations = 0
        if history[-1] > threshold:
            z = self._precondition(r)
            d = z.copy()
            rho = float(r @ z)
            while history[-1] > threshold:
                if iterations >= self.max_iterations:
                    logger.error(f"Schur 补迭代未收敛：{iterations} 次后残差 {history[-1]:.3e}（阈值 {threshold:.3e}）")
                    raise SolverConvergenceError(
                        f"鞍点迭代 {iterations} 次未收敛，残差 {history[-1]:.3e}",
                        residual_history=history,
                    )
                w = self._solve_A(self.BT @ d)
                q = self.B @ w
                curvature = float(d @ q)
                if curvature <= 0.0:
                    raise SolverConvergenceError("Schur 补失去正定性", residual_history=history)
                step = rho / curvature
                p += step * d
                x += step * w
                r -= step * q
                iterations += 1
                history.append(float(np.linalg.norm(r)))
                z = self._precondition(r)
                rho_next = float(r @ z)
                d = z + (rho_next / rho) * d
                rho = rho_next

        # 精确投影，压力同步做增量修正
        phi = self._solve_laplace(c - self.B @ x)
        x = x + self.BT @ phi
        p = p + self.inv_dt * phi
        p = p - p.mean()

        momentum = self.A @ x - self.BT @ p - b
        reference = max(float(np.linalg.norm(b)), float(np.linalg.norm(self.A @ x)), np.finfo(float).tiny)
        rel_momentum = float(np.linalg.norm(momentum)) / reference
        rel_schur = history[-1] / max(scale, np.finfo(float).tiny) if scale > 0.0 else 0.0
        div_max = float(np.max(np.abs(self.B @ x - c)))
        logger.debug(f"鞍点求解完成：迭代 {iterations} 次，动量残差 {rel_momentum:.2e}，散度 {div_max:.2e}")
        return SaddleResult(
            x=x, p=p, residual=max(rel_momentum, rel_schur), iterations=iterations,
            history=history, divergence_max=div_max,
        )


def dense_reference_solve(
    grid: ChannelGrid,
    nu: float,
    delta: Optional[float],
    rhs: np.ndarray,
    inv_dt: float = 0.0,
    v_bottom: Optional[np.ndarray] = None,
    v_top: Optional[np.ndarray] = None,
):
    """加边稠密系统直接 LU 求解（仅用于小网格校验）

    [[A, -B^T, 0], [B, 0, 1], [0, 1^T, 0]] [x, p, lam] = [rhs - nu k_data, c, 0]
    """
    op = ViscousOperator(grid, delta)
    n = op.n_u + op.n_v
    m = op.n_p
    if n + m > 4000:
        raise InvalidParameterError(f"稠密参考解只用于小网格，未知量 {n + m} 过多")
    k_data, c = op.data_terms(v_bottom, v_top)
    A = (inv_dt * sp.identity(n) + nu * op.matrix).toarray()
    B = op.divergence_matrix.toarray()
    system = np.zeros((n + m + 1, n + m + 1))
    system[:n, :n] = A
    system[:n, n:n + m] = -B.T
    system[n:n + m, :n] = B
    system[n:n + m, -1] = 1.0
    system[-1, n:n + m] = 1.0
    right = np.concatenate([rhs - nu * k_data, c, [0.0]])
    lu, piv = scipy.linalg.lu_factor(system)
    solution = scipy.linalg.lu_solve((lu, piv), right)
    return solution[:n], solution[n:n + m]
