"""线性部分：准定常 Stokes 提升 G 与线性演化 z

G 满足 -div D(G) + grad Pi = 0, div G = 0，壁面为给定法向迹与 Navier 滑移；
z 满足 z_t - div D(z) + grad q = 0，同样的边界条件，z(0) = G(0)。
z 通过 Z = z - G 计算：Z 满足齐次边界条件并以 -G_t 为体力。
"""
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from vseed.analysis.fractional import fractional_norm, velocity_series
from vseed.config import settings
from vseed.core.boundary import apply_bc, build_lifting, require_compatible
from vseed.core.grid import boundary_trace_sq, deformation_norm_sq, divergence, inner
from vseed.core.operators import pack, stress_divergence
from vseed.models.fields import ChannelGrid, PressureField, VelocityField, WallData
from vseed.models.state import StokesSolution, StokesTrajectory
from vseed.solvers.saddle import SaddlePointSolver
from vseed.utils.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)


def _pressure(grid: ChannelGrid, p: np.ndarray) -> PressureField:
    return PressureField(grid=grid, p=p.reshape(grid.nx, grid.ny))


def solve_stationary(
    grid: ChannelGrid,
    w: WallData,
    t_index: int,
    delta: float,
    alpha: Optional[float] = None,
    nu: float = 1.0,
    tol: Optional[float] = None,
    solver: Optional[SaddlePointSolver] = None,
) -> StokesSolution:
    """某一时间层的准定常 Stokes 问题

    G = G1 + G2：G1 由 build_lifting 给出，G2 满足齐次法向条件，
    -nu div D(G2) + grad Pi = nu div D(G1)，div G2 = -div G1。
    """
    require_compatible(w)
    if not 0 <= t_index <= w.nt:
        raise InvalidParameterError(f"时间层 {t_index} 超出范围 [0, {w.nt}]")
    if solver is None:
        solver = SaddlePointSolver(grid, nu, delta, inv_dt=0.0, tol=tol)

    g_bottom = w.g_bottom[:, t_index]
    g_top = w.g_top[:, t_index]
    if not (np.any(g_bottom) or np.any(g_top)):
        return StokesSolution(velocity=apply_bc(VelocityField.zeros(grid), None, t_index, delta),
                              pressure=PressureField.zeros(grid))

    lifting = build_lifting(grid, w, t_index, delta, alpha)
    visc_u, visc_v = stress_divergence(lifting)
    rhs = solver.nu * np.concatenate([visc_u.ravel(), visc_v.ravel()])
    result = solver.solve(rhs, constraint=-divergence(lifting).ravel())
    correction = solver.operator.field(result.x)
    velocity = lifting + correction
    logger.debug(f"准定常提升：t_index={t_index}, 迭代 {result.iterations} 次, 残差 {result.residual:.2e}")
    return StokesSolution(
        velocity=velocity,
        pressure=_pressure(grid, result.p),
        residual=result.residual,
        iterations=result.iterations,
    )


def solve_linear_evolution(
    grid: ChannelGrid,
    w: WallData,
    delta: float,
    dt: float,
    nt: int,
    alpha: Optional[float] = None,
    nu: float = 1.0,
    tol: Optional[float] = None,
) -> StokesTrajectory:
    """向后 Euler 推进线性演化 z，返回 z 与各层 G"""
    require_compatible(w)
    if nt > w.nt:
        raise InvalidParameterError(f"通量只覆盖 {w.nt} 步，请求 {nt} 步")
    if abs(dt - w.dt) > 1e-12 * max(dt, w.dt):
        raise InvalidParameterError(f"时间步长 {dt} 与通量采样间隔 {w.dt} 不一致")
    exponent = w.alpha if alpha is None else alpha

    stationary = SaddlePointSolver(grid, nu, delta, inv_dt=0.0, tol=tol)
    liftings = [solve_stationary(grid, w, k, delta, exponent, nu=nu, solver=stationary) for k in range(nt + 1)]
    logger.info(f"线性演化：delta={delta}, alpha={exponent}, {nt} 步，准定常提升已完成")

    if w.is_zero():
        zero = StokesSolution(velocity=liftings[0].velocity, pressure=PressureField.zeros(grid))
        return StokesTrajectory(dt=dt, delta=delta, alpha=exponent,
                                states=[zero] * (nt + 1), liftings=liftings)

    evolution = SaddlePointSolver(grid, nu, delta, inv_dt=1.0 / dt, tol=tol)
    states: List[StokesSolution] = [liftings[0]]
    perturbation = VelocityField.zeros(grid)
    q: Optional[np.ndarray] = None
    total_iterations = 0
    for n in range(nt):
        source = (pack(liftings[n + 1].velocity) - pack(liftings[n].velocity)) / dt
        rhs = pack(perturbation) / dt - source
        result = evolution.solve(rhs, pressure_guess=q)
        q = result.p
        total_iterations += result.iterations
        perturbation = evolution.operator.field(result.x)
        states.append(StokesSolution(
            velocity=perturbation + liftings[n + 1].velocity,
            pressure=_pressure(grid, q) + liftings[n + 1].pressure,
            residual=result.residual,
            iterations=result.iterations,
        ))
    logger.info(f"线性演化完成：总迭代 {total_iterations} 次")
    return StokesTrajectory(dt=dt, delta=delta, alpha=exponent, states=states, liftings=liftings)


class LinearEnergyAudit(BaseModel):
    """线性能量估计的两端"""
    lhs: float
    rhs: float
    ratio: float
    sup_energy: float
    dissipation: float


def energy_audit_linear(
    trajectory: StokesTrajectory,
    epsilon: float = 0.1,
    constant: Optional[float] = None,
    padding: Optional[int] = None,
) -> LinearEnergyAudit:
    """sup ||z||^2 + sum dt (||D z||^2 + delta^-1 ||z·tau||^2)  对比
    C (||G||^2_{H^{1/2+eps}(0,T;L2)} + sum dt ||D G||^2)
    """
    if not 0.0 < epsilon < 0.5:
        raise InvalidParameterError(f"epsilon 必须位于 (0, 1/2)，实际 {epsilon}")
    c = settings.gronwall_constant if constant is None else constant
    dt = trajectory.dt
    delta = trajectory.delta
    sup_energy = max(inner(s.velocity, s.velocity) for s in trajectory.states)
    dissipation = sum(
        dt * (deformation_norm_sq(s.velocity) + boundary_trace_sq(s.velocity) / delta)
        for s in trajectory.states[1:]
    )
    lhs = sup_energy + dissipation
    lifting_series = velocity_series([g.velocity for g in trajectory.liftings], dt)
    lifting_norm = fractional_norm(lifting_series, 0.5 + epsilon, padding)
    lifting_deform = sum(dt * deformation_norm_sq(g.velocity) for g in trajectory.liftings[1:])
    rhs = c * (lifting_norm ** 2 + lifting_deform)
    if rhs == 0.0:
        ratio = 0.0 if lhs == 0.0 else float("inf")
    else:
        ratio = lhs / rhs
    logger.info(f"线性能量审计：lhs={lhs:.4e}, rhs={rhs:.4e}, ratio={ratio:.4f}")
    return LinearEnergyAudit(lhs=lhs, rhs=rhs, ratio=ratio, sup_energy=sup_energy, dissipation=dissipation)
