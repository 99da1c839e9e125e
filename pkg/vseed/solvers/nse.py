"""非线性求解器：分裂 u = U + z、整体求解与无滑移基线

三种模式共用一个 IMEX 步：
    (u^{n+1} - u^n)/dt + S(u^n) u^n - nu div D(u^{n+1}) + grad p^{n+1} = f(t_{n+1})
对流显式（斜对称形式），粘性隐式，速度-压力耦合由 SaddlePointSolver 求解，
上一步压力作为初值（增量压力修正）。
分裂模式只对 U 施加齐次边界条件，z 由线性演化给出；由于线性性，
分裂与整体两种模式在求解容差内给出同一 u。
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from vseed.analysis.estimates import gronwall_bound
from vseed.core.advection import advect
from vseed.core.boundary import apply_bc, apply_noslip_bc
from vseed.core.grid import (
    boundary_trace_sq,
    deformation_norm_sq,
    divergence,
    gradient_norm,
    inner,
    l2_norm,
)
from vseed.core.operators import pack
from vseed.models.fields import ChannelGrid, PressureField, VelocityField, WallData
from vseed.models.state import (
    LedgerEntry,
    NseConfig,
    Snapshot,
    StepDiagnostics,
    StokesTrajectory,
    Trajectory,
)
from vseed.solvers.saddle import SaddlePointSolver
from vseed.solvers.stokes import solve_stationary
from vseed.utils.exceptions import (
    BlowUpError,
    CFLViolationError,
    InvalidParameterError,
    TrajectoryMismatchError,
)

logger = logging.getLogger(__name__)


def _diagnostics(step: int, t: float, u: VelocityField, delta: Optional[float]) -> StepDiagnostics:
    return StepDiagnostics(
        step=step,
        t=t,
        energy=0.5 * inner(u, u),
        deform_sq=deformation_norm_sq(u),
        boundary_diss=0.0 if delta is None else boundary_trace_sq(u) / delta,
        div_max=float(np.max(np.abs(divergence(u)))),
    )


class _ImexStepper:
    """单步推进：构造右端、求解鞍点问题、闭合虚拟层"""

    def __init__(self, grid: ChannelGrid, cfg: NseConfig, delta: Optional[float]):
        self.grid = grid
        self.cfg = cfg
        self.delta = delta
        self.solver = SaddlePointSolver(
            grid, cfg.nu, delta, inv_dt=1.0 / cfg.dt,
            tol=cfg.solver_tol, max_iterations=cfg.max_iterations,
        )
        self.pressure: Optional[np.ndarray] = None
        self.energy_reference: Optional[float] = None

    def check_cfl(self, u: VelocityField, step: int) -> None:
        h = min(self.grid.hx, self.grid.hy)
        limit = self.cfg.cfl_safety * h / max(1.0, u.max_abs())
        if self.cfg.dt > limit:
            raise CFLViolationError(
                f"第 {step} 步违反 CFL 条件：dt={self.cfg.dt:.3e} > {limit:.3e}（max|u|={u.max_abs():.3e}）",
                error_code="cfl",
            )

    def check_blowup(self, u: VelocityField, step: int) -> None:
        energy = 0.5 * inner(u, u)
        if not np.isfinite(energy):
            raise BlowUpError(f"第 {step} 步出现非有限能量", error_code="blowup")
        if self.energy_reference is None:
            self.energy_reference = max(energy, 1.0)
        if energy > self.cfg.blowup_factor * self.energy_reference:
            raise BlowUpError(
                f"第 {step} 步能量 {energy:.3e} 超过初始参考值的 {self.cfg.blowup_factor:.0e} 倍",
                error_code="blowup",
            )

    def step(
        self,
        base: VelocityField,
        advecting: VelocityField,
        t_next: float,
        wall: Tuple[Optional[np.ndarray], Optional[np.ndarray]] = (None, None),
    ) -> Tuple[VelocityField, PressureField, float]:
        rhs = pack(base) / self.cfg.dt - pack(advect(advecting, advecting))
        if self.cfg.forcing is not None:
            rhs = rhs + pack(self.cfg.forcing(t_next))
        result = self.solver.solve(rhs, wall[0], wall[1], pressure_guess=self.pressure)
        self.pressure = result.p
        field = self.solver.operator.field(result.x, wall[0], wall[1])
        pressure = PressureField(grid=self.grid, p=result.p.reshape(self.grid.nx, self.grid.ny))
        return field, pressure, result.residual


def _validate(cfg: NseConfig, u0: VelocityField) -> None:
    if cfg.mode != "noslip" and cfg.delta <= 0.0:
        raise InvalidParameterError(f"delta 必须为正数，实际 {cfg.delta}", error_code="invalid_delta")
    if not np.all(np.isfinite(u0.u)) or not np.all(np.isfinite(u0.v)):
        raise InvalidParameterError("初值含非有限值")


def _trajectory(cfg: NseConfig, mode: str, delta: float, alpha: float) -> Trajectory:
    return Trajectory(mode=mode, dt=cfg.dt, nt=cfg.nt, delta=delta, alpha=alpha, save_stride=cfg.save_stride)


def _keep(cfg: NseConfig, step: int) -> bool:
    return step % cfg.save_stride == 0 or step == cfg.nt


def solve_noslip(cfg: NseConfig, u0: VelocityField) -> Trajectory:
    """无滑移基线 v（忽略 delta、alpha 与通量）"""
    _validate(cfg, u0)
    grid = u0.grid
    stepper = _ImexStepper(grid, cfg, None)
    u = apply_noslip_bc(u0)
    traj = _trajectory(cfg, "noslip", cfg.delta, cfg.alpha)
    pressure = PressureField.zeros(grid)
    traj.snapshots.append(Snapshot(step=0, t=0.0, velocity=u, pressure=pressure))
    traj.diagnostics.append(_diagnostics(0, 0.0, u, None))
    stepper.check_blowup(u, 0)
    logger.info(f"无滑移求解开始：网格 {grid.nx}x{grid.ny}，dt={cfg.dt}，{cfg.nt} 步")

    for n in range(cfg.nt):
        stepper.check_cfl(u, n)
        t_next = (n + 1) * cfg.dt
        u, pressure, residual = stepper.step(u, u, t_next)
        stepper.check_blowup(u, n + 1)
        traj.diagnostics.append(_diagnostics(n + 1, t_next, u, None))
        if _keep(cfg, n + 1):
            traj.snapshots.append(Snapshot(step=n + 1, t=t_next, velocity=u, pressure=pressure))
        logger.debug(f"[noslip] step {n + 1}: 残差 {residual:.2e}")

    logger.info(f"无滑移求解完成：末态能量 {traj.diagnostics[-1].energy:.6e}")
    return traj


def solve_monolithic(cfg: NseConfig, u0: VelocityField, w: WallData) -> Trajectory:
    """直接推进 u：壁面法向数据 delta^alpha g(t_{n+1}) 进入每步鞍点问题"""
    _validate(cfg, u0)
    grid = u0.grid
    _check_wall(grid, cfg, w)
    stepper = _ImexStepper(grid, cfg, cfg.delta)
    u = u0
    if cfg.initial_lifting:
        u = u0 + solve_stationary(grid, w, 0, cfg.delta, cfg.alpha, nu=cfg.nu, tol=cfg.solver_tol).velocity
    u = apply_bc(u, w, 0, cfg.delta, cfg.alpha)

    traj = _trajectory(cfg, "monolithic", cfg.delta, cfg.alpha)
    traj.snapshots.append(Snapshot(step=0, t=0.0, velocity=u, pressure=PressureField.zeros(grid)))
    traj.diagnostics.append(_diagnostics(0, 0.0, u, cfg.delta))
    stepper.check_blowup(u, 0)
    logger.info(f"整体求解开始：delta={cfg.delta}, alpha={cfg.alpha}, {cfg.nt} 步")

    for n in range(cfg.nt):
        stepper.check_cfl(u, n)
        t_next = (n + 1) * cfg.dt
        wall = w.imposed(n + 1, cfg.delta, cfg.alpha)
        u, pressure, residual = stepper.step(u, u, t_next, wall)
        stepper.check_blowup(u, n + 1)
        traj.diagnostics.append(_diagnostics(n + 1, t_next, u, cfg.delta))
        if _keep(cfg, n + 1):
            traj.snapshots.append(Snapshot(step=n + 1, t=t_next, velocity=u, pressure=pressure))
        logger.debug(f"[monolithic] step {n + 1}: 残差 {residual:.2e}")

    logger.info(f"整体求解完成：末态能量 {traj.diagnostics[-1].energy:.6e}")
    return traj


def solve_split(cfg: NseConfig, u0: VelocityField, z: StokesTrajectory) -> Trajectory:
    """推进齐次扰动 U，输出 u = U + z，并记录 Gronwall 账本"""
    _validate(cfg, u0)
    grid = u0.grid
    if z.nt < cfg.nt:
        raise TrajectoryMismatchError(f"线性演化只有 {z.nt} 步，请求 {cfg.nt} 步")
    if abs(z.dt - cfg.dt) > 1e-12 * cfg.dt or abs(z.delta - cfg.delta) > 1e-15:
        raise TrajectoryMismatchError("线性演化的 dt 或 delta 与配置不一致")
    if z.grid != grid:
        raise TrajectoryMismatchError("线性演化网格与初值网格不一致")

    stepper = _ImexStepper(grid, cfg, cfg.delta)
    z0 = z.states[0].velocity
    U = u0 if cfg.initial_lifting else u0 - z0
    U = apply_bc(U, None, 0, cfg.delta)
    u = U + z0

    traj = _trajectory(cfg, "split", cfg.delta, z.alpha)
    traj.snapshots.append(Snapshot(step=0, t=0.0, velocity=u, pressure=z.states[0].pressure))
    traj.perturbation.append(Snapshot(step=0, t=0.0, velocity=U, pressure=PressureField.zeros(grid)))
    traj.diagnostics.append(_diagnostics(0, 0.0, u, cfg.delta))
    traj.ledger.append(_ledger_entry(0, 0.0, U, z0, cfg))
    stepper.check_blowup(u, 0)
    logger.info(f"分裂求解开始：delta={cfg.delta}, alpha={z.alpha}, {cfg.nt} 步")

    for n in range(cfg.nt):
        stepper.check_cfl(u, n)
        t_next = (n + 1) * cfg.dt
        U, pressure, residual = stepper.step(U, u, t_next)
        z_next = z.states[n + 1]
        u = U + z_next.velocity
        stepper.check_blowup(u, n + 1)
        traj.diagnostics.append(_diagnostics(n + 1, t_next, u, cfg.delta))
        traj.ledger.append(_ledger_entry(n + 1, t_next, U, z_next.velocity, cfg))
        if _keep(cfg, n + 1):
            traj.snapshots.append(Snapshot(step=n + 1, t=t_next, velocity=u, pressure=pressure + z_next.pressure))
            traj.perturbation.append(Snapshot(step=n + 1, t=t_next, velocity=U, pressure=pressure))
        logger.debug(f"[split] step {n + 1}: 残差 {residual:.2e}")

    curves = gronwall_bound(traj.ledger, cfg.delta, dt=cfg.dt)
    for n, exceeded in enumerate(curves.exceeded_u):
        if exceeded:
            traj.diagnostics[n] = traj.diagnostics[n].model_copy(update={"gronwall_exceeded": True})
    if curves.violations_u:
        logger.warning(f"分裂求解：||U||^2 有 {curves.violations_u} 个时间层超出 Gronwall 上界")
    logger.info(f"分裂求解完成：末态能量 {traj.diagnostics[-1].energy:.6e}")
    return traj


def _ledger_entry(step: int, t: float, U: VelocityField, z: VelocityField, cfg: NseConfig) -> LedgerEntry:
    f_l2 = l2_norm(cfg.forcing(t)) if cfg.forcing is not None else 0.0
    return LedgerEntry(
        step=step,
        t=t,
        U_sq=inner(U, U),
        grad_U=gradient_norm(U),
        z_l2=l2_norm(z),
        grad_z=gradient_norm(z),
        f_l2=f_l2,
    )


def _check_wall(grid: ChannelGrid, cfg: NseConfig, w: WallData) -> None:
    if w.nx != grid.nx:
        raise TrajectoryMismatchError(f"通量采样点数 {w.nx} 与网格 nx={grid.nx} 不一致")
    if w.nt < cfg.nt or abs(w.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise TrajectoryMismatchError("通量时间采样与配置不一致")


class NonlinearAudit(BaseModel):
    """非线性项账本：五项大小与两类抵消恒等式"""
    terms: Dict[str, float]
    self_cancellation: float
    pair_cancellation: float
    scale: float

    @property
    def relative_self(self) -> float:
        return self.self_cancellation / self.scale if self.scale > 0.0 else 0.0

    @property
    def relative_pair(self) -> float:
        return self.pair_cancellation / self.scale if self.scale > 0.0 else 0.0


def nonlinear_term_audit(
    U: VelocityField,
    z: VelocityField,
    w: Optional[VelocityField] = None,
    v: Optional[VelocityField] = None,
) -> NonlinearAudit:
    """R = (U·grad)w + (w·grad)v + (U·grad)z + (z·grad)U + (z·grad)z

    返回各项 L2 大小，以及 <(U·grad)U, U> 与 <(U·grad)z, U> + <(U·grad)U, z> 的绝对值，
    scale = ||U||^2 ||grad U|| 作为比较基准。
    """
    zero = VelocityField.zeros(U.grid)
    w = zero if w is None else w
    v = zero if v is None else v
    pairs: List[Tuple[str, VelocityField, VelocityField]] = [
        ("U_grad_w", U, w),
        ("w_grad_v", w, v),
        ("U_grad_z", U, z),
        ("z_grad_U", z, U),
        ("z_grad_z", z, z),
    ]
    terms = {name: l2_norm(advect(a, b)) for name, a, b in pairs}
    self_term = abs(inner(advect(U, U), U))
    pair_term = abs(inner(advect(U, z), U) + inner(advect(U, U), z))
    scale = inner(U, U) * gradient_norm(U)
    return NonlinearAudit(terms=terms, self_cancellation=self_term, pair_cancellation=pair_term, scale=scale)

