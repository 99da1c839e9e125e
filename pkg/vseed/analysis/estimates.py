"""误差泛函与 Gronwall 型上界

误差泛函比较涡量播种解 u 与无滑移解 v；Gronwall 账本给出
||U||^2 与 ||w||^2 = ||U - v||^2 的离散上界曲线（左端点求和）。
"""
import logging
import math
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from vseed.config import settings
from vseed.core.grid import (
    boundary_trace_sq,
    deformation_norm_sq,
    gradient_norm,
    h2_surrogate,
    inner,
)
from vseed.models.state import ErrorRecord, LedgerEntry, Snapshot, Trajectory
from vseed.utils.exceptions import TrajectoryMismatchError

logger = logging.getLogger(__name__)

# 上界比较的相对容差
_BOUND_RTOL = 1e-12


def _aligned(a: Trajectory, b: Trajectory, field: str) -> List[tuple]:
    if a.grid != b.grid:
        raise TrajectoryMismatchError("两条轨迹的网格不一致")
    if abs(a.dt - b.dt) > 1e-12 * a.dt or a.nt != b.nt or a.save_stride != b.save_stride:
        raise TrajectoryMismatchError(
            f"两条轨迹的时间离散不一致：dt {a.dt}/{b.dt}, nt {a.nt}/{b.nt}, stride {a.save_stride}/{b.save_stride}"
        )
    left: Sequence[Snapshot] = a.perturbation if field == "perturbation" else a.snapshots
    if not left:
        raise TrajectoryMismatchError(f"轨迹缺少 {field} 存档")
    right = {s.step: s for s in b.snapshots}
    pairs = []
    for snap in left:
        if snap.step not in right:
            raise TrajectoryMismatchError(f"第 {snap.step} 步在基线轨迹中缺失")
        pairs.append((snap, right[snap.step]))
    return pairs


def error_functionals(
    u_traj: Trajectory,
    v_traj: Trajectory,
    delta: Optional[float] = None,
    field: Literal["velocity", "perturbation"] = "velocity",
) -> ErrorRecord:
    """u - v（或 U - v）的误差泛函

    sup_l2_sq = max_n ||e_n||^2
    deform_l2_sq = sum_{n>=1} dt_s ||D e_n||^2
    boundary_term = delta^-1 sum_{n>=1} dt_s ||e_n·tau||^2_Gamma
    其中 dt_s 为存档间隔对应的时间步长。
    """
    d = u_traj.delta if delta is None else delta
    pairs = _aligned(u_traj, v_traj, field)
    sup_sq = 0.0
    deform = 0.0
    trace = 0.0
    previous_step = pairs[0][0].step
    for index, (left, right) in enumerate(pairs):
        err = left.velocity - right.velocity
        sup_sq = max(sup_sq, inner(err, err))
        if index == 0:
            continue
        weight = (left.step - previous_step) * u_traj.dt
        previous_step = left.step
        deform += weight * deformation_norm_sq(err)
        trace += weight * boundary_trace_sq(err)
    boundary = trace / d
    return ErrorRecord(
        delta=d,
        sup_l2_sq=sup_sq,
        deform_l2_sq=deform,
        boundary_term=boundary,
        total=sup_sq + deform + boundary,
        trace_l2=math.sqrt(trace),
    )


def attach_baseline(split: Trajectory, v_traj: Trajectory) -> List[LedgerEntry]:
    """用无滑移基线补全账本中的 w = U - v 与 v 的正则性量"""
    if split.save_stride != 1:
        raise TrajectoryMismatchError("Gronwall 账本需要逐步存档（save_stride=1）")
    pairs = _aligned(split, v_traj, "perturbation")
    if len(pairs) != len(split.ledger):
        raise TrajectoryMismatchError("账本长度与存档不一致")
    completed = []
    for entry, (left, right) in zip(split.ledger, pairs):
        err = left.velocity - right.velocity
        completed.append(entry.model_copy(update={
            "w_sq": inner(err, err),
            "grad_v": gradient_norm(right.velocity),
            "h2_v": h2_surrogate(right.velocity),
        }))
    return completed


class GronwallCurves(BaseModel):
    """Gronwall 上界曲线与实测值"""
    exponent: List[float] = Field(description="A(t_n)")
    bound_u: List[float] = Field(description="||U||^2 的上界")
    measured_u: List[float] = Field(description="sup_{s<=t_n} ||U(s)||^2")
    bound_w: List[float] = Field(default_factory=list, description="||w||^2 的上界")
    measured_w: List[float] = Field(default_factory=list)
    psi_integral: float = 0.0
    violations_u: int = 0
    violations_w: int = 0

    @property
    def violations(self) -> int:
        return self.violations_u + self.violations_w

    @property
    def exceeded_u(self) -> List[bool]:
        return exceeds_bound(self.measured_u, self.bound_u)


def exceeds_bound(measured: Sequence[float], bound: Sequence[float]) -> List[bool]:
    """逐层比较实测值与上界（相对容差 1e-12）"""
    return [m > b * (1.0 + _BOUND_RTOL) + 1e-300 for m, b in zip(measured, bound)]


def _count_violations(measured: Sequence[float], bound: Sequence[float]) -> int:
    return sum(exceeds_bound(measured, bound))


def gronwall_bound(
    ledger: Sequence[LedgerEntry],
    delta: float,
    dt: float,
    constant: Optional[float] = None,
    with_baseline: bool = False,
) -> GronwallCurves:
    """离散 Gronwall 上界

    A_n = C t_n + C (1 + sup ||z||^2) sum_{k<n} dt ||grad z_k||^2
    ||U_n||^2 <= ||U_0||^2 e^{A_n} + C sum_{k<n} dt (||f_k||^2 + ||grad z_k||^2 ||z_k||) e^{A_n - A_k}

    with_baseline 时另给出 w 的上界：
    B_{n+1} = (B_n + dt (delta chi_n + psi_n)) e^{dt phi_n}，B_0 = ||w_0||^2
    """
    c = settings.gronwall_constant if constant is None else constant
    if not ledger:
        return GronwallCurves(exponent=[], bound_u=[], measured_u=[])
    grad_z = np.array([e.grad_z for e in ledger])
    z_l2 = np.array([e.z_l2 for e in ledger])
    f_l2 = np.array([e.f_l2 for e in ledger])
    t = np.array([e.t for e in ledger])
    sup_z_sq = float(np.max(z_l2 ** 2))

    increments = c * (1.0 + sup_z_sq) * dt * grad_z ** 2
    exponent = c * (t - t[0]) + np.concatenate([[0.0], np.cumsum(increments)[:-1]])
    sources = c * dt * (f_l2 ** 2 + grad_z ** 2 * z_l2)

    u0_sq = ledger[0].U_sq
    bound_u = []
    for n in range(len(ledger)):
        accumulated = float(np.sum(sources[:n] * np.exp(exponent[n] - exponent[:n])))
        bound_u.append(u0_sq * math.exp(exponent[n]) + accumulated)
    measured_u = np.maximum.accumulate([e.U_sq for e in ledger]).tolist()
    curves = GronwallCurves(
        exponent=exponent.tolist(),
        bound_u=bound_u,
        measured_u=measured_u,
        violations_u=_count_violations(measured_u, bound_u),
    )
    if not with_baseline:
        return curves

    grad_u = np.array([e.grad_U for e in ledger])
    u_l2 = np.sqrt(np.array([e.U_sq for e in ledger]))
    chi = np.array([e.h2_v for e in ledger]) ** 2
    psi = c * (
        grad_u ** (2.0 / 3.0) * grad_z ** (4.0 / 3.0) * u_l2
        + grad_u ** (4.0 / 3.0) * grad_z ** (2.0 / 3.0) * z_l2
        + grad_z ** 2 * z_l2
    )
    grad_v = np.array([e.grad_v for e in ledger])
    phi = (
        grad_v ** 2
        + grad_u ** (2.0 / 3.0) * grad_z ** (4.0 / 3.0)
        + grad_u ** (4.0 / 3.0) * grad_z ** (2.0 / 3.0)
        + grad_z ** 2
    )
    bound_w = [ledger[0].w_sq]
    for n in range(len(ledger) - 1):
        bound_w.append((bound_w[-1] + dt * (delta * chi[n] + psi[n])) * math.exp(dt * phi[n]))
    measured_w = np.maximum.accumulate([e.w_sq for e in ledger]).tolist()
    curves.bound_w = bound_w
    curves.measured_w = measured_w
    curves.psi_integral = float(dt * np.sum(psi[:-1]))
    curves.violations_w = _count_violations(measured_w, bound_w)
    logger.debug(f"Gronwall 账本：U 违例 {curves.violations_u}，w 违例 {curves.violations_w}，psi 积分 {curves.psi_integral:.3e}")
    return curves
