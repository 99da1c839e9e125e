"""测试非线性求解：分裂、整体与无滑移三种模式"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from vseed.analysis.estimates import gronwall_bound
from vseed.core.advection import advect
from vseed.core.boundary import apply_bc, make_test_flux
from vseed.core.grid import inner, sample_velocity, velocity_from_stream
from vseed.models.fields import ChannelGrid, VelocityField, WallData
from vseed.models.state import NseConfig
from vseed.solvers.nse import nonlinear_term_audit, solve_monolithic, solve_noslip, solve_split
from vseed.solvers.stokes import solve_linear_evolution
from vseed.utils.exceptions import CFLViolationError, TrajectoryMismatchError


def _shear(grid: ChannelGrid, amplitude: float = 1.0) -> VelocityField:
    return sample_velocity(grid, lambda x, y: amplitude * np.sin(np.pi * y), lambda x, y: 0.0 * x)


def _closed_stream_field(grid: ChannelGrid, seed: int) -> VelocityField:
    """法向迹为零的离散无散场"""
    rng = np.random.default_rng(seed)
    psi = np.zeros((grid.nx, grid.ny + 1))
    psi[:, 1:-1] = rng.standard_normal((grid.nx, grid.ny - 1)) * 0.1
    return apply_bc(velocity_from_stream(grid, psi), None, 0, 0.3)


def _split_and_monolithic(grid: ChannelGrid, delta: float, nt: int = 5):
    w = make_test_flux("tone", nx=grid.nx, nt=nt, T=0.01 * nt)
    cfg = NseConfig(delta=delta, dt=w.dt, nt=nt, mode="split")
    u0 = VelocityField.zeros(grid)
    z = solve_linear_evolution(grid, w, delta, w.dt, nt)
    split = solve_split(cfg, u0, z)
    monolithic = solve_monolithic(cfg.model_copy(update={"mode": "monolithic"}), u0, w)
    return cfg, w, split, monolithic


def test_noslip_zero_initial_stays_zero():
    grid = ChannelGrid(nx=8, ny=8)
    traj = solve_noslip(NseConfig(dt=0.01, nt=3, mode="noslip"), VelocityField.zeros(grid))
    assert len(traj.diagnostics) == 4
    assert all(d.energy == 0.0 for d in traj.diagnostics)
    assert traj.snapshots[-1].velocity.max_abs() == 0.0


@pytest.mark.parametrize("mode", ["noslip", "split"])
def test_shear_mode_energy_is_monotone(mode):
    """sin(pi y) 剪切流的对流项为零，能量单调衰减"""
    grid = ChannelGrid(nx=8, ny=16)
    u0 = _shear(grid)
    cfg = NseConfig(delta=0.1, dt=0.01, nt=6, mode=mode)
    if mode == "noslip":
        traj = solve_noslip(cfg, u0)
    else:
        z = solve_linear_evolution(grid, WallData.zeros(8, 6, 0.01), 0.1, 0.01, 6)
        traj = solve_split(cfg, u0, z)
    energies = [d.energy for d in traj.diagnostics]
    tolerance = 1e-14 * energies[0]
    assert energies[0] > 0.0
    assert all(b <= a + tolerance for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]


def test_split_and_monolithic_agree():
    grid = ChannelGrid(nx=16, ny=16)
    _, _, split, monolithic = _split_and_monolithic(grid, 0.2)
    assert len(split.snapshots) == len(monolithic.snapshots)
    for a, b in zip(split.snapshots, monolithic.snapshots):
        assert np.max(np.abs(a.velocity.u_interior - b.velocity.u_interior)) <= 1e-6
        assert np.max(np.abs(a.velocity.v - b.velocity.v)) <= 1e-6


def test_split_run_satisfies_divergence_and_gronwall():
    grid = ChannelGrid(nx=16, ny=16)
    cfg, _, split, _ = _split_and_monolithic(grid, 0.2)
    assert max(d.div_max for d in split.diagnostics) <= cfg.projection_tol
    assert len(split.ledger) == cfg.nt + 1
    # 零初值且 g(0) = 0：第一步没有对流源
    assert split.perturbation[1].velocity.max_abs() == 0.0
    curves = gronwall_bound(split.ledger, cfg.delta, cfg.dt)
    assert curves.violations_u == 0
    assert len(curves.bound_u) == cfg.nt + 1
    assert not any(d.gronwall_exceeded for d in split.diagnostics)


def test_vanishing_delta_recovers_noslip():
    grid = ChannelGrid(nx=8, ny=8)
    delta = 1e-12
    u0 = _shear(grid)
    cfg = NseConfig(delta=delta, dt=0.01, nt=4, mode="split")
    w = make_test_flux("tone", nx=8, nt=4, T=0.04)
    z = solve_linear_evolution(grid, w, delta, w.dt, 4)
    split = solve_split(cfg.model_copy(update={"dt": w.dt}), u0, z)
    noslip = solve_noslip(cfg.model_copy(update={"dt": w.dt, "mode": "noslip"}), u0)
    assert_allclose(split.snapshots[-1].velocity.u_interior, noslip.snapshots[-1].velocity.u_interior, atol=1e-6)
    assert_allclose(split.snapshots[-1].velocity.v, noslip.snapshots[-1].velocity.v, atol=1e-6)


def test_save_stride_keeps_final_step():
    grid = ChannelGrid(nx=8, ny=8)
    cfg = NseConfig(dt=0.01, nt=5, mode="noslip", save_stride=2)
    traj = solve_noslip(cfg, _shear(grid))
    assert [s.step for s in traj.snapshots] == [0, 2, 4, 5]
    assert len(traj.diagnostics) == 6


def test_cfl_violation_is_reported():
    grid = ChannelGrid(nx=8, ny=8)
    with pytest.raises(CFLViolationError):
        solve_noslip(NseConfig(dt=0.01, nt=2, mode="noslip"), _shear(grid, amplitude=1000.0))


def test_split_rejects_short_linear_trajectory():
    grid = ChannelGrid(nx=8, ny=8)
    z = solve_linear_evolution(grid, WallData.zeros(8, 2, 0.01), 0.2, 0.01, 2)
    with pytest.raises(TrajectoryMismatchError):
        solve_split(NseConfig(delta=0.2, dt=0.01, nt=4), VelocityField.zeros(grid), z)


def test_monolithic_rejects_mismatched_wall():
    grid = ChannelGrid(nx=8, ny=8)
    w = make_test_flux("tone", nx=16, nt=4, T=0.04)
    with pytest.raises(TrajectoryMismatchError):
        solve_monolithic(NseConfig(delta=0.2, dt=w.dt, nt=4, mode="monolithic"), VelocityField.zeros(grid), w)


def test_nonlinear_audit_cancellations():
    grid = ChannelGrid(nx=16, ny=16)
    U = _closed_stream_field(grid, seed=1)
    z = _closed_stream_field(grid, seed=2)
    audit = nonlinear_term_audit(U, z)
    assert audit.relative_self <= 1e-12
    assert audit.relative_pair <= 1e-12
    assert audit.terms["U_grad_z"] > 0.0


def test_nonlinear_audit_without_linear_part():
    grid = ChannelGrid(nx=8, ny=8)
    U = _closed_stream_field(grid, seed=3)
    audit = nonlinear_term_audit(U, VelocityField.zeros(grid))
    assert set(audit.terms) == {"U_grad_w", "w_grad_v", "U_grad_z", "z_grad_U", "z_grad_z"}
    assert all(value == 0.0 for value in audit.terms.values())
    assert audit.scale > 0.0


@pytest.mark.parametrize("mode", ["noslip", "split"])
def test_energy_ledger_closes_each_step(mode):
    """f=0, g=0：E^{n+1} - E^n + |u^{n+1}-u^n|^2/2 + dt nu (D + B) + dt (S(u^n)u^n, u^{n+1}) = 0"""
    grid = ChannelGrid(nx=8, ny=8)
    nt, dt, delta = 4, 0.002, 0.2
    cfg = NseConfig(delta=delta, dt=dt, nt=nt, mode=mode, solver_tol=1e-11)
    u0 = _closed_stream_field(grid, seed=5)
    if mode == "noslip":
        traj = solve_noslip(cfg, u0)
    else:
        z = solve_linear_evolution(grid, WallData.zeros(8, nt, dt), delta, dt, nt)
        traj = solve_split(cfg, u0, z)
    assert len(traj.snapshots) == nt + 1
    scale = traj.diagnostics[0].energy
    assert scale > 0.0
    for n in range(nt):
        before, after = traj.snapshots[n].velocity, traj.snapshots[n + 1].velocity
        diag = traj.diagnostics[n + 1]
        increment = after - before
        balance = (diag.energy - traj.diagnostics[n].energy
                   + 0.5 * inner(increment, increment)
                   + dt * cfg.nu * (diag.deform_sq + diag.boundary_diss)
                   + dt * inner(advect(before, before), after))
        assert abs(balance) <= 1e-7 * scale
        # 显式对流项之外，能量只减不增
        assert diag.energy - traj.diagnostics[n].energy <= dt * abs(inner(advect(before, before), after)) + 1e-7 * scale
