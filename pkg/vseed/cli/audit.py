"""审计检查：稠密 LU 对照、分裂/整体交叉验证、制造解收敛阶与性质检查

每个检查返回 RateCheck 列表，由 runner 汇总成审计报告。
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from vseed.analysis.fractional import estimate_audit_fractional, fractional_norm, velocity_series
from vseed.analysis.rates import fit_slope
from vseed.config import settings
from vseed.core.boundary import (
    apply_bc,
    apply_noslip_bc,
    make_test_flux,
    project_compatible,
    vorticity_identity_residual,
)
from vseed.core.grid import (
    gagliardo_nirenberg_ratio,
    inner,
    l2_norm,
    sample_velocity,
    smooth_stream_field,
    velocity_from_stream,
)
from vseed.models.fields import ChannelGrid, VelocityField, WallData
from vseed.models.state import NseConfig, RateCheck
from vseed.solvers.nse import nonlinear_term_audit, solve_monolithic, solve_noslip, solve_split
from vseed.solvers.saddle import SaddlePointSolver, dense_reference_solve
from vseed.solvers.stokes import energy_audit_linear, solve_linear_evolution
from vseed.utils.exceptions import VseedError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _bound(name: str, observed: float, threshold: float, relation: str = "<=", detail: str = "") -> RateCheck:
    if not math.isfinite(observed):
        ok = False
    elif relation == "<=":
        ok = observed <= threshold
    elif relation == ">=":
        ok = observed >= threshold
    else:
        ok = observed == threshold
    return RateCheck(name=name, observed=observed, threshold=threshold, relation=relation,
                     status="pass" if ok else "fail", detail=detail)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def oracle_check(nx: int = 8, ny: int = 8, nu: float = 1.0, delta: float = 0.1, dt: float = 0.005,
                 seed: int = 0, tol: float = 1e-8) -> List[RateCheck]:
    """迭代鞍点求解与加边稠密 LU 在小网格上逐一比对

    覆盖定常/非定常、Robin/无滑移、齐次/非齐次法向数据四种组合。
    """
    grid = ChannelGrid(nx=nx, ny=ny)
    rng = np.random.default_rng(seed)
    n = nx * ny + nx * (ny - 1)
    wall = rng.standard_normal(nx)
    wall -= wall.mean()
    cases = [
        ("stationary robin", delta, 0.0, (-delta * wall, delta * wall)),
        ("evolution robin", delta, 1.0 / dt, (-delta * wall, delta * wall)),
        ("stationary noslip", None, 0.0, (None, None)),
        ("evolution noslip", None, 1.0 / dt, (None, None)),
    ]
    checks = []
    for label, case_delta, inv_dt, (v_bottom, v_top) in cases:
        rhs = rng.standard_normal(n)
        solver = SaddlePointSolver(grid, nu, case_delta, inv_dt=inv_dt, tol=1e-11, max_iterations=2000)
        result = solver.solve(rhs, v_bottom, v_top)
        x_ref, p_ref = dense_reference_solve(grid, nu, case_delta, rhs, inv_dt, v_bottom, v_top)
        error = max(_relative(result.x, x_ref), _relative(result.p, p_ref - p_ref.mean()))
        checks.append(_bound(f"oracle {label} {nx}x{ny}", error, tol))
        logger.info(f"稠密 LU 对照 [{label}]：相对误差 {error:.2e}")
    return checks


def cross_check(grid: ChannelGrid, cfg: NseConfig, w: WallData, u0: Optional[VelocityField] = None,
                tol: float = 1e-5) -> List[RateCheck]:
    """分裂与整体两条代码路径互为对照：sup_t ||u_split - u_mono|| <= tol"""
    u0 = VelocityField.zeros(grid) if u0 is None else u0
    z = solve_linear_evolution(grid, w, cfg.delta, cfg.dt, cfg.nt, alpha=cfg.alpha, nu=cfg.nu, tol=cfg.solver_tol)
    split = solve_split(cfg.model_copy(update={"mode": "split"}), u0, z)
    mono = solve_monolithic(cfg.model_copy(update={"mode": "monolithic"}), u0, w)
    gap = max(l2_norm(a.velocity - b.velocity) for a, b in zip(split.snapshots, mono.snapshots))
    logger.info(f"分裂/整体交叉验证：sup_t L2 差 {gap:.3e}")
    return [_bound(f"split vs monolithic sup_t L2 ({grid.nx}x{grid.ny})", gap, tol)]


def manufactured_solution(nu: float) -> Tuple[Callable, Callable, Callable, Callable]:
    """定常制造解及其体力

    u = 1/2 sin(2 pi x) sin(2 pi y)，v = -cos(2 pi x) sin^2(pi y)，p = 0，
    f = -nu/2 Lap(u) + (u·grad) u（流函数构造，无散且壁面为零）。
    """
    def fu(x, y):
        return 0.5 * np.sin(TWO_PI * x) * np.sin(TWO_PI * y)

    def fv(x, y):
        return -np.cos(TWO_PI * x) * np.sin(np.pi * y) ** 2

    def force_u(x, y):
        u, v = fu(x, y), fv(x, y)
        ux = np.pi * np.cos(TWO_PI * x) * np.sin(TWO_PI * y)
        uy = np.pi * np.sin(TWO_PI * x) * np.cos(TWO_PI * y)
        lap = -2.0 * TWO_PI ** 2 * u
        return -0.5 * nu * lap + u * ux + v * uy

    def force_v(x, y):
        u, v = fu(x, y), fv(x, y)
        vx = TWO_PI * np.sin(TWO_PI * x) * np.sin(np.pi * y) ** 2
        vy = -np.pi * np.cos(TWO_PI * x) * np.sin(TWO_PI * y)
        lap = -TWO_PI ** 2 * v - 2.0 * np.pi ** 2 * np.cos(TWO_PI * x) * np.cos(TWO_PI * y)
        return -0.5 * nu * lap + u * vx + v * vy

    return fu, fv, force_u, force_v


def manufactured_errors(refinements: Sequence[int], nu: float = 1.0, dt: float = 0.005,
                        nt: int = 10) -> List[Tuple[float, float]]:
    """各网格上无滑移求解与制造解的 L2 误差，返回 [(h, error)]"""
    fu, fv, force_u, force_v = manufactured_solution(nu)
    results = []
    for n in refinements:
        grid = ChannelGrid(nx=n, ny=n)
        exact = apply_noslip_bc(sample_velocity(grid, fu, fv))
        forcing_field = sample_velocity(grid, force_u, force_v)
        cfg = NseConfig(dt=dt, nt=nt, nu=nu, mode="noslip", forcing=lambda t, f=forcing_field: f)
        traj = solve_noslip(cfg, exact)
        error = l2_norm(traj.snapshots[-1].velocity - exact)
        results.append((grid.hx, error))
        logger.info(f"制造解 {n}x{n}：L2 误差 {error:.4e}")
    return results


def manufactured_check(refinements: Sequence[int], nu: float = 1.0) -> List[RateCheck]:
    """空间收敛阶 2.0 +- 0.3"""
    errors = manufactured_errors(refinements, nu)
    fit = fit_slope("manufactured", [h for h, _ in errors], [e for _, e in errors])
    if fit is None:
        return [RateCheck(name="manufactured order", threshold=2.0, relation="==",
                          status="not_applicable", detail="误差为零或网格不足 3 个")]
    detail = f"R^2={fit.r2:.3f}"
    return [
        _bound("manufactured order >= 1.7", fit.slope, 1.7, ">=", detail),
        _bound("manufactured order <= 2.3", fit.slope, 2.3, "<=", detail),
    ]


GN_FIELDS = 100
GN_BOUND = 6.0 ** 0.25


def gagliardo_nirenberg_sweep(sizes: Sequence[int], n_fields: int = GN_FIELDS, seed: int = 0,
                              modes: Tuple[int, int] = (3, 2)) -> Dict[int, float]:
    """同一组随机光滑场在各网格上的最大 L4 插值比值 {n: max ratio}"""
    rng = np.random.default_rng(seed)
    amplitudes = rng.standard_normal((n_fields,) + modes)
    phases = rng.uniform(0.0, 2.0 * np.pi, (n_fields,) + modes)
    peaks = {}
    for n in sizes:
        grid = ChannelGrid(nx=n, ny=n)
        peaks[n] = max(gagliardo_nirenberg_ratio(smooth_stream_field(grid, a, p))
                       for a, p in zip(amplitudes, phases))
        logger.info(f"L4 插值比值 {n}x{n}：{n_fields} 个场最大 {peaks[n]:.4f}")
    return peaks


def _random_stream_field(grid: ChannelGrid, rng: np.random.Generator, wall_flux: bool) -> VelocityField:
    psi = rng.standard_normal((grid.nx, grid.ny + 1))
    if not wall_flux:
        psi[:, 0] = 0.0
        psi[:, -1] = 0.0
    return velocity_from_stream(grid, psi)


ESTIMATE_STEPS = (32, 64)
ESTIMATE_DRIFT = 0.2


def linear_estimate_ratios(nt: int, n: int = 8, delta: float = 0.1, nu: float = 1.0,
                           T: float = 1.0, epsilon: float = 0.1) -> Tuple[float, Optional[float]]:
    """单音通量上的 (线性能量比值, 分数阶比值)

    T 取单音的整周期，g(0) = g(T) = 0，零延拓不引入跳跃。
    """
    grid = ChannelGrid(nx=n, ny=n)
    w = make_test_flux("tone", nx=n, nt=nt, T=T)
    z = solve_linear_evolution(grid, w, delta, w.dt, nt, nu=nu)
    energy = energy_audit_linear(z, epsilon)
    z_series = velocity_series([z.perturbation(k) for k in range(nt + 1)], w.dt)
    g_series = velocity_series([g.velocity for g in z.liftings], w.dt)
    frac = estimate_audit_fractional(z_series, g_series, epsilon)
    return energy.ratio, frac.ratio


def estimate_stability_checks(steps: Sequence[int] = ESTIMATE_STEPS, **kwargs) -> List[RateCheck]:
    """dt 减半时两个估计比值有限且漂移不超过 ESTIMATE_DRIFT"""
    coarse_energy, coarse_frac = linear_estimate_ratios(steps[0], **kwargs)
    fine_energy, fine_frac = linear_estimate_ratios(steps[1], **kwargs)
    checks = []
    for label, coarse, fine in (("linear energy", coarse_energy, fine_energy),
                                ("fractional", coarse_frac, fine_frac)):
        if coarse is None or fine is None or coarse == 0.0:
            checks.append(RateCheck(name=f"{label} ratio stable under dt halving", threshold=ESTIMATE_DRIFT,
                                    relation="<=", status="fail", detail="比值无定义"))
            continue
        checks.append(_bound(f"{label} ratio finite", max(coarse, fine), float("inf"), "<="))
        checks.append(_bound(f"{label} ratio stable under dt halving", abs(fine / coarse - 1.0), ESTIMATE_DRIFT,
                             detail=f"nt={steps[0]}: {coarse:.4f}, nt={steps[1]}: {fine:.4f}"))
    return checks


def property_checks(nu: float = 1.0, delta: float = 0.1, dt: float = 0.005, n: int = 16,
                    projection_tol: Optional[float] = None, seed: int = 0) -> List[RateCheck]:
    """常开性质检查（小网格）"""
    projection_tol = settings.projection_tol if projection_tol is None else projection_tol
    grid = ChannelGrid(nx=n, ny=n)
    rng = np.random.default_rng(seed)
    checks = []

    # 投影后散度
    nt = 10
    w = make_test_flux("tone", nx=n, nt=nt, T=nt * dt)
    cfg = NseConfig(delta=delta, dt=dt, nt=nt, nu=nu)
    z = solve_linear_evolution(grid, w, delta, dt, nt, nu=nu)
    split = solve_split(cfg, VelocityField.zeros(grid), z)
    mono = solve_monolithic(cfg.model_copy(update={"mode": "monolithic"}), VelocityField.zeros(grid), w)
    div_max = max(d.div_max for d in split.diagnostics + mono.diagnostics)
    checks.append(_bound("divergence after projection", div_max, projection_tol))

    # f=0, g=0 时能量单调
    shear = sample_velocity(grid, lambda x, y: np.sin(np.pi * y), lambda x, y: 0.0 * x)
    shear = apply_bc(shear, None, 0, delta)
    zero_flux = WallData.zeros(n, nt, dt)
    z0 = solve_linear_evolution(grid, zero_flux, delta, dt, nt, nu=nu)
    decay = solve_split(cfg, shear, z0)
    energies = [d.energy for d in decay.diagnostics]
    growth = max(b - a for a, b in zip(energies, energies[1:]))
    checks.append(_bound("energy monotone (f=0, g=0)", growth, 1e-14 * energies[0]))

    # 斜对称抵消
    U = _random_stream_field(grid, rng, wall_flux=False)
    zf = _random_stream_field(grid, rng, wall_flux=False)
    audit = nonlinear_term_audit(U, zf)
    checks.append(_bound("skew self cancellation", audit.relative_self, 1e-12))
    checks.append(_bound("skew pair cancellation", audit.relative_pair, 1e-12))

    # 相容性投影幂等
    raw = WallData(g_bottom=rng.standard_normal((n, nt + 1)), g_top=rng.standard_normal((n, nt + 1)), dt=dt)
    once = project_compatible(raw)
    twice = project_compatible(once)
    drift = float(max(np.max(np.abs(twice.g_bottom - once.g_bottom)), np.max(np.abs(twice.g_top - once.g_top))))
    checks.append(_bound("compatibility projection idempotent", drift, 0.0))

    # Parseval 自检在 fractional_norm 内部执行，失败即抛出
    try:
        series = velocity_series([s.velocity for s in z.states], dt)
        l2_time = math.sqrt(sum(dt * inner(s.velocity, s.velocity) for s in z.states))
        norm0 = fractional_norm(series, 0.0)
        checks.append(_bound("parseval (s=0 norm vs time L2)", abs(norm0 - l2_time) / max(l2_time, 1e-300), 1e-10))
    except VseedError as e:
        checks.append(RateCheck(name="parseval", threshold=1e-10, relation="<=", status="fail", detail=e.message))

    # 涡量恒等式二阶
    fu, fv, _, _ = manufactured_solution(nu)
    residuals = []
    for m in (16, 32, 64):
        g = ChannelGrid(nx=m, ny=m)
        residuals.append((g.hy, vorticity_identity_residual(sample_velocity(g, fu, fv))))
    fit = fit_slope("vorticity_identity", [h for h, _ in residuals], [r for _, r in residuals])
    if fit is None:
        checks.append(RateCheck(name="vorticity identity order >= 1.7", threshold=1.7, relation=">=",
                                status="not_applicable", detail="残差为零"))
    else:
        checks.append(_bound("vorticity identity order >= 1.7", fit.slope, 1.7, ">="))

    # L4 插值常数：随机光滑场的最大比值有界且不随加密增长
    peaks = gagliardo_nirenberg_sweep((n, 2 * n), n_fields=GN_FIELDS, seed=seed)
    coarse, fine = peaks[n], peaks[2 * n]
    checks.append(_bound("gagliardo-nirenberg max ratio <= 6^(1/4)", max(coarse, fine), GN_BOUND,
                         detail=f"{GN_FIELDS} 个随机场"))
    checks.append(_bound("gagliardo-nirenberg growth under refinement <= 10%", fine / coarse, 1.1))

    # 线性估计比值在 dt 减半下稳定
    checks.extend(estimate_stability_checks(delta=delta, nu=nu))
    for check in checks:
        logger.info(f"性质检查 {check.name}: {check.status} ({check.observed})")
    return checks
