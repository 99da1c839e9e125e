"""测试壁面闭合、法向通量生成与提升场"""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from vseed.core.boundary import (
    apply_bc,
    apply_noslip_bc,
    build_lifting,
    close_robin_ghosts,
    make_test_flux,
    project_compatible,
    require_compatible,
    robin_residual,
    vorticity_identity_residual,
)
from vseed.core.grid import divergence, sample_velocity
from vseed.models.fields import ChannelGrid, VelocityField, WallData
from vseed.storage.run_storage import read_wall_csv, write_wall_csv
from vseed.utils.exceptions import FluxDataError, InvalidParameterError


def _random_field(grid: ChannelGrid, seed: int = 0) -> VelocityField:
    rng = np.random.default_rng(seed)
    field = VelocityField.zeros(grid)
    field.u[:, 1:-1] = rng.standard_normal((grid.nx, grid.ny))
    field.v[:, 1:-1] = rng.standard_normal((grid.nx, grid.ny - 1))
    return field


def test_robin_ghost_for_linear_profile():
    """u = y + 1，delta = 2：下壁虚拟层恰为 1 - h/2"""
    grid = ChannelGrid(nx=4, ny=8)
    field = sample_velocity(grid, lambda x, y: y + 1.0, lambda x, y: 0.0 * x)
    closed = close_robin_ghosts(field.copy(), 2.0)
    assert_allclose(closed.u[:, 0], 1.0 - grid.hy / 2.0, rtol=1e-14)


def test_robin_closure_limits():
    grid = ChannelGrid(nx=8, ny=8)
    field = _random_field(grid)
    tiny = close_robin_ghosts(field.copy(), 1e-12)
    assert_allclose(tiny.u[:, 0], -field.u[:, 1], atol=1e-9)
    assert_allclose(tiny.u[:, -1], -field.u[:, -2], atol=1e-9)
    huge = close_robin_ghosts(field.copy(), 1e12)
    assert_allclose(huge.u[:, 0], field.u[:, 1], atol=1e-9)
    assert_allclose(huge.u[:, -1], field.u[:, -2], atol=1e-9)


def test_apply_bc_satisfies_robin_relation():
    grid = ChannelGrid(nx=16, ny=8)
    w = make_test_flux("tone", nx=16, nt=4, T=1.0)
    closed = apply_bc(_random_field(grid, seed=1), w, t_index=1, delta=0.1)
    assert robin_residual(closed, 0.1) < 1e-12
    v_bottom, v_top = w.imposed(1, 0.1, 1.0)
    assert_array_equal(closed.v[:, 0], v_bottom)
    assert_array_equal(closed.v[:, -1], v_top)


def test_apply_bc_homogeneous_and_noslip():
    grid = ChannelGrid(nx=8, ny=8)
    field = _random_field(grid, seed=2)
    field.v[:, 0] = 1.0
    closed = apply_bc(field, None, 0, 0.3)
    assert np.all(closed.v[:, 0] == 0.0) and np.all(closed.v[:, -1] == 0.0)
    # 原场不被修改
    assert np.all(field.v[:, 0] == 1.0)
    noslip = apply_noslip_bc(field)
    assert_array_equal(noslip.u[:, 0], -noslip.u[:, 1])
    assert_array_equal(noslip.u[:, -1], -noslip.u[:, -2])


@pytest.mark.parametrize("delta", [0.0, -0.1])
def test_nonpositive_delta_rejected(delta):
    grid = ChannelGrid(nx=8, ny=8)
    with pytest.raises(InvalidParameterError):
        apply_bc(VelocityField.zeros(grid), None, 0, delta)


def test_negative_alpha_override_rejected():
    grid = ChannelGrid(nx=8, ny=8)
    w = make_test_flux("tone", nx=8, nt=2, T=1.0)
    with pytest.raises(InvalidParameterError):
        apply_bc(VelocityField.zeros(grid), w, 0, 0.5, alpha=-1.0)


def test_project_compatible_examples():
    nx, nt = 8, 3
    opposite = WallData(g_bottom=np.ones((nx, nt + 1)), g_top=-np.ones((nx, nt + 1)), dt=0.1)
    assert project_compatible(opposite) is opposite
    same = WallData(g_bottom=np.ones((nx, nt + 1)), g_top=np.ones((nx, nt + 1)), dt=0.1)
    projected = project_compatible(same)
    assert_allclose(projected.g_bottom, 0.0, atol=1e-15)
    assert_allclose(projected.g_top, 0.0, atol=1e-15)


def test_project_compatible_is_idempotent():
    rng = np.random.default_rng(5)
    raw = WallData(g_bottom=rng.standard_normal((16, 9)), g_top=rng.standard_normal((16, 9)), dt=0.125)
    once = project_compatible(raw)
    assert once.is_compatible()
    twice = project_compatible(once)
    assert_array_equal(twice.g_bottom, once.g_bottom)
    assert_array_equal(twice.g_top, once.g_top)


def test_require_compatible_reports_worst_slice():
    g_bottom = np.zeros((8, 4))
    g_bottom[:, 1] = 0.5
    g_bottom[:, 2] = 1.0
    w = WallData(g_bottom=g_bottom, g_top=np.zeros((8, 4)), dt=0.1)
    with pytest.raises(FluxDataError) as exc_info:
        require_compatible(w)
    assert exc_info.value.worst_index == 2


def test_wall_data_is_immutable():
    w = make_test_flux("tone", nx=8, nt=2, T=1.0)
    with pytest.raises(ValueError):
        w.g_bottom[0, 0] = 1.0


def test_tone_flux_is_compatible():
    w = make_test_flux("tone", nx=16, nt=8, T=1.0, kappa=2, omega=3.0, amplitude=0.7)
    assert w.is_compatible()
    assert_array_equal(w.g_top, -w.g_bottom)
    assert np.max(np.abs(w.g_bottom[:, 0])) == 0.0


def test_multitone_requires_tones():
    with pytest.raises(InvalidParameterError):
        make_test_flux("multitone", nx=8, nt=4, T=1.0)


def test_unknown_flux_kind_rejected():
    with pytest.raises(InvalidParameterError):
        make_test_flux("square", nx=8, nt=4, T=1.0)


def test_through_flow_can_be_forbidden():
    with pytest.raises(FluxDataError):
        make_test_flux("tone", nx=8, nt=4, T=1.0, kappa=0, allow_through_flow=False)
    w = make_test_flux("tone", nx=8, nt=4, T=1.0, kappa=0)
    assert w.is_compatible()


def test_band_limited_noise_is_deterministic():
    a = make_test_flux("band_limited_noise", nx=16, nt=32, T=1.0, seed=3)
    b = make_test_flux("band_limited_noise", nx=16, nt=32, T=1.0, seed=3)
    c = make_test_flux("band_limited_noise", nx=16, nt=32, T=1.0, seed=4)
    assert_array_equal(a.g_bottom, b.g_bottom)
    assert not np.array_equal(a.g_bottom, c.g_bottom)
    assert a.is_compatible()
    # 正弦时间基：初始时刻为零
    assert_allclose(a.g_bottom[:, 0], 0.0, atol=1e-15)


def test_lifting_is_divergence_free_with_exact_trace():
    grid = ChannelGrid(nx=16, ny=16)
    w = make_test_flux("tone", nx=16, nt=8, T=1.0)
    lifting = build_lifting(grid, w, 2, 0.1)
    assert np.max(np.abs(divergence(lifting))) <= 1e-12
    v_bottom, v_top = w.imposed(2, 0.1, 1.0)
    assert_array_equal(lifting.v[:, 0], v_bottom)
    assert_array_equal(lifting.v[:, -1], v_top)
    assert robin_residual(lifting, 0.1) < 1e-12


def test_lifting_scales_with_delta_power():
    """内部自由度按 delta^alpha 线性缩放"""
    grid = ChannelGrid(nx=16, ny=16)
    w = make_test_flux("tone", nx=16, nt=8, T=1.0, alpha=2.0)
    coarse = build_lifting(grid, w, 3, 0.1)
    fine = build_lifting(grid, w, 3, 0.2)
    assert_allclose(fine.u_interior, 4.0 * coarse.u_interior, rtol=1e-12, atol=1e-15)
    assert_allclose(fine.v, 4.0 * coarse.v, rtol=1e-12, atol=1e-15)


def test_uniform_through_flow_lifting():
    """g_b = c, g_t = -c：提升场为均匀竖直流"""
    grid = ChannelGrid(nx=8, ny=8)
    c = 0.3
    w = WallData(g_bottom=np.full((8, 3), c), g_top=np.full((8, 3), -c), dt=0.5)
    lifting = build_lifting(grid, w, 1, 0.5)
    assert_allclose(lifting.u, 0.0, atol=1e-15)
    assert_allclose(lifting.v, -0.5 * c, rtol=1e-14)


def test_lifting_rejects_incompatible_data():
    grid = ChannelGrid(nx=8, ny=8)
    w = WallData(g_bottom=np.ones((8, 3)), g_top=np.ones((8, 3)), dt=0.5)
    with pytest.raises(FluxDataError):
        build_lifting(grid, w, 0, 0.5)


def test_lifting_rejects_mismatched_grid():
    w = make_test_flux("tone", nx=8, nt=2, T=1.0)
    with pytest.raises(InvalidParameterError):
        build_lifting(ChannelGrid(nx=16, ny=8), w, 0, 0.5)


def test_vorticity_identity_residual():
    grid = ChannelGrid(nx=8, ny=8)
    uniform = VelocityField(grid=grid, u=np.ones((8, 10)), v=np.zeros((8, 9)))
    assert vorticity_identity_residual(uniform) == 0.0

    errors = []
    for n in (16, 32, 64):
        g = ChannelGrid(nx=n, ny=n)
        field = sample_velocity(
            g,
            lambda x, y: np.cos(2.0 * np.pi * x) * np.sin(np.pi * y),
            lambda x, y: np.sin(2.0 * np.pi * x) * np.sin(np.pi * y) ** 2,
        )
        errors.append(vorticity_identity_residual(field))
    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(slopes >= 1.7)


def test_wall_csv_roundtrip(tmp_path):
    w = make_test_flux("band_limited_noise", nx=8, nt=4, T=1.0, seed=1)
    path = write_wall_csv(tmp_path / "flux.csv", w)
    loaded = read_wall_csv(path, dt=w.dt)
    assert_array_equal(loaded.g_bottom, w.g_bottom)
    assert_array_equal(loaded.g_top, w.g_top)
    assert loaded.is_compatible()


def test_wall_csv_errors(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("a,b,c,d\n1,2,3,4\n", encoding="utf-8")
    with pytest.raises(FluxDataError):
        read_wall_csv(bad_header, dt=0.1)

    incomplete = tmp_path / "incomplete.csv"
    incomplete.write_text("wall,t_index,x_index,value\nbottom,0,0,1.0\nbottom,0,1,1.0\n", encoding="utf-8")
    with pytest.raises(FluxDataError):
        read_wall_csv(incomplete, dt=0.1)

    malformed = tmp_path / "malformed.csv"
    malformed.write_text("wall,t_index,x_index,value\nside,0,0,1.0\n", encoding="utf-8")
    with pytest.raises(FluxDataError):
        read_wall_csv(malformed, dt=0.1)
