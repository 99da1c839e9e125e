"""测试 MAC 网格离散算子与范数"""
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vseed.cli.audit import gagliardo_nirenberg_sweep
from vseed.core.boundary import close_robin_ghosts
from vseed.core.grid import (
    boundary_trace_sq,
    deformation,
    deformation_norm_sq,
    divergence,
    gagliardo_nirenberg_ratio,
    gradient,
    gradient_norm,
    inner,
    norms,
    sample_velocity,
    smooth_stream_field,
    velocity_from_stream,
)
from vseed.core.operators import ViscousOperator, pack, stress_divergence
from vseed.models.fields import ChannelGrid, PressureField, VelocityField
from vseed.utils.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)


def _random_field(grid: ChannelGrid, seed: int = 0) -> VelocityField:
    rng = np.random.default_rng(seed)
    field = VelocityField.zeros(grid)
    field.u[:, 1:-1] = rng.standard_normal((grid.nx, grid.ny))
    field.v[:, 1:-1] = rng.standard_normal((grid.nx, grid.ny - 1))
    return field


def test_uniform_field_has_zero_divergence_and_deformation():
    """刚体平移：散度与变形全为零"""
    grid = ChannelGrid(nx=8, ny=6)
    field = VelocityField(grid=grid, u=np.full((8, 8), 1.0), v=np.full((8, 7), 0.5))
    assert np.max(np.abs(divergence(field))) == 0.0
    d = deformation(field)
    assert np.max(np.abs(d.d11)) == 0.0
    assert np.max(np.abs(d.d22)) == 0.0
    assert np.max(np.abs(d.d12)) == 0.0
    assert gradient_norm(field) == 0.0


def test_divergence_matches_direct_difference():
    grid = ChannelGrid(nx=16, ny=8)
    field = sample_velocity(grid, lambda x, y: np.sin(2.0 * np.pi * x), lambda x, y: 0.0 * x)
    x = grid.x_faces
    expected = (np.sin(2.0 * np.pi * (x + grid.hx)) - np.sin(2.0 * np.pi * x)) / grid.hx
    assert_allclose(divergence(field), np.repeat(expected[:, None], grid.ny, axis=1), atol=1e-12)


def test_pure_shear_deformation_is_exact():
    """u = y 的线性场：d12 恒为 1/2"""
    grid = ChannelGrid(nx=8, ny=8)
    field = sample_velocity(grid, lambda x, y: y, lambda x, y: 0.0 * x)
    d = deformation(field)
    assert_allclose(d.d12, 0.5, atol=1e-12)
    assert_allclose(d.d11, 0.0, atol=1e-12)
    assert_allclose(d.d22, 0.0, atol=1e-12)


def test_deformation_second_order_convergence():
    errors = []
    for n in (16, 32, 64):
        grid = ChannelGrid(nx=n, ny=n)
        field = sample_velocity(grid, lambda x, y: np.sin(2.0 * np.pi * y), lambda x, y: 0.0 * x)
        exact = 0.5 * 2.0 * np.pi * np.cos(2.0 * np.pi * grid.y_nodes)
        errors.append(np.max(np.abs(deformation(field).d12 - exact[None, :])))
    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(slopes > 1.8)


def test_gradient_is_negative_adjoint_of_divergence():
    """<div f, p> = -<f, grad p>，壁面法向速度为零"""
    grid = ChannelGrid(nx=8, ny=6, lx=2.0)
    rng = np.random.default_rng(3)
    field = _random_field(grid, seed=1)
    p = rng.standard_normal((grid.nx, grid.ny))
    lhs = float(np.sum(divergence(field) * p) * grid.cell_volume)
    rhs = -inner(field, gradient(PressureField(grid=grid, p=p)))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_gradient_requires_grid_for_plain_array():
    with pytest.raises(InvalidParameterError):
        gradient(np.zeros((4, 4)))


def test_linearity():
    grid = ChannelGrid(nx=8, ny=8)
    a = _random_field(grid, seed=4)
    b = _random_field(grid, seed=5)
    combined = a * 2.0 + b * -3.0
    assert_allclose(divergence(combined), 2.0 * divergence(a) - 3.0 * divergence(b), atol=1e-10)
    assert_allclose(deformation(combined).d12, 2.0 * deformation(a).d12 - 3.0 * deformation(b).d12, atol=1e-10)


def test_stream_function_field_is_divergence_free():
    grid = ChannelGrid(nx=12, ny=10)
    psi = np.random.default_rng(0).standard_normal((grid.nx, grid.ny + 1))
    field = velocity_from_stream(grid, psi)
    assert np.max(np.abs(divergence(field))) < 1e-10


def test_stream_function_shape_is_checked():
    grid = ChannelGrid(nx=8, ny=8)
    with pytest.raises(InvalidParameterError):
        velocity_from_stream(grid, np.zeros((8, 8)))


def test_inner_product_measures_channel_area():
    """常数场的 L2 范数平方等于通道面积"""
    grid = ChannelGrid(nx=8, ny=8, lx=2.0)
    field = VelocityField(grid=grid, u=np.ones((8, 10)), v=np.zeros((8, 9)))
    assert inner(field, field) == pytest.approx(2.0, rel=1e-12)
    field = VelocityField(grid=grid, u=np.zeros((8, 10)), v=np.ones((8, 9)))
    assert inner(field, field) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("delta", [None, 0.05, 0.5])
def test_viscous_operator_energy_identity(delta):
    """x^T K x vol = ||D(u)||^2 + delta^-1 ||u·tau||^2（齐次壁面数据）"""
    grid = ChannelGrid(nx=8, ny=8)
    op = ViscousOperator(grid, delta)
    field = op.field(pack(_random_field(grid, seed=7)))
    x = pack(field)
    quadratic = float(x @ (op.matrix @ x)) * grid.cell_volume
    expected = deformation_norm_sq(field)
    if delta is not None:
        expected += boundary_trace_sq(field) / delta
    assert quadratic == pytest.approx(expected, rel=1e-10)


def test_viscous_operator_is_symmetric():
    grid = ChannelGrid(nx=6, ny=5)
    K = ViscousOperator(grid, 0.1).matrix
    assert abs(K - K.T).max() <= 1e-10 * abs(K).max()


def test_matrix_free_stress_matches_assembled_operator():
    grid = ChannelGrid(nx=8, ny=6)
    op = ViscousOperator(grid, 0.2)
    field = close_robin_ghosts(_random_field(grid, seed=2), 0.2)
    visc_u, visc_v = stress_divergence(field)
    assert_allclose(-np.concatenate([visc_u.ravel(), visc_v.ravel()]), op.matrix @ pack(field), atol=1e-9)


def test_scalar_norms_of_constant():
    grid = ChannelGrid(nx=8, ny=8)
    result = norms(np.full((8, 8), 3.0), grid)
    assert result.l2 == pytest.approx(3.0)
    assert result.h1_semi == 0.0
    assert result.l4 == pytest.approx(3.0)
    assert result.boundary_l2_tangential == pytest.approx(3.0 * np.sqrt(2.0))


def test_scalar_sine_norm_converges():
    grid = ChannelGrid(nx=64, ny=8)
    values = np.repeat(np.sin(2.0 * np.pi * grid.x_centers)[:, None], grid.ny, axis=1)
    assert norms(values, grid).l2 == pytest.approx(np.sqrt(0.5), rel=1e-10)


def test_zero_field_norms():
    grid = ChannelGrid(nx=8, ny=8)
    result = norms(VelocityField.zeros(grid))
    assert result.l2 == 0.0 and result.h1_semi == 0.0 and result.l4 == 0.0
    assert result.boundary_l2_tangential == 0.0
    assert gagliardo_nirenberg_ratio(VelocityField.zeros(grid)) == 0.0


def test_gagliardo_nirenberg_ratio_is_grid_stable():
    """100 个随机光滑场：L4 插值比值不超过 6^{1/4}，且加密时最大值不增长"""
    peaks = gagliardo_nirenberg_sweep((16, 32, 64), n_fields=100, seed=7)
    logger.info(f"GN 最大比值: {peaks}")
    values = [peaks[n] for n in (16, 32, 64)]
    assert all(v > 0.0 for v in values)
    assert max(values) <= 6.0 ** 0.25
    assert all(b <= 1.1 * a for a, b in zip(values, values[1:]))


def test_smooth_stream_field_is_closed_and_divergence_free():
    grid = ChannelGrid(nx=16, ny=16)
    rng = np.random.default_rng(3)
    field = smooth_stream_field(grid, rng.standard_normal((3, 2)), rng.uniform(0.0, 2.0 * np.pi, (3, 2)))
    assert np.max(np.abs(divergence(field))) <= 1e-12 * field.max_abs() / grid.hx
    assert_allclose(field.v[:, 0], 0.0, atol=1e-12)
    assert_allclose(field.v[:, -1], 0.0, atol=1e-12)
    assert boundary_trace_sq(field) == 0.0
    with pytest.raises(InvalidParameterError):
        smooth_stream_field(grid, np.ones((3, 2)), np.ones((2, 3)))
