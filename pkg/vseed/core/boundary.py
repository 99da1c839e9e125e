"""壁面边界模型：Navier 滑移 + 振荡法向通量

离散闭合：壁面 v 由数据直接给定；u 的虚拟层由离散 Robin 关系
    u_wall - delta * d12 = 0（下壁），u_wall + delta * d12 = 0（上壁）
解出，其中 u_wall 为虚拟层与首个内部行的平均，d12 在壁面节点上取值。
"""
import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from vseed.core.grid import deformation, velocity_from_stream, vorticity
from vseed.models.fields import ChannelGrid, VelocityField, WallData
from vseed.utils.exceptions import FluxDataError, InvalidParameterError

logger = logging.getLogger(__name__)

# 低于该相对量级的相容性亏量视为舍入误差，不再修正
_COMPAT_SKIP = 1e-13


def _check_delta(delta: float) -> None:
    if not delta > 0.0:
        raise InvalidParameterError(f"delta 必须为正数，实际 {delta}", error_code="invalid_delta")


def close_robin_ghosts(f: VelocityField, delta: float) -> VelocityField:
    """按当前壁面 v 值为 u 虚拟层赋值（原地修改并返回）"""
    _check_delta(delta)
    g = f.grid
    hy = g.hy
    dvdx_bottom = (f.v[:, 0] - np.roll(f.v[:, 0], 1)) / g.hx
    dvdx_top = (f.v[:, -1] - np.roll(f.v[:, -1], 1)) / g.hx
    denom = hy + delta
    f.u[:, 0] = (f.u[:, 1] * (delta - hy) + delta * hy * dvdx_bottom) / denom
    f.u[:, -1] = (f.u[:, -2] * (delta - hy) - delta * hy * dvdx_top) / denom
    return f


def apply_bc(
    f: VelocityField,
    w: Optional[WallData],
    t_index: int,
    delta: float,
    alpha: Optional[float] = None,
) -> VelocityField:
    """施加 delta^alpha 缩放的法向通量与 Navier 滑移闭合，返回新场

    w 为 None 时施加齐次条件（法向速度为零）。
    alpha 缺省取 w.alpha；显式传入时允许任意非负指数。
    """
    _check_delta(delta)
    out = f.copy()
    if w is None:
        out.v[:, 0] = 0.0
        out.v[:, -1] = 0.0
    else:
        exponent = w.alpha if alpha is None else alpha
        if exponent < 0.0:
            raise InvalidParameterError(f"alpha 必须非负，实际 {exponent}")
        v_bottom, v_top = w.imposed(t_index, delta, exponent)
        out.v[:, 0] = v_bottom
        out.v[:, -1] = v_top
    return close_robin_ghosts(out, delta)


def apply_noslip_bc(f: VelocityField) -> VelocityField:
    """无滑移闭合：壁面 v = 0，u 虚拟层取反"""
    out = f.copy()
    out.v[:, 0] = 0.0
    out.v[:, -1] = 0.0
    out.u[:, 0] = -out.u[:, 1]
    out.u[:, -1] = -out.u[:, -2]
    return out


def robin_residual(f: VelocityField, delta: float) -> float:
    """重新计算壁面 Robin 关系的最大残差"""
    _check_delta(delta)
    d12 = deformation(f).d12
    u_bottom = 0.5 * (f.u[:, 0] + f.u[:, 1])
    u_top = 0.5 * (f.u[:, -1] + f.u[:, -2])
    bottom = u_bottom - delta * d12[:, 0]
    top = u_top + delta * d12[:, -1]
    return float(max(np.max(np.abs(bottom)), np.max(np.abs(top))))


def project_compatible(raw: WallData) -> WallData:
    """逐时间层减去两壁共同均值，使 sum(g_b + g_t) hx = 0（幂等）"""
    defect = raw.compatibility_defect()
    scale = raw.compatibility_scale()
    mean = defect / (2.0 * raw.lx)
    needs_fix = np.abs(defect) > _COMPAT_SKIP * scale
    if not np.any(needs_fix):
        return raw
    shift = np.where(needs_fix, mean, 0.0)
    worst = int(np.argmax(np.abs(defect)))
    logger.debug(f"相容性投影：{int(needs_fix.sum())} 个时间层被修正，最大亏量 {defect[worst]:.3e}（第 {worst} 层）")
    return raw.model_copy(update={
        "g_bottom": _frozen(raw.g_bottom - shift[None, :]),
        "g_top": _frozen(raw.g_top - shift[None, :]),
    })


def require_compatible(w: WallData) -> None:
    """不相容数据直接拒绝，报告最差时间层"""
    defect = np.abs(w.compatibility_defect())
    scale = w.compatibility_scale()
    bad = defect > 1e-12 * scale + 1e-300
    if np.any(bad):
        worst = int(np.argmax(np.where(bad, defect, -1.0)))
        raise FluxDataError(
            f"法向通量不满足相容性条件：第 {worst} 个时间层亏量 {defect[worst]:.3e}",
            worst_index=worst,
        )


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def make_test_flux(
    kind: str,
    *,
    nx: int,
    nt: int,
    T: float,
    lx: float = 1.0,
    kappa: int = 1,
    omega: float = 2.0 * np.pi,
    amplitude: float = 1.0,
    tones: Optional[Sequence[Tuple[float, float, float]]] = None,
    seed: int = 0,
    s: float = 0.6,
    eta: float = 0.1,
    n_modes: Optional[int] = None,
    n_spatial: int = 3,
    allow_through_flow: bool = True,
    alpha: float = 1.0,
    delta: float = 1.0,
) -> WallData:
    """生成测试用法向通量（已投影到相容子空间）

    kind:
      - tone: sin(2 pi kappa x / lx) sin(omega t)，上壁取反
      - multitone: tones 中每个 (kappa, omega, amplitude) 叠加
      - band_limited_noise: 固定种子的随机场，时间谱按 |xi|^{-(1+2s)/2-eta} 衰减
    """
    if nt < 1 or nx < 4:
        raise InvalidParameterError(f"nx >= 4 且 nt >= 1，实际 nx={nx}, nt={nt}")
    if not T > 0.0:
        raise InvalidParameterError(f"T 必须为正数，实际 {T}")
    dt = T / nt
    x = (np.arange(nx) + 0.5) * lx / nx
    t = np.arange(nt + 1) * dt

    if kind == "tone":
        tone_list = [(kappa, omega, amplitude)]
    elif kind == "multitone":
        if not tones:
            raise InvalidParameterError("multitone 需要至少一个 (kappa, omega, amplitude)")
        tone_list = list(tones)
    elif kind == "band_limited_noise":
        tone_list = []
    else:
        raise InvalidParameterError(f"未知的通量类型: {kind}")

    if kind == "band_limited_noise":
        g_bottom = _band_limited_noise(x, t, T, lx, seed, s, eta, n_modes, n_spatial) * amplitude
    else:
        _check_through_flow(tone_list, allow_through_flow)
        g_bottom = np.zeros((nx, nt + 1))
        for k, w, a in tone_list:
            # kappa=0 是均匀穿透流
            profile = np.ones(nx) if k == 0 else np.sin(2.0 * np.pi * k * x / lx)
            g_bottom += a * np.outer(profile, np.sin(w * t))

    raw = WallData(g_bottom=g_bottom, g_top=-g_bottom, dt=dt, alpha=alpha, delta=delta, lx=lx)
    return project_compatible(raw)


def _check_through_flow(tones: Iterable[Tuple[float, float, float]], allowed: bool) -> None:
    if not allowed and any(k == 0 for k, _, _ in tones):
        raise FluxDataError("kappa=0 产生净穿透流，但 allow_through_flow=False", error_code="through_flow")


def _band_limited_noise(
    x: np.ndarray,
    t: np.ndarray,
    T: float,
    lx: float,
    seed: int,
    s: float,
    eta: float,
    n_modes: Optional[int],
    n_spatial: int,
) -> np.ndarray:
    nt = len(t) - 1
    modes = n_modes if n_modes is not None else max(nt // 4, 1)
    rng = np.random.default_rng(seed)
    # 按 (时间模态, 空间模态, cos/sin) 顺序抽样，增加 modes 不改变已有系数
    coeff = rng.standard_normal((modes, n_spatial, 2))
    m = np.arange(1, modes + 1)
    decay = m ** (-(1.0 + 2.0 * s) / 2.0 - eta)
    temporal = np.sin(np.outer(t, np.pi * m / T)) * decay[None, :]
    k = np.arange(1, n_spatial + 1)
    phase = 2.0 * np.pi * np.outer(x, k) / lx
    spatial = np.stack([np.cos(phase), np.sin(phase)], axis=-1)
    return np.einsum("tm,mkc,xkc->xt", temporal, coeff, spatial)


def build_lifting(
    grid: ChannelGrid,
    w: WallData,
    t_index: int,
    delta: float,
    alpha: Optional[float] = None,
) -> VelocityField:
    """构造满足给定法向迹的离散无散场 G1

    节点流函数 psi = (1 - beta(y)) A(x) + beta(y) B(x)，beta = 3y^2 - 2y^3，
    A、B 由壁面法向速度零均值部分积分得到，均值部分由均匀 v 补齐。
    虚拟层按 Robin 闭合赋值。
    """
    require_compatible(w)
    if w.nx != grid.nx:
        raise InvalidParameterError(f"通量采样点数 {w.nx} 与网格 nx={grid.nx} 不一致")
    exponent = w.alpha if alpha is None else alpha
    v_bottom, v_top = w.imposed(t_index, delta, exponent)

    mean_bottom = v_bottom.mean()
    mean_top = v_top.mean()
    a = _periodic_primitive(v_bottom - mean_bottom, grid.hx)
    b = _periodic_primitive(v_top - mean_top, grid.hx)
    y = grid.y_nodes
    beta = 3.0 * y ** 2 - 2.0 * y ** 3
    psi = np.outer(a, 1.0 - beta) + np.outer(b, beta)

    lifting = velocity_from_stream(grid, psi)
    lifting.v += 0.5 * (mean_bottom + mean_top)
    return apply_bc(lifting, w, t_index, delta, exponent)


def _periodic_primitive(values: np.ndarray, hx: float) -> np.ndarray:
    """A[i+1] = A[i] - hx values[i]，A[0] = 0（values 零均值保证周期）"""
    primitive = np.zeros_like(values)
    primitive[1:] = -hx * np.cumsum(values)[:-1]
    return primitive


def vorticity_identity_residual(f: VelocityField) -> float:
    """检查平直壁面上 n·D(u)·tau - curl(u)/2 = 0

    取 tau 为 n 逆时针旋转 90 度，两壁均有 n·D·tau = -d12；
    在内部前两行节点上计算并二阶外推到壁面。
    """
    q = -deformation(f).d12 - 0.5 * vorticity(f)
    bottom = 2.0 * q[:, 1] - q[:, 2]
    top = 2.0 * q[:, -2] - q[:, -3]
    return float(max(np.max(np.abs(bottom)), np.max(np.abs(top))))
