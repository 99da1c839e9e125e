"""斜对称 MAC 对流算子

S(a) w 在每个控制体上取 sum_f F_f w_nb / (2 |V|)，F_f 为由 a 平均得到的外法向面通量。
对离散无散、法向迹为零的 a，<S(a) w, w> = 0 且 <S(a) w, y> = -<S(a) y, w>；
v 的壁面行作为半控制体参与（只有指向内部的面）。
"""
import numpy as np

from vseed.models.fields import VelocityField


def advect(a: VelocityField, w: VelocityField) -> VelocityField:
    """(a·grad) w 的斜对称离散，结果存于内部 u 与全部 v 行（虚拟层为零）"""
    g = a.grid
    hx, hy = g.hx, g.hy
    vol = g.cell_volume
    out = VelocityField.zeros(g)

    # u 动量：控制体以 u 面为中心
    ua = a.u_interior
    flux_east = 0.5 * (ua + np.roll(ua, -1, axis=0)) * hy
    flux_west = -0.5 * (np.roll(ua, 1, axis=0) + ua) * hy
    v_nodes = 0.5 * (np.roll(a.v, 1, axis=0) + a.v) * hx
    flux_north = v_nodes[:, 1:]
    flux_south = -v_nodes[:, :-1]
    uw = w.u_interior
    out.u[:, 1:-1] = (
        flux_east * np.roll(uw, -1, axis=0)
        + flux_west * np.roll(uw, 1, axis=0)
        + flux_north * w.u[:, 2:]
        + flux_south * w.u[:, :-2]
    ) / (2.0 * vol)

    # v 动量：控制体以 v 面为中心
    flux_center = 0.5 * (a.v[:, :-1] + a.v[:, 1:]) * hx
    u_nodes = 0.5 * (a.u[:, :-1] + a.u[:, 1:]) * hy
    vw = w.v
    east = np.roll(u_nodes, -1, axis=0) * np.roll(vw, -1, axis=0)
    west = -u_nodes * np.roll(vw, 1, axis=0)
    out.v[:, 1:-1] = (
        flux_center[:, 1:] * vw[:, 2:]
        - flux_center[:, :-1] * vw[:, :-2]
        + east[:, 1:-1]
        + west[:, 1:-1]
    ) / (2.0 * vol)
    # 壁面半控制体
    out.v[:, 0] = flux_center[:, 0] * vw[:, 1] / vol
    out.v[:, -1] = -flux_center[:, -1] * vw[:, -2] / vol
    return out
