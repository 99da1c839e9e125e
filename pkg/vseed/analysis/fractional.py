"""时间方向分数阶 Sobolev 范数

把 [0, T] 上的采样序列零延拓到长度 padding*(nt+1) 的窗口，用酉归一化的离散 Fourier 变换
    f_hat(xi) = dt / sqrt(2 pi) * sum_n f_n exp(-i xi t_n)
计算
    ||f||_{H^s}  = (sum (1 + |xi|^2)^s |f_hat|^2 dxi)^{1/2}
    |f|_{H^s}    = (sum |xi|^{2s} |f_hat|^2 dxi)^{1/2}
向量值序列对空间分量求和。每次计算都用 Parseval 恒等式自检。
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from vseed.config import settings
from vseed.core.grid import field_vector
from vseed.models.fields import VelocityField
from vseed.models.state import TimeSeries
from vseed.utils.exceptions import InvalidParameterError, VseedError

logger = logging.getLogger(__name__)

_PARSEVAL_RTOL = 1e-10


def velocity_series(fields: Sequence[VelocityField], dt: float) -> TimeSeries:
    """速度场序列 -> 带权展平后的向量值时间序列"""
    return TimeSeries(values=np.stack([field_vector(f) for f in fields]), dt=dt)


def _spectrum(series: TimeSeries, padding: Optional[int]) -> Tuple[np.ndarray, np.ndarray, float]:
    factor = settings.padding_factor if padding is None else padding
    if factor < 4:
        raise InvalidParameterError(f"补零倍数至少为 4，实际 {factor}")
    values = series.values if series.values.ndim == 2 else series.values[:, None]
    length = factor * values.shape[0]
    transform = np.fft.fft(values, n=length, axis=0) * (series.dt / np.sqrt(2.0 * np.pi))
    xi = 2.0 * np.pi * np.fft.fftfreq(length, d=series.dt)
    dxi = 2.0 * np.pi / (length * series.dt)
    power = np.sum(np.abs(transform) ** 2, axis=1)

    spectral = float(np.sum(power) * dxi)
    physical = float(series.dt * np.sum(values ** 2))
    if abs(spectral - physical) > _PARSEVAL_RTOL * max(physical, np.finfo(float).tiny):
        logger.error(f"Parseval 自检失败：频域 {spectral:.6e}，时域 {physical:.6e}")
        raise VseedError("时间 Fourier 变换归一化错误（Parseval 自检失败）", error_code="parseval")
    return xi, power, dxi


def _check_order(s: float) -> None:
    if not 0.0 <= s < 1.0:
        raise InvalidParameterError(f"分数阶指数必须位于 [0, 1)，实际 {s}")


def fractional_norm(series: TimeSeries, s: float, padding: Optional[int] = None) -> float:
    """Bessel 型 H^s(0,T) 范数，s=0 时等于 L2(0,T) 范数"""
    _check_order(s)
    xi, power, dxi = _spectrum(series, padding)
    return float(np.sqrt(np.sum((1.0 + xi ** 2) ** s * power) * dxi))


def fractional_seminorm(series: TimeSeries, s: float, padding: Optional[int] = None) -> float:
    """|xi|^{2s} 权重的半范数"""
    _check_order(s)
    xi, power, dxi = _spectrum(series, padding)
    return float(np.sqrt(np.sum(np.abs(xi) ** (2.0 * s) * power) * dxi))


class FractionalAudit(BaseModel):
    """||Z||_{H^{1/2-eps}} / ||G||_{H^{1/2+eps}}"""
    numerator: float
    denominator: float
    ratio: Optional[float] = None
    undefined: bool = False


def estimate_audit_fractional(
    z_series: TimeSeries,
    g_series: TimeSeries,
    epsilon: float = 0.1,
    padding: Optional[int] = None,
) -> FractionalAudit:
    """时间正则性估计比值；G 为零时比值无定义"""
    if not 0.0 < epsilon < 0.5:
        raise InvalidParameterError(f"epsilon 必须位于 (0, 1/2)，实际 {epsilon}")
    numerator = fractional_norm(z_series, 0.5 - epsilon, padding)
    denominator = fractional_norm(g_series, 0.5 + epsilon, padding)
    if denominator == 0.0:
        return FractionalAudit(numerator=numerator, denominator=0.0, undefined=True)
    return FractionalAudit(numerator=numerator, denominator=denominator, ratio=numerator / denominator)
