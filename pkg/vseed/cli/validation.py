"""配置静态校验：硬性违规与建议项"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from vseed.cli.factory import create_flux, create_grid
from vseed.config import settings
from vseed.models.experiment import ExperimentConfig
from vseed.utils.exceptions import FluxDataError, VseedError

logger = logging.getLogger(__name__)


class ValidationReport(BaseModel):
    """校验结果"""
    violations: List[str] = Field(default_factory=list)
    advisories: List[str] = Field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_experiment(cfg: ExperimentConfig, base_dir: Optional[Path] = None) -> ValidationReport:
    """
    校验实验配置（不求解）

    Args:
        cfg: 已通过字段校验的实验配置
        base_dir: 相对路径的基准目录

    Returns:
        ValidationReport: 违规项与建议项
    """
    report = ValidationReport()
    grid = create_grid(cfg)

    if cfg.flux.kind == "multitone" and not cfg.flux.tones:
        report.violations.append("flux.tones: multitone 至少需要一个 kappa:omega:amplitude")
    if cfg.flux.kind == "csv" and not cfg.flux.csv:
        report.violations.append("flux.csv: kind=csv 时必须给出文件路径")
    if cfg.mode == "audit" and "manufactured" in cfg.audit.checks and len(cfg.audit.refinements) < 3:
        report.violations.append("audit.refinements: 制造解收敛阶至少需要 3 个网格")
    if report.violations:
        return report

    flux = None
    try:
        flux = create_flux(cfg, base_dir, project=False)
        if flux.nt < cfg.time.nt:
            report.violations.append(f"flux: 通量只有 {flux.nt + 1} 个时间层，需要 {cfg.time.nt + 1}")
        defect = np.abs(flux.compatibility_defect())
        scale = flux.compatibility_scale()
        worst = int(np.argmax(defect))
        if defect[worst] > 1e-12 * scale[worst] + 1e-300:
            report.violations.append(f"flux: 相容性亏量最大在第 {worst} 个时间层（{defect[worst]:.3e}）")
    except FluxDataError as e:
        suffix = f"（第 {e.worst_index} 个时间层）" if e.worst_index is not None else ""
        report.violations.append(f"flux: {e.message}{suffix}")
    except VseedError as e:
        report.violations.append(f"flux: {e.message}")

    deltas = cfg.sweep.deltas if cfg.mode == "sweep" else [cfg.physics.delta]
    if cfg.mode != "noslip":
        smallest = min(deltas)
        if grid.hy > smallest / 4.0:
            report.advisories.append(
                f"分辨率：hy={grid.hy:.4g} > delta/4={smallest / 4.0:.4g}，边界层可能欠分辨"
            )
    if flux is not None:
        peak = max(float(np.max(np.abs(flux.g_bottom))), float(np.max(np.abs(flux.g_top))))
        speed = max(deltas) ** cfg.physics.alpha * peak + cfg.initial.amplitude
        limit = settings.cfl_safety * min(grid.hx, grid.hy) / max(1.0, speed)
        if cfg.time.dt > limit:
            report.advisories.append(f"CFL：dt={cfg.time.dt:.4g} 超过估计上限 {limit:.4g}")
    logger.info(f"配置校验完成：{len(report.violations)} 个违规，{len(report.advisories)} 条建议")
    return report
