"""求解对象工厂：由 ExperimentConfig 构造网格、通量、初值与求解配置"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from vseed.config import settings
from vseed.core.boundary import apply_bc, make_test_flux, project_compatible
from vseed.core.grid import sample_velocity
from vseed.models.experiment import ExperimentConfig
from vseed.models.fields import ChannelGrid, VelocityField, WallData
from vseed.models.state import NseConfig
from vseed.storage.run_storage import read_wall_csv

logger = logging.getLogger(__name__)


def create_grid(cfg: ExperimentConfig) -> ChannelGrid:
    return ChannelGrid(nx=cfg.grid.nx, ny=cfg.grid.ny, lx=cfg.grid.lx)


def create_flux(cfg: ExperimentConfig, base_dir: Optional[Path] = None, project: bool = True) -> WallData:
    """
    构造法向通量

    Args:
        cfg: 实验配置
        base_dir: 相对 CSV 路径的基准目录
        project: CSV 数据是否投影到相容子空间（校验时关闭以报告原始亏量）
    """
    flux = cfg.flux
    nx, nt, dt = cfg.grid.nx, cfg.time.nt, cfg.time.dt
    if flux.kind == "zero":
        return WallData.zeros(nx, nt, dt, lx=cfg.grid.lx, alpha=cfg.physics.alpha)
    if flux.kind == "csv":
        path = Path(flux.csv)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        raw = read_wall_csv(path, dt=dt, lx=cfg.grid.lx, alpha=cfg.physics.alpha, nx=nx)
        logger.info(f"读取通量 CSV：{path}，{raw.nx} 个采样点，{raw.nt + 1} 个时间层")
        return project_compatible(raw) if project else raw
    return make_test_flux(
        flux.kind,
        nx=nx,
        nt=nt,
        T=nt * dt,
        lx=cfg.grid.lx,
        kappa=flux.kappa,
        omega=flux.omega,
        amplitude=flux.amplitude,
        tones=flux.tones,
        seed=flux.seed,
        s=flux.s,
        eta=flux.eta,
        n_modes=flux.n_modes,
        allow_through_flow=flux.allow_through_flow,
        alpha=cfg.physics.alpha,
    )


def create_initial(cfg: ExperimentConfig, grid: ChannelGrid) -> VelocityField:
    """初值 u0：零场或剪切模态 A sin(pi y)（无散且法向迹为零）"""
    if cfg.initial.kind == "zero" or cfg.initial.amplitude == 0.0:
        return VelocityField.zeros(grid)
    amplitude = cfg.initial.amplitude
    u0 = sample_velocity(grid, lambda x, y: amplitude * np.sin(np.pi * y), lambda x, y: 0.0 * x)
    return apply_bc(u0, None, 0, cfg.physics.delta)


def create_nse_config(cfg: ExperimentConfig, mode: Optional[str] = None) -> NseConfig:
    tol = cfg.tolerances
    return NseConfig(
        delta=cfg.physics.delta,
        alpha=cfg.physics.alpha,
        nu=cfg.physics.nu,
        dt=cfg.time.dt,
        nt=cfg.time.nt,
        mode=mode or ("split" if cfg.mode in ("sweep", "audit") else cfg.mode),
        save_stride=cfg.output.save_stride,
        initial_lifting=cfg.initial_lifting,
        solver_tol=tol.solver_tol or settings.solver_tol,
        projection_tol=tol.projection_tol or settings.projection_tol,
        max_iterations=tol.max_iterations or settings.max_iterations,
    )
