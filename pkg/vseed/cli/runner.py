"""实验编排：按模式求解、落盘并给出退出码

退出码：0 通过，2 断言失败，1 配置/求解/存储错误。
"""
import json
import logging
import math
import time
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from vseed import __version__
from vseed.analysis.estimates import exceeds_bound, gronwall_bound
from vseed.analysis.rates import assess_report, rate_sweep
from vseed.cli.audit import cross_check, manufactured_check, oracle_check, property_checks
from vseed.cli.factory import create_flux, create_grid, create_initial, create_nse_config
from vseed.config import settings
from vseed.core.grid import boundary_trace_sq, deformation_norm_sq, divergence, inner
from vseed.models.experiment import ExperimentConfig, load_config_text
from vseed.models.state import RateCheck, StepDiagnostics, Trajectory
from vseed.solvers.nse import solve_monolithic, solve_noslip, solve_split
from vseed.solvers.stokes import solve_linear_evolution
from vseed.storage.run_storage import RunStorage, config_hash, write_wall_csv
from vseed.utils.exceptions import StorageError, VseedError
from vseed.utils.logger import run_log

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

CONFIG_NAME = "config.cfg"
DIAGNOSTICS_NAME = "diagnostics.csv"
SNAPSHOTS_NAME = "snapshots.bin"
FLUX_NAME = "flux.csv"
AUDIT_NAME = "audit.json"
GRONWALL_NAME = "gronwall.csv"

# 快照重算与诊断 CSV 比对的相对容差
RECOMPUTE_RTOL = 1e-12


class RunResult(BaseModel):
    """一次 CLI 调用的结果"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    exit_code: int
    run_dir: Path
    status: str
    summary: List[str] = Field(default_factory=list)
    checks: List[RateCheck] = Field(default_factory=list)


def resolve_run_dir(cfg: ExperimentConfig) -> Path:
    """output.dir 优先，否则为 settings.out / output.name（VSEED_OUT 覆盖输出根目录）"""
    if cfg.output.dir:
        return Path(cfg.output.dir)
    return Path(settings.out) / cfg.output.name


def _check_line(check: RateCheck) -> str:
    observed = "n/a" if check.observed is None else f"{check.observed:.6g}"
    return f"[{check.status.upper()}] {check.name}: {observed} ({check.relation} {check.threshold:.6g}) {check.detail}".rstrip()


def _exit_for(checks: List[RateCheck]) -> int:
    return EXIT_FAILED if any(c.status == "fail" for c in checks) else EXIT_OK


def _write_checks(storage: RunStorage, checks: List[RateCheck]) -> None:
    payload = [c.model_dump() for c in checks]
    storage.write_text(AUDIT_NAME, json.dumps(payload, ensure_ascii=False, indent=2))


def _trajectory_summary(traj: Trajectory) -> List[str]:
    energies = [d.energy for d in traj.diagnostics]
    dissipation = sum(traj.dt * (d.deform_sq + d.boundary_diss) for d in traj.diagnostics[1:])
    return [
        f"mode = {traj.mode}",
        f"steps = {traj.nt}",
        f"delta = {traj.delta:g}",
        f"alpha = {traj.alpha:g}",
        f"energy_initial = {energies[0]:.6e}",
        f"energy_final = {energies[-1]:.6e}",
        f"energy_max = {max(energies):.6e}",
        f"dissipation = {dissipation:.6e}",
        f"div_max = {max(d.div_max for d in traj.diagnostics):.3e}",
    ]


def _run_single(cfg: ExperimentConfig, storage: RunStorage, base_dir: Optional[Path], mode: str) -> RunResult:
    grid = create_grid(cfg)
    nse_cfg = create_nse_config(cfg, mode)
    u0 = create_initial(cfg, grid)
    checks: List[RateCheck] = []

    if mode == "noslip":
        traj = solve_noslip(nse_cfg, u0)
    else:
        w = create_flux(cfg, base_dir)
        if not w.is_zero():
            write_wall_csv(storage.path(FLUX_NAME), w)
        if mode == "monolithic":
            traj = solve_monolithic(nse_cfg, u0, w)
        else:
            z = solve_linear_evolution(grid, w, nse_cfg.delta, nse_cfg.dt, nse_cfg.nt,
                                       alpha=nse_cfg.alpha, nu=nse_cfg.nu, tol=nse_cfg.solver_tol)
            traj = solve_split(nse_cfg, u0, z)
            curves = gronwall_bound(traj.ledger, nse_cfg.delta, nse_cfg.dt)
            storage.write_gronwall(GRONWALL_NAME, traj.diagnostics, curves.bound_u, curves.measured_u)
            checks.append(RateCheck(
                name="gronwall violations == 0", observed=float(curves.violations_u), threshold=0.0,
                relation="==", status="pass" if curves.violations_u == 0 else "fail",
            ))

    div_max = max(d.div_max for d in traj.diagnostics)
    checks.append(RateCheck(
        name="divergence after projection", observed=div_max, threshold=nse_cfg.projection_tol, relation="<=",
        status="pass" if div_max <= nse_cfg.projection_tol else "fail",
    ))
    storage.write_diagnostics(DIAGNOSTICS_NAME, traj.diagnostics)
    if cfg.output.snapshots:
        storage.write_snapshots(SNAPSHOTS_NAME, grid, nse_cfg.dt * nse_cfg.save_stride, traj.snapshots)
    _write_checks(storage, checks)
    summary = _trajectory_summary(traj) + [_check_line(c) for c in checks]
    exit_code = _exit_for(checks)
    return RunResult(exit_code=exit_code, run_dir=storage.root, status="pass" if exit_code == EXIT_OK else "fail",
                     summary=summary, checks=checks)


def _run_sweep(cfg: ExperimentConfig, storage: RunStorage, base_dir: Optional[Path]) -> RunResult:
    grid = create_grid(cfg)
    w = create_flux(cfg, base_dir)
    u0 = create_initial(cfg, grid)
    template = create_nse_config(cfg, "split")
    report = rate_sweep(grid, template, w, cfg.sweep.deltas, alpha=cfg.physics.alpha, u0=u0,
                        workers=cfg.sweep.workers)
    storage.write_report(report)

    summary = ["mode = sweep", f"alpha = {report.alpha:g}",
               f"deltas = {', '.join(f'{d:g}' for d in report.deltas)}"]
    for name, fit in report.slopes.items():
        summary.append(f"slope[{name}] = {fit.slope:.4f} (R^2={fit.r2:.4f}, n={fit.n_points})")
    summary.extend(_check_line(c) for c in report.checks)
    for delta, reason in report.failures.items():
        summary.append(f"[ERROR] delta={delta}: {reason}")

    if report.partial:
        exit_code, status = EXIT_ERROR, "partial"
    else:
        exit_code = _exit_for(report.checks)
        status = "pass" if exit_code == EXIT_OK else "fail"
    return RunResult(exit_code=exit_code, run_dir=storage.root, status=status, summary=summary,
                     checks=report.checks)


def _run_audit(cfg: ExperimentConfig, storage: RunStorage, base_dir: Optional[Path]) -> RunResult:
    checks: List[RateCheck] = []
    physics = cfg.physics
    for name in cfg.audit.checks:
        logger.info(f"执行审计检查：{name}")
        if name == "oracle":
            checks.extend(oracle_check(cfg.audit.oracle_nx, cfg.audit.oracle_ny, physics.nu, physics.delta,
                                       cfg.time.dt))
        elif name == "cross":
            grid = create_grid(cfg)
            checks.extend(cross_check(grid, create_nse_config(cfg, "split"), create_flux(cfg, base_dir),
                                      create_initial(cfg, grid)))
        elif name == "manufactured":
            checks.extend(manufactured_check(cfg.audit.refinements, physics.nu))
        elif name == "properties":
            checks.extend(property_checks(physics.nu, physics.delta, cfg.time.dt,
                                          projection_tol=create_nse_config(cfg).projection_tol))
    _write_checks(storage, checks)
    exit_code = _exit_for(checks)
    summary = ["mode = audit", f"checks = {', '.join(cfg.audit.checks)}"] + [_check_line(c) for c in checks]
    return RunResult(exit_code=exit_code, run_dir=storage.root, status="pass" if exit_code == EXIT_OK else "fail",
                     summary=summary, checks=checks)


def run_experiment(
    cfg: ExperimentConfig,
    config_text: str,
    base_dir: Optional[Path] = None,
    mode: Optional[str] = None,
    run_dir: Optional[Path] = None,
) -> RunResult:
    """
    执行一次实验并落盘

    Args:
        cfg: 实验配置
        config_text: 原始配置文本（写入运行目录并计算哈希）
        base_dir: 相对 CSV 路径的基准目录
        mode: 覆盖 cfg.mode（sweep 子命令使用）
        run_dir: 覆盖输出目录

    Returns:
        RunResult: 退出码、状态与摘要
    """
    mode = mode or cfg.mode
    storage = RunStorage(run_dir or resolve_run_dir(cfg))
    with run_log(storage.root):
        return _record_run(cfg, config_text, base_dir, mode, storage)


def _record_run(cfg: ExperimentConfig, config_text: str, base_dir: Optional[Path], mode: str,
                storage: RunStorage) -> RunResult:
    storage.write_text(CONFIG_NAME, config_text)
    started = time.perf_counter()
    logger.info(f"开始运行：mode={mode}，输出目录 {storage.root}")

    error: Optional[str] = None
    try:
        if mode == "sweep":
            result = _run_sweep(cfg, storage, base_dir)
        elif mode == "audit":
            result = _run_audit(cfg, storage, base_dir)
        else:
            result = _run_single(cfg, storage, base_dir, mode)
    except VseedError as e:
        logger.error(f"运行失败 [{e.error_code}]：{e.message}", exc_info=True)
        error = e.message
        result = RunResult(exit_code=EXIT_ERROR, run_dir=storage.root, status="error",
                           summary=[f"mode = {mode}", f"[ERROR] {e.error_code}: {e.message}"])

    wall_time = time.perf_counter() - started
    result.summary.append(f"wall_time_s = {wall_time:.3f}")
    manifest = {
        "config_hash": config_hash(config_text),
        "version": __version__,
        "mode": mode,
        "created_at": datetime.now().isoformat(timespec="seconds"),
        "wall_time_s": round(wall_time, 3),
        "exit_code": result.exit_code,
        "status": result.status,
        "error": error,
    }
    try:
        storage.write_manifest(manifest)
        storage.write_summary(result.summary)
    except StorageError as e:
        logger.error(f"写入运行清单失败：{e.message}", exc_info=True)
        result.exit_code = EXIT_ERROR
    logger.info(f"运行结束：status={result.status}，exit={result.exit_code}，耗时 {wall_time:.1f}s")
    return result


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= RECOMPUTE_RTOL * max(abs(a), abs(b)) + 1e-300


def _recompute_from_snapshots(storage: RunStorage, cfg: ExperimentConfig,
                              rows: List[StepDiagnostics]) -> RateCheck:
    """从快照二进制独立重算存档层的诊断量，与诊断 CSV 逐项比对"""
    name = "snapshots match diagnostics"
    _, _, fields = storage.read_snapshots(SNAPSHOTS_NAME, lx=cfg.grid.lx)
    stride = cfg.output.save_stride
    steps = [k for k in range(cfg.time.nt + 1) if k % stride == 0 or k == cfg.time.nt]
    if len(steps) != len(fields):
        return RateCheck(name=name, observed=float(len(fields)), threshold=float(len(steps)), relation="==",
                         status="fail", detail="快照层数与存档间隔不符")
    by_step = {r.step: r for r in rows}
    delta = None if cfg.mode == "noslip" else cfg.physics.delta
    mismatched = []
    for step, (velocity, _) in zip(steps, fields):
        row = by_step.get(step)
        if row is None:
            mismatched.append(step)
            continue
        boundary = 0.0 if delta is None else boundary_trace_sq(velocity) / delta
        recomputed = (
            0.5 * inner(velocity, velocity),
            deformation_norm_sq(velocity),
            boundary,
            float(np.max(np.abs(divergence(velocity)))),
        )
        recorded = (row.energy, row.deform_sq, row.boundary_diss, row.div_max)
        if not all(_close(a, b) for a, b in zip(recomputed, recorded)):
            mismatched.append(step)
    logger.info(f"快照重算：{len(steps)} 层，不一致 {len(mismatched)} 层")
    detail = f"不一致的步：{mismatched[:5]}" if mismatched else f"{len(steps)} 层"
    return RateCheck(name=name, observed=float(len(mismatched)), threshold=0.0, relation="==",
                     status="fail" if mismatched else "pass", detail=detail)


def audit_run_dir(run_dir: Path) -> RunResult:
    """对已有运行目录重新审计：配置哈希、诊断 CSV、快照重算、Gronwall 曲线与扫描报告"""
    storage = RunStorage(run_dir)
    manifest = storage.load_manifest()
    checks: List[RateCheck] = []

    try:
        text = storage.path(CONFIG_NAME).read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"运行目录缺少 {CONFIG_NAME}: {e}", error_code="storage") from e
    same = config_hash(text) == manifest.get("config_hash")
    checks.append(RateCheck(name="config hash matches manifest", threshold=1.0, relation="==",
                            observed=1.0 if same else 0.0, status="pass" if same else "fail"))
    cfg = load_config_text(text)

    if storage.path(DIAGNOSTICS_NAME).exists():
        rows = storage.read_diagnostics(DIAGNOSTICS_NAME)
        complete = len(rows) == cfg.time.nt + 1
        checks.append(RateCheck(name="diagnostics rows == nt + 1", observed=float(len(rows)),
                                threshold=float(cfg.time.nt + 1), relation="==",
                                status="pass" if complete else "fail"))
        finite = all(math.isfinite(r.energy) for r in rows)
        checks.append(RateCheck(name="energy finite", threshold=1.0, relation="==", observed=1.0 if finite else 0.0,
                                status="pass" if finite else "fail"))
        tol = create_nse_config(cfg).projection_tol
        div_max = max((r.div_max for r in rows), default=0.0)
        checks.append(RateCheck(name="divergence after projection", observed=div_max, threshold=tol, relation="<=",
                                status="pass" if div_max <= tol else "fail"))
        if storage.path(SNAPSHOTS_NAME).exists():
            checks.append(_recompute_from_snapshots(storage, cfg, rows))

    if storage.path(GRONWALL_NAME).exists():
        curve = storage.read_gronwall(GRONWALL_NAME)
        flagged = sum(1 for _, _, _, exceeded in curve if exceeded)
        recounted = sum(exceeds_bound([m for _, _, m, _ in curve], [b for _, b, _, _ in curve]))
        consistent = flagged == recounted
        checks.append(RateCheck(
            name="gronwall violations == 0", observed=float(recounted), threshold=0.0, relation="==",
            status="pass" if recounted == 0 and consistent else "fail",
            detail="" if consistent else f"标记 {flagged} 个，重算 {recounted} 个",
        ))

    if storage.path("report.json").exists():
        report = assess_report(storage.load_report())
        checks.extend(report.checks)
        if report.partial:
            checks.append(RateCheck(name="sweep complete", threshold=0.0, relation="==",
                                    observed=float(len(report.failures)), status="fail",
                                    detail="部分 delta 失败"))

    _write_checks(storage, checks)
    exit_code = _exit_for(checks)
    summary = [f"audit of {storage.root}", f"recorded status = {manifest.get('status')}"]
    summary.extend(_check_line(c) for c in checks)
    logger.info(f"重新审计完成：{len(checks)} 项检查，exit={exit_code}")
    return RunResult(exit_code=exit_code, run_dir=storage.root, status="pass" if exit_code == EXIT_OK else "fail",
                     summary=summary, checks=checks)
