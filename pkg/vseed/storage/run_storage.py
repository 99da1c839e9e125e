"""运行目录存储管理器：清单、诊断 CSV、快照二进制与通量 CSV"""
import csv
import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from vseed.models.fields import ChannelGrid, PressureField, VelocityField, WallData
from vseed.models.state import RateReport, Snapshot, StepDiagnostics
from vseed.utils.exceptions import FluxDataError, StorageError

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"VSEED1"
_HEADER = struct.Struct("<qqqd")
DIAGNOSTIC_COLUMNS = ["step", "t", "energy", "deform_sq", "boundary_diss", "div_max"]
WALL_COLUMNS = ["wall", "t_index", "x_index", "value"]
GRONWALL_COLUMNS = ["step", "t", "bound_u", "measured_u", "exceeded"]


def format_float(value: float) -> str:
    """浮点数按 17 位有效数字输出，保证逐字节可复现"""
    return format(float(value), ".17g")


def config_hash(text: str) -> str:
    """配置文本的 sha256（忽略空行与行首尾空白）"""
    lines = [line.strip() for line in text.splitlines()]
    canonical = "\n".join(sorted(line for line in lines if line and not line.startswith("#")))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class RunStorage:
    """单个运行目录的读写"""

    def __init__(self, root: Path):
        """
        初始化运行目录

        Args:
            root: 运行目录路径（不存在时自动创建）
        """
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"创建运行目录失败：{self.root}", exc_info=True)
            raise StorageError(f"无法创建运行目录 {self.root}: {e}", error_code="storage") from e

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        try:
            with open(target, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as e:
            logger.error(f"写入失败：{target}", exc_info=True)
            raise StorageError(f"无法写入 {target}: {e}", error_code="storage") from e
        logger.debug(f"写入 {target}")
        return target

    def write_manifest(self, manifest: Dict[str, Any]) -> Path:
        """
        写入运行清单

        Args:
            manifest: 清单字典（配置哈希、版本、耗时、退出状态等）

        Returns:
            Path: 清单文件路径
        """
        return self.write_text("manifest.json", json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True))

    def load_manifest(self) -> Dict[str, Any]:
        target = self.path("manifest.json")
        try:
            with open(target, "r", encoding="utf-8") as fh:
                return json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"读取清单失败：{target}", exc_info=True)
            raise StorageError(f"无法读取运行清单 {target}: {e}", error_code="storage") from e

    def write_diagnostics(self, name: str, rows: Sequence[StepDiagnostics]) -> Path:
        """诊断量 CSV：step,t,energy,deform_sq,boundary_diss,div_max"""
        lines = [",".join(DIAGNOSTIC_COLUMNS)]
        for row in rows:
            lines.append(",".join([str(row.step)] + [format_float(v) for v in row.to_row()[1:]]))
        return self.write_text(name, "\n".join(lines) + "\n")

    def read_diagnostics(self, name: str) -> List[StepDiagnostics]:
        target = self.path(name)
        try:
            with open(target, "r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != DIAGNOSTIC_COLUMNS:
                    raise StorageError(f"{target} 不是诊断 CSV（表头 {reader.fieldnames}）", error_code="storage")
                rows = []
                for line_no, row in enumerate(reader, start=2):
                    try:
                        rows.append(StepDiagnostics(**row))
                    except ValidationError as e:
                        raise StorageError(f"{target} 第 {line_no} 行无效: {e.errors()[0]['msg']}",
                                           error_code="storage") from e
                return rows
        except OSError as e:
            raise StorageError(f"无法读取 {target}: {e}", error_code="storage") from e

    def write_gronwall(self, name: str, rows: Sequence[StepDiagnostics], bound_u: Sequence[float],
                       measured_u: Sequence[float]) -> Path:
        """Gronwall 曲线 CSV：step,t,bound_u,measured_u,exceeded"""
        lines = [",".join(GRONWALL_COLUMNS)]
        for row, bound, measured in zip(rows, bound_u, measured_u):
            lines.append(f"{row.step},{format_float(row.t)},{format_float(bound)},{format_float(measured)},"
                         f"{int(row.gronwall_exceeded)}")
        return self.write_text(name, "\n".join(lines) + "\n")

    def read_gronwall(self, name: str) -> List[Tuple[int, float, float, bool]]:
        """返回 [(step, bound_u, measured_u, exceeded)]"""
        target = self.path(name)
        try:
            with open(target, "r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != GRONWALL_COLUMNS:
                    raise StorageError(f"{target} 不是 Gronwall CSV（表头 {reader.fieldnames}）", error_code="storage")
                rows = []
                for line_no, row in enumerate(reader, start=2):
                    try:
                        rows.append((int(row["step"]), float(row["bound_u"]), float(row["measured_u"]),
                                     row["exceeded"].strip() == "1"))
                    except (TypeError, ValueError, AttributeError) as e:
                        raise StorageError(f"{target} 第 {line_no} 行无效: {e}", error_code="storage") from e
                return rows
        except OSError as e:
            raise StorageError(f"无法读取 {target}: {e}", error_code="storage") from e

    def write_report(self, report: RateReport) -> Tuple[Path, Path]:
        """扫描报告：逐 delta 误差 CSV 与 JSON 全量报告"""
        header = ["delta", "sup_l2_sq", "deform_l2_sq", "boundary_term", "total", "trace_l2",
                  "w_total", "z_energy", "lifting_grad", "psi_integral", "gronwall_violations"]
        lines = [",".join(header)]
        for i, rec in enumerate(report.errors):
            values = [rec.delta, rec.sup_l2_sq, rec.deform_l2_sq, rec.boundary_term, rec.total, rec.trace_l2,
                      report.w_errors[i].total, report.z_energy[i], report.lifting_grad[i],
                      report.psi_integrals[i]]
            lines.append(",".join([format_float(v) for v in values] + [str(report.gronwall_violations[i])]))
        csv_path = self.write_text("rates.csv", "\n".join(lines) + "\n")
        json_path = self.write_text("report.json", json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
        return csv_path, json_path

    def load_report(self) -> RateReport:
        target = self.path("report.json")
        try:
            with open(target, "r", encoding="utf-8") as fh:
                return RateReport(**json.load(fh))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise StorageError(f"无法读取报告 {target}: {e}", error_code="storage") from e

    def write_summary(self, lines: Iterable[str]) -> Path:
        return self.write_text("summary.txt", "\n".join(lines) + "\n")

    def write_snapshots(self, name: str, grid: ChannelGrid, dt: float, snapshots: Sequence[Snapshot]) -> Path:
        """
        快照二进制：魔数 VSEED1，随后 nx, ny, nt（int64）与 dt（float64），全部小端；
        之后每层依次为 u (nx, ny+2)、v (nx, ny+1)、p (nx, ny) 的行主序 float64。
        """
        target = self.path(name)
        try:
            with open(target, "wb") as fh:
                fh.write(SNAPSHOT_MAGIC)
                fh.write(_HEADER.pack(grid.nx, grid.ny, len(snapshots) - 1, dt))
                for snap in snapshots:
                    for array in (snap.velocity.u, snap.velocity.v, snap.pressure.p):
                        fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
        except OSError as e:
            logger.error(f"写入快照失败：{target}", exc_info=True)
            raise StorageError(f"无法写入 {target}: {e}", error_code="storage") from e
        logger.info(f"写入 {len(snapshots)} 个快照到 {target}")
        return target

    def read_snapshots(self, name: str, lx: float = 1.0) -> Tuple[ChannelGrid, float, List[Tuple[VelocityField, PressureField]]]:
        target = self.path(name)
        try:
            data = target.read_bytes()
        except OSError as e:
            raise StorageError(f"无法读取 {target}: {e}", error_code="storage") from e
        if not data.startswith(SNAPSHOT_MAGIC):
            raise StorageError(f"{target} 不是快照文件（魔数不符）", error_code="storage")
        offset = len(SNAPSHOT_MAGIC)
        nx, ny, nt, dt = _HEADER.unpack_from(data, offset)
        offset += _HEADER.size
        grid = ChannelGrid(nx=nx, ny=ny, lx=lx)
        shapes = [(nx, ny + 2), (nx, ny + 1), (nx, ny)]
        per_step = sum(a * b for a, b in shapes) * 8
        if len(data) - offset != per_step * (nt + 1):
            raise StorageError(f"{target} 长度与头部声明不一致", error_code="storage")
        fields = []
        for _ in range(nt + 1):
            arrays = []
            for shape in shapes:
                count = shape[0] * shape[1]
                arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy())
                offset += count * 8
            fields.append((VelocityField(grid=grid, u=arrays[0], v=arrays[1]), PressureField(grid=grid, p=arrays[2])))
        return grid, dt, fields


def write_wall_csv(path: Path, w: WallData) -> Path:
    """通量 CSV：wall,t_index,x_index,value"""
    lines = [",".join(WALL_COLUMNS)]
    for wall, values in (("bottom", w.g_bottom), ("top", w.g_top)):
        for k in range(w.nt + 1):
            for i in range(w.nx):
                lines.append(f"{wall},{k},{i},{format_float(values[i, k])}")
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"无法写入 {path}: {e}", error_code="storage") from e
    return path


def read_wall_csv(path: Path, dt: float, lx: float = 1.0, alpha: float = 1.0,
                  nx: Optional[int] = None) -> WallData:
    """读取通量 CSV；格式错误或采样不完整时抛出 FluxDataError"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != WALL_COLUMNS:
                raise FluxDataError(f"通量 CSV 表头应为 {WALL_COLUMNS}，实际 {reader.fieldnames}")
            records = []
            for line_no, row in enumerate(reader, start=2):
                try:
                    wall = row["wall"].strip()
                    if wall not in ("bottom", "top"):
                        raise ValueError(f"未知壁面 {wall}")
                    value = float(row["value"])
                    if not np.isfinite(value):
                        raise ValueError(f"非有限值 {row['value']}")
                    records.append((wall, int(row["t_index"]), int(row["x_index"]), value))
                except (TypeError, ValueError) as e:
                    raise FluxDataError(f"{path} 第 {line_no} 行格式错误: {e}") from e
    except OSError as e:
        raise FluxDataError(f"无法读取通量文件 {path}: {e}") from e
    if not records:
        raise FluxDataError(f"{path} 不含数据行")
    n_x = max(r[2] for r in records) + 1 if nx is None else nx
    n_t = max(r[1] for r in records) + 1
    arrays = {"bottom": np.full((n_x, n_t), np.nan), "top": np.full((n_x, n_t), np.nan)}
    for wall, k, i, value in records:
        if i < 0 or i >= n_x or k < 0:
            raise FluxDataError(f"{path} 中下标越界：wall={wall}, t_index={k}, x_index={i}")
        arrays[wall][i, k] = value
    for wall, array in arrays.items():
        if np.any(np.isnan(array)):
            raise FluxDataError(f"{path} 中 {wall} 壁面采样不完整")
    try:
        return WallData(g_bottom=arrays["bottom"], g_top=arrays["top"], dt=dt, lx=lx, alpha=alpha)
    except ValidationError as e:
        details = "; ".join(err["msg"] for err in e.errors())
        raise FluxDataError(f"{path} 无法构成壁面数据: {details}") from e
