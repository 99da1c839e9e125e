"""实验配置：分节 key=value 文本 -> pydantic 模型

    # 注释
    grid.nx = 64
    physics.delta = 0.1
    sweep.deltas = 0.4, 0.2, 0.1, 0.05

所有违规项由 pydantic 一次性收集，统一转换为 ConfigValidationError。
"""
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from vseed.utils.exceptions import ConfigValidationError, VseedError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    nx: int = Field(default=64, ge=4)
    ny: int = Field(default=64, ge=4)
    lx: float = Field(default=1.0, gt=0.0)


class TimeSection(_Section):
    dt: float = Field(default=0.005, gt=0.0)
    nt: int = Field(default=200, ge=1)


class PhysicsSection(_Section):
    nu: float = Field(default=1.0, gt=0.0)
    delta: float = Field(default=0.1, gt=0.0, le=1.0)
    alpha: float = Field(default=1.0, ge=1.0)


class FluxSection(_Section):
    kind: Literal["tone", "multitone", "band_limited_noise", "csv", "zero"] = "tone"
    kappa: int = Field(default=1, ge=0)
    omega: float = 6.283185307179586
    amplitude: float = 1.0
    tones: List[Tuple[float, float, float]] = Field(default_factory=list, description="kappa:omega:amplitude; ...")
    seed: int = 0
    s: float = Field(default=0.6, gt=0.0, lt=1.0)
    eta: float = Field(default=0.1, gt=0.0)
    n_modes: Optional[int] = Field(default=None, ge=1)
    allow_through_flow: bool = True
    csv: Optional[str] = None

    @field_validator("tones", mode="before")
    @classmethod
    def _parse_tones(cls, value):
        if isinstance(value, str):
            tones = []
            for chunk in value.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                parts = chunk.split(":")
                if len(parts) != 3:
                    raise ValueError(f"tone 应为 kappa:omega:amplitude，实际 {chunk!r}")
                tones.append(tuple(float(p) for p in parts))
            return tones
        return value


class InitialSection(_Section):
    kind: Literal["zero", "shear_mode"] = "zero"
    amplitude: float = 0.0


class SweepSection(_Section):
    deltas: List[float] = Field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    workers: Optional[int] = Field(default=None, ge=1)

    @field_validator("deltas", mode="before")
    @classmethod
    def _parse_deltas(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("deltas")
    @classmethod
    def _check_deltas(cls, value: List[float]) -> List[float]:
        if len(set(value)) < 3:
            raise ValueError("至少需要 3 个不同的 delta")
        if any(d <= 0.0 or d > 1.0 for d in value):
            raise ValueError("delta 必须位于 (0, 1]")
        return value


class AuditSection(_Section):
    checks: List[Literal["oracle", "cross", "manufactured", "properties"]] = Field(
        default_factory=lambda: ["oracle", "cross"]
    )
    oracle_nx: int = Field(default=8, ge=4, le=12)
    oracle_ny: int = Field(default=8, ge=4, le=12)
    refinements: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])

    @field_validator("checks", "refinements", mode="before")
    @classmethod
    def _parse_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value


class OutputSection(_Section):
    dir: Optional[str] = None
    name: str = "run"
    snapshots: bool = False
    save_stride: int = Field(default=1, ge=1)


class ToleranceSection(_Section):
    solver_tol: Optional[float] = Field(default=None, gt=0.0)
    projection_tol: Optional[float] = Field(default=None, gt=0.0)
    max_iterations: Optional[int] = Field(default=None, ge=1)


class ExperimentConfig(_Section):
    """一次实验的完整配置"""
    mode: Literal["noslip", "split", "monolithic", "sweep", "audit"] = "split"
    initial_lifting: bool = True
    grid: GridSection = Field(default_factory=GridSection)
    time: TimeSection = Field(default_factory=TimeSection)
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    flux: FluxSection = Field(default_factory=FluxSection)
    initial: InitialSection = Field(default_factory=InitialSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    audit: AuditSection = Field(default_factory=AuditSection)
    output: OutputSection = Field(default_factory=OutputSection)
    tolerances: ToleranceSection = Field(default_factory=ToleranceSection)


def parse_config_text(text: str) -> Dict[str, object]:
    """key=value 文本 -> 嵌套字典；语法错误一并收集"""
    data: Dict[str, object] = {}
    violations = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"第 {line_no} 行缺少 '=': {raw.strip()}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            violations.append(f"第 {line_no} 行键名为空")
            continue
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                violations.append(f"第 {line_no} 行：{part} 既是值又是分节")
                break
            node = child
        else:
            if parts[-1] in node:
                violations.append(f"第 {line_no} 行：重复的键 {key}")
            node[parts[-1]] = value
    if violations:
        raise ConfigValidationError(violations)
    return data


def build_config(data: Dict[str, object]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        violations = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        ]
        raise ConfigValidationError(violations) from e


def load_config_text(text: str) -> ExperimentConfig:
    return build_config(parse_config_text(text))


def load_config_file(path: Path) -> Tuple[ExperimentConfig, str]:
    """读取配置文件，返回 (配置, 原始文本)"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise VseedError(f"无法读取配置文件 {path}: {e}", error_code="config_unreadable") from e
    return load_config_text(text), text
