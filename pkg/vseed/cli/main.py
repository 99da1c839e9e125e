"""命令行入口

    vseed run <config|preset>
    vseed validate <config|preset>
    vseed sweep <config|preset>
    vseed audit <rundir>
"""
import argparse
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple

from vseed import __version__
from vseed.cli.runner import EXIT_ERROR, EXIT_OK, audit_run_dir, run_experiment
from vseed.cli.validation import validate_experiment
from vseed.models.experiment import ExperimentConfig, load_config_file, load_config_text
from vseed.utils.exceptions import ConfigValidationError, VseedError
from vseed.utils.logger import setup_logging

logger = logging.getLogger(__name__)

PRESETS = ("acceptance_alpha1", "acceptance_alpha2", "oracle_small", "manufactured")


def preset_text(name: str) -> str:
    """读取内置预设配置"""
    if name not in PRESETS:
        raise VseedError(f"未知预设 {name}，可选 {', '.join(PRESETS)}", error_code="preset")
    return (resources.files("vseed.cli") / "presets" / f"{name}.cfg").read_text(encoding="utf-8")


def load_source(source: str) -> Tuple[ExperimentConfig, str, Optional[Path]]:
    """配置文件路径或预设名 -> (配置, 原始文本, 相对路径基准目录)"""
    path = Path(source)
    if path.is_file():
        cfg, text = load_config_file(path)
        return cfg, text, path.resolve().parent
    if source in PRESETS:
        text = preset_text(source)
        return load_config_text(text), text, None
    raise VseedError(f"配置文件不存在且不是预设名：{source}", error_code="config_unreadable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vseed", description="涡量播种近壁模型求解与收敛率验证")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="按配置中的 mode 执行一次实验")
    run.add_argument("config", help="配置文件路径或预设名")
    run.add_argument("--out", type=Path, default=None, help="覆盖输出目录")

    validate = sub.add_parser("validate", help="只校验配置，不求解")
    validate.add_argument("config", help="配置文件路径或预设名")

    sweep = sub.add_parser("sweep", help="delta 扫描与收敛阶检验")
    sweep.add_argument("config", help="配置文件路径或预设名")
    sweep.add_argument("--out", type=Path, default=None, help="覆盖输出目录")

    audit = sub.add_parser("audit", help="重新审计已有运行目录")
    audit.add_argument("rundir", type=Path)
    return parser


def _print_lines(lines: List[str]) -> None:
    for line in lines:
        print(line)


def _cmd_validate(source: str) -> int:
    cfg, _, base_dir = load_source(source)
    report = validate_experiment(cfg, base_dir)
    print("valid" if report.valid else "invalid")
    _print_lines([f"violation: {v}" for v in report.violations])
    _print_lines([f"advisory: {a}" for a in report.advisories])
    return EXIT_OK if report.valid else EXIT_ERROR


def _cmd_run(source: str, mode: Optional[str], out: Optional[Path]) -> int:
    cfg, text, base_dir = load_source(source)
    report = validate_experiment(cfg, base_dir)
    if not report.valid:
        _print_lines([f"violation: {v}" for v in report.violations])
        return EXIT_ERROR
    for advisory in report.advisories:
        logger.warning(f"配置建议：{advisory}")
    result = run_experiment(cfg, text, base_dir=base_dir, mode=mode, run_dir=out)
    _print_lines(result.summary)
    print(f"run_dir = {result.run_dir}")
    return result.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        if args.command == "validate":
            return _cmd_validate(args.config)
        if args.command == "run":
            return _cmd_run(args.config, None, args.out)
        if args.command == "sweep":
            return _cmd_run(args.config, "sweep", args.out)
        result = audit_run_dir(args.rundir)
        _print_lines(result.summary)
        return result.exit_code
    except ConfigValidationError as e:
        print("invalid")
        _print_lines([f"violation: {v}" for v in e.violations])
        return EXIT_ERROR
    except VseedError as e:
        logger.error(f"命令执行失败 [{e.error_code}]：{e.message}", exc_info=True)
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
