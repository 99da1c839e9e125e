"""日志工具

全局日志：控制台（stderr，stdout 留给命令输出）+ 按天轮转的服务日志。
每次运行期间另写一份 <run_dir>/run.log，记录带运行目录名。
"""
import logging
import sys
from contextlib import contextmanager
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Iterator, Optional

from pythonjsonlogger import jsonlogger

from vseed.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s [%(run)s] %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class RunContextFilter(logging.Filter):
    """给每条记录附加当前运行目录名，运行之外为 '-'"""

    def __init__(self) -> None:
        super().__init__()
        self.run = "-"

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = self.run
        return True


_run_context = RunContextFilter()


def _build_formatter() -> logging.Formatter:
    if settings.log_format.lower() == "json":
        return jsonlogger.JsonFormatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    return logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)


def _prepare(handler: logging.Handler, formatter: logging.Formatter, level: int) -> logging.Handler:
    handler.setFormatter(formatter)
    handler.setLevel(level)
    handler.addFilter(_run_context)
    return handler


def setup_logging() -> Optional[Path]:
    """配置全局日志系统，返回服务日志路径（未启用文件日志时为 None）"""
    log_level = getattr(logging, settings.log_level.upper(), logging.INFO)
    formatter = _build_formatter()
    handlers = []

    if settings.log_enable_console:
        handlers.append(_prepare(logging.StreamHandler(sys.stderr), formatter, log_level))

    service_log = None
    if settings.log_enable_file:
        log_dir = Path(settings.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        service_log = log_dir / settings.log_file
        # 午夜轮转，后缀为日期（vseed.log.2025-01-15）
        rotating = TimedRotatingFileHandler(
            service_log,
            when="midnight",
            interval=1,
            backupCount=settings.log_backup_count,
            encoding="utf-8",
        )
        rotating.suffix = "%Y-%m-%d"
        handlers.append(_prepare(rotating, formatter, log_level))

    logging.basicConfig(level=log_level, handlers=handlers, force=True)
    return service_log


@contextmanager
def run_log(run_dir: Path) -> Iterator[Optional[Path]]:
    """运行期间把日志同时写入 <run_dir>/<log_run_file>"""
    if not settings.log_enable_run_file:
        yield None
        return
    path = Path(run_dir) / settings.log_run_file
    level = getattr(logging, settings.log_level.upper(), logging.INFO)
    handler = _prepare(logging.FileHandler(path, mode="w", encoding="utf-8"), _build_formatter(), level)
    root = logging.getLogger()
    root.addHandler(handler)
    previous, _run_context.run = _run_context.run, Path(run_dir).name
    try:
        yield path
    finally:
        root.removeHandler(handler)
        handler.close()
        _run_context.run = previous
