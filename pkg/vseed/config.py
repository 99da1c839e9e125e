"""应用配置管理模块"""
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """全局配置（环境变量前缀 VSEED_）"""

    # 输出目录（VSEED_OUT 覆盖）
    out: str = "runs"

    # 日志配置
    log_level: str = "INFO"
    log_dir: str = "logs"  # 日志文件目录
    log_file: str = "vseed.log"  # 日志文件名
    log_backup_count: int = 30  # 保留的日志文件备份数量（按天）
    log_enable_file: bool = True  # 是否启用文件日志
    log_enable_console: bool = True  # 是否启用控制台日志
    log_format: str = "text"  # text / json
    log_enable_run_file: bool = True  # 是否在运行目录写 run.log
    log_run_file: str = "run.log"  # 运行目录内的日志文件名

    # 线性求解配置
    solver_tol: float = 1e-9  # 鞍点迭代相对残差
    projection_tol: float = 1e-10  # 投影后散度上限（max 范数）
    max_iterations: int = 500

    # 非线性求解保护
    blowup_factor: float = 1e6
    cfl_safety: float = 0.5

    # 估计与分析
    gronwall_constant: float = 1.0  # 估计中的未定常数 C
    padding_factor: int = 4  # 时间 Fourier 变换补零倍数
    r2_threshold: float = 0.95

    # 扫描并发（1 表示串行）
    sweep_workers: int = 1

    class Config:
        env_prefix = "VSEED_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False


settings = Settings()
