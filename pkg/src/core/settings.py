"""
运行环境设置
作用：从 .env / 环境变量读取并发数和日志级别
"""
import logging
import os

from dotenv import load_dotenv

load_dotenv()

# 批量仿真的固定分块大小；结果与线程数无关
CHUNK_SIZE = 256

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def thread_count() -> int:
    """NLDPC_THREADS 限制工作线程数，默认使用全部 CPU 核"""
    raw = os.getenv("NLDPC_THREADS")
    default = os.cpu_count() or 1
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logging.getLogger(__name__).warning("NLDPC_THREADS=%r 不是整数，使用默认值 %d", raw, default)
        return default
    return max(1, value)


def log_level() -> int:
    name = os.getenv("NLDPC_LOG_LEVEL", "INFO").upper()
    return getattr(logging, name, logging.INFO)


def configure_logging(level=None) -> None:
    logging.basicConfig(level=level if level is not None else log_level(), format=LOG_FORMAT)
