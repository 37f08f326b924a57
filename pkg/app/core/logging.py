"""
Cấu hình logging cho ứng dụng sử dụng loguru
Console output for development, JSON files for production and a JSONL
stream of training events keyed by run_id
"""
import sys
import uuid
from pathlib import Path
from typing import Any, Dict, Optional

from loguru import logger

from app.core.config import settings


def setup_logging(level: Optional[str] = None, log_dir: Optional[str | Path] = None) -> None:
    """
    Thiết lập cấu hình logging

    Args:
        level: Override for settings.log_level
        log_dir: Override for settings.log_dir
    """
    level = level or settings.log_level
    log_dir = Path(log_dir or settings.log_dir)

    # Remove default handler
    logger.remove()

    # Console handler với format đẹp cho dev
    if settings.app_env in ["local", "dev"]:
        logger.add(
            sink=sys.stderr,
            format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
            "<level>{level: <8}</level> | "
            "<cyan>{name}:{function}:{line}</cyan> - "
            "<level>{message}</level>",
            level=level,
            colorize=True,
        )

    # File handler với format JSON cho production
    if settings.app_env == "prod":
        logger.add(
            sink=str(log_dir / "app.log"),
            format="{time} | {level} | {name}:{function}:{line} | {message}",
            level=level,
            rotation="10 MB",
            retention="30 days",
            serialize=True,
        )

    # Training events always go to JSONL
    logger.add(
        sink=str(log_dir / "training.jsonl"),
        format="{message}",
        level="INFO",
        filter=lambda record: "run_id" in record["extra"],
        serialize=True,
    )

    logger.debug(f"Logging initialized - Level: {level}, Env: {settings.app_env}")


def get_run_logger(run_id: Optional[str] = None, **context: Any):
    """
    Lấy logger gắn run_id cho một lần train

    Args:
        run_id: Identifier to bind; a new UUID when omitted
        **context: Extra fields bound to every record

    Returns:
        Bound loguru logger
    """
    return logger.bind(run_id=run_id or str(uuid.uuid4()), **context)


def loss_fields(report: Dict[str, float]) -> Dict[str, float]:
    """Round report values for log records (the CSV keeps full precision)"""
    return {key: float(f"{value:.6g}") for key, value in report.items()}
