from loguru import logger
from pathlib import Path
import sys

from src.core.config import settings

# Remove default handler
logger.remove()

# Console handler
logger.add(
    sys.stderr,
    format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{extra[name]}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
    level=settings.REGLGCN_LOG_LEVEL,
    colorize=True,
)

# File handler for errors
logger.add(
    str(Path(settings.REGLGCN_LOG_DIR) / "reglgcn_{time:YYYY-MM-DD}.log"),
    rotation="1 day",
    retention="7 days",
    level="ERROR",
    delay=True,
    format="{time:YYYY-MM-DD HH:mm:ss} | {level} | {extra[name]}:{function}:{line} - {message}",
)

logger.configure(extra={"name": "reglgcn"})


def get_logger(name: str):
    return logger.bind(name=name)
