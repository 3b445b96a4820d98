from pydantic_settings import BaseSettings
from pathlib import Path
from dotenv import load_dotenv
from typing import Any, Dict
import os
import yaml

from src.core.errors import ConfigError

ROOT_DIR = Path(__file__).parent.parent.parent
load_dotenv(ROOT_DIR / '.env')


class Settings(BaseSettings):
    # Data
    REGLGCN_DATA_DIR: str = os.getenv('REGLGCN_DATA_DIR', str(ROOT_DIR / 'data'))
    REGLGCN_OUTPUT_DIR: str = os.getenv('REGLGCN_OUTPUT_DIR', 'runs')

    # Logging
    REGLGCN_LOG_LEVEL: str = os.getenv('REGLGCN_LOG_LEVEL', 'INFO')
    REGLGCN_LOG_DIR: str = os.getenv('REGLGCN_LOG_DIR', 'logs')

    # Numerical defaults
    DEFAULT_CG_TOL: float = float(os.getenv('DEFAULT_CG_TOL', '1e-10'))
    DEFAULT_CG_MAX_ITER: int = int(os.getenv('DEFAULT_CG_MAX_ITER', '1000'))
    DEFAULT_EIG_TOL: float = float(os.getenv('DEFAULT_EIG_TOL', '1e-6'))
    DEFAULT_EIG_MAX_ITER: int = int(os.getenv('DEFAULT_EIG_MAX_ITER', '300'))
    DENSE_ORACLE_MAX_N: int = int(os.getenv('DENSE_ORACLE_MAX_N', '64'))

    class Config:
        env_file = '.env'
        case_sensitive = True

settings = Settings()


def load_yaml_tree(path: Path) -> Dict[str, Any]:
    """Read a YAML key tree; the file must hold a mapping at top level."""
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            tree = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except yaml.YAMLError as e:
        raise ConfigError([f"config file is not valid YAML: {e}"])

    if not isinstance(tree, dict):
        raise ConfigError([f"config root must be a mapping, got {type(tree).__name__}"])
    return tree


def set_dotted(tree: Dict[str, Any], dotted_key: str, value: Any) -> None:
    """Apply an override such as `spec.alpha=0.4` onto a nested dict."""
    node = tree
    parts = dotted_key.split('.')
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def resolve_data_path(raw: str, config_dir: Path) -> Path:
    """Config-relative first, then the REGLGCN_DATA_DIR fallback."""
    candidate = Path(raw).expanduser()
    if candidate.is_absolute():
        return candidate
    local = config_dir / candidate
    if local.exists():
        return local
    return Path(settings.REGLGCN_DATA_DIR) / candidate
