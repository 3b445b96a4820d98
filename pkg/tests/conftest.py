from pathlib import Path

import numpy as np
import pytest
import yaml

from src.core.config import settings
from src.graph.construction import build_graph_operators
from src.graph.dataset import load_dataset, make_split
from src.scripts.make_toy_dataset import write_planted, write_three_node


def path_adjacency(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return a


def random_adjacency(n: int, p: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return (upper | upper.T).astype(np.float64)


@pytest.fixture
def toy_dir(tmp_path) -> Path:
    out = tmp_path / "data"
    write_three_node(out)
    write_planted(out, n_per_class=30, n_classes=3, n_features=24, seed=0)
    return out


@pytest.fixture
def planted(toy_dir):
    ds = load_dataset(toy_dir / "planted.content", toy_dir / "planted.cites")
    return make_split(ds, per_class=5, n_val=15, n_test=30, seed=0)


@pytest.fixture
def planted_ops(planted):
    return build_graph_operators(planted.adjacency, planted.features, k_sem=4)


@pytest.fixture
def small_graph():
    """12-node random graph with features, small enough for every dense oracle."""
    rng = np.random.default_rng(11)
    a = random_adjacency(12, 0.3, seed=11)
    x = rng.random((12, 5))
    return a, x, build_graph_operators(a, x, k_sem=3)


@pytest.fixture
def write_config(tmp_path, toy_dir):
    """Write a run config over the planted fixture, merged with per-test overrides."""
    def _write(**overrides) -> Path:
        tree = {
            "dataset": {
                "name": "planted",
                "content": str(toy_dir / "planted.content"),
                "edges": str(toy_dir / "planted.cites"),
            },
            "split": {"per_class": 5, "n_val": 15, "n_test": 30, "seed": 0},
            "semantic": {"k": 4},
            "spec": {"variant": "tsgcn", "alpha": 1.0, "beta": 0.2, "rank": 4},
            "train": {"hidden_units": 8, "max_epochs": 20, "patience": 10},
            "output_dir": str(tmp_path / "runs"),
            "repeat_seeds": [0, 1],
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(tree.get(key), dict):
                tree[key].update(value)
            else:
                tree[key] = value
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(tree), encoding="utf-8")
        return path
    return _write


def _planetoid(name: str):
    root = Path(settings.REGLGCN_DATA_DIR) / name
    content, edges = root / f"{name}.content", root / f"{name}.cites"
    if not (content.exists() and edges.exists()):
        pytest.skip(f"{name} files not found under {root}")
    return content, edges


@pytest.fixture
def cora_files():
    return _planetoid("cora")


@pytest.fixture
def citeseer_files():
    return _planetoid("citeseer")
