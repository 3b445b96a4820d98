"""Write small Planetoid-format fixtures: a hand-sized 3-node graph and a planted-partition graph."""

from pathlib import Path
from typing import Tuple

import numpy as np
import scipy.sparse as sp
import typer

from src.core.logging import get_logger
from src.graph.dataset import Dataset, save_dataset
from src.linalg.kernels import canonical_csr

logger = get_logger(__name__)

THREE_NODE_CONTENT = (
    "n0\t1\t0\t1\talpha\n"
    "n1\t0\t1\t1\tbeta\n"
    "n2\t1\t1\t0\talpha\n"
)
THREE_NODE_EDGES = "n0\tn1\nn1\tn2\n"


def write_three_node(out_dir) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    content, edges = out_dir / "toy3.content", out_dir / "toy3.cites"
    content.write_text(THREE_NODE_CONTENT, encoding='utf-8')
    edges.write_text(THREE_NODE_EDGES, encoding='utf-8')
    return content, edges


def planted_partition(
    n_per_class: int = 30,
    n_classes: int = 3,
    n_features: int = 24,
    p_in: float = 0.15,
    p_out: float = 0.01,
    words_per_node: int = 5,
    seed: int = 0,
) -> Dataset:
    """Community graph whose binary features favour a class-specific block of words."""
    rng = np.random.default_rng(seed)
    n = n_per_class * n_classes
    labels = np.repeat(np.arange(n_classes), n_per_class)

    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    a = canonical_csr(sp.csr_matrix((upper | upper.T).astype(np.float64)))

    block = max(1, n_features // n_classes)
    features = np.zeros((n, n_features))
    for i, c in enumerate(labels):
        own = np.arange(c * block, min((c + 1) * block, n_features))
        # mostly in-class words plus one random word as noise
        picks = rng.choice(own, size=min(words_per_node - 1, own.size), replace=False)
        features[i, picks] = 1.0
        features[i, rng.integers(n_features)] = 1.0

    return Dataset(
        features=features,
        labels=labels.astype(np.int64),
        adjacency=a,
        node_ids=tuple(f"v{i}" for i in range(n)),
        class_names=tuple(f"c{k}" for k in range(n_classes)),
        num_edge_records=int(upper.sum()),
        name="planted",
    )


def write_planted(out_dir, name: str = "planted", **kwargs) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = planted_partition(**kwargs)
    content, edges = out_dir / f"{name}.content", out_dir / f"{name}.cites"
    save_dataset(ds, content, edges)
    logger.info(f"Wrote {name}: N={ds.num_nodes}, edges={ds.num_edges}, C={ds.num_classes} to {out_dir}")
    return content, edges


def main(
    out_dir: Path = typer.Argument(Path("data/toy")),
    n_per_class: int = typer.Option(30, min=1),
    n_classes: int = typer.Option(3, min=2),
    n_features: int = typer.Option(24, min=2),
    seed: int = typer.Option(0),
):
    write_three_node(out_dir)
    write_planted(out_dir, n_per_class=n_per_class, n_classes=n_classes, n_features=n_features, seed=seed)


if __name__ == "__main__":
    typer.run(main)
