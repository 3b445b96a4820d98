"""Planetoid-style dataset files, the Dataset container and the split sampler.

Content file: ``node_id<TAB>f_1 ... f_d<TAB>label`` one node per line.
Edge file: ``node_id_a<TAB>node_id_b`` one undirected edge per line.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from src.core.errors import ParseError, SplitError
from src.core.logging import get_logger
from src.linalg.kernels import canonical_csr

logger = get_logger(__name__)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    adjacency: sp.csr_matrix
    node_ids: Tuple[str, ...]
    class_names: Tuple[str, ...]
    num_edge_records: int
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    name: str = "dataset"

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_edges(self) -> int:
        return int(sp.triu(self.adjacency, k=1).nnz)

    def stats(self) -> Tuple[int, int, int, int]:
        return self.num_nodes, self.num_edge_records, self.num_classes, self.num_features


def _split_line(line: str) -> List[str]:
    return line.split('\t') if '\t' in line else line.split()


def _read_content(path: Path) -> Tuple[List[str], np.ndarray, List[str]]:
    node_ids: List[str] = []
    rows: List[List[float]] = []
    label_strings: List[str] = []
    width: Optional[int] = None
    with open(path, 'r', encoding='utf-8') as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip('\n\r')
            if not line.strip():
                continue
            parts = _split_line(line)
            if len(parts) < 3:
                raise ParseError("expected node id, features and label", str(path), line_no)
            feats = parts[1:-1]
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise ParseError(
                    f"expected {width} features, found {len(feats)}", str(path), line_no
                )
            try:
                rows.append([float(v) for v in feats])
            except ValueError as e:
                raise ParseError(f"non-numeric feature: {e}", str(path), line_no)
            node_ids.append(parts[0])
            label_strings.append(parts[-1])
    if not node_ids:
        raise ParseError("content file holds no nodes", str(path))
    if len(set(node_ids)) != len(node_ids):
        raise ParseError("duplicate node ids in content file", str(path))
    return node_ids, np.asarray(rows, dtype=np.float64), label_strings


def _read_edges(
    path: Path, index: Dict[str, int], strict: bool
) -> Tuple[List[int], List[int], int]:
    src: List[int] = []
    dst: List[int] = []
    accepted = 0
    skipped = 0
    with open(path, 'r', encoding='utf-8') as fh:
        for line_no, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError("expected two node ids", str(path), line_no)
            a, b = parts
            if a not in index or b not in index:
                missing = a if a not in index else b
                if strict:
                    raise ParseError(f"unknown node id {missing!r}", str(path), line_no)
                skipped += 1
                continue
            i, j = index[a], index[b]
            if i == j:
                continue
            accepted += 1
            src.append(i)
            dst.append(j)
    if skipped:
        logger.warning(f"Skipped {skipped} edge lines referencing unknown nodes in {path}")
    return src, dst, accepted


def row_normalize(features: np.ndarray) -> np.ndarray:
    sums = np.abs(features).sum(axis=1)
    sums[sums == 0.0] = 1.0
    return features / sums[:, None]


def load_dataset(
    content_path,
    edges_path,
    row_normalize_features: bool = True,
    strict_edges: bool = True,
    name: Optional[str] = None,
) -> Dataset:
    content_path, edges_path = Path(content_path), Path(edges_path)
    node_ids, features, label_strings = _read_content(content_path)
    index = {nid: i for i, nid in enumerate(node_ids)}
    src, dst, accepted = _read_edges(edges_path, index, strict_edges)

    n = len(node_ids)
    ones = np.ones(len(src))
    a = sp.coo_matrix((ones, (src, dst)), shape=(n, n)).tocsr()
    a = a + a.T
    # duplicate and reversed lines collapse to a single unit edge
    a.data[:] = 1.0
    adjacency = canonical_csr(a)

    class_names = tuple(sorted(set(label_strings)))
    class_index = {c: k for k, c in enumerate(class_names)}
    labels = np.asarray([class_index[c] for c in label_strings], dtype=np.int64)

    if row_normalize_features:
        features = row_normalize(features)

    ds = Dataset(
        features=features,
        labels=labels,
        adjacency=adjacency,
        node_ids=tuple(node_ids),
        class_names=class_names,
        num_edge_records=accepted,
        name=name or content_path.stem,
    )
    logger.info(
        f"Loaded {ds.name}: N={ds.num_nodes}, edge records={ds.num_edge_records}, "
        f"unique edges={ds.num_edges}, C={ds.num_classes}, d={ds.num_features}"
    )
    return ds


def save_dataset(ds: Dataset, content_path, edges_path) -> None:
    """Write a dataset back in the loader format."""
    with open(content_path, 'w', encoding='utf-8') as fh:
        for nid, row, label in zip(ds.node_ids, ds.features, ds.labels):
            feats = '\t'.join(repr(float(v)) for v in row)
            fh.write(f"{nid}\t{feats}\t{ds.class_names[label]}\n")
    upper = sp.triu(ds.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(edges_path, 'w', encoding='utf-8') as fh:
        for k in order:
            fh.write(f"{ds.node_ids[upper.row[k]]}\t{ds.node_ids[upper.col[k]]}\n")


def make_split(ds: Dataset, per_class: int, n_val: int, n_test: int, seed: int) -> Dataset:
    """Sample `per_class` training nodes per class, then val/test from the rest."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.num_nodes)

    train: List[int] = []
    for c in range(ds.num_classes):
        members = perm[ds.labels[perm] == c]
        if members.size < per_class:
            raise SplitError(
                f"class {ds.class_names[c]!r} has {members.size} nodes, needs {per_class}"
            )
        train.extend(members[:per_class].tolist())

    taken = np.zeros(ds.num_nodes, dtype=bool)
    taken[train] = True
    rest = perm[~taken[perm]]
    if rest.size < n_val + n_test:
        raise SplitError(
            f"only {rest.size} nodes left for {n_val} validation and {n_test} test nodes"
        )

    return replace(
        ds,
        train_idx=np.sort(np.asarray(train, dtype=np.int64)),
        val_idx=np.sort(rest[:n_val].astype(np.int64)),
        test_idx=np.sort(rest[n_val:n_val + n_test].astype(np.int64)),
    )
