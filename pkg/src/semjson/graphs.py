"""Rooted-subtree graphs over extracted records, plus GCN preprocessing.

Each record becomes one graph: its own node plus every descendant
record, joined by parent-child edges. Scalar-valued records are
single-node graphs. Matrices are dense; graphs stay tiny.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import jsonl
from .errors import BuildError, ContractError
from .ingest import JsonPath, PathRecord, Segment


@dataclass
class GraphSample:
    """One classification unit: node features, tree adjacency, label."""

    node_features: np.ndarray      # N x 1587, row 0 is the root
    adjacency: np.ndarray          # N x N symmetric 0/1, zero diagonal
    label_name: str
    meta: dict
    node_paths: list[str] = field(default_factory=list)
    label_index: int = -1
    label_onehot: Optional[np.ndarray] = None

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self.adjacency))
        return list(zip(rows.tolist(), cols.tolist()))


def _parent_segments(segments: tuple[Segment, ...]) -> tuple[Segment, ...]:
    # Records exist only at key segments, so the parent record's path is
    # the current one minus its final key and any wildcards before it.
    trimmed = segments[:-1]
    while trimmed and trimmed[-1] is None:
        trimmed = trimmed[:-1]
    return trimmed


def build_graphs(
    records: Sequence[PathRecord], features: Mapping[str, np.ndarray]
) -> list[GraphSample]:
    """Build one rooted-subtree graph per record of a single document.

    ``features`` maps each record's path text to its feature vector.
    Node 0 is the root; remaining nodes are the descendants ordered by
    path text. Edges connect each node to its parent record.
    """
    index_by_segments = {r.path.segments: i for i, r in enumerate(records)}
    samples = []
    for root in records:
        members = [root] + sorted(
            (r for r in records if r.path.extends(root.path)),
            key=lambda r: r.path.text,
        )
        local = {r.path.segments: i for i, r in enumerate(members)}
        rows = []
        for r in members:
            vec = features.get(r.path.text)
            if vec is None:
                raise BuildError(f"no feature vector for path {r.path.text}")
            rows.append(np.asarray(vec, dtype=float))
        n = len(members)
        adjacency = np.zeros((n, n))
        for i, r in enumerate(members[1:], start=1):
            j = local.get(_parent_segments(r.path.segments))
            if j is None:
                raise BuildError(f"missing parent record for path {r.path.text}")
            adjacency[i, j] = adjacency[j, i] = 1.0
        samples.append(
            GraphSample(
                node_features=np.vstack(rows),
                adjacency=adjacency,
                label_name=root.label,
                meta={"doc_id": root.doc_id, "path": root.path.text},
                node_paths=[r.path.text for r in members],
            )
        )
    return samples


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric renormalization D̃^(-1/2) (A + I) D̃^(-1/2)."""
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ContractError("adjacency must be symmetric")
    a_loop = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_loop.sum(axis=1))
    return a_loop * inv_sqrt[:, None] * inv_sqrt[None, :]


def encode_labels(samples: Iterable[GraphSample]) -> dict[str, int]:
    """Assign lexicographic label indices and one-hot vectors in place."""
    samples = list(samples)
    if not samples:
        raise ContractError("encode_labels requires at least one sample")
    names = sorted({s.label_name for s in samples})
    index = {name: i for i, name in enumerate(names)}
    for s in samples:
        s.label_index = index[s.label_name]
        onehot = np.zeros(len(names))
        onehot[s.label_index] = 1.0
        s.label_onehot = onehot
    return index


# -- graph dump --------------------------------------------------------------

def graph_to_json_dict(sample: GraphSample) -> dict:
    return {
        "label": sample.label_name,
        "n_nodes": int(sample.n_nodes),
        "edges": [[int(i), int(j)] for i, j in sample.edges],
        "node_features": [[float(x) for x in row] for row in sample.node_features],
        "meta": dict(sample.meta),
    }


def graph_from_json_dict(obj: dict) -> GraphSample:
    features = np.array(obj["node_features"], dtype=float)
    n = int(obj["n_nodes"])
    adjacency = np.zeros((n, n))
    for i, j in obj["edges"]:
        adjacency[i, j] = adjacency[j, i] = 1.0
    return GraphSample(
        node_features=features,
        adjacency=adjacency,
        label_name=obj["label"],
        meta=dict(obj.get("meta", {})),
    )


def write_graph_dump(path, samples: Iterable[GraphSample]) -> int:
    return jsonl.write_dump(path, (graph_to_json_dict(s) for s in samples), kind="graphs")


def read_graph_dump(path) -> list[GraphSample]:
    return [graph_from_json_dict(obj) for obj in jsonl.read_dump(path, kind="graphs")]
