"""Shared fixtures: a small word-embedding file and corpus builders."""

import numpy as np
import pytest

from semjson.embeddings import EmbeddingTable, hashing_provider, load_embeddings
from semjson.features import extract_features
from semjson.graphs import build_graphs
from semjson.ingest import extract_kv_pairs
from semjson.synth import generate_synthetic_corpus

GLOVE_TOKENS = ("alpha", "beta", "gamma", "delta", "red", "blue",
                "data", "value", "node", "graph")


@pytest.fixture(scope="session")
def glove_file(tmp_path_factory):
    rng = np.random.default_rng(7)
    path = tmp_path_factory.mktemp("emb") / "glove_50d.txt"
    lines = []
    for token in GLOVE_TOKENS:
        values = rng.uniform(-1, 1, 50)
        lines.append(token + " " + " ".join(f"{v:.6f}" for v in values))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def glove_table(glove_file):
    return load_embeddings(glove_file)


@pytest.fixture(scope="session")
def paragraph_provider():
    return hashing_provider()


def build_dataset(profile, class_count, docs_per_class, noise, seed):
    """Synthesize a corpus and run it through extract/featurize/graphs."""
    docs, annotations, _ = generate_synthetic_corpus(
        class_count, docs_per_class, profile, noise, seed)
    table = EmbeddingTable(50)
    provider = hashing_provider()
    samples = []
    for doc_id, doc in enumerate(docs):
        records = extract_kv_pairs(doc, doc_id, annotations)
        feats = {r.path.text: extract_features(r, table, provider)
                 for r in records}
        samples.extend(build_graphs(records, feats))
    return samples
