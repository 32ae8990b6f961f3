"""End-to-end acceptance checks for the toolkit's published guarantees.

Each test states its tolerance and wall-clock budget inline and fails if
either is exceeded. The two training checks run the real pipeline at the
library's default learning rate and dominate the suite's runtime.
"""

import json
import time
from fractions import Fraction

import numpy as np
import pytest
from conftest import build_dataset

from semjson.cli import main as cli_main
from semjson.embeddings import EmbeddingTable, hashing_provider
from semjson.features import (CHAR_DIMS, CHAR_FUNCTIONS, GLOBAL_DIMS,
                              PARAGRAPH_DIMS, TOTAL_DIMS, TRACKED_CHARS,
                              WORD_DIMS, char_distributions, extract_features,
                              fit_scaler)
from semjson.graphs import build_graphs, encode_labels, normalize_adjacency
from semjson.ingest import extract_kv_pairs, parse_document
from semjson.nn import (TrainConfig, backward, forward, init_gcn, init_mlp,
                        loss, mlp_backward, mlp_forward, save_model)
from semjson.training import (compute_metrics, evaluate, stratified_split,
                              train, train_mlp_baseline)

EXAMPLE_TEXT = '{"user": {"id": 9171087, "id_str": "9171087", "name": "ud83c"}}'


class Budget:
    """Context manager asserting a wall-clock ceiling for a test body."""

    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.started = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            elapsed = time.perf_counter() - self.started
            assert elapsed < self.seconds, (
                f"budget {self.seconds}s exceeded: {elapsed:.1f}s")
        return False


def test_feature_vector_dimensionality():
    # Exact: 27 + 960 + 200 + 400 = 1,587 slots. Budget 1 s.
    with Budget(1.0):
        assert (GLOBAL_DIMS, CHAR_DIMS, WORD_DIMS, PARAGRAPH_DIMS) == \
            (27, 960, 200, 400)
        assert TOTAL_DIMS == 1587
        doc = parse_document(EXAMPLE_TEXT)
        records = extract_kv_pairs(doc, 0, None)
        table = EmbeddingTable(50)
        provider = hashing_provider()
        for record in records:
            vec = extract_features(record, table, provider)
            assert vec.shape == (1587,)


def test_example_document_extraction_and_graph():
    # Exact: 4 records; the document's graph has 4 nodes and 3 edges. Budget 1 s.
    with Budget(1.0):
        doc = parse_document(EXAMPLE_TEXT)
        records = extract_kv_pairs(doc, 0, None)
        assert len(records) == 4
        table = EmbeddingTable(50)
        provider = hashing_provider()
        feats = {r.path.text: extract_features(r, table, provider)
                 for r in records}
        graphs = build_graphs(records, feats)
        rooted = {g.meta["path"]: g for g in graphs}
        parent = rooted["$.user"]
        assert parent.n_nodes == 4
        assert len(parent.edges) == 3
        assert parent.node_paths == ["$.user", "$.user.id", "$.user.id_str",
                                     "$.user.name"]


def _naive_char_stats(column, ch):
    """Brute-force recount of the 10 per-character functions."""
    counts = [value.count(ch) for value in column]
    n = len(counts)
    mean = sum(counts) / n
    m2 = sum((c - mean) ** 2 for c in counts) / n
    m3 = sum((c - mean) ** 3 for c in counts) / n
    m4 = sum((c - mean) ** 4 for c in counts) / n
    kurt = m4 / m2 ** 2 - 3.0 if m2 >= 1e-12 else 0.0
    skew = m3 / m2 ** 1.5 if m2 >= 1e-12 else 0.0
    ordered = sorted(counts)
    mid = n // 2
    median = float(ordered[mid]) if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    return {
        "any": float(any(c > 0 for c in counts)),
        "all": float(all(c > 0 for c in counts)),
        "mean": mean,
        "variance": m2,
        "min": float(min(counts)),
        "max": float(max(counts)),
        "median": median,
        "sum": float(sum(counts)),
        "kurtosis": kurt,
        "skewness": skew,
    }


def test_character_features_match_brute_force_recount():
    # 200 random columns; any/all/mean/min/max/median/sum exact, the three
    # moment statistics within 1e-9. Budget 30 s.
    with Budget(30.0):
        rng = np.random.default_rng(42)
        # mixes tracked characters with ones the table ignores
        pool = list("aAzZ079 .,:!\x0c~") + ["\n", "\t", "é", "π"]
        exact = ("any", "all", "mean", "min", "max", "median", "sum")
        loose = ("variance", "kurtosis", "skewness")
        for _ in range(200):
            column = ["".join(rng.choice(pool, size=rng.integers(0, 13)))
                      for _ in range(rng.integers(1, 9))]
            got = char_distributions(column).reshape(len(TRACKED_CHARS),
                                                     len(CHAR_FUNCTIONS))
            for j, ch in enumerate(TRACKED_CHARS):
                want = _naive_char_stats(column, ch)
                for k, fn in enumerate(CHAR_FUNCTIONS):
                    if fn in exact:
                        assert got[j, k] == want[fn], (column, ch, fn)
                    else:
                        assert fn in loose
                        assert got[j, k] == pytest.approx(want[fn], abs=1e-9)


def _random_tree_adjacency(rng, n):
    a = np.zeros((n, n))
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        a[i, parent] = a[parent, i] = 1.0
    return a


def test_adjacency_normalization_closed_forms_and_spectrum():
    # Single node exact; star entries within 1e-12; eigenvalues within
    # [-1 - 1e-8, 1 + 1e-8] on 100 random trees. Budget 10 s.
    with Budget(10.0):
        single = normalize_adjacency(np.zeros((1, 1)))
        assert single.tolist() == [[1.0]]

        star = np.zeros((4, 4))
        star[0, 1:] = star[1:, 0] = 1.0
        a_hat = normalize_adjacency(star)
        hub, spoke, cross = 0.25, 1.0 / (2.0 * np.sqrt(2.0)), 0.5
        assert a_hat[0, 0] == pytest.approx(hub, abs=1e-12)
        for i in range(1, 4):
            assert a_hat[0, i] == pytest.approx(spoke, abs=1e-12)
            assert a_hat[i, 0] == pytest.approx(spoke, abs=1e-12)
            assert a_hat[i, i] == pytest.approx(cross, abs=1e-12)

        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            a_hat = normalize_adjacency(_random_tree_adjacency(rng, n))
            eigenvalues = np.linalg.eigvalsh(a_hat)
            assert eigenvalues.min() >= -1.0 - 1e-8
            assert eigenvalues.max() <= 1.0 + 1e-8


def _fd_worst(analytic, numeric_loss, params, rng, h=1e-5, per_tensor=4):
    """Worst relative error between analytic and central-difference grads."""
    worst = 0.0
    for key, tensor in params.items():
        flat = tensor.reshape(-1)
        k = min(per_tensor, flat.size)
        for idx in rng.choice(flat.size, size=k, replace=False):
            original = flat[idx]
            flat[idx] = original + h
            up = numeric_loss()
            flat[idx] = original - h
            down = numeric_loss()
            flat[idx] = original
            numeric = (up - down) / (2 * h)
            a = float(analytic[key].reshape(-1)[idx])
            scale = max(abs(a), abs(numeric))
            if scale > 1e-8:
                worst = max(worst, abs(a - numeric) / scale)
    return worst


def test_gradients_match_finite_differences():
    # 20 random tiny instances per model (N <= 4 nodes, C <= 4 classes);
    # relative error < 1e-4 against central differences. Budget 60 s.
    with Budget(60.0):
        rng = np.random.default_rng(2024)
        names = ["c0", "c1", "c2", "c3"]
        for trial in range(20):
            n = int(rng.integers(1, 5))
            c = int(rng.integers(2, 5))
            d = int(rng.integers(3, 8))
            a_hat = normalize_adjacency(_random_tree_adjacency(rng, n))
            h = rng.normal(size=(n, d))
            y = np.zeros(c)
            y[rng.integers(0, c)] = 1.0

            gcn = init_gcn(d, names[:c], seed=trial, dtype=np.float64)
            _, cache = forward(gcn, a_hat, h)
            grads = backward(gcn, cache, y)

            def gcn_loss():
                p, _ = forward(gcn, a_hat, h)
                return loss(p, y)

            assert _fd_worst(grads, gcn_loss, gcn.params, rng) < 1e-4

            x = rng.normal(size=d)
            mlp = init_mlp(d, names[:c], seed=trial, dtype=np.float64)
            _, cache = mlp_forward(mlp, x)
            grads = mlp_backward(mlp, cache, y)

            def mlp_loss():
                p, _ = mlp_forward(mlp, x)
                return loss(p, y)

            assert _fd_worst(grads, mlp_loss, mlp.params, rng) < 1e-4


def _prepare(samples, seed):
    """Label encoding, split, and train-fit scaling shared by training runs."""
    encode_labels(samples)
    class_names = sorted({s.label_name for s in samples})
    split = stratified_split(samples, seed)
    scaler = fit_scaler([samples[i].node_features[0] for i in split.train])
    for s in samples:
        s.node_features = np.stack([scaler.apply(row)
                                    for row in s.node_features])
    return class_names, split


def test_gcn_converges_on_separable_corpus():
    # Noiseless 5-class corpus of at least 1,000 graphs: test macro-F1
    # >= 0.95 within 200 epochs at the default 2e-4 rate. Budget 5 min.
    with Budget(300.0):
        samples = build_dataset("flat", 5, 200, noise=0.0, seed=0)
        assert len(samples) >= 1000
        class_names, split = _prepare(samples, seed=0)
        config = TrainConfig(epochs=60, batch_size=8, seed=0)
        assert config.learning_rate == 2e-4
        model = init_gcn(TOTAL_DIMS, class_names, seed=0)
        model, _ = train(model, samples, split, config)
        report = evaluate(model, samples, split.test)
        assert report.macro["f1"] >= 0.95


def test_graph_context_advantage_over_flat_baseline():
    # Multi-node corpus whose classes differ only in cross-key pairing:
    # GCN test macro-F1 beats the MLP's by >= 0.10, averaged over three
    # seeds at noise 0.1. Budget 15 min.
    with Budget(900.0):
        gaps = []
        for seed in (0, 1, 2):
            samples = build_dataset("joint", 6, 80, noise=0.1, seed=seed)
            class_names, split = _prepare(samples, seed)
            config = TrainConfig(epochs=100, batch_size=8, seed=seed)
            gcn = init_gcn(TOTAL_DIMS, class_names, seed=seed)
            gcn, _ = train(gcn, samples, split, config)
            gcn_f1 = evaluate(gcn, samples, split.test).macro["f1"]
            _, _, mlp_report = train_mlp_baseline(samples, split, config,
                                                  class_names)
            gaps.append(gcn_f1 - mlp_report.macro["f1"])
        assert float(np.mean(gaps)) >= 0.10


def test_stratified_split_contract():
    # Disjoint, covering, per-class 7:3:3 within one sample; 13 samples of
    # one class split exactly 7/3/3. Budget 1 s.
    with Budget(1.0):
        split = stratified_split(["only"] * 13, seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == \
            (7, 3, 3)

        rng = np.random.default_rng(11)
        labels = [f"c{rng.integers(0, 5)}" for _ in range(137)]
        split = stratified_split(labels, seed=3)
        parts = (split.train, split.validation, split.test)
        combined = [i for part in parts for i in part]
        assert sorted(combined) == list(range(len(labels)))

        shares = (Fraction(7, 13), Fraction(3, 13), Fraction(3, 13))
        for name in sorted(set(labels)):
            members = [i for i, lab in enumerate(labels) if lab == name]
            for part, share in zip(parts, shares):
                got = len(set(part) & set(members))
                assert abs(got - share * len(members)) <= 1


def test_checkpoint_size_for_43_classes(tmp_path):
    # 425,771 float32 parameters; file size within [1.5 MB, 2.5 MB]. Budget 1 s.
    with Budget(1.0):
        names = [f"class_{i:02d}" for i in range(43)]
        model = init_gcn(TOTAL_DIMS, names, seed=0)
        assert model.param_count() == 425_771
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        assert 1_500_000 <= path.stat().st_size <= 2_500_000


def _pipeline_run(out, monkeypatch):
    monkeypatch.setenv("SEMJSON_WORKERS", "1")
    steps = (
        ("synth", "--out", out, "--class-count", "4", "--docs-per-class",
         "20", "--profile", "flat", "--seed", "0"),
        ("extract", "--out", out, "--corpus", out / "corpus.jsonl",
         "--annotations", out / "annotations.jsonl"),
        ("featurize", "--out", out),
        ("graphs", "--out", out),
        ("train", "--out", out, "--model", "gcn", "--epochs", "3",
         "--seed", "0"),
        ("evaluate", "--out", out, "--checkpoint", out / "model_gcn.ckpt",
         "--seed", "0"),
    )
    for step in steps:
        assert cli_main([str(a) for a in step]) == 0


def _without_timing(path):
    report = json.loads(path.read_text(encoding="utf-8"))
    report.pop("timing", None)
    return report


def test_pipeline_determinism(tmp_path, monkeypatch):
    # Two single-worker runs with one seed: byte-identical feature dumps and
    # checkpoints, identical reports once timing fields are dropped.
    # Budget 10 min.
    with Budget(600.0):
        first, second = tmp_path / "run1", tmp_path / "run2"
        _pipeline_run(first, monkeypatch)
        _pipeline_run(second, monkeypatch)

        for name in ("features.jsonl", "model_gcn.ckpt"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
        for name in ("train_report_gcn.json", "metrics_report.json"):
            assert _without_timing(first / name) == \
                _without_timing(second / name), name


def test_weighted_recall_equals_overall_accuracy():
    # Identity holds exactly on 100 random confusions; the two-class worked
    # example reproduces its hand-derived scores exactly. Budget 5 s.
    with Budget(5.0):
        rng = np.random.default_rng(5)
        for _ in range(100):
            c = int(rng.integers(2, 7))
            y_true = rng.integers(0, c, size=60).tolist()
            y_pred = rng.integers(0, c, size=60).tolist()
            names = [f"c{i}" for i in range(c)]
            report = compute_metrics(y_true, y_pred, names)
            assert report.weighted["recall"] == report.overall_accuracy

        # confusion [[2, 1], [0, 3]]: precision_a = 1, recall_a = 2/3,
        # precision_b = 3/4, recall_b = 1, overall accuracy 5/6
        y_true = [0, 0, 0, 1, 1, 1]
        y_pred = [0, 0, 1, 1, 1, 1]
        report = compute_metrics(y_true, y_pred, ["a", "b"])
        assert report.confusion.tolist() == [[2, 1], [0, 3]]
        assert report.per_class["a"]["precision"] == 1.0
        assert report.per_class["a"]["recall"] == 2 / 3
        assert report.per_class["b"]["precision"] == 3 / 4
        assert report.per_class["b"]["recall"] == 1.0
        assert report.overall_accuracy == 5 / 6
        assert report.weighted["recall"] == report.overall_accuracy
