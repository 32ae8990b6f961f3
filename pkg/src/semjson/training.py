"""Dataset splitting, the training loop, metrics, and model comparison.

The GCN and the single-column MLP baseline share one loop and one
evaluation path; a sample's prepared inputs differ (graph matrices vs
the root feature row) but splits, shuffling, and test indices are
identical, keeping the comparison paired.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, SplitError, TrainingAbort
from .graphs import GraphSample, normalize_adjacency
from .nn import (GcnModel, MlpBaseline, TrainConfig, adam_step, backward,
                 forward, init_adam_state, init_mlp, loss, mlp_backward,
                 mlp_forward)

_SPLIT_FRACTIONS = (7.0 / 13.0, 3.0 / 13.0, 3.0 / 13.0)


@dataclass
class DatasetSplit:
    train: list[int]
    validation: list[int]
    test: list[int]

    def __post_init__(self) -> None:
        parts = [self.train, self.validation, self.test]
        combined = [i for part in parts for i in part]
        if len(set(combined)) != len(combined):
            raise ContractError("split parts must be disjoint")

    def to_json_dict(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def stratified_split(samples: Sequence, seed: int) -> DatasetSplit:
    """Per-class 7/13 : 3/13 : 3/13 allocation by largest remainder.

    13 samples of a class split exactly 7/3/3. Accepts graph samples or
    plain label strings.
    """
    labels = [getattr(s, "label_name", s) for s in samples]
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    for name in sorted(by_class):
        if len(by_class[name]) < 2:
            raise SplitError(f"class {name!r} has only 1 sample; need at least 2")

    rng = np.random.default_rng(seed)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for name in sorted(by_class):
        indices = by_class[name]
        order = rng.permutation(len(indices))
        shuffled = [indices[j] for j in order]
        n = len(shuffled)
        quotas = [n * f for f in _SPLIT_FRACTIONS]
        counts = [int(q) for q in quotas]
        leftover = n - sum(counts)
        # ties favor validation over test by stable sort order
        for j in sorted(range(3), key=lambda j: quotas[j] - counts[j], reverse=True):
            if leftover == 0:
                break
            counts[j] += 1
            leftover -= 1
        start = 0
        for part, count in zip(parts, counts):
            part.extend(shuffled[start:start + count])
            start += count
    return DatasetSplit(train=parts[0], validation=parts[1], test=parts[2])


# -- metrics -----------------------------------------------------------------

@dataclass
class MetricsReport:
    class_names: list[str]
    confusion: np.ndarray
    per_class: dict[str, dict]
    macro: dict
    weighted: dict
    overall_accuracy: float
    groups: dict
    fingerprint: str
    n_samples: int

    def to_json_dict(self) -> dict:
        return {
            "class_names": self.class_names,
            "confusion": self.confusion.astype(int).tolist(),
            "per_class": self.per_class,
            "macro": self.macro,
            "weighted": self.weighted,
            "overall_accuracy": self.overall_accuracy,
            "groups": self.groups,
            "fingerprint": self.fingerprint,
            "n_samples": self.n_samples,
        }


def evaluation_fingerprint(sample_ids: Sequence[str]) -> str:
    digest = hashlib.blake2b(digest_size=16)
    for sid in sample_ids:
        digest.update(sid.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def sample_id(sample: GraphSample) -> str:
    return f"{sample.meta.get('doc_id')}:{sample.meta.get('path')}"


def compute_metrics(y_true: Sequence[int], y_pred: Sequence[int],
                    class_names: Sequence[str],
                    multi_node_classes: Sequence[str] = (),
                    fingerprint: str = "") -> MetricsReport:
    """Confusion matrix (rows = truth) and the derived per-class scores.

    Per-class accuracy is reported as recall; precision is kept alongside
    so nothing is lost.
    """
    c = len(class_names)
    confusion = np.zeros((c, c), dtype=int)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1
    total = int(confusion.sum())

    per_class = {}
    for i, name in enumerate(class_names):
        tp = float(confusion[i, i])
        support = float(confusion[i].sum())
        predicted = float(confusion[:, i].sum())
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        per_class[name] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": int(support),
            "accuracy": recall,
        }

    def mean_of(key: str, names: Sequence[str]) -> float:
        return float(np.mean([per_class[n][key] for n in names])) if names else 0.0

    macro = {k: mean_of(k, class_names) for k in ("precision", "recall", "f1")}
    supports = np.array([per_class[n]["support"] for n in class_names], dtype=float)
    weights = supports / total if total else supports
    weighted = {
        k: float(sum(w * per_class[n][k] for w, n in zip(weights, class_names)))
        for k in ("precision", "recall", "f1")
    }
    overall = float(np.trace(confusion) / total) if total else 0.0
    # Support-weighted recall is trace/total algebraically; computing it
    # that way keeps the identity with overall accuracy exact in floats.
    weighted["recall"] = overall

    multi = sorted(set(multi_node_classes) & set(class_names))
    single = [n for n in class_names if n not in set(multi)]
    groups = {
        "single_node": {"classes": single, "f1": mean_of("f1", single),
                        "accuracy": mean_of("accuracy", single)},
        "multi_node": {"classes": multi, "f1": mean_of("f1", multi),
                       "accuracy": mean_of("accuracy", multi)},
    }
    return MetricsReport(
        class_names=list(class_names),
        confusion=confusion,
        per_class=per_class,
        macro=macro,
        weighted=weighted,
        overall_accuracy=overall,
        groups=groups,
        fingerprint=fingerprint,
        n_samples=total,
    )


# -- shared forward/backward dispatch ----------------------------------------

def _prepare(model, sample: GraphSample, dtype) -> tuple:
    if isinstance(model, MlpBaseline):
        return (sample.node_features[0].astype(dtype),)
    a_hat = normalize_adjacency(sample.adjacency).astype(dtype)
    return (a_hat, sample.node_features.astype(dtype))


def _forward(model, inputs: tuple, train_mode: bool, rng, rate: float):
    if isinstance(model, MlpBaseline):
        return mlp_forward(model, inputs[0], train_mode, rng, rate)
    return forward(model, inputs[0], inputs[1], train_mode, rng, rate)


def _backward(model, cache, y):
    if isinstance(model, MlpBaseline):
        return mlp_backward(model, cache, y)
    return backward(model, cache, y)


def _check_encoded(samples: Sequence[GraphSample], n_classes: int) -> None:
    for s in samples:
        if s.label_onehot is None or len(s.label_onehot) != n_classes:
            raise ContractError(
                "samples must carry one-hot labels matching the model's classes"
            )


def evaluate(model, samples: Sequence[GraphSample], indices: Sequence[int]) -> MetricsReport:
    """Argmax predictions over the indexed samples, scored per class."""
    if not len(indices):
        raise ContractError("evaluate requires at least one index")
    _check_encoded(samples, model.n_classes)
    y_true, y_pred, ids = [], [], []
    multi_node = set()
    for i in indices:
        s = samples[i]
        p, _ = _forward(model, _prepare(model, s, np.float32), False, None, 0.0)
        y_true.append(s.label_index)
        y_pred.append(int(np.argmax(p)))
        ids.append(sample_id(s))
        if s.n_nodes > 1:
            multi_node.add(s.label_name)
    return compute_metrics(
        y_true, y_pred, model.class_names,
        multi_node_classes=sorted(multi_node),
        fingerprint=evaluation_fingerprint(ids),
    )


# -- training ----------------------------------------------------------------

def train(model, samples: Sequence[GraphSample], split: DatasetSplit,
          config: TrainConfig):
    """Mini-batch Adam training; keeps the best-validation-macro-F1 weights.

    Returns (model, history); history holds one record per epoch with
    train loss, validation loss, and validation macro-F1. A non-finite
    loss aborts with the epoch and batch in the error.
    """
    _check_encoded(samples, model.n_classes)
    prepared = {}
    for i in set(split.train) | set(split.validation):
        prepared[i] = _prepare(model, samples[i], np.float32)
    onehots = {i: samples[i].label_onehot.astype(np.float32)
               for i in prepared}

    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    state = init_adam_state(model.params)
    history: list[dict] = []
    best_f1 = -1.0
    best_params = None

    train_idx = list(split.train)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_idx))
        epoch_loss = 0.0
        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [train_idx[j] for j in order[start:start + config.batch_size]]
            grad_sum = None
            batch_loss = 0.0
            for i in batch:
                p, cache = _forward(model, prepared[i], True, dropout_rng,
                                    config.dropout_rate)
                sample_loss = loss(p, onehots[i])
                if not np.isfinite(sample_loss) or not np.all(np.isfinite(p)):
                    raise TrainingAbort(epoch, batch_no)
                batch_loss += sample_loss
                grads = _backward(model, cache, onehots[i])
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for k in grad_sum:
                        grad_sum[k] += grads[k]
            scale = 1.0 / len(batch)
            for k in grad_sum:
                grad_sum[k] *= scale
            adam_step(model.params, grad_sum, state, config)
            epoch_loss += batch_loss

        record = {
            "epoch": epoch,
            "train_loss": epoch_loss / max(len(train_idx), 1),
        }
        if split.validation:
            val_loss = 0.0
            y_true, y_pred = [], []
            for i in split.validation:
                p, _ = _forward(model, prepared[i], False, None, 0.0)
                val_loss += loss(p, onehots[i])
                y_true.append(samples[i].label_index)
                y_pred.append(int(np.argmax(p)))
            val_report = compute_metrics(y_true, y_pred, model.class_names)
            record["val_loss"] = val_loss / len(split.validation)
            record["val_macro_f1"] = val_report.macro["f1"]
            if record["val_macro_f1"] > best_f1:
                best_f1 = record["val_macro_f1"]
                best_params = {k: v.copy() for k, v in model.params.items()}
        history.append(record)

    if best_params is not None:
        model.params = best_params
    return model, history


def train_mlp_baseline(samples: Sequence[GraphSample], split: DatasetSplit,
                       config: TrainConfig, class_names: Sequence[str]):
    """Train the 1,587->300->200->C stand-in on root features only;
    evaluate on the exact test indices used for the graph model."""
    n_features = samples[0].node_features.shape[1]
    model = init_mlp(n_features, list(class_names), config.seed)
    model, history = train(model, samples, split, config)
    report = evaluate(model, samples, split.test)
    return model, history, report


def compare_models(gcn_report: MetricsReport, mlp_report: MetricsReport) -> dict:
    """Side-by-side per-class table grouped single-node vs multi-node,
    baseline (MLP) against proposed (GCN), with an average row."""
    if gcn_report.fingerprint != mlp_report.fingerprint:
        raise ContractError("reports cover different evaluation samples")
    if gcn_report.class_names != mlp_report.class_names:
        raise ContractError("reports cover different class sets")

    multi = set(gcn_report.groups["multi_node"]["classes"])

    def row(name: str) -> dict:
        g = gcn_report.per_class[name]
        m = mlp_report.per_class[name]
        return {
            "class": name,
            "f1_baseline": m["f1"],
            "f1_proposed": g["f1"],
            "accuracy_baseline": m["accuracy"],
            "accuracy_proposed": g["accuracy"],
            "delta_f1": g["f1"] - m["f1"],
            "support": g["support"],
        }

    single_rows = [row(n) for n in gcn_report.class_names if n not in multi]
    multi_rows = [row(n) for n in gcn_report.class_names if n in multi]
    average = {
        "f1_baseline": mlp_report.macro["f1"],
        "f1_proposed": gcn_report.macro["f1"],
        "accuracy_baseline": mlp_report.overall_accuracy,
        "accuracy_proposed": gcn_report.overall_accuracy,
        "delta_f1": gcn_report.macro["f1"] - mlp_report.macro["f1"],
    }
    return {
        "groups": {"single_node": single_rows, "multi_node": multi_rows},
        "average": average,
        "fingerprint": gcn_report.fingerprint,
        "n_samples": gcn_report.n_samples,
    }
