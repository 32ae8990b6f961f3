"""Pipeline subcommands: extract, featurize, graphs, train, evaluate,
predict, synth.

Stages communicate through files in the output directory so each one is
independently timeable and resumable. Report-producing stages (extract,
train, evaluate) also render figures next to their JSON outputs.
Configuration precedence is flags > config file > defaults; the
SEMJSON_WORKERS variable caps fan-out (1 = sequential).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import jsonl, plots
from .embeddings import (EmbeddingTable, PvDbowModel, hashing_provider,
                         load_embeddings, train_pvdbow)
from .errors import (ConfigError, ContractError, JsonParseError, SemjsonError,
                     StructureError)
from .features import TOTAL_DIMS, Scaler, extract_features, fit_scaler
from .graphs import (GraphSample, build_graphs, encode_labels,
                     graph_from_json_dict, graph_to_json_dict)
from .ingest import (AnnotationMap, PathRecord, corpus_stats,
                     extract_kv_pairs, parse_document, parse_path)
from .nn import GcnModel, MlpBaseline, TrainConfig, init_gcn, init_mlp, \
    load_model, save_model
from .training import (compare_models, evaluate, sample_id, stratified_split,
                       train)

WORKERS_ENV = "SEMJSON_WORKERS"


@dataclass
class PipelineConfig:
    corpus: Optional[str] = None
    annotations: Optional[str] = None
    embeddings: Optional[str] = None
    provider: str = "hashing"
    out: str = "out"
    seed: int = 0
    model: str = "gcn"
    learning_rate: float = 2e-4
    dropout_rate: float = 0.5
    epochs: int = 100
    batch_size: int = 32
    class_count: int = 5
    docs_per_class: int = 200
    profile: str = "flat"
    noise: float = 0.0
    checkpoint: Optional[str] = None
    baseline_checkpoint: Optional[str] = None
    document: Optional[str] = None
    top_k: int = 3
    pvdbow_epochs: int = 40
    infer_steps: int = 50

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "PipelineConfig":
        """Merge defaults, then config-file values, then explicit flags."""
        merged = {f.name: f.default for f in fields(cls)}
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                file_values = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON config: {exc}") from exc
            unknown = set(file_values) - set(merged)
            if unknown:
                raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
            merged.update(file_values)
        for name in merged:
            value = getattr(args, name, None)
            if value is not None:
                merged[name] = value
        return cls(**merged)

    def require_paths(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"missing required input: --{name.replace('_', '-')}")
            if not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            dropout_rate=self.dropout_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def out_dir(self) -> Path:
        path = Path(self.out)
        path.mkdir(parents=True, exist_ok=True)
        return path


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(n, 1)


def _parallel_map(fn, items):
    """Order-preserving map, fanned out when workers > 1."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- artifact paths -----------------------------------------------------------

def records_path(out: Path) -> Path:
    return out / "records.jsonl"


def features_path(out: Path) -> Path:
    return out / "features.jsonl"


def graphs_path(out: Path) -> Path:
    return out / "graphs.jsonl"


def scaler_path(out: Path) -> Path:
    return out / "scaler.json"


def checkpoint_path(out: Path, model: str) -> Path:
    return out / f"model_{model}.ckpt"


def _stage_seconds(out: Path, report_name: str) -> float:
    path = out / report_name
    if not path.exists():
        return 0.0
    try:
        report = jsonl.read_report(path)
        return float(report.get("timing", {}).get("seconds", 0.0))
    except (OSError, ValueError, json.JSONDecodeError):
        return 0.0


# -- subcommands ---------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig) -> int:
    from .synth import generate_synthetic_corpus, write_corpus

    out = cfg.out_dir()
    docs, annotations, subjects = generate_synthetic_corpus(
        cfg.class_count, cfg.docs_per_class, cfg.profile, cfg.noise, cfg.seed
    )
    corpus_file = out / "corpus.jsonl"
    annotation_file = out / "annotations.jsonl"
    n = write_corpus(corpus_file, docs)
    annotations.save(annotation_file)
    print(f"wrote {n} documents for {len(subjects)} classes to {corpus_file}")
    print(f"wrote {len(annotations.rules)} annotation rules to {annotation_file}")
    return 0


def cmd_extract(cfg: PipelineConfig) -> int:
    cfg.require_paths("corpus")
    annotations = None
    if cfg.annotations is not None:
        cfg.require_paths("annotations")
        annotations = AnnotationMap.load(cfg.annotations)
    out = cfg.out_dir()

    started = time.monotonic()
    with open(cfg.corpus, "r", encoding="utf-8") as fh:
        lines = [(i, line) for i, line in enumerate(fh) if line.strip()]

    def process(item):
        doc_id, line = item
        try:
            doc = parse_document(line)
            return extract_kv_pairs(doc, doc_id, annotations)
        except (JsonParseError, StructureError) as exc:
            return exc

    results = _parallel_map(process, lines)
    records: list[PathRecord] = []
    skipped = 0
    for result in results:
        if isinstance(result, Exception):
            skipped += 1
        else:
            records.extend(result)

    n_rows = jsonl.write_dump(records_path(out),
                              (r.to_json_dict() for r in records), kind="records")
    stats = corpus_stats(records)
    elapsed = time.monotonic() - started

    report = {
        "kind": "extract_report",
        "n_documents": len(lines) - skipped,
        "n_skipped": skipped,
        "n_records": n_rows,
        "depth_histogram": {str(k): v for k, v in sorted(stats.depth_counts.items())},
        "label_counts": dict(sorted(stats.label_counts.items())),
        "timing": {"stage": "extract", "seconds": elapsed},
    }
    jsonl.write_report(out / "extract_report.json", report)
    if stats.depth_counts:
        plots.save_depth_histogram(stats.depth_counts, out / "depth_hist.png")
    print(f"extracted {n_rows} records from {report['n_documents']} documents"
          f" ({skipped} skipped) in {elapsed:.2f}s")
    return 0


def _load_records(out: Path) -> list[PathRecord]:
    records = []
    for row in jsonl.read_dump(records_path(out), kind="records"):
        records.append(PathRecord(
            doc_id=int(row["doc_id"]),
            path=parse_path(row["path"]),
            label=row["label"],
            column=list(row["column"]),
            depth=int(row["depth"]),
        ))
    return records


def _build_provider(cfg: PipelineConfig, out: Path, records=None):
    """Paragraph-vector provider per config; may train and persist PV-DBOW."""
    if cfg.provider == "hashing":
        return hashing_provider()
    if cfg.provider != "pvdbow":
        raise ConfigError(f"unknown paragraph provider {cfg.provider!r}")
    model_file = out / "pvdbow.bin"
    if records is not None:
        texts = [" ".join(r.column) for r in records]
        model = train_pvdbow(texts, epochs=cfg.pvdbow_epochs, seed=cfg.seed)
        model.save(model_file)
    else:
        if not model_file.exists():
            raise ConfigError(f"pvdbow model not found: {model_file}")
        model = PvDbowModel.load(model_file)
    return model.provider(steps=cfg.infer_steps)


def _load_table(cfg: PipelineConfig) -> EmbeddingTable:
    if cfg.embeddings is None:
        return EmbeddingTable(dim=50)
    cfg.require_paths("embeddings")
    return load_embeddings(cfg.embeddings)


def cmd_featurize(cfg: PipelineConfig) -> int:
    out = cfg.out_dir()
    if not records_path(out).exists():
        raise ConfigError(f"record dump not found: {records_path(out)}")
    started = time.monotonic()
    records = _load_records(out)
    table = _load_table(cfg)
    provider = _build_provider(cfg, out, records=records)

    def featurize(record: PathRecord) -> dict:
        values = extract_features(record, table, provider)
        return {
            "doc_id": record.doc_id,
            "path": record.path.text,
            "label": record.label,
            "values": [float(x) for x in values],
        }

    rows = _parallel_map(featurize, records)
    n = jsonl.write_dump(features_path(out), rows, kind="features")
    elapsed = time.monotonic() - started
    jsonl.write_report(out / "featurize_report.json", {
        "kind": "featurize_report",
        "n_features": n,
        "n_dims": TOTAL_DIMS,
        "provider": cfg.provider,
        "timing": {"stage": "featurize", "seconds": elapsed},
    })
    print(f"featurized {n} records ({TOTAL_DIMS} dims) in {elapsed:.2f}s")
    return 0


def cmd_graphs(cfg: PipelineConfig) -> int:
    out = cfg.out_dir()
    for path in (records_path(out), features_path(out)):
        if not path.exists():
            raise ConfigError(f"required dump not found: {path}")
    started = time.monotonic()
    records = _load_records(out)
    vectors: dict[tuple[int, str], np.ndarray] = {}
    for row in jsonl.read_dump(features_path(out), kind="features"):
        vectors[(int(row["doc_id"]), row["path"])] = np.array(row["values"])

    by_doc: dict[int, list[PathRecord]] = {}
    for record in records:
        by_doc.setdefault(record.doc_id, []).append(record)

    samples: list[GraphSample] = []
    multi = 0
    for doc_id in sorted(by_doc):
        doc_records = by_doc[doc_id]
        features = {r.path.text: vectors[(doc_id, r.path.text)] for r in doc_records}
        for sample in build_graphs(doc_records, features):
            samples.append(sample)
            if sample.n_nodes > 1:
                multi += 1

    n = jsonl.write_dump(graphs_path(out),
                         (graph_to_json_dict(s) for s in samples), kind="graphs")
    elapsed = time.monotonic() - started
    jsonl.write_report(out / "graphs_report.json", {
        "kind": "graphs_report",
        "n_graphs": n,
        "n_multi_node": multi,
        "timing": {"stage": "graphs", "seconds": elapsed},
    })
    print(f"built {n} graphs ({multi} multi-node) in {elapsed:.2f}s")
    return 0


def _load_samples(out: Path) -> tuple[list[GraphSample], dict[str, int]]:
    samples = [graph_from_json_dict(row)
               for row in jsonl.read_dump(graphs_path(out), kind="graphs")]
    if not samples:
        raise ConfigError(f"graph dump {graphs_path(out)} holds no samples")
    label_index = encode_labels(samples)
    return samples, label_index


def _scale_samples(samples: list[GraphSample], scaler: Scaler) -> None:
    for s in samples:
        s.node_features = np.stack([scaler.apply(row) for row in s.node_features])


def cmd_train(cfg: PipelineConfig) -> int:
    out = cfg.out_dir()
    if not graphs_path(out).exists():
        raise ConfigError(f"graph dump not found: {graphs_path(out)}")
    if cfg.model not in ("gcn", "mlp"):
        raise ConfigError(f"model must be gcn or mlp, got {cfg.model!r}")

    started = time.monotonic()
    samples, label_index = _load_samples(out)
    class_names = sorted(label_index)
    split = stratified_split(samples, cfg.seed)

    scaler = fit_scaler([samples[i].node_features[0] for i in split.train])
    scaler.save(scaler_path(out))
    _scale_samples(samples, scaler)

    init = init_gcn if cfg.model == "gcn" else init_mlp
    model = init(TOTAL_DIMS, class_names, cfg.seed)
    model.scaler_ref = scaler_path(out).name
    config = cfg.train_config()
    model, history = train(model, samples, split, config)

    test_report = None
    if split.test:
        test_report = evaluate(model, samples, split.test)
        if history:
            history[-1]["test_overall_accuracy"] = test_report.overall_accuracy
            history[-1]["test_macro_f1"] = test_report.macro["f1"]

    ckpt = checkpoint_path(out, cfg.model)
    save_model(model, ckpt)
    jsonl.write_dump(out / f"history_{cfg.model}.jsonl", history, kind="history")
    training_seconds = time.monotonic() - started

    timing = {
        "extract_s": _stage_seconds(out, "extract_report.json"),
        "featurize_s": _stage_seconds(out, "featurize_report.json"),
        "graphs_s": _stage_seconds(out, "graphs_report.json"),
        "train_s": training_seconds,
    }
    timing["total_s"] = sum(timing.values())
    report = {
        "kind": "train_report",
        "model": cfg.model,
        "n_samples": len(samples),
        "n_classes": len(class_names),
        "epochs": config.epochs,
        "best_val_macro_f1": max((h.get("val_macro_f1", 0.0) for h in history),
                                 default=0.0),
        "model_size_bytes": os.path.getsize(ckpt),
        "timing": timing,
    }
    if test_report is not None:
        report["test_overall_accuracy"] = test_report.overall_accuracy
        report["test_macro_f1"] = test_report.macro["f1"]
    jsonl.write_report(out / f"train_report_{cfg.model}.json", report)
    if history:
        plots.save_training_curves(history, out / f"training_curves_{cfg.model}.png")
    print(f"trained {cfg.model} for {config.epochs} epochs in "
          f"{training_seconds:.1f}s; checkpoint {ckpt} "
          f"({report['model_size_bytes']} bytes)")
    if test_report is not None:
        print(f"test macro-F1 {test_report.macro['f1']:.4f}, "
              f"accuracy {test_report.overall_accuracy:.4f}")
    return 0


def cmd_evaluate(cfg: PipelineConfig) -> int:
    out = cfg.out_dir()
    cfg.require_paths("checkpoint")
    if not graphs_path(out).exists():
        raise ConfigError(f"graph dump not found: {graphs_path(out)}")

    samples, label_index = _load_samples(out)
    class_names = sorted(label_index)
    model = load_model(cfg.checkpoint)
    if model.class_names != class_names:
        raise ContractError(
            f"checkpoint classes {model.class_names} do not match data classes "
            f"{class_names}"
        )
    split = stratified_split(samples, cfg.seed)
    scaler = Scaler.load(scaler_path(out))
    _scale_samples(samples, scaler)

    report = evaluate(model, samples, split.test)
    jsonl.write_report(out / "metrics_report.json", report.to_json_dict())
    plots.save_confusion_heatmap(report.confusion, report.class_names,
                                 out / "confusion.png")
    print(f"evaluated {report.n_samples} test samples: "
          f"macro-F1 {report.macro['f1']:.4f}, "
          f"accuracy {report.overall_accuracy:.4f}")

    if cfg.baseline_checkpoint is not None:
        cfg.require_paths("baseline_checkpoint")
        baseline = load_model(cfg.baseline_checkpoint)
        if baseline.class_names != class_names:
            raise ContractError("baseline checkpoint classes do not match data")
        baseline_report = evaluate(baseline, samples, split.test)
        comparison = compare_models(report, baseline_report)
        jsonl.write_report(out / "comparison.json", comparison)
        plots.save_comparison_chart(comparison, out / "comparison.png")
        avg = comparison["average"]
        print(f"comparison: baseline macro-F1 {avg['f1_baseline']:.4f} vs "
              f"proposed {avg['f1_proposed']:.4f} (delta {avg['delta_f1']:+.4f})")
    return 0


def cmd_predict(cfg: PipelineConfig) -> int:
    out = cfg.out_dir()
    cfg.require_paths("checkpoint", "document")
    model = load_model(cfg.checkpoint)
    scaler_file = out / model.scaler_ref if model.scaler_ref else scaler_path(out)
    if not scaler_file.exists():
        raise ConfigError(f"scaler file not found: {scaler_file}")
    scaler = Scaler.load(scaler_file)

    annotations = None
    if cfg.annotations is not None:
        cfg.require_paths("annotations")
        annotations = AnnotationMap.load(cfg.annotations)
    table = _load_table(cfg)
    provider = _build_provider(cfg, out, records=None) \
        if cfg.provider == "pvdbow" else hashing_provider()

    text = Path(cfg.document).read_text(encoding="utf-8")
    doc = parse_document(text)
    records = extract_kv_pairs(doc, 0, annotations)

    rows = []
    errors = 0
    feature_map = {}
    for record in records:
        try:
            feature_map[record.path.text] = extract_features(record, table, provider)
        except SemjsonError as exc:
            errors += 1
            rows.append({"path": record.path.text, "error": str(exc)})
    usable = [r for r in records if r.path.text in feature_map]
    scaled = {path: scaler.apply(vec) for path, vec in feature_map.items()}
    for record in usable:
        subtree = [record] + [r for r in usable if r.path.extends(record.path)]
        try:
            sample = build_graphs(subtree, scaled)[0]
            p, _ = evaluate_sample(model, sample)
        except SemjsonError as exc:
            errors += 1
            rows.append({"path": record.path.text, "error": str(exc)})
            continue
        order = np.argsort(p)[::-1][: cfg.top_k]
        rows.append({
            "path": sample.meta["path"],
            "label": model.class_names[int(order[0])],
            "top": [[model.class_names[int(i)], float(p[i])] for i in order],
        })
    jsonl.write_dump(out / "predictions.jsonl", rows, kind="predictions")
    print(f"predicted {len(rows) - errors} paths ({errors} errors) "
          f"to {out / 'predictions.jsonl'}")
    return 0


def evaluate_sample(model, sample: GraphSample):
    """Probabilities for one graph under either model kind."""
    from .graphs import normalize_adjacency
    from .nn import forward, mlp_forward

    if isinstance(model, MlpBaseline):
        return mlp_forward(model, sample.node_features[0].astype(np.float32))
    a_hat = normalize_adjacency(sample.adjacency).astype(np.float32)
    return forward(model, a_hat, sample.node_features.astype(np.float32))


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semjson",
        description="Semantic type labeling for JSON key-value pairs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--seed", type=int, help="random seed")
        cmd.add_argument("--out", help="output directory")
        return cmd

    p = add("synth", "generate a synthetic labeled corpus")
    p.add_argument("--class-count", dest="class_count", type=int)
    p.add_argument("--docs-per-class", dest="docs_per_class", type=int)
    p.add_argument("--profile", choices=("flat", "nested", "joint"))
    p.add_argument("--noise", type=float)

    p = add("extract", "extract labeled key-value records from a corpus")
    p.add_argument("--corpus")
    p.add_argument("--annotations")

    p = add("featurize", "compute feature vectors for extracted records")
    p.add_argument("--embeddings", help="word-embedding table (text format)")
    p.add_argument("--provider", choices=("hashing", "pvdbow"))
    p.add_argument("--pvdbow-epochs", dest="pvdbow_epochs", type=int)
    p.add_argument("--infer-steps", dest="infer_steps", type=int)

    add("graphs", "build rooted-subtree graphs from records and features")

    p = add("train", "train the graph model or the MLP baseline")
    p.add_argument("--model", choices=("gcn", "mlp"))
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = add("evaluate", "score a checkpoint on the test split")
    p.add_argument("--checkpoint")
    p.add_argument("--baseline-checkpoint", dest="baseline_checkpoint")

    p = add("predict", "label the pairs of a single JSON document")
    p.add_argument("--checkpoint")
    p.add_argument("--document")
    p.add_argument("--annotations")
    p.add_argument("--embeddings")
    p.add_argument("--provider", choices=("hashing", "pvdbow"))
    p.add_argument("--top-k", dest="top_k", type=int)

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "featurize": cmd_featurize,
    "graphs": cmd_graphs,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.from_args(args)
        return _COMMANDS[args.command](cfg)
    except SemjsonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
