"""Semantic type labeling for JSON key-value pairs.

Pipeline: extract labeled path records from JSON documents, compute
1,587-dim feature vectors per value column, represent each record as a
rooted graph, and classify it with a from-scratch two-layer GCN; a
single-column MLP baseline trains on the same features for comparison.
"""

from .errors import (BuildError, ConfigError, ContractError, JsonParseError,
                     LoadError, SemjsonError, SplitError, StructureError,
                     TrainingAbort)
from .features import (CHAR_DIMS, GLOBAL_DIMS, PARAGRAPH_DIMS, TOTAL_DIMS,
                       WORD_DIMS, Scaler, extract_features, fit_scaler)
from .graphs import (GraphSample, build_graphs, encode_labels,
                     normalize_adjacency)
from .ingest import (AnnotationMap, JsonPath, PathRecord, corpus_stats,
                     extract_kv_pairs, parse_document, parse_path,
                     serialize_value)
from .nn import (GcnModel, MlpBaseline, TrainConfig, adam_step, backward,
                 dropout, forward, init_gcn, init_mlp, load_model, loss,
                 mlp_backward, mlp_forward, save_model)
from .synth import generate_synthetic_corpus, write_corpus
from .training import (DatasetSplit, MetricsReport, compare_models, evaluate,
                       stratified_split, train, train_mlp_baseline)

__version__ = "0.1.0"
