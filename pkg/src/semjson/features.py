"""Feature extraction for value columns.

Each column maps to a 1,587-slot vector laid out as:

    [0, 27)       global statistics (catalog below)
    [27, 987)     per-character distributions, character-major:
                  96 tracked characters x 10 functions
    [987, 1187)   word-embedding aggregates, statistic-major:
                  mean | mode | median | variance, 50 dims each
    [1187, 1587)  paragraph vector

Global-statistic catalog, in slot order: n_values, n_distinct,
frac_distinct, entropy (base 2), frac_numeric, frac_integer, frac_alpha,
frac_alnum, frac_empty, mean/std/min/max/median/sum of numeric-parsed
values, mean/std/min/max/median/sum of character lengths,
mean/std/min/max/median of whitespace-token counts,
frac_values_containing_whitespace. All spreads are population statistics.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, LoadError

# 95 printable ASCII characters plus form feed, in code-point order.
TRACKED_CHARS: str = "\x0c" + "".join(chr(c) for c in range(32, 127))

CHAR_FUNCTIONS = ("any", "all", "mean", "variance", "min", "max", "median", "sum",
                  "kurtosis", "skewness")

GLOBAL_DIMS = 27
CHAR_DIMS = len(TRACKED_CHARS) * len(CHAR_FUNCTIONS)  # 960
WORD_DIMS = 200
PARAGRAPH_DIMS = 400
TOTAL_DIMS = GLOBAL_DIMS + CHAR_DIMS + WORD_DIMS + PARAGRAPH_DIMS  # 1587

GLOBAL_SLICE = slice(0, GLOBAL_DIMS)
CHAR_SLICE = slice(GLOBAL_DIMS, GLOBAL_DIMS + CHAR_DIMS)
WORD_SLICE = slice(CHAR_SLICE.stop, CHAR_SLICE.stop + WORD_DIMS)
PARAGRAPH_SLICE = slice(WORD_SLICE.stop, WORD_SLICE.stop + PARAGRAPH_DIMS)

WORD_EMBEDDING_DIM = 50

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Bound on parsed numeric magnitudes so column sums cannot overflow.
_NUMERIC_CLAMP = 1e150
_MOMENT_EPS = 1e-12


def tokenize(text: str) -> list[str]:
    """Lowercase and split into maximal ASCII letter/digit runs."""
    return _TOKEN_RE.findall(text.lower())


def _parse_numeric(value: str) -> float | None:
    try:
        x = float(value)
    except ValueError:
        return None
    if not math.isfinite(x):
        return None
    return min(max(x, -_NUMERIC_CLAMP), _NUMERIC_CLAMP)


def _spread_stats(values: np.ndarray, with_sum: bool = True) -> list[float]:
    out = [
        float(values.mean()),
        float(values.std()),
        float(values.min()),
        float(values.max()),
        float(np.median(values)),
    ]
    if with_sum:
        out.append(float(values.sum()))
    return out


def global_stats(column: Sequence[str]) -> np.ndarray:
    """The 27 catalog statistics for one column, in catalog order."""
    if len(column) == 0:
        raise ContractError("global_stats requires a non-empty column")
    n = len(column)
    counts = Counter(column)
    n_distinct = len(counts)

    freqs = np.array(list(counts.values()), dtype=float) / n
    entropy = float(-(freqs * np.log2(freqs)).sum())

    numeric = [x for x in (_parse_numeric(v) for v in column) if x is not None]
    n_numeric = len(numeric)
    n_integer = sum(1 for x in numeric if float(x).is_integer())
    n_alpha = sum(1 for v in column if v.isalpha())
    n_alnum = sum(1 for v in column if v.isalnum())
    n_empty = sum(1 for v in column if v == "")

    out = [
        float(n),
        float(n_distinct),
        n_distinct / n,
        entropy,
        n_numeric / n,
        n_integer / n,
        n_alpha / n,
        n_alnum / n,
        n_empty / n,
    ]
    if numeric:
        out.extend(_spread_stats(np.array(numeric)))
    else:
        out.extend([0.0] * 6)
    lengths = np.array([len(v) for v in column], dtype=float)
    out.extend(_spread_stats(lengths))
    token_counts = np.array([len(v.split()) for v in column], dtype=float)
    out.extend(_spread_stats(token_counts, with_sum=False))
    out.append(sum(1 for v in column if any(c.isspace() for c in v)) / n)

    return np.nan_to_num(np.array(out), nan=0.0, posinf=_NUMERIC_CLAMP,
                         neginf=-_NUMERIC_CLAMP)


def char_count_matrix(column: Sequence[str]) -> np.ndarray:
    """Occurrence counts, one row per value, one column per tracked character."""
    index = {c: i for i, c in enumerate(TRACKED_CHARS)}
    counts = np.zeros((len(column), len(TRACKED_CHARS)))
    for row, value in enumerate(column):
        for ch, k in Counter(value).items():
            j = index.get(ch)
            if j is not None:
                counts[row, j] = k
    return counts


def char_distributions(column: Sequence[str]) -> np.ndarray:
    """960 slots: per tracked character, the 10 functions over per-value counts.

    Variance is the population variance; skewness and excess kurtosis use
    population moments and are 0 when the second moment is degenerate.
    """
    if len(column) == 0:
        raise ContractError("char_distributions requires a non-empty column")
    counts = char_count_matrix(column)

    present = counts > 0
    mean = counts.mean(axis=0)
    centered = counts - mean
    m2 = (centered ** 2).mean(axis=0)
    m3 = (centered ** 3).mean(axis=0)
    m4 = (centered ** 4).mean(axis=0)
    ok = m2 >= _MOMENT_EPS
    kurtosis = np.zeros_like(m2)
    skewness = np.zeros_like(m2)
    kurtosis[ok] = m4[ok] / m2[ok] ** 2 - 3.0
    skewness[ok] = m3[ok] / m2[ok] ** 1.5

    stats = np.stack([
        present.any(axis=0).astype(float),
        present.all(axis=0).astype(float),
        mean,
        m2,
        counts.min(axis=0),
        counts.max(axis=0),
        np.median(counts, axis=0),
        counts.sum(axis=0),
        kurtosis,
        skewness,
    ])
    # character-major, function-minor
    return stats.T.reshape(-1)


def _mode_rounded(values: np.ndarray) -> float:
    """Most frequent value after rounding to 6 decimals; ties pick the smallest."""
    rounded = np.round(values, 6)
    uniq, counts = np.unique(rounded, return_counts=True)
    return float(uniq[np.argmax(counts)])


def word_embedding_features(column: Sequence[str], table) -> np.ndarray:
    """200 slots: mean, mode, median, variance of per-value embedding averages.

    A value's embedding is the average over its in-vocabulary tokens;
    values with no in-vocabulary token are skipped. All zeros when no
    value survives.
    """
    if len(column) == 0:
        raise ContractError("word_embedding_features requires a non-empty column")
    if table.dim != WORD_EMBEDDING_DIM:
        raise ContractError(
            f"embedding table dimension {table.dim}, expected {WORD_EMBEDDING_DIM}"
        )
    per_value = []
    for value in column:
        vectors = [table[t] for t in tokenize(value) if t in table]
        if vectors:
            per_value.append(np.mean(vectors, axis=0))
    if not per_value:
        return np.zeros(WORD_DIMS)
    matrix = np.stack(per_value)
    mode = np.array([_mode_rounded(matrix[:, j]) for j in range(matrix.shape[1])])
    return np.concatenate([
        matrix.mean(axis=0),
        mode,
        np.median(matrix, axis=0),
        matrix.var(axis=0),
    ])


def paragraph_features(
    column: Sequence[str], provider: Callable[[str], np.ndarray]
) -> np.ndarray:
    """The provider's 400-dim vector for the space-joined column text."""
    if len(column) == 0:
        raise ContractError("paragraph_features requires a non-empty column")
    text = " ".join(column)
    if text == "":
        return np.zeros(PARAGRAPH_DIMS)
    vector = np.asarray(provider(text), dtype=float)
    if vector.shape != (PARAGRAPH_DIMS,):
        raise ContractError(
            f"paragraph provider returned shape {vector.shape}, expected ({PARAGRAPH_DIMS},)"
        )
    return vector


def extract_features(record, table, provider: Callable[[str], np.ndarray]) -> np.ndarray:
    """Full 1,587-slot feature vector for one record's column."""
    column = record.column
    vector = np.concatenate([
        global_stats(column),
        char_distributions(column),
        word_embedding_features(column, table),
        paragraph_features(column, provider),
    ])
    return np.nan_to_num(vector, nan=0.0, posinf=_NUMERIC_CLAMP, neginf=-_NUMERIC_CLAMP)


_DEGENERATE_STD = 1e-8


@dataclass
class Scaler:
    """Per-slot z-scoring statistics fitted on training vectors only.

    Stored deviations are clamped to at least 1e-8; slots at the clamp are
    treated as degenerate and pass through centered only.
    """

    mean: np.ndarray
    std: np.ndarray

    def apply(self, vector: np.ndarray) -> np.ndarray:
        scaled = vector - self.mean
        live = self.std > _DEGENERATE_STD
        scaled[live] /= self.std[live]
        return scaled

    def save(self, path) -> None:
        doc = {
            "format_version": 1,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Scaler":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        mean = np.asarray(doc["mean"], dtype=float)
        std = np.asarray(doc["std"], dtype=float)
        if mean.shape != std.shape:
            raise LoadError(f"{path}: mean/std length mismatch")
        return cls(mean, std)


def fit_scaler(train: Sequence[np.ndarray]) -> Scaler:
    if len(train) == 0:
        raise ContractError("fit_scaler requires a non-empty training set")
    matrix = np.stack(train)
    return Scaler(matrix.mean(axis=0), np.maximum(matrix.std(axis=0), _DEGENERATE_STD))


def apply_scaler(scaler: Scaler, vector: np.ndarray) -> np.ndarray:
    return scaler.apply(vector)
