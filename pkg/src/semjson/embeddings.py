"""Embedding providers: word-vector table, hashing vectors, and PV-DBOW.

The hashing provider is the deterministic, dependency-free paragraph
vector used by tests and the default pipeline; the PV-DBOW trainer is
the full-fidelity path. Both emit 400-dim vectors.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, LoadError
from .features import tokenize

logger = logging.getLogger(__name__)

PARAGRAPH_DIM = 400


class EmbeddingTable:
    """token -> fixed-dimension vector lookup."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None):
        self.dim = dim
        self.vectors: dict[str, np.ndarray] = vectors or {}

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[token]

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(path, dim: int = 50) -> EmbeddingTable:
    """Load a whitespace-separated text table: token followed by ``dim`` floats.

    Duplicate tokens keep the last entry; the duplicate count is logged.
    """
    table = EmbeddingTable(dim)
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise LoadError(
                    f"{path}:{line_no}: expected token plus {dim} values, got {len(parts)} fields"
                )
            token = parts[0]
            try:
                vector = np.array([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise LoadError(f"{path}:{line_no}: non-numeric value: {exc}") from exc
            if token in table.vectors:
                duplicates += 1
            table.vectors[token] = vector
    if duplicates:
        logger.warning("%s: %d duplicate tokens, last entry kept", path, duplicates)
    return table


def _token_hash(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def hashing_vector(text: str, dims: int = PARAGRAPH_DIM) -> np.ndarray:
    """Signed bag-of-tokens hashing vector, L2-normalized unless all-zero."""
    vector = np.zeros(dims)
    for token in tokenize(text):
        h = _token_hash(token)
        sign = 1.0 if h & 1 else -1.0
        vector[(h >> 1) % dims] += sign
    norm = np.linalg.norm(vector)
    if norm > 0.0:
        vector /= norm
    return vector


def hashing_provider(dims: int = PARAGRAPH_DIM):
    return lambda text: hashing_vector(text, dims)


# ---------------------------------------------------------------------------
# PV-DBOW
# ---------------------------------------------------------------------------

_PV_MAGIC = b"SJPV"
_PV_VERSION = 1


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def pair_loss_and_grads(p_vec: np.ndarray, word_out: np.ndarray, target: int,
                        negatives: np.ndarray):
    """Negative-sampling logistic loss for one (paragraph, word) pair.

    Returns (loss, grad wrt paragraph row, grad wrt the target row,
    grads wrt each negative row).
    """
    s_pos = _sigmoid(p_vec @ word_out[target])
    loss = -np.log(max(s_pos, 1e-12))
    grad_p = (s_pos - 1.0) * word_out[target]
    grad_target = (s_pos - 1.0) * p_vec
    grad_negs = np.zeros((len(negatives), len(p_vec)))
    for i, n in enumerate(negatives):
        s_neg = _sigmoid(p_vec @ word_out[n])
        loss -= np.log(max(1.0 - s_neg, 1e-12))
        grad_p += s_neg * word_out[n]
        grad_negs[i] = s_neg * p_vec
    return loss, grad_p, grad_target, grad_negs


@dataclass
class PvDbowModel:
    """Distributed bag-of-words paragraph vectors with negative sampling."""

    vocab: dict[str, int]
    counts: np.ndarray           # unigram counts, vocab order
    paragraph_matrix: np.ndarray  # P x dims
    word_out: np.ndarray          # V x dims
    dims: int
    seed: int
    negatives: int = 5
    lr: float = 0.025
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def noise_cdf(self) -> np.ndarray:
        weights = self.counts ** 0.75
        return np.cumsum(weights / weights.sum())

    def _sample_negatives(self, rng: np.random.Generator, target: int) -> np.ndarray:
        draws = np.searchsorted(self.noise_cdf, rng.random(self.negatives))
        return draws[draws != target]

    def infer(self, text: str, steps: int = 50) -> np.ndarray:
        """Optimize a fresh paragraph row against frozen word weights."""
        token_ids = [self.vocab[t] for t in tokenize(text) if t in self.vocab]
        text_key = int.from_bytes(
            hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little"
        )
        rng = np.random.default_rng([self.seed, text_key])
        p_vec = (rng.random(self.dims) - 0.5) / self.dims
        if not token_ids:
            return p_vec
        cdf = self.noise_cdf
        for step in range(steps):
            lr = max(self.lr * (1.0 - step / steps), self.lr * 1e-4)
            for target in token_ids:
                draws = np.searchsorted(cdf, rng.random(self.negatives))
                negs = draws[draws != target]
                _, grad_p, _, _ = pair_loss_and_grads(p_vec, self.word_out, target, negs)
                p_vec -= lr * grad_p
        return p_vec

    def provider(self, steps: int = 50):
        return lambda text: self.infer(text, steps=steps)

    # -- checkpoint ---------------------------------------------------------

    def save(self, path) -> None:
        tokens = sorted(self.vocab, key=self.vocab.get)
        with open(path, "wb") as fh:
            fh.write(_PV_MAGIC)
            fh.write(struct.pack("<IIIIQ", _PV_VERSION, self.dims, len(tokens),
                                 self.paragraph_matrix.shape[0], self.seed))
            for token in tokens:
                raw = token.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<Q", int(self.counts[self.vocab[token]])))
            fh.write(self.paragraph_matrix.astype("<f4").tobytes())
            fh.write(self.word_out.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "PvDbowModel":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _PV_MAGIC:
                raise LoadError(f"{path}: bad magic {magic!r}")
            version, dims, vocab_size, n_paragraphs, seed = struct.unpack(
                "<IIIIQ", fh.read(24)
            )
            if version != _PV_VERSION:
                raise LoadError(f"{path}: unsupported version {version}")
            vocab = {}
            counts = np.zeros(vocab_size)
            for i in range(vocab_size):
                (length,) = struct.unpack("<I", fh.read(4))
                token = fh.read(length).decode("utf-8")
                (count,) = struct.unpack("<Q", fh.read(8))
                vocab[token] = i
                counts[i] = count
            def matrix(rows: int) -> np.ndarray:
                raw = fh.read(rows * dims * 4)
                if len(raw) != rows * dims * 4:
                    raise LoadError(f"{path}: truncated matrix data")
                return np.frombuffer(raw, dtype="<f4").reshape(rows, dims).astype(float)
            paragraph_matrix = matrix(n_paragraphs)
            word_out = matrix(vocab_size)
        return cls(vocab=vocab, counts=counts, paragraph_matrix=paragraph_matrix,
                   word_out=word_out, dims=dims, seed=seed)


def train_pvdbow(texts, dims: int = PARAGRAPH_DIM, epochs: int = 40,
                 negatives: int = 5, lr: float = 0.025, seed: int = 0) -> PvDbowModel:
    """Train paragraph vectors by predicting each paragraph's words.

    Single-threaded, seeded, SGD with per-epoch linear learning-rate decay;
    the per-epoch mean pair loss is recorded on the model.
    """
    texts = list(texts)
    if not texts:
        raise ContractError("train_pvdbow requires a non-empty corpus")
    docs = [tokenize(t) for t in texts]
    freq: dict[str, int] = {}
    for tokens in docs:
        for t in tokens:
            freq[t] = freq.get(t, 0) + 1
    if not freq:
        raise ContractError("empty vocabulary after tokenization")
    ordered = sorted(freq, key=lambda t: (-freq[t], t))
    vocab = {t: i for i, t in enumerate(ordered)}
    counts = np.array([freq[t] for t in ordered], dtype=float)

    rng = np.random.default_rng(seed)
    model = PvDbowModel(
        vocab=vocab,
        counts=counts,
        paragraph_matrix=(rng.random((len(docs), dims)) - 0.5) / dims,
        word_out=np.zeros((len(ordered), dims)),
        dims=dims,
        seed=seed,
        negatives=negatives,
        lr=lr,
    )
    doc_ids = [[vocab[t] for t in tokens] for tokens in docs]
    cdf = model.noise_cdf
    for epoch in range(epochs):
        lr_e = max(lr * (1.0 - epoch / epochs), lr * 1e-4)
        total, pairs = 0.0, 0
        for p_idx, token_ids in enumerate(doc_ids):
            p_vec = model.paragraph_matrix[p_idx]
            for target in token_ids:
                draws = np.searchsorted(cdf, rng.random(negatives))
                negs = draws[draws != target]
                loss, grad_p, grad_t, grad_n = pair_loss_and_grads(
                    p_vec, model.word_out, target, negs
                )
                model.word_out[target] -= lr_e * grad_t
                if len(negs):
                    # duplicate draws must each apply their update
                    np.subtract.at(model.word_out, negs, lr_e * grad_n)
                p_vec -= lr_e * grad_p
                total += loss
                pairs += 1
        model.epoch_losses.append(total / max(pairs, 1))
    return model


def infer_vector(model: PvDbowModel, text: str, steps: int = 50) -> np.ndarray:
    return model.infer(text, steps=steps)
