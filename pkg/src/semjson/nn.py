"""From-scratch network kernels: GCN layers, pooling, dropout, Adam.

All gradients are hand-derived. Parameters live in plain dicts keyed
W1, b1, W2, b2, W_out, b_out and are float32; forward/backward run in
whatever dtype the inputs carry, so float64 shadow copies can be used
for finite-difference checks.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, LoadError

GCN_HIDDEN_1 = 256
GCN_HIDDEN_2 = 64
MLP_HIDDEN_1 = 300
MLP_HIDDEN_2 = 200

_CHECKPOINT_MAGIC = b"SJNN"
_CHECKPOINT_VERSION = 1
_TENSOR_ORDER = ("W1", "b1", "W2", "b2", "W_out", "b_out")


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout_rate: float = 0.5
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class GcnModel:
    """Two-layer GCN with a global-mean-pool dense softmax head."""

    params: dict[str, np.ndarray]
    class_names: list[str]
    seed: int
    scaler_ref: str = ""

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def param_count(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def copy(self) -> "GcnModel":
        return GcnModel(
            params={k: v.copy() for k, v in self.params.items()},
            class_names=list(self.class_names),
            seed=self.seed,
            scaler_ref=self.scaler_ref,
        )


@dataclass
class MlpBaseline:
    """Single-column feed-forward stand-in: 1,587 -> 300 -> 200 -> C."""

    params: dict[str, np.ndarray]
    class_names: list[str]
    seed: int
    scaler_ref: str = ""

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def param_count(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def copy(self) -> "MlpBaseline":
        return MlpBaseline(
            params={k: v.copy() for k, v in self.params.items()},
            class_names=list(self.class_names),
            seed=self.seed,
            scaler_ref=self.scaler_ref,
        )


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _init_params(rng: np.random.Generator, sizes: list[int], n_classes: int,
                 dtype) -> dict[str, np.ndarray]:
    d0, d1, d2 = sizes
    return {
        "W1": glorot_uniform(rng, d0, d1, dtype),
        "b1": np.zeros(d1, dtype=dtype),
        "W2": glorot_uniform(rng, d1, d2, dtype),
        "b2": np.zeros(d2, dtype=dtype),
        "W_out": glorot_uniform(rng, d2, n_classes, dtype),
        "b_out": np.zeros(n_classes, dtype=dtype),
    }


def init_gcn(n_features: int, class_names: list[str], seed: int,
             dtype=np.float32) -> GcnModel:
    if len(class_names) < 2:
        raise ContractError("a classifier needs at least 2 classes")
    rng = np.random.default_rng(seed)
    params = _init_params(rng, [n_features, GCN_HIDDEN_1, GCN_HIDDEN_2],
                          len(class_names), dtype)
    return GcnModel(params=params, class_names=list(class_names), seed=seed)


def init_mlp(n_features: int, class_names: list[str], seed: int,
             dtype=np.float32) -> MlpBaseline:
    if len(class_names) < 2:
        raise ContractError("a classifier needs at least 2 classes")
    rng = np.random.default_rng(seed)
    params = _init_params(rng, [n_features, MLP_HIDDEN_1, MLP_HIDDEN_2],
                          len(class_names), dtype)
    return MlpBaseline(params=params, class_names=list(class_names), seed=seed)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def dropout(h: np.ndarray, rate: float, rng: Optional[np.random.Generator],
            train_mode: bool):
    """Inverted dropout; returns (output, mask). Mask is None in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not train_mode or rate == 0.0:
        return h, None
    if rng is None:
        raise ContractError("training-mode dropout requires a generator")
    keep = 1.0 - rate
    mask = (rng.random(h.shape) >= rate).astype(h.dtype) / h.dtype.type(keep)
    return h * mask, mask


def forward(model: GcnModel, a_hat: np.ndarray, h: np.ndarray,
            train_mode: bool = False, rng: Optional[np.random.Generator] = None,
            dropout_rate: float = 0.5):
    """Graph forward pass; returns (probabilities, cache for backward).

    H1 = relu(A H W1 + b1), dropout in train mode, H2 = relu(A H1 W2 + b2),
    g = column mean of H2, p = softmax(g W_out + b_out).
    """
    params = model.params
    if h.ndim != 2 or h.shape[1] != params["W1"].shape[0]:
        raise ContractError(
            f"node features must be N x {params['W1'].shape[0]}, got {h.shape}"
        )
    if a_hat.shape != (h.shape[0], h.shape[0]):
        raise ContractError(
            f"adjacency shape {a_hat.shape} does not match {h.shape[0]} nodes"
        )
    ah = a_hat @ h
    z1 = ah @ params["W1"] + params["b1"]
    h1 = np.maximum(z1, 0)
    h1d, mask = dropout(h1, dropout_rate, rng, train_mode)
    ah1 = a_hat @ h1d
    z2 = ah1 @ params["W2"] + params["b2"]
    h2 = np.maximum(z2, 0)
    g = h2.mean(axis=0)
    z3 = g @ params["W_out"] + params["b_out"]
    p = softmax(z3)
    cache = {
        "a_hat": a_hat, "ah": ah, "z1": z1, "mask": mask, "h1d": h1d,
        "ah1": ah1, "z2": z2, "g": g, "p": p,
    }
    return p, cache


def loss(p: np.ndarray, y: np.ndarray) -> float:
    """Categorical cross-entropy of the true class, clamped at 1e-12."""
    c = int(np.argmax(y))
    return float(-np.log(min(max(float(p[c]), 1e-12), 1.0)))


def backward(model: GcnModel, cache: Optional[dict], y: np.ndarray) -> dict:
    """Exact gradients of loss(forward(...)) for all six tensors."""
    if not cache or "p" not in cache:
        raise ContractError("backward requires the cache of a forward pass")
    params = model.params
    a_hat, ah, z1 = cache["a_hat"], cache["ah"], cache["z1"]
    mask, h1d, ah1, z2 = cache["mask"], cache["h1d"], cache["ah1"], cache["z2"]
    g, p = cache["g"], cache["p"]
    n = a_hat.shape[0]

    dz3 = p - y.astype(p.dtype)
    d_w_out = np.outer(g, dz3)
    d_b_out = dz3
    dg = params["W_out"] @ dz3
    # mean pooling spreads dg/N to every row
    dh2 = np.broadcast_to(dg / n, z2.shape)
    dz2 = np.where(z2 > 0, dh2, 0)
    d_w2 = ah1.T @ dz2
    d_b2 = dz2.sum(axis=0)
    # a_hat is symmetric, so (a_hat X).T grads flow back through a_hat itself
    dh1d = a_hat @ (dz2 @ params["W2"].T)
    dh1 = dh1d if mask is None else dh1d * mask
    dz1 = np.where(z1 > 0, dh1, 0)
    d_w1 = ah.T @ dz1
    d_b1 = dz1.sum(axis=0)
    return {"W1": d_w1, "b1": d_b1, "W2": d_w2, "b2": d_b2,
            "W_out": d_w_out, "b_out": d_b_out}


def mlp_forward(model: MlpBaseline, x: np.ndarray, train_mode: bool = False,
                rng: Optional[np.random.Generator] = None,
                dropout_rate: float = 0.5):
    """Per-record forward pass; dropout after the first hidden layer only,
    mirroring the graph model so regularization stays comparable."""
    params = model.params
    if x.ndim != 1 or x.shape[0] != params["W1"].shape[0]:
        raise ContractError(
            f"feature vector must have length {params['W1'].shape[0]}, got {x.shape}"
        )
    z1 = x @ params["W1"] + params["b1"]
    h1 = np.maximum(z1, 0)
    h1d, mask = dropout(h1, dropout_rate, rng, train_mode)
    z2 = h1d @ params["W2"] + params["b2"]
    h2 = np.maximum(z2, 0)
    z3 = h2 @ params["W_out"] + params["b_out"]
    p = softmax(z3)
    cache = {"x": x, "z1": z1, "mask": mask, "h1d": h1d, "z2": z2,
             "h2": h2, "p": p}
    return p, cache


def mlp_backward(model: MlpBaseline, cache: Optional[dict], y: np.ndarray) -> dict:
    if not cache or "p" not in cache:
        raise ContractError("backward requires the cache of a forward pass")
    params = model.params
    x, z1, mask, h1d, z2, h2, p = (cache[k] for k in
                                   ("x", "z1", "mask", "h1d", "z2", "h2", "p"))
    dz3 = p - y.astype(p.dtype)
    d_w_out = np.outer(h2, dz3)
    d_b_out = dz3
    dh2 = params["W_out"] @ dz3
    dz2 = np.where(z2 > 0, dh2, 0)
    d_w2 = np.outer(h1d, dz2)
    d_b2 = dz2
    dh1d = params["W2"] @ dz2
    dh1 = dh1d if mask is None else dh1d * mask
    dz1 = np.where(z1 > 0, dh1, 0)
    d_w1 = np.outer(x, dz1)
    d_b1 = dz1
    return {"W1": d_w1, "b1": d_b1, "W2": d_w2, "b2": d_b2,
            "W_out": d_w_out, "b_out": d_b_out}


# -- optimizer ---------------------------------------------------------------

def init_adam_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: dict, config: TrainConfig):
    """Standard Adam with bias correction; updates params/state in place."""
    state["t"] += 1
    t = state["t"]
    b1, b2 = config.beta1, config.beta2
    for key, p in params.items():
        g = grads[key].astype(p.dtype, copy=False)
        m = state["m"][key]
        v = state["v"][key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


# -- checkpoint --------------------------------------------------------------

def save_model(model, path) -> None:
    """Versioned binary checkpoint; round-trip is bit-exact for float32."""
    kind = "gcn" if isinstance(model, GcnModel) else "mlp"
    header = {
        "format_version": _CHECKPOINT_VERSION,
        "kind": kind,
        "n_classes": model.n_classes,
        "class_names": model.class_names,
        "shapes": {k: list(model.params[k].shape) for k in _TENSOR_ORDER},
        "scaler_ref": model.scaler_ref,
        "seed": model.seed,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for key in _TENSOR_ORDER:
            fh.write(np.ascontiguousarray(model.params[key], dtype="<f4").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise LoadError(f"{path}: bad magic {magic!r}")
        raw = fh.read(8)
        if len(raw) != 8:
            raise LoadError(f"{path}: truncated header")
        version, header_len = struct.unpack("<II", raw)
        if version != _CHECKPOINT_VERSION:
            raise LoadError(f"{path}: unsupported format_version {version}")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise LoadError(f"{path}: unreadable header: {exc}") from exc
        params = {}
        for key in _TENSOR_ORDER:
            shape = header["shapes"].get(key)
            if shape is None:
                raise LoadError(f"{path}: header missing shape for {key}")
            count = int(np.prod(shape))
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise LoadError(f"{path}: truncated tensor {key}")
            params[key] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    cls = GcnModel if header.get("kind", "gcn") == "gcn" else MlpBaseline
    return cls(
        params=params,
        class_names=list(header["class_names"]),
        seed=int(header.get("seed", 0)),
        scaler_ref=header.get("scaler_ref", ""),
    )
