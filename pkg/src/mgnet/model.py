"""Multiplex GCN forward pass: tensorized propagation, modality pooling, softmax head."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import as_matrix, as_tensor4

N_CLASSES = 2


@dataclass
class ModelParams:
    layers: list[np.ndarray]
    alpha: np.ndarray
    fcn_w: np.ndarray  # (n_classes, N * D_out)
    fcn_b: np.ndarray  # (n_classes,)
    dropout_rate: float = 0.0

    def __post_init__(self):
        if not 1 <= len(self.layers) <= 3:
            raise ConfigError(f"layer count must be 1, 2 or 3, got {len(self.layers)}")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ConfigError(f"dropout rate must lie in [0, 0.5], got {self.dropout_rate}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeError(f"layer widths do not chain: {a.shape} then {b.shape}")
        if self.alpha.ndim != 1:
            raise ShapeError("alpha must be a vector")
        if self.fcn_b.shape != (self.fcn_w.shape[0],):
            raise ShapeError(f"fcn bias {self.fcn_b.shape} does not match weights {self.fcn_w.shape}")
        for name, v in self.named().items():
            if not np.all(np.isfinite(v)):
                raise ShapeError(f"parameter {name} has non-finite entries")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_nodes(self) -> int:
        return self.layers[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.layers[-1].shape[1]

    @property
    def n_modalities(self) -> int:
        return self.alpha.shape[0]

    def named(self) -> dict[str, np.ndarray]:
        """Parameters by name, in a fixed order (W0.., alpha, fcn_w, fcn_b)."""
        out = {f"W{i}": w for i, w in enumerate(self.layers)}
        out["alpha"] = self.alpha
        out["fcn_w"] = self.fcn_w
        out["fcn_b"] = self.fcn_b
        return out

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], dropout_rate: float = 0.0) -> "ModelParams":
        n_layers = sum(1 for k in arrays if k.startswith("W"))
        return cls(
            layers=[np.array(arrays[f"W{i}"], dtype=np.float64) for i in range(n_layers)],
            alpha=np.array(arrays["alpha"], dtype=np.float64),
            fcn_w=np.array(arrays["fcn_w"], dtype=np.float64),
            fcn_b=np.array(arrays["fcn_b"], dtype=np.float64),
            dropout_rate=dropout_rate,
        )

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: v.copy() for k, v in self.named().items()}, self.dropout_rate)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(n_nodes: int, n_modalities: int, n_layers: int = 1, d_out: int = 20,
                dropout_rate: float = 0.0, rng=None, n_classes: int = N_CLASSES) -> ModelParams:
    """Seeded initialization; hidden layers use width ``d_out`` and alpha starts uniform."""
    rng = np.random.default_rng(rng)
    widths = [n_nodes] + [d_out] * n_layers
    layers = [glorot_uniform(rng, a, b, (a, b)) for a, b in zip(widths, widths[1:])]
    flat = n_nodes * d_out
    fcn_w = glorot_uniform(rng, flat, n_classes, (n_classes, flat))
    return ModelParams(
        layers=layers,
        alpha=np.full(n_modalities, 1.0 / n_modalities),
        fcn_w=fcn_w,
        fcn_b=np.zeros(n_classes),
        dropout_rate=dropout_rate,
    )


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def propagate(h: np.ndarray, a_hat: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pre-activation ``h x1 A^T x2 W^T``, i.e. ``A H_ms W`` for every slice."""
    ah = np.einsum("ij,jdms->idms", a_hat.T, h, optimize=True)
    return np.einsum("idms,de->iems", ah, w, optimize=True)


def gcn_layer(h, a_hat, w) -> np.ndarray:
    h = as_tensor4(h, square=False)
    a_hat = as_matrix(a_hat, "normalized adjacency")
    w = as_matrix(w, "layer weight")
    if a_hat.shape != (h.shape[0], h.shape[0]):
        raise ShapeError(f"adjacency {a_hat.shape} does not match {h.shape[0]} nodes")
    if w.shape[0] != h.shape[1]:
        raise ShapeError(f"weight has {w.shape[0]} rows but features have width {h.shape[1]}")
    return relu(propagate(h, a_hat, w))


def modality_pool(h, alpha) -> np.ndarray:
    """Weighted sum over the modality axis: (N, D, M, S) -> (N, D, S)."""
    h = np.asarray(h, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if h.ndim != 4:
        raise ShapeError(f"expected a 4-way tensor, got shape {h.shape}")
    if alpha.shape != (h.shape[2],):
        raise ShapeError(f"alpha has {alpha.size} entries but there are {h.shape[2]} modalities")
    return np.einsum("idms,m->ids", h, alpha)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def fcn_softmax(f, fcn_w, fcn_b) -> np.ndarray:
    """Class probabilities for one flattened embedding (vector) or a batch (rows)."""
    f = np.asarray(f, dtype=np.float64)
    return softmax(f @ np.asarray(fcn_w).T + np.asarray(fcn_b))


def flatten_subjects(pooled: np.ndarray) -> np.ndarray:
    """(N, D, S) -> (S, N*D), row-major per subject."""
    return np.ascontiguousarray(np.moveaxis(pooled, 2, 0)).reshape(pooled.shape[2], -1)


@dataclass
class ForwardTrace:
    a_hat: np.ndarray
    pre: list[np.ndarray]  # pre-activations per layer, (N, D_l+1, M, S)
    acts: list[np.ndarray]  # acts[0] is the input; acts[l+1] = relu(pre[l])
    pooled: np.ndarray  # (N, D_out, S)
    mask: np.ndarray | None  # inverted-dropout multipliers on pooled, or None
    features: np.ndarray  # (S, N*D_out) after dropout
    logits: np.ndarray
    probs: np.ndarray
    alpha: np.ndarray = field(repr=False, default=None)


def forward(h0, a_hat, params: ModelParams, mode: str = "eval", rng=None) -> ForwardTrace:
    """Run the network on projected input ``h0`` (N x N x M x S).

    In ``train`` mode dropout with inverted scaling is applied to the pooled
    embedding; ``eval`` is deterministic and ignores ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    h = as_tensor4(h0, square=False)
    a_hat = as_matrix(a_hat, "normalized adjacency")
    n, _, m, _ = h.shape
    if a_hat.shape != (n, n):
        raise ShapeError(f"adjacency {a_hat.shape} does not match {n} nodes")
    if m != params.n_modalities:
        raise ShapeError(f"input has {m} modalities but alpha has {params.n_modalities}")

    pre, acts = [], [h]
    for i, w in enumerate(params.layers):
        if w.shape[0] != h.shape[1]:
            raise ShapeError(f"layer {i}: weight has {w.shape[0]} rows, input width is {h.shape[1]}")
        z = propagate(h, a_hat, w)
        h = relu(z)
        pre.append(z)
        acts.append(h)

    pooled = modality_pool(h, params.alpha)
    feats = flatten_subjects(pooled)
    if feats.shape[1] != params.fcn_w.shape[1]:
        raise ShapeError(
            f"FCN expects {params.fcn_w.shape[1]} inputs, embedding has {feats.shape[1]}")
    mask = None
    if mode == "train" and params.dropout_rate > 0:
        rng = np.random.default_rng(rng)
        keep = 1.0 - params.dropout_rate
        mask = (rng.random(pooled.shape) < keep) / keep
        feats = flatten_subjects(pooled * mask)
    logits = feats @ params.fcn_w.T + params.fcn_b
    return ForwardTrace(a_hat=a_hat, pre=pre, acts=acts, pooled=pooled, mask=mask,
                        features=feats, logits=logits, probs=softmax(logits), alpha=params.alpha)


def predict_proba(h0, a_hat, params: ModelParams) -> np.ndarray:
    return forward(h0, a_hat, params, mode="eval").probs
