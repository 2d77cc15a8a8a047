"""Losses, hand-written backpropagation, Adam and the mini-batch training loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ShapeError
from .model import ForwardTrace, ModelParams, forward, init_params

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
LOSS_KINDS = ("cross_entropy", "cross_entropy_plus_smooth_l1")

BATCH_GRID = (2, 4, 6, 8, 10, 12)
DOUT_GRID = (20, 40, 60, 80, 100, 120)
K_GRID = (2, 4, 6, 8, 10, 12)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    epochs: int = 50
    batch_size: int = 8
    dropout_rate: float = 0.0
    n_layers: int = 1
    d_out: int = 20
    loss_kind: str = "cross_entropy"
    smooth_l1_weight: float = 0.1
    learn_alpha: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ConfigError(f"dropout must lie in [0, 0.5], got {self.dropout_rate}")
        if self.n_layers not in (1, 2, 3):
            raise ConfigError(f"layer count must be 1, 2 or 3, got {self.n_layers}")
        if self.d_out < 1:
            raise ConfigError(f"d_out must be >= 1, got {self.d_out}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.smooth_l1_weight < 0:
            raise ConfigError("smooth L1 weight must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_labels(probs: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise ShapeError(f"{labels.size} labels for {probs.shape[0]} predictions")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("labels must be 0 or 1")
    return labels.astype(np.intp)


def huber(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def loss(probs, labels, loss_kind: str = "cross_entropy", weight: float = 0.1) -> float:
    """Mean binary cross-entropy, optionally plus ``weight`` times a smooth-L1 term.

    The smooth-L1 term is the Huber loss (delta 1) of ``one_hot - probs`` summed
    over classes and averaged over subjects.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(probs, labels)
    s = probs.shape[0]
    p_true = probs[np.arange(s), labels]
    value = -np.mean(np.log(np.maximum(p_true, PROB_FLOOR)))
    if loss_kind == "cross_entropy_plus_smooth_l1":
        onehot = np.eye(probs.shape[1])[labels]
        value += weight * huber(onehot - probs).sum(axis=1).mean()
    elif loss_kind != "cross_entropy":
        raise ConfigError(f"unknown loss kind {loss_kind!r}")
    return float(value)


def logit_grad(probs, labels, loss_kind: str = "cross_entropy", weight: float = 0.1) -> np.ndarray:
    """Derivative of :func:`loss` with respect to the logits, shape (S, classes)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(probs, labels)
    s = probs.shape[0]
    onehot = np.eye(probs.shape[1])[labels]
    g = (probs - onehot) / s
    if loss_kind == "cross_entropy_plus_smooth_l1":
        d = onehot - probs
        dhuber = np.where(np.abs(d) < 1.0, d, np.sign(d))
        # dL/dp = -weight/S * huber'(onehot - p); pull back through softmax
        gp = -weight / s * dhuber
        g = g + probs * (gp - np.sum(gp * probs, axis=1, keepdims=True))
    return g


@dataclass
class Gradients:
    layers: list[np.ndarray]
    alpha: np.ndarray
    fcn_w: np.ndarray
    fcn_b: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        out = {f"W{i}": w for i, w in enumerate(self.layers)}
        out["alpha"] = self.alpha
        out["fcn_w"] = self.fcn_w
        out["fcn_b"] = self.fcn_b
        return out


def backward(trace: ForwardTrace, params: ModelParams, labels, loss_kind: str = "cross_entropy",
             weight: float = 0.1, learn_alpha: bool = True) -> Gradients:
    """Exact gradients of the mean loss for the forward pass recorded in ``trace``.

    With ``learn_alpha=False`` the modality weights are treated as constants and
    their gradient is returned as zeros.
    """
    dz = logit_grad(trace.probs, labels, loss_kind, weight)
    g_fcn_w = dz.T @ trace.features
    g_fcn_b = dz.sum(axis=0)

    n, d_out, s = trace.pooled.shape
    dfeat = dz @ params.fcn_w
    dpooled = np.moveaxis(dfeat.reshape(s, n, d_out), 0, 2)
    if trace.mask is not None:
        dpooled = dpooled * trace.mask

    h_last = trace.acts[-1]
    if learn_alpha:
        g_alpha = np.einsum("ids,idms->m", dpooled, h_last)
    else:
        g_alpha = np.zeros_like(params.alpha)
    dh = np.einsum("ids,m->idms", dpooled, params.alpha)

    a_hat = trace.a_hat
    g_layers = [None] * params.n_layers
    for layer in reversed(range(params.n_layers)):
        # relu'(0) is taken as 0
        dpre = dh * (trace.pre[layer] > 0)
        ah = np.einsum("ij,jdms->idms", a_hat.T, trace.acts[layer], optimize=True)
        g_layers[layer] = np.einsum("idms,iems->de", ah, dpre, optimize=True)
        if layer > 0:
            dah = np.einsum("iems,de->idms", dpre, params.layers[layer], optimize=True)
            dh = np.einsum("ij,jdms->idms", a_hat, dah, optimize=True)
    return Gradients(layers=g_layers, alpha=g_alpha, fcn_w=g_fcn_w, fcn_b=g_fcn_b)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, lr: float = 0.001, **kw) -> "AdamState":
        named = params.named()
        return cls(m={k: np.zeros_like(v) for k, v in named.items()},
                   v={k: np.zeros_like(v) for k, v in named.items()}, lr=lr, **kw)


def adam_step(params: ModelParams, grads: Gradients, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state, inputs untouched."""
    g_named = grads.named()
    p_named = params.named()
    for name, g in g_named.items():
        if g.shape != p_named[name].shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, parameter has {p_named[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for name, theta in p_named.items():
        g = g_named[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(m=new_m, v=new_v, step=t, lr=state.lr, beta1=b1, beta2=b2, eps=state.eps)
    return ModelParams.from_named(new_p, params.dropout_rate), new_state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def _metrics(h0, a_hat, params, labels, cfg: TrainConfig) -> tuple[float, float]:
    probs = forward(h0, a_hat, params, mode="eval").probs
    pred = (probs[:, 1] > probs[:, 0]).astype(int)
    return (loss(probs, labels, cfg.loss_kind, cfg.smooth_l1_weight),
            100.0 * float(np.mean(pred == labels)))


def train(h0, labels, a_hat, train_idx, val_idx, cfg: TrainConfig, rng_seed=None) -> TrainResult:
    """Fit a model on ``h0[..., train_idx]`` and keep the epoch with the best validation accuracy.

    Epochs tied on validation accuracy are ranked by validation loss, then by
    epoch number (earlier wins).

    ``h0`` is the projected cohort (N x N x M x S); ``rng_seed`` defaults to
    ``cfg.seed`` and may be any value accepted by ``numpy.random.SeedSequence``.
    """
    labels = np.asarray(labels).astype(np.intp)
    train_idx = np.asarray(train_idx, dtype=np.intp)
    val_idx = np.asarray(val_idx, dtype=np.intp)
    if train_idx.size == 0:
        raise DataError("training split is empty")
    if val_idx.size == 0:
        raise DataError("validation split is empty")
    batch = cfg.batch_size
    if batch > train_idx.size:
        log.warning("batch size %d exceeds %d training subjects; clamping", batch, train_idx.size)
        batch = int(train_idx.size)

    seq = np.random.SeedSequence(cfg.seed if rng_seed is None else rng_seed)
    init_ss, shuffle_ss, drop_ss = seq.spawn(3)
    n, _, m, _ = h0.shape
    params = init_params(n, m, cfg.n_layers, cfg.d_out, cfg.dropout_rate, np.random.default_rng(init_ss))
    state = AdamState.zeros_like(params, lr=cfg.lr)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)

    # a single modality has nothing to pool; its weight would only rescale the head
    learn_alpha = cfg.learn_alpha and m > 1
    h_train, y_train = h0[..., train_idx], labels[train_idx]
    h_val, y_val = h0[..., val_idx], labels[val_idx]

    result = TrainResult(params=params.copy())
    best_key = (-1.0, 0.0)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(train_idx.size)
        for start in range(0, order.size, batch):
            b = order[start:start + batch]
            trace = forward(h_train[..., b], a_hat, params, mode="train", rng=drop_rng)
            grads = backward(trace, params, y_train[b], cfg.loss_kind, cfg.smooth_l1_weight,
                             learn_alpha=learn_alpha)
            params, state = adam_step(params, grads, state)
        tr_loss, tr_acc = _metrics(h_train, a_hat, params, y_train, cfg)
        va_loss, va_acc = _metrics(h_val, a_hat, params, y_val, cfg)
        rec = EpochRecord(epoch, tr_loss, tr_acc, va_loss, va_acc)
        result.log.append(rec)
        log.debug("epoch %d %s", epoch, rec)
        key = (va_acc, -va_loss)
        if key > best_key:
            best_key = key
            result.params = params.copy()
            result.best_epoch = epoch
    return result
