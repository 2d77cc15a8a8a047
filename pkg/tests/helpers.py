"""Independent oracles shared by the unit and acceptance tests."""
import numpy as np

from mgnet.model import ModelParams, forward
from mgnet.training import loss


def random_sym_tensor(rng, n, m, s):
    x = rng.standard_normal((n, n, m, s))
    return 0.5 * (x + x.transpose(1, 0, 2, 3))


def random_a_hat(rng, n):
    a = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
    a = np.triu(a, 1)
    a = a + a.T + np.eye(n)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def slice_loop_gcn(h, a_hat, w):
    """relu(A H_ms W) computed one (m, s) slice at a time."""
    n, _, m_count, s_count = h.shape
    out = np.empty((n, w.shape[1], m_count, s_count))
    for m in range(m_count):
        for s in range(s_count):
            out[:, :, m, s] = np.maximum(a_hat @ h[:, :, m, s] @ w, 0.0)
    return out


def loop_loss(probs, labels, kind="cross_entropy", weight=0.1):
    total = 0.0
    for p, y in zip(probs, labels):
        term = -np.log(max(p[y], 1e-12))
        if kind == "cross_entropy_plus_smooth_l1":
            for j in range(len(p)):
                d = (1.0 if j == y else 0.0) - p[j]
                term += weight * (0.5 * d * d if abs(d) < 1 else abs(d) - 0.5)
        total += term
    return total / len(labels)


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    conc = sum(1 for p in pos for q in neg if p > q)
    ties = sum(1 for p in pos for q in neg if p == q)
    return 100.0 * ((conc + 0.5 * ties)) / (len(pos) * len(neg))


def total_loss(h0, a_hat, params, labels, kind, weight):
    return loss(forward(h0, a_hat, params, mode="eval").probs, labels, kind, weight)


def finite_difference(h0, a_hat, params: ModelParams, labels, name, index, kind="cross_entropy",
                      weight=0.1, step=1e-5):
    """Central difference of the mean loss w.r.t. one parameter entry."""
    named = {k: v.copy() for k, v in params.named().items()}
    vals = []
    for sign in (1.0, -1.0):
        pert = {k: v.copy() for k, v in named.items()}
        pert[name][index] += sign * step
        p = ModelParams.from_named(pert, params.dropout_rate)
        vals.append(total_loss(h0, a_hat, p, labels, kind, weight))
    return (vals[0] - vals[1]) / (2 * step)


def grad_agrees(analytic, numeric, rel=1e-5, abs_tol=1e-8):
    diff = abs(analytic - numeric)
    if diff < abs_tol:
        return True
    return diff / max(abs(analytic), abs(numeric)) < rel
