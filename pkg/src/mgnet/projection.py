"""Cross-modality projection: HOSVD factors of the cohort tensor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .tensor import as_tensor4, mode_n_product, sym_eig, unfold

DEFAULT_TAU = 0.95


@dataclass(frozen=True)
class ProjectionPair:
    u1: np.ndarray
    u2: np.ndarray
    singular_values: np.ndarray
    trunc_rank: int
    energy_threshold: float

    @property
    def n_nodes(self) -> int:
        return self.u1.shape[0]


def energy_rank(singular_values, tau: float) -> int:
    """Smallest k whose leading k squared singular values hold at least ``tau`` of the total."""
    s2 = np.asarray(singular_values, dtype=np.float64) ** 2
    total = s2.sum()
    if total <= 0:
        raise NumericalError("all singular values are zero; energy truncation is undefined")
    frac = np.cumsum(s2) / total
    # cumsum can land a hair below 1.0 at full rank
    frac[-1] = 1.0
    return int(np.searchsorted(frac, tau, side="left") + 1)


def solve_projections(x, energy_threshold: float = DEFAULT_TAU) -> ProjectionPair:
    """Mode-0 and mode-1 HOSVD factors of ``x`` (N x N x M x S) with energy truncation."""
    x = as_tensor4(x)
    if not 0.0 < energy_threshold <= 1.0:
        raise ConfigError(f"energy threshold must lie in (0, 1], got {energy_threshold}")
    if not np.any(x):
        raise NumericalError("cohort tensor is all zeros; projection is degenerate")
    x0 = unfold(x, 0)
    lam, u1 = sym_eig(x0 @ x0.T)
    x1 = unfold(x, 1)
    _, u2 = sym_eig(x1 @ x1.T)
    # eigenvalues at rounding level of the largest count as exact zeros
    lam = np.where(lam > lam[0] * lam.size * np.finfo(float).eps, lam, 0.0)
    sv = np.sqrt(lam)
    r = energy_rank(sv, energy_threshold)
    return ProjectionPair(u1=u1, u2=u2, singular_values=sv, trunc_rank=r,
                          energy_threshold=float(energy_threshold))


def _check_conform(x: np.ndarray, p: ProjectionPair):
    n = x.shape[0]
    if p.u1.shape != (n, n) or p.u2.shape != (n, n):
        raise ShapeError(f"projection factors {p.u1.shape}/{p.u2.shape} do not conform to {n} nodes")


def project(x, p: ProjectionPair) -> np.ndarray:
    """Coefficient tensor: every slice becomes ``U1^T X_ms U2``."""
    x = as_tensor4(x)
    _check_conform(x, p)
    return mode_n_product(mode_n_product(x, p.u1.T, 0), p.u2.T, 1)


def project_nodes(x, p: ProjectionPair) -> np.ndarray:
    """First-layer input ``U1^T X_ms`` (U2 is absorbed by the first weight matrix)."""
    x = as_tensor4(x)
    _check_conform(x, p)
    return mode_n_product(x, p.u1.T, 0)


def reconstruct(c, p: ProjectionPair, rank: int | None = None) -> np.ndarray:
    """Map coefficients back, ``U1 C U2^T`` per slice, optionally keeping only ``rank`` factor columns."""
    c = as_tensor4(c)
    _check_conform(c, p)
    u1, u2 = p.u1, p.u2
    if rank is not None:
        u1, u2 = u1[:, :rank], u2[:, :rank]
        c = c[:rank, :rank]
    return mode_n_product(mode_n_product(c, u1, 0), u2, 1)


def truncated_u1(p: ProjectionPair) -> np.ndarray:
    """Node descriptors for graph construction: the leading ``trunc_rank`` columns of U1."""
    return p.u1[:, : p.trunc_rank].copy()
