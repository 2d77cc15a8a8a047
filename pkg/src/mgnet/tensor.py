"""Dense 4-way arrays: validation, mode-n products, unfoldings, symmetric eigensolver.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 laid out as
``(N, N, M, S)``: node x node x modality x subject.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericalError, ShapeError


def as_tensor4(x, square: bool = True) -> np.ndarray:
    """Validate and return ``x`` as a float64 4-way array."""
    t = np.asarray(x, dtype=np.float64)
    if t.ndim != 4:
        raise ShapeError(f"expected a 4-way tensor, got {t.ndim} dims {t.shape}")
    if 0 in t.shape:
        raise ShapeError(f"tensor has a zero dimension: {t.shape}")
    if square and t.shape[0] != t.shape[1]:
        raise ShapeError(f"connectivity slices must be square, got {t.shape[0]}x{t.shape[1]}")
    if not np.all(np.isfinite(t)):
        raise NumericalError("tensor contains NaN or Inf entries")
    return t


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if 0 in a.shape:
        raise ShapeError(f"{name} has a zero dimension: {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"{name} contains NaN or Inf entries")
    return a


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """Contract ``t`` along ``mode`` with the columns of ``m``.

    ``result[..., j, ...] = sum_k m[j, k] * t[..., k, ...]``; the output keeps
    the axis order of ``t`` with ``dims[mode]`` replaced by ``m.shape[0]``.
    """
    t = as_tensor4(t, square=False)
    m = as_matrix(m)
    if mode not in (0, 1, 2):
        raise ShapeError(f"mode must be 0, 1 or 2, got {mode}")
    if m.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"mode-{mode} product: matrix has {m.shape[1]} columns but tensor dim {mode} is {t.shape[mode]}"
        )
    out = np.tensordot(m, t, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def unfold(t, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization: fibers as rows' entries, remaining modes ascending."""
    t = as_tensor4(t, square=False)
    if mode not in (0, 1, 2, 3):
        raise ShapeError(f"mode must be in 0..3, got {mode}")
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def refold(mat, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    shape = tuple(int(d) for d in shape)
    if len(shape) != 4 or 0 in shape:
        raise ShapeError(f"invalid target shape {shape}")
    if mode not in (0, 1, 2, 3):
        raise ShapeError(f"mode must be in 0..3, got {mode}")
    mat = np.asarray(mat, dtype=np.float64)
    rest = tuple(d for i, d in enumerate(shape) if i != mode)
    if mat.shape != (shape[mode], int(np.prod(rest))):
        raise ShapeError(f"cannot refold {mat.shape} into {shape} along mode {mode}")
    return np.moveaxis(mat.reshape((shape[mode],) + rest), 0, mode)


def fix_signs(v: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive (first index wins ties)."""
    v = v.copy()
    idx = np.argmax(np.abs(v), axis=0)
    flip = v[idx, np.arange(v.shape[1])] < 0
    v[:, flip] *= -1.0
    return v


def sym_eig(g) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending
    order and eigenvector columns sign-normalized by :func:`fix_signs`.
    """
    g = as_matrix(g, "symmetric matrix")
    if g.shape[0] != g.shape[1]:
        raise ShapeError(f"sym_eig needs a square matrix, got {g.shape}")
    scale = max(np.abs(g).max(), np.finfo(float).tiny)
    if np.abs(g - g.T).max() > 1e-10 * scale:
        raise ShapeError("sym_eig input is not symmetric")
    # LAPACK reads one triangle only; symmetrize so both halves count
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    order = np.argsort(-w, kind="stable")
    return w[order], fix_signs(v[:, order])
