"""Dense tensor primitives: contraction, truncated SVD, Hermitian exp.

Thin, contract-checked wrappers around numpy's LAPACK bindings.  All
tensors are plain float64 ndarrays.
"""

from __future__ import annotations

import dataclasses

import numpy as np

__all__ = ["SvdResult", "contract", "svd_truncate", "hermitian_exp"]


@dataclasses.dataclass
class SvdResult:
    """Truncated factorization m ~= left @ diag(singular_values) @ right.

    discarded_weight is the truncated share of the squared Frobenius
    norm, sum(dropped s^2) / sum(all s^2).
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return len(self.singular_values)


def contract(a: np.ndarray, b: np.ndarray, axis_pairs) -> np.ndarray:
    """Contract tensors over the given (axis_of_a, axis_of_b) pairs.

    Output axes are the free axes of a followed by the free axes of b,
    each in original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    pairs = list(axis_pairs)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValueError(f"repeated axis in contraction: {pairs!r}")
    for ia, ib in pairs:
        if not (-a.ndim <= ia < a.ndim) or not (-b.ndim <= ib < b.ndim):
            raise ValueError(f"axis pair ({ia}, {ib}) out of range for shapes "
                             f"{a.shape} x {b.shape}")
        if a.shape[ia] != b.shape[ib]:
            raise ValueError(f"extent mismatch on axes ({ia}, {ib}): "
                             f"{a.shape[ia]} != {b.shape[ib]}")
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def svd_truncate(m: np.ndarray, chi_max: int, cutoff: float = 0.0) -> SvdResult:
    """SVD of a matrix keeping at most chi_max singular values.

    Also drops any singular value with s_i / s_0 <= cutoff (relative
    cutoff; exact zeros always go).  At least one value is kept.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"svd_truncate needs a matrix, got shape {m.shape}")
    if chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd_truncate input contains non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    total = float(np.sum(s ** 2))
    if s[0] > 0:
        keep = int(np.count_nonzero(s / s[0] > cutoff))
    else:
        keep = 1
    keep = max(1, min(chi_max, keep))
    dropped = float(np.sum(s[keep:] ** 2))
    weight = dropped / total if total > 0 else 0.0
    return SvdResult(left=u[:, :keep], singular_values=s[:keep],
                     right=vt[:keep], discarded_weight=weight)


def hermitian_exp(h: np.ndarray, scale: float) -> np.ndarray:
    """exp(scale * h) for a real symmetric matrix via eigendecomposition."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"hermitian_exp needs a square matrix, got shape {h.shape}")
    norm = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    asym = float(np.max(np.abs(h - h.T))) if h.size else 0.0
    if asym > 1e-12 * norm:
        raise ValueError(f"matrix is not symmetric: max asymmetry {asym:.3e}")
    w, v = np.linalg.eigh(0.5 * (h + h.T))
    return (v * np.exp(scale * w)) @ v.T
