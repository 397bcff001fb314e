"""Elementary symmetric polynomials and the Sum Hessian operator.

The operator of interest acts on an eigenvalue vector lam in R^n as

    S_k(lam) = sigma_k(lam) + alpha * sigma_{k-1}(lam),    alpha > 0,

where sigma_j is the j-th elementary symmetric polynomial.  Everything
here is a pure function; all evaluators accept a trailing axis of
eigenvalues, so they broadcast over batches of spectra (used heavily by
the grid solver).

Boundary conventions, forced by the classical deletion identities:
sigma_j = 0 for j < 0 and for j > (number of entries); sigma_0 = 1.
Deleted polynomials sigma_j(lam|p), sigma_j(lam|pq) are computed by
re-running the coefficient recurrence on the reduced vector.  Dividing
the characteristic coefficients by (1 + t*lam_p) is cheaper but unstable
when lam_p is close to zero, so it is never done here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 16


@dataclass(frozen=True)
class Spectrum:
    """An eigenvalue vector lam in R^n, n <= 16, stored in caller order."""

    values: tuple[float, ...]

    def __init__(self, values: Iterable[float]):
        vals = tuple(float(v) for v in values)
        if not 1 <= len(vals) <= MAX_DIM:
            raise ValueError(f"spectrum length must be in [1, {MAX_DIM}], got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("spectrum entries must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    def sorted_desc(self) -> "Spectrum":
        """Entries in descending order; storage order is left untouched."""
        return Spectrum(sorted(self.values, reverse=True))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype or float)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SumHessianOp:
    """The triple (n, k, alpha) defining S_k = sigma_k + alpha*sigma_{k-1}."""

    n: int
    k: int
    alpha: float

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"order k must satisfy 1 <= k <= n, got k={self.k}, n={self.n}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def _as_array(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] > MAX_DIM:
        raise ValueError(f"spectrum length exceeds {MAX_DIM}")
    return arr


def sigma_all(lam) -> np.ndarray:
    """All elementary symmetric values [sigma_0, ..., sigma_n] of lam.

    Accepts a Spectrum or an array of shape (..., n); returns (..., n+1).
    Uses the one-pass coefficient accumulation of prod_i (1 + t*lam_i).
    """
    arr = _as_array(lam)
    n = arr.shape[-1]
    out = np.zeros(arr.shape[:-1] + (n + 1,), dtype=float)
    out[..., 0] = 1.0
    for i in range(n):
        li = arr[..., i]
        for j in range(min(i + 1, n), 0, -1):
            out[..., j] += li * out[..., j - 1]
    return out


def sigma(lam, j: int) -> np.ndarray | float:
    """sigma_j(lam) with the boundary conventions sigma_{j<0} = 0,
    sigma_0 = 1, sigma_{j>n} = 0."""
    arr = _as_array(lam)
    n = arr.shape[-1]
    if j < 0 or j > n:
        z = np.zeros(arr.shape[:-1])
        return float(z) if z.ndim == 0 else z
    val = sigma_all(arr)[..., j]
    return float(val) if val.ndim == 0 else val


def _drop(arr: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    keep = [i for i in range(arr.shape[-1]) if i not in indices]
    return arr[..., keep]


def sigma_deleted(lam, drop: Sequence[int], j: int) -> np.ndarray | float:
    """sigma_j of lam with the entries at `drop` removed (0, 1 or 2 indices)."""
    arr = _as_array(lam)
    n = arr.shape[-1]
    idx = tuple(drop)
    if len(idx) != len(set(idx)):
        raise ValueError(f"drop indices must be distinct, got {idx}")
    if len(idx) > 2:
        raise ValueError(f"at most two deletions are supported, got {len(idx)}")
    for i in idx:
        if not 0 <= i < n:
            raise ValueError(f"drop index {i} out of range for n={n}")
    return sigma(_drop(arr, idx), j)


def s_value(lam, m: int, alpha: float) -> np.ndarray | float:
    """sigma_m + alpha*sigma_{m-1}.  alpha=0 gives plain sigma_m."""
    val = sigma(lam, m)
    if alpha != 0.0:
        val = val + alpha * sigma(lam, m - 1)
    return float(val) if np.ndim(val) == 0 else val


def s_gradient(lam, k: int, alpha: float) -> np.ndarray:
    """Eigenvalue gradient: component p is S_{k-1}(lam|p).  Shape (..., n)."""
    arr = _as_array(lam)
    n = arr.shape[-1]
    out = np.empty_like(arr)
    for p in range(n):
        out[..., p] = s_value(_drop(arr, (p,)), k - 1, alpha)
    return out


def s_hessian(lam, k: int, alpha: float) -> np.ndarray:
    """Eigenvalue Hessian: entry (p, q) is S_{k-2}(lam|pq) for p != q,
    zero on the diagonal.  Shape (..., n, n)."""
    arr = _as_array(lam)
    n = arr.shape[-1]
    out = np.zeros(arr.shape[:-1] + (n, n), dtype=float)
    for p in range(n):
        for q in range(p + 1, n):
            v = s_value(_drop(arr, (p, q)), k - 2, alpha)
            out[..., p, q] = v
            out[..., q, p] = v
    return out


def S(op: SumHessianOp, lam, m: int) -> np.ndarray | float:
    """S_m(lam) = sigma_m + alpha*sigma_{m-1} for the given operator."""
    return s_value(lam, m, op.alpha)


def S_first_derivative(op: SumHessianOp, lam) -> np.ndarray:
    """d S_k / d lam_p = S_{k-1}(lam|p) for p = 1..n."""
    return s_gradient(lam, op.k, op.alpha)


def S_second_derivative(op: SumHessianOp, lam) -> np.ndarray:
    """d^2 S_k / d lam_p d lam_q = S_{k-2}(lam|pq), zero when p = q."""
    return s_hessian(lam, op.k, op.alpha)


def identity_residuals(op: SumHessianOp, lam) -> np.ndarray:
    """Absolute residuals of the three deletion identities.

    (iii)  S_k = lam_i*S_{k-1}(lam|i) + S_k(lam|i)          (max over i)
    (iv)   sum_i S_k(lam|i) = (n-k)*S_k + alpha*sigma_{k-1}
    (v)    sum_i lam_i*S_{k-1}(lam|i) = k*S_k - alpha*sigma_{k-1}

    Returns shape (..., 3).  Used only by tests and the CLI suite.
    """
    arr = _as_array(lam)
    n, k, alpha = arr.shape[-1], op.k, op.alpha
    sk = s_value(arr, k, alpha)
    sk1 = sigma(arr, k - 1)
    grad = s_gradient(arr, k, alpha)  # S_{k-1}(lam|i)
    deleted_k = np.empty_like(arr)
    for i in range(n):
        deleted_k[..., i] = s_value(_drop(arr, (i,)), k, alpha)
    r3 = np.abs(arr * grad + deleted_k - np.asarray(sk)[..., None]).max(axis=-1)
    r4 = np.abs(deleted_k.sum(axis=-1) - ((n - k) * sk + alpha * sk1))
    r5 = np.abs((arr * grad).sum(axis=-1) - (k * sk - alpha * sk1))
    return np.stack([np.asarray(r3), np.asarray(r4), np.asarray(r5)], axis=-1)
