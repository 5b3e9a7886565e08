"""Dense complex N-way tensor algebra.

The canonical layout is column-major (Fortran order) over modes in ascending
order, fixed once here and relied on everywhere else:

* ``vec(T)`` stacks the mode-0 index fastest, so for a CP tensor
  ``vec(T) == khatri_rao_list([B_{N-1}, ..., B_0]) @ weights``.
* ``mode_unfold(T, n) == B_n @ diag(w) @ khatri_rao_list(reversed others).T``.
* ``unfold_multi(T, rows, cols)`` groups modes with the *last listed* mode
  fastest, matching the Kronecker-product row convention used by the
  shift-selection operators of the smoothing-based decomposition.

Tensors are immutable after construction so they can be shared freely
between concurrent trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "FactorSet",
    "AlsResult",
    "vandermonde",
    "khatri_rao",
    "khatri_rao_list",
    "mode_unfold",
    "fold",
    "vec",
    "unvec",
    "unfold_multi",
    "cp_reconstruct",
    "cp_vec",
    "spatial_smooth",
    "cp_als",
    "frob",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128, copy=True)
    arr.setflags(write=False)
    return arr


class Tensor:
    """Immutable dense complex tensor with explicit dimension metadata."""

    __slots__ = ("_array",)

    def __init__(self, array):
        arr = np.asarray(array, dtype=np.complex128)
        if arr.ndim < 1:
            raise ValueError("tensor must have at least one mode")
        if any(d < 1 for d in arr.shape):
            raise ValueError(f"all extents must be positive, got {arr.shape}")
        object.__setattr__(self, "_array", _freeze(arr))

    @classmethod
    def from_flat(cls, data, dims) -> "Tensor":
        """Build from canonical-layout (column-major) flat data."""
        data = np.asarray(data, dtype=np.complex128)
        dims = tuple(int(d) for d in dims)
        if data.size != math.prod(dims):
            raise ValueError(f"{data.size} values cannot fill dims {dims}")
        return cls(data.reshape(dims, order="F"))

    @property
    def array(self) -> np.ndarray:
        """Read-only ndarray view (shape == dims)."""
        return self._array

    @property
    def dims(self) -> tuple:
        return self._array.shape

    @property
    def order(self) -> int:
        return self._array.ndim

    @property
    def data(self) -> np.ndarray:
        """Canonical-layout flattening (mode-0 fastest)."""
        return self._array.ravel(order="F")

    def norm(self) -> float:
        return float(np.linalg.norm(self._array))

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"


@dataclass(frozen=True)
class FactorSet:
    """Weight vector plus one factor matrix per mode (CP model)."""

    weights: np.ndarray
    factors: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.complex128).ravel()
        facs = tuple(_freeze(np.atleast_2d(f)) for f in self.factors)
        if not facs:
            raise ValueError("need at least one factor")
        r = facs[0].shape[1]
        for n, f in enumerate(facs):
            if f.ndim != 2 or f.shape[1] != r:
                raise ValueError(f"factor {n} has shape {f.shape}, expected column count {r}")
        if w.size != r:
            raise ValueError(f"weights length {w.size} != rank {r}")
        object.__setattr__(self, "weights", _freeze(w))
        object.__setattr__(self, "factors", facs)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dims(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)


def vandermonde(n_rows: int, generators) -> np.ndarray:
    """Matrix with entries exp(j*(m-1)*omega_r), shape (n_rows, R)."""
    gen = np.atleast_1d(np.asarray(generators, dtype=float))
    m = np.arange(n_rows)[:, None]
    return np.exp(1j * m * gen[None, :])


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row (i, j) has the second index fastest."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def khatri_rao_list(mats) -> np.ndarray:
    mats = list(mats)
    out = mats[0]
    for m in mats[1:]:
        out = khatri_rao(out, m)
    return out


def mode_unfold(t: Tensor, mode: int) -> np.ndarray:
    """Mode-n unfolding: fibers of ``mode`` become the columns.

    For a CP tensor this equals
    ``B_n @ diag(w) @ khatri_rao_list([B_{N-1}, ..., B_{n+1}, B_{n-1}, ..., B_0]).T``.
    """
    if not 0 <= mode < t.order:
        raise ValueError(f"mode {mode} out of range for order-{t.order} tensor")
    arr = np.moveaxis(t.array, mode, 0)
    return arr.reshape(t.dims[mode], -1, order="F")


def fold(mat: np.ndarray, mode: int, dims) -> Tensor:
    """Inverse of :func:`mode_unfold`."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for dims {dims}")
    rest = dims[:mode] + dims[mode + 1:]
    mat = np.asarray(mat)
    if mat.shape != (dims[mode], math.prod(rest)):
        raise ValueError(f"matrix shape {mat.shape} does not match dims {dims} at mode {mode}")
    arr = mat.reshape((dims[mode],) + rest, order="F")
    return Tensor(np.moveaxis(arr, 0, mode))


def vec(t: Tensor) -> np.ndarray:
    """Canonical-layout flattening (mode-0 index fastest)."""
    return t.data


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """2-D inverse of :func:`vec`."""
    v = np.asarray(v).ravel()
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape {v.size} values to ({rows}, {cols})")
    return v.reshape(rows, cols, order="F")


def unfold_multi(t: Tensor, row_modes, col_modes) -> np.ndarray:
    """Generalized unfolding grouping ``row_modes`` x ``col_modes``.

    Within each group the *last listed* mode varies fastest, so for a CP
    tensor the result equals
    ``khatri_rao_list([B_r for r in row_modes]) @ diag(w)
    @ khatri_rao_list([B_c for c in col_modes]).T``.
    """
    row_modes = list(row_modes)
    col_modes = list(col_modes)
    if sorted(row_modes + col_modes) != list(range(t.order)):
        raise ValueError("row and column modes must partition all modes")
    perm = row_modes[::-1] + col_modes[::-1]
    arr = t.array.transpose(perm)
    n_rows = math.prod(t.dims[m] for m in row_modes)
    return arr.reshape(n_rows, -1, order="F")


def cp_vec(fs: FactorSet) -> np.ndarray:
    """vec of the CP tensor, computed directly from the factors."""
    return khatri_rao_list(fs.factors[::-1]) @ fs.weights


def cp_reconstruct(fs: FactorSet) -> Tensor:
    """Dense tensor with entries sum_r w_r prod_n factors_n[i_n, r]."""
    return Tensor.from_flat(cp_vec(fs), fs.dims)


def spatial_smooth(t: Tensor, k1: int) -> Tensor:
    """Split the leading mode K into overlapping (K1, K2) sub-modes.

    Output dims are (K1, *other, K2) with K2 = K - K1 + 1 and element law
    out[k1, ..., k2] = t[k1 + k2 - 1, ...] (1-based indices).
    """
    K = t.dims[0]
    if not 1 <= k1 <= K:
        raise ValueError(f"K1 = {k1} out of range 1..{K}")
    k2 = K - k1 + 1
    arr = t.array
    out = np.empty((k1,) + t.dims[1:] + (k2,), dtype=np.complex128)
    for i in range(k2):
        out[..., i] = arr[i:i + k1]
    return Tensor(out)


@dataclass(frozen=True)
class AlsResult:
    factors: tuple
    iterations: int
    converged: bool
    rel_changes: tuple


def _mttkrp(arr: np.ndarray, factors, n: int) -> np.ndarray:
    """unfold_n(arr) @ conj(khatri_rao of the other factors, reversed).

    Computed by sequential contraction instead of materializing the
    Khatri-Rao product.
    """
    letters = "abcdefgh"
    out = arr
    first = True
    for m in [m for m in range(len(factors)) if m != n][::-1]:
        if first:
            out = np.tensordot(out, factors[m].conj(), axes=([m], [0]))
            first = False
        else:
            idx = letters[:out.ndim - 1]
            pat = f"{idx}r,{letters[m]}r->{idx.replace(letters[m], '')}r"
            out = np.einsum(pat, out, factors[m].conj())
    return out


def cp_als(array: np.ndarray, factors0, max_iters: int, tol: float) -> AlsResult:
    """Plain alternating least squares on a dense N-way array.

    Weights are absorbed into the factors (unit weight vector). Each sweep
    updates every factor by its exact LS estimate, so the reconstruction
    residual is non-increasing. Convergence is declared when the relative
    change between successive reconstructions drops below ``tol``; the first
    reference reconstruction is the input array itself.
    """
    arr = np.asarray(array, dtype=np.complex128)
    t = Tensor(arr)
    factors = [np.array(f, dtype=np.complex128) for f in factors0]
    if tuple(f.shape[0] for f in factors) != arr.shape:
        raise ValueError("initial factor row counts do not match the array dims")
    n_modes = len(factors)
    r = factors[0].shape[1]
    grams = [f.conj().T @ f for f in factors]
    last = n_modes - 1
    unf_last = mode_unfold(t, last)
    prev_recon = unf_last       # reference 0 is the input itself
    changes = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        for n in range(n_modes - 1):
            mtt = _mttkrp(arr, factors, n)
            gram = np.ones((r, r), dtype=np.complex128)
            for m in range(n_modes):
                if m != n:
                    gram *= grams[m]
            factors[n] = mtt @ np.linalg.pinv(gram).conj()
            grams[n] = factors[n].conj().T @ factors[n]
        # last mode via the explicit Khatri-Rao so the same product also
        # yields the full reconstruction for the convergence check
        kr = khatri_rao_list(factors[:last][::-1])
        gram = np.ones((r, r), dtype=np.complex128)
        for m in range(last):
            gram *= grams[m]
        factors[last] = unf_last @ kr.conj() @ np.linalg.pinv(gram).conj()
        grams[last] = factors[last].conj().T @ factors[last]
        recon = factors[last] @ kr.T
        denom = np.linalg.norm(recon)
        change = np.linalg.norm(recon - prev_recon) / denom if denom > 0 else np.inf
        changes.append(float(change))
        prev_recon = recon
        if change < tol:
            converged = True
            break
    return AlsResult(tuple(map(_freeze, factors)), it, converged, tuple(changes))


def frob(x) -> float:
    """Frobenius norm of an ndarray or Tensor."""
    if isinstance(x, Tensor):
        return x.norm()
    return float(np.linalg.norm(np.asarray(x).ravel()))
