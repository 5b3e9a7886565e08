"""Independent brute-force oracles shared by unit and acceptance tests.

Everything here is deliberately loop-based index arithmetic, kept free of the
package's own vectorized kernels so the two paths stay independent.
"""

import itertools
import math

import numpy as np


def canonical_index(idx, dims):
    """Column-major linear index of a multi-index (mode 0 fastest)."""
    lin = 0
    stride = 1
    for i, d in zip(idx, dims):
        lin += i * stride
        stride *= d
    return lin


def naive_vec(arr):
    """Flatten by explicit canonical index arithmetic."""
    dims = arr.shape
    out = np.empty(math.prod(dims), dtype=complex)
    for idx in itertools.product(*[range(d) for d in dims]):
        out[canonical_index(idx, dims)] = arr[idx]
    return out


def naive_mode_unfold(arr, mode):
    """Enumerate mode-n fibers one by one."""
    dims = arr.shape
    other = [d for m, d in enumerate(dims) if m != mode]
    out = np.empty((dims[mode], math.prod(other)), dtype=complex)
    for col, rest in enumerate(itertools.product(*[range(d) for d in reversed(other)])):
        rest = rest[::-1]  # ascending remaining modes, first fastest
        # recompute col index independently to cross-check enumeration order
        assert col == canonical_index(rest, other)
        for i in range(dims[mode]):
            idx = list(rest)
            idx.insert(mode, i)
            out[i, col] = arr[tuple(idx)]
    return out


def naive_cp_reconstruct(weights, factors):
    """Elementwise sum over rank terms with explicit nested indexing."""
    dims = tuple(f.shape[0] for f in factors)
    out = np.zeros(dims, dtype=complex)
    for idx in itertools.product(*[range(d) for d in dims]):
        acc = 0.0 + 0.0j
        for r in range(len(weights)):
            term = weights[r]
            for n, i in enumerate(idx):
                term = term * factors[n][i, r]
            acc += term
        out[idx] = acc
    return out


def naive_khatri_rao(a, b):
    """Per-column Kronecker loop."""
    out = np.empty((a.shape[0] * b.shape[0], a.shape[1]), dtype=complex)
    for r in range(a.shape[1]):
        out[:, r] = np.kron(a[:, r], b[:, r])
    return out


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel_err(est, true):
    est = np.asarray(est, dtype=complex)
    true = np.asarray(true, dtype=complex)
    return np.abs(est - true) / np.abs(true)
