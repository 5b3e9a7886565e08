"""Benchmark estimators: ALS-CPD decomposition and exhaustive-grid search.

The ALS-CPD baseline decomposes the same smoothed six-way tensor from a
random start and feeds the estimator's identification / column-ESPRIT /
gain-fit machinery. The exhaustive search replaces the iteratively shrunk
correlation search with one flat grid per mode, as the older grid-based
methods do.
"""

from __future__ import annotations

import numpy as np

from .channel import SystemConfig
from .esprit import element_esprit_column
from .estimator import (
    ChannelEstimate,
    IdentificationFailure,
    PathIndexSets,
    _assemble,
    _read_generators,
    group_cascaded,
    identify_direct,
)
from .probing import ProbingDesign
from .tensor_ops import AlsResult, Tensor, cp_als, vandermonde

__all__ = ["baseline_als_cpd", "baseline_exhaustive_cbs", "estimate_from_factors"]


def baseline_als_cpd(y_sps: Tensor, r: int, seed, max_iters: int = 300,
                     tol: float = 1e-15) -> AlsResult:
    """Random-initialized six-way ALS on the smoothed tensor."""
    if r < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    init = [rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
            for d in y_sps.dims]
    return cp_als(y_sps.array, init, max_iters=max_iters, tol=tol)


def _exhaustive_argmax(b_col: np.ndarray, t_n: np.ndarray, n_elements: int,
                       half_range: float, n_points: int) -> float:
    grid = np.linspace(-half_range, half_range, n_points)
    cand = t_n.conj().T @ vandermonde(n_elements, grid)
    corr = np.abs(b_col.conj() @ cand) / (np.linalg.norm(b_col)
                                          * np.linalg.norm(cand, axis=0))
    return float(grid[int(np.argmax(corr))])


def baseline_exhaustive_cbs(ce: ChannelEstimate, factors, y_sps: Tensor,
                            cfg: SystemConfig, design: ProbingDesign,
                            n_searches: int) -> ChannelEstimate:
    """Single flat correlation grid of ``n_searches`` points per (mode, column)."""
    if n_searches < 2:
        raise ValueError("need at least 2 grid points")
    if ce.failed:
        return ce
    u_ris = 2.0 * 2 * np.pi / cfg.lam * cfg.d_R
    u_bs = 2 * np.pi / cfg.lam * cfg.d_B
    spec = {
        2: (factors[1], design.t2, cfg.My, u_ris, ce.sets.cascaded),
        3: (factors[2], design.t3, cfg.Mz, u_ris, ce.sets.cascaded),
        4: (factors[3], design.t4, cfg.Ny, u_bs, range(len(ce.omega1))),
        5: (factors[4], design.t5, cfg.Nz, u_bs, range(len(ce.omega1))),
    }
    refined = {2: np.array(ce.omega2), 3: np.array(ce.omega3),
               4: np.array(ce.omega4), 5: np.array(ce.omega5)}
    for n, (cols, t_n, m, u, scope) in spec.items():
        for i in scope:
            refined[n][i] = _exhaustive_argmax(cols[:, i], t_n, m, u, n_searches)
    return _assemble(ce.stage + "+cbs", ce.sets, ce.omega1, refined[2], refined[3],
                     refined[4], refined[5], y_sps, cfg, design)


def estimate_from_factors(factors, y_sps: Tensor, cfg: SystemConfig,
                          design: ProbingDesign, n_direct: int, p: int, q: int,
                          search: str = "esprit",
                          n_searches: int = 10000) -> ChannelEstimate:
    """Identification plus parameter recovery from externally produced factors.

    Delays come from the circular mean of the two Vandermonde-mode column
    reads. ``search`` selects transformed-space ESPRIT ("esprit") or the
    flat exhaustive grid ("cbs") for modes 2-5.
    """
    try:
        direct, cascaded = identify_direct(factors[1], factors[2], n_direct)
        groups = group_cascaded(factors[3], factors[4], cascaded, p, q)
    except IdentificationFailure as fail:
        return ChannelEstimate(stage="baseline", failed=True, failure_reason=fail.reason)
    sets = PathIndexSets(direct, cascaded, groups)
    r = factors[0].shape[1]
    omega1 = np.empty(r)
    for i in range(r):
        za = np.exp(1j * element_esprit_column(factors[0][:, i]))
        zb = np.exp(1j * element_esprit_column(factors[5][:, i]))
        omega1[i] = np.angle(za + zb)
    omega2, omega3, omega4, omega5 = _read_generators(factors, sets, design, cfg)
    ce = _assemble("baseline", sets, omega1, omega2, omega3, omega4, omega5,
                   y_sps, cfg, design)
    if search == "cbs":
        ce = baseline_exhaustive_cbs(ce, factors, y_sps, cfg, design, n_searches)
    elif search != "esprit":
        raise ValueError(f"unknown search mode {search!r}")
    return ce
