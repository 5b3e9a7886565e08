"""Accuracy metrics: sorted RMSE contributions and signal-tensor NMSE."""

from __future__ import annotations

import math

import numpy as np

from .channel import InterestParams, SystemConfig
from .probing import ProbingDesign, factor_set_from_params
from .tensor_ops import cp_vec

__all__ = ["rmse_sorted", "sorted_sq_error", "nmse", "aggregate_rmse"]


def sorted_sq_error(truth, est) -> float:
    """Squared norm of the difference after sorting both vectors ascending."""
    truth = np.sort(np.asarray(truth, dtype=float).ravel())
    est = np.sort(np.asarray(est, dtype=float).ravel())
    if truth.size != est.size:
        raise ValueError(f"length mismatch: {truth.size} vs {est.size}")
    return float(np.sum((truth - est) ** 2))


def rmse_sorted(truth, est) -> float:
    """Per-trial sorted error norm (the RMSE contribution of one trial)."""
    return math.sqrt(sorted_sq_error(truth, est))


def aggregate_rmse(sq_errors) -> float:
    """RMSE over trials: sqrt of the mean per-trial squared contribution."""
    sq_errors = np.asarray(list(sq_errors), dtype=float)
    if sq_errors.size == 0:
        return float("nan")
    return math.sqrt(float(np.mean(sq_errors)))


def nmse(truth_params: InterestParams, est_params: InterestParams,
         cfg: SystemConfig, design: ProbingDesign) -> float:
    """Normalized squared Frobenius error of the rebuilt signal tensor.

    Both tensors are regenerated noise-free through the same probing design;
    the ratio is permutation-free, so no alignment is needed.
    """
    v_true = cp_vec(factor_set_from_params(truth_params, cfg, design))
    v_est = cp_vec(factor_set_from_params(est_params, cfg, design))
    denom = float(np.vdot(v_true, v_true).real)
    if denom == 0.0:
        raise ValueError("truth tensor has zero norm")
    diff = v_est - v_true
    return float(np.vdot(diff, diff).real) / denom
