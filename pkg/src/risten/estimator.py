"""Three-stage channel-parameter recovery from VSCPD factors.

Stage I identifies direct vs cascaded columns (variance principle), groups
cascaded columns by shared RIS-BS sub-path (similarity principle), reads all
generators algebraically (column-wise transformed-space ESPRIT), maps them to
physical parameters, and fits the path gains. Stage II refines the mode-2..5
generators by an iteratively shrunk correlation search. Stage III runs ALS on
the smoothed tensor from the Stage II factors, re-reads delays from the two
Vandermonde modes by element-space column ESPRIT, and repeats the
identification + search refinement on the ALS factors.

Both consistency checks signal decomposition failure by raising
:class:`IdentificationFailure`; :func:`stage1` converts that into a failed
:class:`ChannelEstimate` so the harness can count success rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .channel import InterestParams, SystemConfig
from .esprit import build_beamspace, element_esprit_column, transformed_esprit_column
from .probing import ProbingDesign
from .tensor_ops import Tensor, cp_als, khatri_rao_list, vandermonde, vec
from .vscpd import VscpdResult

__all__ = [
    "IdentificationFailure",
    "SingularGramError",
    "PathIndexSets",
    "SearchSchedule",
    "ChannelEstimate",
    "identify_direct",
    "group_cascaded",
    "map_parameters",
    "estimate_gains",
    "stage1",
    "stage2_cbs",
    "stage3_als",
    "cbs_refine_column",
]


class IdentificationFailure(RuntimeError):
    """A consistency check across modes failed; the trial aborts."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SingularGramError(np.linalg.LinAlgError):
    """Gain-estimation Gram matrix numerically singular (duplicated columns)."""


@dataclass(frozen=True)
class PathIndexSets:
    """Column indices of direct and cascaded paths plus the q-grouping."""

    direct: tuple
    cascaded: tuple
    groups: tuple  # Q tuples of column indices, each of size P

    def __post_init__(self):
        object.__setattr__(self, "direct", tuple(sorted(self.direct)))
        object.__setattr__(self, "cascaded", tuple(sorted(self.cascaded)))
        object.__setattr__(self, "groups", tuple(tuple(sorted(g)) for g in self.groups))
        all_idx = set(self.direct) | set(self.cascaded)
        if set(self.direct) & set(self.cascaded):
            raise ValueError("direct and cascaded sets overlap")
        if all_idx != set(range(len(all_idx))):
            raise ValueError("index sets must partition 0..R-1")
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(self.cascaded):
            raise ValueError("groups must partition the cascaded set")


@dataclass(frozen=True)
class SearchSchedule:
    """Per-mode grid parameters of the shrinking correlation search."""

    points: dict      # mode -> odd grid size E_n
    iterations: dict  # mode -> I_n
    shrink: dict      # mode -> zeta_n in (0, 1)
    half_range: dict  # mode -> U_n
    initial_step: dict  # mode -> Delta_n^1

    def __post_init__(self):
        for n, e in self.points.items():
            if e % 2 == 0 or e < 3:
                raise ValueError(f"grid size for mode {n} must be odd and >= 3")
        for n, z in self.shrink.items():
            if not 0.0 < z < 1.0:
                raise ValueError("shrink factor must lie in (0, 1)")
        for n, i in self.iterations.items():
            if i < 1:
                raise ValueError("need at least one search iteration")

    @classmethod
    def from_config(cls, cfg: SystemConfig, points: int = 201, iterations: int = 8,
                    shrink: float = 0.5) -> "SearchSchedule":
        """Default ranges: the physically valid generator interval per mode."""
        u_ris = 2.0 * 2 * np.pi / cfg.lam * cfg.d_R    # |psi| <= 2
        u_bs = 2 * np.pi / cfg.lam * cfg.d_B           # |sin| <= 1
        half = {2: u_ris, 3: u_ris, 4: u_bs, 5: u_bs}
        e_half = (points - 1) // 2
        return cls(
            points={n: points for n in half},
            iterations={n: iterations for n in half},
            shrink={n: shrink for n in half},
            half_range=half,
            initial_step={n: u / (10.0 * e_half) for n, u in half.items()},
        )


@dataclass(frozen=True)
class ChannelEstimate:
    """Mapped parameter estimates for one trial, or a flagged failure."""

    stage: str
    failed: bool = False
    failure_reason: Optional[str] = None
    sets: Optional[PathIndexSets] = None
    omega1: Optional[np.ndarray] = None   # (R,)
    omega2: Optional[np.ndarray] = None   # (R,), NaN at direct columns
    omega3: Optional[np.ndarray] = None
    omega4: Optional[np.ndarray] = None   # (R,)
    omega5: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None  # raw tensor weights before de-scaling
    params: Optional[InterestParams] = None
    als_converged: Optional[bool] = None
    als_iterations: Optional[int] = None
    refit_selected: Optional[bool] = None


def _column_variance(col: np.ndarray) -> float:
    v = col / np.linalg.norm(col)
    return float(np.mean(np.abs(v - np.mean(v)) ** 2))


def identify_direct(b2_cols: np.ndarray, b3_cols: np.ndarray, n_direct: int):
    """Pick the L lowest-variance columns per mode; both modes must agree."""
    r = b2_cols.shape[1]
    if b3_cols.shape[1] != r:
        raise ValueError("mode-2 and mode-3 factors disagree on rank")
    if not 0 <= n_direct <= r:
        raise ValueError("direct-path count out of range")
    sel = []
    for cols in (b2_cols, b3_cols):
        var = np.array([_column_variance(cols[:, i]) for i in range(r)])
        sel.append(frozenset(np.argsort(var, kind="stable")[:n_direct].tolist()))
    if sel[0] != sel[1]:
        raise IdentificationFailure("identification-mismatch")
    direct = sorted(sel[0])
    cascaded = sorted(set(range(r)) - sel[0])
    return tuple(direct), tuple(cascaded)


def _greedy_groups(sim: np.ndarray, members, p: int, q: int):
    unassigned = list(members)
    groups = []
    for _ in range(q):
        mass = [sum(sim[u, v] for v in unassigned if v != u) for u in unassigned]
        seed = unassigned[int(np.argmax(mass))]
        others = [v for v in unassigned if v != seed]
        others.sort(key=lambda v: (-sim[seed, v], v))
        group = [seed] + others[:p - 1]
        groups.append(tuple(sorted(group)))
        unassigned = [v for v in unassigned if v not in group]
    return groups


def group_cascaded(b4_cols: np.ndarray, b5_cols: np.ndarray, cascaded, p: int, q: int):
    """Group cascaded columns into Q sets of P by normalized correlation.

    Greedy: seed with the unassigned column of highest total similarity
    mass, attach its P-1 most similar unassigned columns, repeat; ties break
    to the lowest index. Mode-4 and mode-5 partitions must coincide.
    """
    cascaded = list(cascaded)
    if len(cascaded) != p * q:
        raise ValueError("cascaded set size must equal P*Q")
    partitions = []
    for cols in (b4_cols, b5_cols):
        r = cols.shape[1]
        norm = cols / np.linalg.norm(cols, axis=0, keepdims=True)
        sim = np.abs(norm.conj().T @ norm)
        partitions.append(_greedy_groups(sim, cascaded, p, q))
    if {frozenset(g) for g in partitions[0]} != {frozenset(g) for g in partitions[1]}:
        raise IdentificationFailure("grouping-mismatch")
    return tuple(partitions[0])


def map_parameters(omega1, omega2, omega3, omega4, omega5, sets: PathIndexSets,
                   cfg: SystemConfig, arcsin_tol: float = 1e-6) -> InterestParams:
    """Invert generators into delays, RIS angle offsets, and BS angles.

    Delays wrap into [0, 1/delta_f); the BS elevation comes from the mode-5
    generator and the azimuth from the mode-4 one; RIS-BS group angles are
    averaged over each group's members. Gains are left unset (NaN) until
    :func:`estimate_gains` fills them.
    """
    period = 1.0 / cfg.delta_f
    tau = np.mod(-np.asarray(omega1) / (2 * np.pi * cfg.delta_f), period)

    def arcsin_checked(x):
        if abs(x) > 1.0 + arcsin_tol:
            raise ValueError(f"arcsin argument {x} out of range beyond tolerance")
        if abs(x) > 1.0:
            warnings.warn("arcsin argument clamped to [-1, 1]", RuntimeWarning)
        return math.asin(min(1.0, max(-1.0, x)))

    scale_b = cfg.lam / (2 * np.pi * cfg.d_B)
    el = np.array([arcsin_checked(scale_b * w) for w in omega5])
    az = np.array([
        arcsin_checked(scale_b * omega4[i] / math.cos(el[i])) for i in range(len(omega4))
    ])

    scale_r = cfg.lam / (2 * np.pi * cfg.d_R)
    direct = list(sets.direct)
    cascaded = [i for g in sets.groups for i in g]  # group-major order
    group_of = [qi for qi, g in enumerate(sets.groups) for _ in g]

    theta_r = np.array([
        [np.mean(az[list(g)]), np.mean(el[list(g)])] for g in sets.groups
    ]) if sets.groups else np.zeros((0, 2))

    nan_l = np.full(len(direct), np.nan, dtype=complex)
    nan_c = np.full(len(cascaded), np.nan, dtype=complex)
    return InterestParams(
        tau_L=tau[direct],
        theta_L=np.column_stack([az[direct], el[direct]]) if direct else np.zeros((0, 2)),
        beta_L=nan_l,
        tau_R=tau[cascaded],
        psi2=scale_r * np.asarray(omega2)[cascaded],
        psi3=scale_r * np.asarray(omega3)[cascaded],
        beta_R=nan_c,
        theta_R=theta_r,
        group_of=group_of,
    )


def _rebuild_factors(omega1, omega2, omega3, omega4, omega5, sets: PathIndexSets,
                     cfg: SystemConfig, design: ProbingDesign):
    """Analytic six-way factors from generator estimates (unit pilot scale)."""
    r = len(omega1)
    b1 = vandermonde(cfg.K1, omega1)
    b6 = vandermonde(cfg.K2, omega1)
    b2 = np.ones((cfg.G1, r), dtype=np.complex128)
    b3 = np.ones((cfg.G2, r), dtype=np.complex128)
    for i in sets.cascaded:
        b2[:, i] = design.t2.conj().T @ vandermonde(cfg.My, [omega2[i]])[:, 0]
        b3[:, i] = design.t3.conj().T @ vandermonde(cfg.Mz, [omega3[i]])[:, 0]
    b4 = design.t4.conj().T @ vandermonde(cfg.Ny, omega4)
    b5 = design.t5.conj().T @ vandermonde(cfg.Nz, omega5)
    return b1, b2, b3, b4, b5, b6


def estimate_gains(y_sps: Tensor, omega1, omega2, omega3, omega4, omega5,
                   sets: PathIndexSets, cfg: SystemConfig, design: ProbingDesign,
                   gram_rtol: float = 1e-10):
    """LS fit of the weight vector, then de-scale to physical gains.

    Returns ``(weights, beta_L, beta_R)`` where ``weights`` solves the
    Khatri-Rao normal equations against vec of the smoothed tensor and the
    betas divide out the known pilot scalars (x direct, x*eta cascaded;
    cascaded gains in group-major order).
    """
    factors = _rebuild_factors(omega1, omega2, omega3, omega4, omega5, sets, cfg, design)
    gram = np.ones((len(omega1),) * 2, dtype=np.complex128)
    for f in factors:
        gram *= f.conj().T @ f
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= gram_rtol * sv[0]:
        raise SingularGramError(
            f"gain-estimation Gram matrix singular (ratio {sv[-1] / sv[0]:.2e})")
    rhs = khatri_rao_list(factors[::-1]).conj().T @ vec(y_sps)
    weights = np.linalg.solve(gram, rhs)
    beta_l = weights[list(sets.direct)] / design.x
    cascaded = [i for g in sets.groups for i in g]
    beta_r = weights[cascaded] / (design.x * design.eta)
    return weights, beta_l, beta_r


def _read_generators(vr_factors, sets: PathIndexSets, design: ProbingDesign,
                     cfg: SystemConfig):
    """Column-wise transformed-space ESPRIT on modes 2-5."""
    r = vr_factors[0].shape[1]
    bt2 = build_beamspace(design.t2, cfg.My)
    bt3 = build_beamspace(design.t3, cfg.Mz)
    bt4 = build_beamspace(design.t4, cfg.Ny)
    bt5 = build_beamspace(design.t5, cfg.Nz)
    omega2 = np.full(r, np.nan)
    omega3 = np.full(r, np.nan)
    omega4 = np.empty(r)
    omega5 = np.empty(r)
    for i in sets.cascaded:
        omega2[i] = transformed_esprit_column(vr_factors[1][:, i], bt2)
        omega3[i] = transformed_esprit_column(vr_factors[2][:, i], bt3)
    for i in range(r):
        omega4[i] = transformed_esprit_column(vr_factors[3][:, i], bt4)
        omega5[i] = transformed_esprit_column(vr_factors[4][:, i], bt5)
    return omega2, omega3, omega4, omega5


def _assemble(stage, sets, omega1, omega2, omega3, omega4, omega5,
              y_sps, cfg, design, **extra) -> ChannelEstimate:
    params = map_parameters(omega1, omega2, omega3, omega4, omega5, sets, cfg)
    weights, beta_l, beta_r = estimate_gains(
        y_sps, omega1, omega2, omega3, omega4, omega5, sets, cfg, design)
    params = replace(params, beta_L=beta_l, beta_R=beta_r)
    return ChannelEstimate(
        stage=stage, sets=sets,
        omega1=np.asarray(omega1), omega2=omega2, omega3=omega3,
        omega4=omega4, omega5=omega5,
        weights=weights, params=params, **extra,
    )


def stage1(vr: VscpdResult, y_sps: Tensor, cfg: SystemConfig, design: ProbingDesign,
           n_direct: int, p: int, q: int) -> ChannelEstimate:
    """Algebraic identification and coarse estimation from VSCPD factors."""
    try:
        direct, cascaded = identify_direct(vr.factors[1], vr.factors[2], n_direct)
        groups = group_cascaded(vr.factors[3], vr.factors[4], cascaded, p, q)
    except IdentificationFailure as fail:
        return ChannelEstimate(stage="I", failed=True, failure_reason=fail.reason)
    sets = PathIndexSets(direct, cascaded, groups)
    omega2, omega3, omega4, omega5 = _read_generators(vr.factors, sets, design, cfg)
    return _assemble("I", sets, vr.omega1, omega2, omega3, omega4, omega5,
                     y_sps, cfg, design)


def cbs_refine_column(b_col: np.ndarray, t_n: np.ndarray, omega0: float,
                      e_n: int, i_n: int, zeta: float, delta1: float,
                      half_range: float, n_elements: int) -> float:
    """Iteratively shrunk 1-D correlation search around omega0.

    Each pass evaluates |b^H b(w)| / (||b|| ||b(w)||) on an E_n-point grid of
    step Delta_n^i centered at the current estimate, keeps the argmax, and
    shrinks the step by zeta. Grid points are clipped to [-U_n, U_n].
    """
    th = t_n.conj().T
    b_norm = np.linalg.norm(b_col)
    omega = float(omega0)
    half = (e_n - 1) // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    step = delta1
    for _ in range(i_n):
        grid = np.clip(omega + step * offsets, -half_range, half_range)
        cand = th @ vandermonde(n_elements, grid)
        corr = np.abs(b_col.conj() @ cand) / (b_norm * np.linalg.norm(cand, axis=0))
        omega = float(grid[int(np.argmax(corr))])
        step *= zeta
    return omega


def stage2_cbs(ce: ChannelEstimate, vr_factors, y_sps: Tensor, cfg: SystemConfig,
               design: ProbingDesign, sched: SearchSchedule) -> ChannelEstimate:
    """Correlation-search refinement of the mode-2..5 generators.

    Delays are untouched; the refined generators feed a fresh parameter
    mapping and gain fit.
    """
    if ce.failed:
        return replace(ce, stage="II")
    sets = ce.sets
    spec = {
        2: (vr_factors[1], design.t2, cfg.My, ce.omega2, sets.cascaded),
        3: (vr_factors[2], design.t3, cfg.Mz, ce.omega3, sets.cascaded),
        4: (vr_factors[3], design.t4, cfg.Ny, ce.omega4, range(len(ce.omega1))),
        5: (vr_factors[4], design.t5, cfg.Nz, ce.omega5, range(len(ce.omega1))),
    }
    refined = {}
    for n, (cols, t_n, m, omega_n, scope) in spec.items():
        out = np.array(omega_n, dtype=float)
        for i in scope:
            out[i] = cbs_refine_column(
                cols[:, i], t_n, omega_n[i],
                sched.points[n], sched.iterations[n], sched.shrink[n],
                sched.initial_step[n], sched.half_range[n], m,
            )
        refined[n] = out
    return _assemble("II", sets, ce.omega1, refined[2], refined[3], refined[4],
                     refined[5], y_sps, cfg, design)


def _circular_mean(a: float, b: float) -> float:
    return float(np.angle(np.exp(1j * a) + np.exp(1j * b)))


def _model_residual(ce: ChannelEstimate, y_sps: Tensor, cfg: SystemConfig,
                    design: ProbingDesign) -> float:
    """Data misfit of the analytic model implied by the estimate."""
    factors = _rebuild_factors(ce.omega1, ce.omega2, ce.omega3, ce.omega4,
                               ce.omega5, ce.sets, cfg, design)
    model = khatri_rao_list(factors[::-1]) @ ce.weights
    return float(np.linalg.norm(vec(y_sps) - model))


def stage3_als(y_sps_noisy: Tensor, ce: ChannelEstimate, cfg: SystemConfig,
               design: ProbingDesign, sched: SearchSchedule,
               max_iters: int = 300, tol: float = 1e-8) -> ChannelEstimate:
    """ALS refinement of the six factors, then re-identification and CBS.

    The Stage II generators rebuild the analytic factors, the estimated
    weights are absorbed into the last factor, and ALS runs on the noisy
    smoothed tensor until the relative tensor change drops below ``tol``.
    Delays come from the circular mean of the mode-1 and mode-6 column
    ESPRIT reads; modes 2-5 are re-identified and re-searched on the ALS
    factors. If the re-identification checks fail, the Stage II index sets
    are reused (ALS preserves column order).

    The refit parameter set is kept only when its analytic model fits the
    observed tensor at least as well as the Stage II set (both carry
    LS-optimal gains, so this is a like-for-like likelihood comparison);
    otherwise Stage II's parameters are carried forward.
    """
    if ce.failed:
        return replace(ce, stage="III")
    sets = ce.sets
    factors0 = list(_rebuild_factors(ce.omega1, ce.omega2, ce.omega3, ce.omega4,
                                     ce.omega5, sets, cfg, design))
    factors0[5] = factors0[5] * ce.weights[None, :]
    res = cp_als(y_sps_noisy.array, factors0, max_iters=max_iters, tol=tol)
    if not res.converged:
        warnings.warn(f"ALS did not converge within {max_iters} sweeps", RuntimeWarning)
    facs = res.factors

    omega1 = np.array([
        _circular_mean(element_esprit_column(facs[0][:, i]),
                       element_esprit_column(facs[5][:, i]))
        for i in range(len(ce.omega1))
    ])
    try:
        direct, cascaded = identify_direct(facs[1], facs[2], len(sets.direct))
        groups = group_cascaded(facs[3], facs[4], cascaded,
                                len(sets.groups[0]) if sets.groups else 0,
                                len(sets.groups))
        new_sets = PathIndexSets(direct, cascaded, groups)
    except IdentificationFailure:
        new_sets = sets
    omega2, omega3, omega4, omega5 = _read_generators(facs, new_sets, design, cfg)
    coarse = ChannelEstimate(
        stage="III", sets=new_sets, omega1=omega1,
        omega2=omega2, omega3=omega3, omega4=omega4, omega5=omega5,
        weights=ce.weights,
    )
    refit = stage2_cbs(coarse, facs, y_sps_noisy, cfg, design, sched)
    keep_refit = (_model_residual(refit, y_sps_noisy, cfg, design)
                  <= _model_residual(ce, y_sps_noisy, cfg, design))
    out = refit if keep_refit else ce
    return replace(out, stage="III", als_converged=res.converged,
                   als_iterations=res.iterations, refit_selected=keep_refit)
