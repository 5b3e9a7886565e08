"""Closed-form CRLB for the interest parameters under active-RIS noise.

The real observation model stacks [Re y; Im y] per (subcarrier, slot). Both
the mean and the noise covariance depend on the parameters: the RIS-side
thermal noise reaches the receiver through the RIS-BS channel, so the
covariance carries the BS arrival angles and the squared one-hop gain
magnitudes (the latter enter only the covariance and are treated as
nuisance parameters).

Parameter ordering (fixed, used for every matrix in this module):

  interest: tau_L (L) | tau_R (C) | psi2 (C) | psi3 (C)
            | theta_L (2L, az/el interleaved per path)
            | theta_R (2Q, az/el interleaved per sub-path)
            | Re beta_L (L) | Im beta_L (L) | Re beta_R (C) | Im beta_R (C)
  nuisance: |beta_R2|^2 (Q)

Cascaded paths are enumerated q-major (p fastest), matching the weight
vector layout used everywhere else.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import (
    AnglePair,
    InterestParams,
    MultipathGroundTruth,
    SystemConfig,
    direction_vector,
    upa_position_matrix,
)
from .probing import ProbingDesign

__all__ = [
    "ParamLayout",
    "ParamVector",
    "CrlbReport",
    "model_mean",
    "noise_covariance",
    "mean_jacobian",
    "cov_jacobian",
    "fim_term",
    "fim",
    "FAMILIES",
]

FAMILIES = ("tau_L", "tau_R", "psi2", "psi3", "theta_L", "theta_R",
            "beta_L_re", "beta_L_im", "beta_R_re", "beta_R_im")


@dataclass(frozen=True)
class ParamLayout:
    L: int
    C: int
    Q: int

    def __post_init__(self):
        sizes = {
            "tau_L": self.L, "tau_R": self.C, "psi2": self.C, "psi3": self.C,
            "theta_L": 2 * self.L, "theta_R": 2 * self.Q,
            "beta_L_re": self.L, "beta_L_im": self.L,
            "beta_R_re": self.C, "beta_R_im": self.C,
            "nuisance": self.Q,
        }
        slices = {}
        start = 0
        for name in FAMILIES + ("nuisance",):
            slices[name] = slice(start, start + sizes[name])
            start += sizes[name]
        object.__setattr__(self, "_slices", slices)

    @property
    def dim_interest(self) -> int:
        return 5 * (self.L + self.C) + 2 * self.Q

    @property
    def dim(self) -> int:
        return self.dim_interest + self.Q

    def sl(self, name: str) -> slice:
        return self._slices[name]


class ParamVector:
    """Flat real parameter vector plus its layout."""

    def __init__(self, layout: ParamLayout, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.size != layout.dim:
            raise ValueError(f"expected {layout.dim} values, got {values.size}")
        self.layout = layout
        self.values = values

    @classmethod
    def from_ground_truth(cls, gt: MultipathGroundTruth) -> "ParamVector":
        p = InterestParams.from_ground_truth(gt)
        layout = ParamLayout(p.L, p.C, p.Q)
        nuisance = np.array([abs(pc.gain) ** 2 for pc in gt.ris_bs])
        return cls.from_interest(p, nuisance)

    @classmethod
    def from_interest(cls, p: InterestParams, nuisance) -> "ParamVector":
        layout = ParamLayout(p.L, p.C, p.Q)
        vals = np.concatenate([
            p.tau_L, p.tau_R, p.psi2, p.psi3,
            p.theta_L.ravel(), p.theta_R.ravel(),
            p.beta_L.real, p.beta_L.imag, p.beta_R.real, p.beta_R.imag,
            np.asarray(nuisance, dtype=float),
        ])
        return cls(layout, vals)

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.values.copy())

    def fam(self, name: str) -> np.ndarray:
        return self.values[self.layout.sl(name)]

    def to_interest(self, group_of) -> InterestParams:
        lay = self.layout
        return InterestParams(
            tau_L=self.fam("tau_L"),
            theta_L=self.fam("theta_L").reshape(-1, 2),
            beta_L=self.fam("beta_L_re") + 1j * self.fam("beta_L_im"),
            tau_R=self.fam("tau_R"),
            psi2=self.fam("psi2"),
            psi3=self.fam("psi3"),
            beta_R=self.fam("beta_R_re") + 1j * self.fam("beta_R_im"),
            theta_R=self.fam("theta_R").reshape(-1, 2),
            group_of=group_of,
        )


def _bs_steering(cfg: SystemConfig, az: float, el: float) -> np.ndarray:
    pos = upa_position_matrix(cfg.Ny, cfg.Nz, cfg.d_B)
    return np.exp(1j * 2 * np.pi / cfg.lam * pos @ direction_vector(az, el))


def _bs_steering_derivs(cfg: SystemConfig, az: float, el: float):
    """a_B and its azimuth/elevation derivatives."""
    pos = upa_position_matrix(cfg.Ny, cfg.Nz, cfg.d_B)
    a = np.exp(1j * 2 * np.pi / cfg.lam * pos @ direction_vector(az, el))
    d_az = np.array([-math.sin(az) * math.cos(el), math.cos(az) * math.cos(el), 0.0])
    d_el = np.array([-math.cos(az) * math.sin(el), -math.sin(az) * math.sin(el), math.cos(el)])
    da_az = 1j * 2 * np.pi / cfg.lam * a * (pos @ d_az)
    da_el = 1j * 2 * np.pi / cfg.lam * a * (pos @ d_el)
    return a, da_az, da_el


def _ris_composite(cfg: SystemConfig, psi2: float, psi3: float):
    """Hadamard steering product over the RIS grid and its psi derivatives."""
    w2 = 2 * np.pi / cfg.lam * cfg.d_R * psi2
    w3 = 2 * np.pi / cfg.lam * cfg.d_R * psi3
    vec2 = np.exp(1j * w2 * np.arange(cfg.My))
    vec3 = np.exp(1j * w3 * np.arange(cfg.Mz))
    comp = np.kron(vec2, vec3)
    pos = upa_position_matrix(cfg.My, cfg.Mz, cfg.d_R)
    d2 = 1j * 2 * np.pi / cfg.lam * comp * pos[:, 1]
    d3 = 1j * 2 * np.pi / cfg.lam * comp * pos[:, 2]
    return comp, d2, d3


def model_mean(pv: ParamVector, cfg: SystemConfig, design: ProbingDesign,
               k: int, g: int) -> np.ndarray:
    """Noise-free complex mean y^(k,g) as a function of the raw parameters."""
    lay = pv.layout
    p = pv.to_interest(group_of=_default_groups(lay))
    rh = design.combiner.conj().T
    f_k = k * cfg.delta_f
    gamma = design.upsilon[g]
    y = np.zeros(cfg.N_rx, dtype=np.complex128)
    for i in range(lay.L):
        delta = np.exp(-2j * np.pi * f_k * p.tau_L[i])
        y += p.beta_L[i] * delta * (rh @ _bs_steering(cfg, *p.theta_L[i]))
    for c in range(lay.C):
        q = p.group_of[c]
        comp, _, _ = _ris_composite(cfg, p.psi2[c], p.psi3[c])
        rho = gamma @ comp
        delta = np.exp(-2j * np.pi * f_k * p.tau_R[c])
        y += p.beta_R[c] * rho * delta * (rh @ _bs_steering(cfg, *p.theta_R[q]))
    return design.x * y


def _default_groups(lay: ParamLayout):
    # q-major enumeration: cascaded index c = q * P + p
    if lay.Q == 0:
        return np.zeros(0, dtype=int)
    p_per_q = lay.C // lay.Q
    return np.repeat(np.arange(lay.Q), p_per_q)


def _real_stack(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag])


def noise_covariance(cfg: SystemConfig, design: ProbingDesign, pv: ParamVector,
                     k: int = 0, g: int = 0) -> np.ndarray:
    """Approximate real noise covariance (identical for every (k, g)).

    Keeps the aligned-phase term of the RIS-noise Gram only, which drops the
    (k, g) dependence; the BS term is exact. The passive case sigma_R2 = 0
    reduces to the BS term alone.
    """
    lay = pv.layout
    rh = design.combiner.conj().T
    s = cfg.sigma_B2 * (rh @ rh.conj().T)
    if cfg.sigma_R2 > 0:
        theta_r = pv.fam("theta_R").reshape(-1, 2)
        nuis = pv.fam("nuisance")
        m_tot = cfg.M
        for q in range(lay.Q):
            v = rh @ _bs_steering(cfg, *theta_r[q])
            s = s + cfg.sigma_R2 * design.eta ** 2 * m_tot * nuis[q] * np.outer(v, v.conj())
    return 0.5 * np.block([[s.real, s.imag.T], [s.imag, s.real]])


def mean_jacobian(pv: ParamVector, cfg: SystemConfig, design: ProbingDesign,
                  k: int, g: int) -> np.ndarray:
    """Real Jacobian of [Re y; Im y] w.r.t. every parameter, (2 N_rx x dim).

    Nuisance columns are zero: the squared one-hop magnitudes enter only
    the covariance.
    """
    lay = pv.layout
    p = pv.to_interest(group_of=_default_groups(lay))
    rh = design.combiner.conj().T
    f_k = k * cfg.delta_f
    omega_k = 2 * np.pi * f_k
    gamma = design.upsilon[g]
    x = design.x
    jac = np.zeros((2 * cfg.N_rx, lay.dim))

    sl_tau_l = lay.sl("tau_L").start
    sl_tau_r = lay.sl("tau_R").start
    sl_psi2 = lay.sl("psi2").start
    sl_psi3 = lay.sl("psi3").start
    sl_th_l = lay.sl("theta_L").start
    sl_th_r = lay.sl("theta_R").start
    sl_bl_re = lay.sl("beta_L_re").start
    sl_bl_im = lay.sl("beta_L_im").start
    sl_br_re = lay.sl("beta_R_re").start
    sl_br_im = lay.sl("beta_R_im").start

    for i in range(lay.L):
        a, da_az, da_el = _bs_steering_derivs(cfg, *p.theta_L[i])
        delta = np.exp(-2j * np.pi * f_k * p.tau_L[i])
        base = x * delta * (rh @ a)
        jac[:, sl_tau_l + i] = _real_stack(p.beta_L[i] * (-1j * omega_k) * base)
        jac[:, sl_th_l + 2 * i] = _real_stack(x * p.beta_L[i] * delta * (rh @ da_az))
        jac[:, sl_th_l + 2 * i + 1] = _real_stack(x * p.beta_L[i] * delta * (rh @ da_el))
        jac[:, sl_bl_re + i] = _real_stack(base)
        jac[:, sl_bl_im + i] = _real_stack(1j * base)

    # shared BS-angle derivatives accumulate over the paths in each group
    for c in range(lay.C):
        q = p.group_of[c]
        a, da_az, da_el = _bs_steering_derivs(cfg, *p.theta_R[q])
        comp, dcomp2, dcomp3 = _ris_composite(cfg, p.psi2[c], p.psi3[c])
        rho = gamma @ comp
        delta = np.exp(-2j * np.pi * f_k * p.tau_R[c])
        base = x * rho * delta * (rh @ a)
        jac[:, sl_tau_r + c] = _real_stack(p.beta_R[c] * (-1j * omega_k) * base)
        jac[:, sl_psi2 + c] = _real_stack(
            x * p.beta_R[c] * delta * (gamma @ dcomp2) * (rh @ a))
        jac[:, sl_psi3 + c] = _real_stack(
            x * p.beta_R[c] * delta * (gamma @ dcomp3) * (rh @ a))
        jac[:, sl_th_r + 2 * q] += _real_stack(
            x * p.beta_R[c] * rho * delta * (rh @ da_az))
        jac[:, sl_th_r + 2 * q + 1] += _real_stack(
            x * p.beta_R[c] * rho * delta * (rh @ da_el))
        jac[:, sl_br_re + c] = _real_stack(base)
        jac[:, sl_br_im + c] = _real_stack(1j * base)
    return jac


def cov_jacobian(pv: ParamVector, cfg: SystemConfig, design: ProbingDesign) -> dict:
    """Non-zero covariance derivatives, keyed by flat parameter index.

    Only the RIS-BS arrival angles and the nuisance magnitudes move the
    covariance; everything else has an exactly zero derivative.
    """
    lay = pv.layout
    out = {}
    if cfg.sigma_R2 <= 0:
        return out
    rh = design.combiner.conj().T
    theta_r = pv.fam("theta_R").reshape(-1, 2)
    nuis = pv.fam("nuisance")
    scale = cfg.sigma_R2 * design.eta ** 2 * cfg.M
    sl_th_r = lay.sl("theta_R").start
    sl_nui = lay.sl("nuisance").start
    for q in range(lay.Q):
        a, da_az, da_el = _bs_steering_derivs(cfg, *theta_r[q])
        v = rh @ a
        for j, da in ((0, da_az), (1, da_el)):
            u = rh @ da
            ds = scale * nuis[q] * (np.outer(u, v.conj()) + np.outer(v, u.conj()))
            out[sl_th_r + 2 * q + j] = 0.5 * np.block(
                [[ds.real, ds.imag.T], [ds.imag, ds.real]])
        ds = scale * np.outer(v, v.conj())
        out[sl_nui + q] = 0.5 * np.block([[ds.real, ds.imag.T], [ds.imag, ds.real]])
    return out


@dataclass(frozen=True)
class CrlbReport:
    layout: ParamLayout
    fim: np.ndarray              # (dim x dim) real symmetric
    equivalent_fim: np.ndarray   # (dim_interest x dim_interest)
    crlb: np.ndarray             # per-interest-parameter variances
    cond_fim: float
    cond_j3: float
    nuisance_reduced: bool

    def family_variance(self, name: str) -> float:
        """Sum of the CRLB variances of one parameter family."""
        return float(np.sum(self.crlb[self.layout.sl(name)]))

    def family_bound(self, name: str, unit_scale: float = 1.0) -> float:
        """Root bound comparable to a family RMSE, optionally unit-scaled."""
        return unit_scale * math.sqrt(self.family_variance(name))


def fim_term(pv: ParamVector, cfg: SystemConfig, design: ProbingDesign,
             k: int, g: int, c_inv: np.ndarray, trace_term: np.ndarray) -> np.ndarray:
    jac = mean_jacobian(pv, cfg, design, k, g)
    return jac.T @ c_inv @ jac + trace_term


def _trace_term(pv: ParamVector, cfg: SystemConfig, design: ProbingDesign,
                c_inv: np.ndarray) -> np.ndarray:
    dcs = cov_jacobian(pv, cfg, design)
    t = np.zeros((pv.layout.dim,) * 2)
    keys = sorted(dcs)
    prods = {i: c_inv @ dcs[i] for i in keys}
    for a, i in enumerate(keys):
        for j in keys[a:]:
            val = 0.5 * float(np.sum(prods[i] * prods[j].T))
            t[i, j] = val
            t[j, i] = val
    return t


def fim(cfg: SystemConfig, design: ProbingDesign, gt: MultipathGroundTruth,
        cond_limit: float = 1e14) -> CrlbReport:
    """Ensemble FIM over all (k, g), nuisance reduction, and CRLB diagonal.

    Under the aligned-phase covariance approximation C is (k, g)-constant,
    so the trace term enters as K*G copies of one matrix. If the nuisance
    block is numerically singular the reduction is skipped with a warning
    and the plain interest block is inverted instead (flagged, non-standard).
    """
    pv = ParamVector.from_ground_truth(gt)
    lay = pv.layout
    c = noise_covariance(cfg, design, pv)
    cond_c = np.linalg.cond(c)
    if cond_c > cond_limit:
        warnings.warn(f"noise covariance badly conditioned ({cond_c:.2e})", RuntimeWarning)
    c_inv = np.linalg.inv(c)
    c_inv = 0.5 * (c_inv + c_inv.T)
    trace = _trace_term(pv, cfg, design, c_inv)
    j = np.zeros((lay.dim,) * 2)
    for k in range(cfg.K):
        for g in range(cfg.G):
            jac = mean_jacobian(pv, cfg, design, k, g)
            j += jac.T @ c_inv @ jac
    j += cfg.K * cfg.G * trace
    j = 0.5 * (j + j.T)

    ni = lay.dim_interest
    j1 = j[:ni, :ni]
    j2 = j[:ni, ni:]
    j3 = j[ni:, ni:]
    nuisance_reduced = True
    cond_j3 = float(np.linalg.cond(j3)) if j3.size else 0.0
    if j3.size and (not np.isfinite(cond_j3) or cond_j3 > cond_limit):
        warnings.warn("nuisance FIM block singular; reporting the unreduced "
                      "interest block (non-standard)", RuntimeWarning)
        equiv = j1
        nuisance_reduced = False
    elif j3.size:
        equiv = j1 - j2 @ np.linalg.solve(j3, j2.T)
    else:
        equiv = j1
    equiv = 0.5 * (equiv + equiv.T)
    # invert in a diagonally scaled frame: parameter units differ by many
    # orders of magnitude and would otherwise swamp the conditioning
    d = np.sqrt(np.diag(equiv))
    if np.any(d <= 0):
        raise np.linalg.LinAlgError("equivalent FIM has a non-positive diagonal")
    scaled = equiv / np.outer(d, d)
    eigs = np.linalg.eigvalsh(scaled)
    cond_fim = float(eigs[-1] / eigs[0]) if eigs[0] > 0 else float("inf")
    crlb = (np.diag(np.linalg.inv(scaled)) / d ** 2).copy()
    return CrlbReport(
        layout=lay, fim=j, equivalent_fim=equiv, crlb=crlb,
        cond_fim=cond_fim, cond_j3=cond_j3, nuisance_reduced=nuisance_reduced,
    )
