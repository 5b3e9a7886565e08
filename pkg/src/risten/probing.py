"""Probing design, received-signal synthesis, and signal-tensor assembly.

The pilot is the constant x = sqrt(P_T); the RIS profile keeps the physical
per-element magnitude eta with phases copied from the Kronecker product of
the two preset Vandermonde transforms, so the tensor weight of a direct path
is x * beta_L and of a cascaded path x * eta * beta_R. The de-scaling back to
physical gains happens at gain-estimation time; every subspace step in
between is scale-invariant.

Slot and beam enumerations are Kronecker-ordered: slot g = (g1, g2) with g2
fastest, receive beam (n1, n2) with n2 fastest, and RIS element (my, mz) with
mz fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import (
    AnglePair,
    InterestParams,
    MultipathGroundTruth,
    SystemConfig,
    channel_frequency_response,
    spatial_generators,
)
from .tensor_ops import FactorSet, Tensor, cp_reconstruct, vandermonde

__all__ = [
    "ProbingDesign",
    "ReceivedBlock",
    "design_probing",
    "synthesize_rx",
    "build_tensor",
    "factor_set_from_params",
    "analytic_factors",
    "noise_trace_total",
    "scale_noise_to_snr",
    "snr_db",
]


@dataclass(frozen=True)
class ProbingDesign:
    """Pilot scalar, Vandermonde transforms, RIS profile, and combiner."""

    x: complex
    eta: float
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    t5: np.ndarray
    nu2: np.ndarray
    nu3: np.ndarray
    nu4: np.ndarray
    nu5: np.ndarray
    upsilon: np.ndarray   # (G, My*Mz), entry magnitude eta
    combiner: np.ndarray  # (Ny*Nz, N1*N2) = T4 kron T5

    @property
    def combiner_h(self) -> np.ndarray:
        return self.combiner.conj().T


def design_probing(cfg: SystemConfig, eta: float, seed) -> ProbingDesign:
    """Draw the Vandermonde generators and assemble the probing matrices.

    Generators are i.i.d. uniform on (-pi, pi] from the seeded stream, drawn
    in mode order 2, 3, 4, 5.
    """
    rng = np.random.default_rng(seed)
    nu2 = rng.uniform(-np.pi, np.pi, cfg.G1)
    nu3 = rng.uniform(-np.pi, np.pi, cfg.G2)
    nu4 = rng.uniform(-np.pi, np.pi, cfg.N1)
    nu5 = rng.uniform(-np.pi, np.pi, cfg.N2)
    t2 = vandermonde(cfg.My, nu2)
    t3 = vandermonde(cfg.Mz, nu3)
    t4 = vandermonde(cfg.Ny, nu4)
    t5 = vandermonde(cfg.Nz, nu5)
    # unit-modulus Kronecker phase pattern, physical magnitude eta per element
    upsilon = eta * np.kron(t2.conj().T, t3.conj().T)
    return ProbingDesign(
        x=complex(math.sqrt(cfg.P_T)),
        eta=float(eta),
        t2=t2, t3=t3, t4=t4, t5=t5,
        nu2=nu2, nu3=nu3, nu4=nu4, nu5=nu5,
        upsilon=upsilon,
        combiner=np.kron(t4, t5),
    )


@dataclass(frozen=True)
class ReceivedBlock:
    """Received beams y[k, g, :] plus the noise realization metadata."""

    y: np.ndarray          # (K, G, N1*N2)
    noise_on: bool
    seed: Optional[int]
    sigma_B2: float
    sigma_R2: float


def _cn(rng: np.random.Generator, power: float, *shape) -> np.ndarray:
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_rx(gt: MultipathGroundTruth, cfg: SystemConfig, design: ProbingDesign,
                  noise_on: bool, seed=None) -> ReceivedBlock:
    """Simulate y^(k,g) = R^H (h_L + H_R2 Gamma_g h_R1) x + w^(k,g).

    With noise on, w = R^H (w_B + H_R2 Gamma_g w_R), both hops circular
    Gaussian. Bit-reproducible for a fixed seed: w_B is drawn first with
    shape (K, G, Ny*Nz), then w_R with shape (K, G, My*Mz).
    """
    rc = design.combiner.conj()  # y = v @ conj(R) gives R^H v row-wise
    y = np.empty((cfg.K, cfg.G, cfg.N_rx), dtype=np.complex128)
    rng = np.random.default_rng(seed) if noise_on else None
    w_b = _cn(rng, cfg.sigma_B2, cfg.K, cfg.G, cfg.N_bs) if noise_on else None
    w_r = _cn(rng, cfg.sigma_R2, cfg.K, cfg.G, cfg.M) if noise_on else None
    for k in range(cfg.K):
        h_l, h_r1, h_r2 = channel_frequency_response(gt, cfg, k)
        cascade = (design.upsilon * h_r1[None, :]) @ h_r2.T     # (G, N_bs)
        signal = (h_l[None, :] + cascade) * design.x
        if noise_on:
            noise = w_b[k] + (design.upsilon * w_r[k]) @ h_r2.T
            y[k] = (signal + noise) @ rc
        else:
            y[k] = signal @ rc
    return ReceivedBlock(y=y, noise_on=noise_on, seed=seed,
                         sigma_B2=cfg.sigma_B2, sigma_R2=cfg.sigma_R2)


def build_tensor(block: ReceivedBlock, cfg: SystemConfig) -> Tensor:
    """Reshape the received block into the (K, G1, G2, N1, N2) signal tensor."""
    y = block.y
    if y.shape != (cfg.K, cfg.G, cfg.N_rx):
        raise ValueError(f"block shape {y.shape} does not match the configuration")
    return Tensor(y.reshape(cfg.K, cfg.G1, cfg.G2, cfg.N1, cfg.N2))


def factor_set_from_params(params: InterestParams, cfg: SystemConfig,
                           design: ProbingDesign) -> FactorSet:
    """Assemble the five CP factors and weights for given physical parameters.

    Weight r is x*beta_L for direct paths and x*eta*beta_R for cascaded
    ones; the direct columns of modes 2 and 3 are all-ones constants.
    """
    lam = cfg.lam
    omega1 = -2 * np.pi * cfg.delta_f * np.concatenate([params.tau_L, params.tau_R])
    a1 = vandermonde(cfg.K, omega1)

    b2 = np.ones((cfg.G1, params.L + params.C), dtype=np.complex128)
    b3 = np.ones((cfg.G2, params.L + params.C), dtype=np.complex128)
    om2 = 2 * np.pi / lam * cfg.d_R * params.psi2
    om3 = 2 * np.pi / lam * cfg.d_R * params.psi3
    if params.C:
        b2[:, params.L:] = design.t2.conj().T @ vandermonde(cfg.My, om2)
        b3[:, params.L:] = design.t3.conj().T @ vandermonde(cfg.Mz, om3)

    om4 = np.empty(params.L + params.C)
    om5 = np.empty(params.L + params.C)
    for i in range(params.L):
        om4[i], om5[i] = spatial_generators(AnglePair(*params.theta_L[i]), cfg.d_B, lam)
    for c in range(params.C):
        q = params.group_of[c]
        om4[params.L + c], om5[params.L + c] = spatial_generators(
            AnglePair(*params.theta_R[q]), cfg.d_B, lam)
    b4 = design.t4.conj().T @ vandermonde(cfg.Ny, om4)
    b5 = design.t5.conj().T @ vandermonde(cfg.Nz, om5)

    weights = np.concatenate([
        design.x * params.beta_L,
        design.x * design.eta * params.beta_R,
    ])
    return FactorSet(weights, (a1, b2, b3, b4, b5))


def analytic_factors(gt: MultipathGroundTruth, cfg: SystemConfig,
                     design: ProbingDesign) -> FactorSet:
    """Ground-truth factor set of the noise-free signal tensor."""
    return factor_set_from_params(InterestParams.from_ground_truth(gt), cfg, design)


def noise_trace_total(gt: MultipathGroundTruth, cfg: SystemConfig,
                      design: ProbingDesign) -> float:
    """Sum over (k, g) of tr C^(k,g) for the exact (unapproximated) noise.

    tr C = sigma_B^2 ||R||_F^2 + sigma_R^2 eta^2 ||R^H H_R2^(k)||_F^2; the
    slot dependence cancels because Gamma Gamma^H = eta^2 I.
    """
    r = design.combiner
    base = cfg.sigma_B2 * float(np.linalg.norm(r) ** 2)
    total = 0.0
    for k in range(cfg.K):
        _, _, h_r2 = channel_frequency_response(gt, cfg, k)
        proj = r.conj().T @ h_r2
        total += base + cfg.sigma_R2 * design.eta ** 2 * float(np.linalg.norm(proj) ** 2)
    return cfg.G * total


def snr_db(signal_energy: float, noise_trace_sum: float) -> float:
    """Received SNR in dB: 10 log10(sum ||y||^2 / sum tr C)."""
    if noise_trace_sum <= 0:
        raise ValueError("noise trace must be positive")
    return 10.0 * math.log10(signal_energy / noise_trace_sum)


def scale_noise_to_snr(gt: MultipathGroundTruth, cfg: SystemConfig,
                       design: ProbingDesign, target_db: float) -> SystemConfig:
    """Scale sigma_B^2 and sigma_R^2 by a common factor to hit a target SNR.

    The amplification eta baked into ``design`` is left untouched; only the
    noise floor moves, preserving the BS/RIS noise ratio.
    """
    import dataclasses

    block = synthesize_rx(gt, cfg, design, noise_on=False)
    signal_energy = float(np.sum(np.abs(block.y) ** 2))
    base = noise_trace_total(gt, cfg, design)
    factor = signal_energy / (10 ** (target_db / 10.0) * base)
    return dataclasses.replace(cfg, sigma_B2=cfg.sigma_B2 * factor,
                               sigma_R2=cfg.sigma_R2 * factor)
