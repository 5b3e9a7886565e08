"""Array geometry, steering vectors, multipath ground truth, and per-link CFRs.

Both the base-station and RIS arrays are square-grid UPAs in the YOZ plane of
their local frames (taken aligned with the global frame), with element (iy, iz)
at position (0, iy*d, iz*d) and the iz index varying fastest. A wave from
direction d(az, el) = [cos(az)cos(el), sin(az)cos(el), sin(el)] then produces
the Kronecker steering a^(My)(w_y) kron a^(Mz)(w_z) with
w_y = (2 pi / lambda) d sin(az)cos(el) and w_z = (2 pi / lambda) d sin(el).

Path gains follow a free-space magnitude lambda/(4 pi hop) per hop with a
uniform random phase; this is a stand-in for the external geometry table the
reference scenario uses, so absolute error levels are scenario-specific.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "C_LIGHT",
    "SystemConfig",
    "AnglePair",
    "PathComponent",
    "CascadedPath",
    "MultipathGroundTruth",
    "Scene",
    "uniform_steering",
    "upa_position_matrix",
    "upa_steering",
    "direction_vector",
    "angles_from_direction",
    "geometry_to_paths",
    "channel_frequency_response",
    "cascade_parameters",
    "amplification_from_budget",
    "incident_power",
    "validate_ground_truth",
]

C_LIGHT = 299792458.0


@dataclass(frozen=True)
class SystemConfig:
    """Immutable record of array sizes, OFDM grid, powers, and spacings."""

    My: int
    Mz: int
    Ny: int
    Nz: int
    N1: int
    N2: int
    K0: int
    K: int
    K1: int
    G1: int
    G2: int
    delta_f: float
    f_c: float
    d_R: float
    d_B: float
    P_T: float
    P_R: float
    sigma_B2: float
    sigma_R2: float
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 10.0

    def __post_init__(self):
        for name in ("My", "Mz", "Ny", "Nz", "N1", "N2", "K0", "K", "K1", "G1", "G2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.K > self.K0:
            raise ValueError("training subcarriers K cannot exceed K0")
        if not 1 <= self.K1 <= self.K:
            raise ValueError("K1 out of range 1..K")
        if self.d_R <= 0 or self.d_B <= 0:
            raise ValueError("element spacings must be positive")
        if self.P_T < 0 or self.P_R < 0:
            raise ValueError("powers must be non-negative")
        if self.delta_f <= 0 or self.f_c <= 0:
            raise ValueError("frequencies must be positive")

    @property
    def lam(self) -> float:
        return C_LIGHT / self.f_c

    @property
    def G(self) -> int:
        return self.G1 * self.G2

    @property
    def K2(self) -> int:
        return self.K - self.K1 + 1

    @property
    def M(self) -> int:
        """RIS element count."""
        return self.My * self.Mz

    @property
    def N_bs(self) -> int:
        """BS element count."""
        return self.Ny * self.Nz

    @property
    def N_rx(self) -> int:
        """Combined receive beams."""
        return self.N1 * self.N2


class AnglePair(NamedTuple):
    az: float
    el: float


@dataclass(frozen=True)
class PathComponent:
    """One propagation path of a single link."""

    gain: complex
    delay: float
    aoa: Optional[AnglePair] = None
    aod: Optional[AnglePair] = None

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        for pair in (self.aoa, self.aod):
            if pair is not None and abs(pair.el) > np.pi / 2 + 1e-12:
                raise ValueError("elevation outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class CascadedPath:
    """Derived parameters of the (p, q) cascaded path."""

    p: int
    q: int
    gain: complex
    delay: float
    psi2: float
    psi3: float


def uniform_steering(m: int, omega: float) -> np.ndarray:
    """Unit-modulus response e^{j(m-1)omega} of a uniformly spaced line."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.exp(1j * omega * np.arange(m))


def upa_position_matrix(my: int, mz: int, spacing: float) -> np.ndarray:
    """Stacked local 3-D element positions, (my*mz, 3), z index fastest."""
    y = spacing * np.arange(my)
    z = spacing * np.arange(mz)
    zeros = np.zeros(my * mz)
    return np.column_stack([zeros, np.repeat(y, mz), np.tile(z, my)])


def direction_vector(az: float, el: float) -> np.ndarray:
    return np.array([
        math.cos(az) * math.cos(el),
        math.sin(az) * math.cos(el),
        math.sin(el),
    ])


def angles_from_direction(d: np.ndarray) -> AnglePair:
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    return AnglePair(math.atan2(d[1], d[0]), math.asin(np.clip(d[2], -1.0, 1.0)))


def spatial_generators(angles: AnglePair, spacing: float, lam: float):
    """(w_y, w_z) generator pair of a UPA for the given direction."""
    wy = 2 * np.pi / lam * spacing * math.sin(angles.az) * math.cos(angles.el)
    wz = 2 * np.pi / lam * spacing * math.sin(angles.el)
    return wy, wz


def upa_steering(my: int, mz: int, spacing: float, lam: float, angles: AnglePair) -> np.ndarray:
    wy, wz = spatial_generators(angles, spacing, lam)
    return np.kron(uniform_steering(my, wy), uniform_steering(mz, wz))


@dataclass(frozen=True)
class Scene:
    """Explicit stand-in geometry: endpoints plus one scatterer per extra path."""

    ue: tuple
    bs: tuple
    ris: tuple
    scatterers_ue_bs: tuple = ()
    scatterers_ue_ris: tuple = ()
    scatterers_ris_bs: tuple = ()

    def __post_init__(self):
        def as_points(v):
            pts = tuple(tuple(float(c) for c in p) for p in v)
            for p in pts:
                if len(p) != 3:
                    raise ValueError("positions must be 3-D")
            return pts

        for name in ("scatterers_ue_bs", "scatterers_ue_ris", "scatterers_ris_bs"):
            object.__setattr__(self, name, as_points(getattr(self, name)))
        for name in ("ue", "bs", "ris"):
            p = tuple(float(c) for c in getattr(self, name))
            if len(p) != 3:
                raise ValueError("positions must be 3-D")
            object.__setattr__(self, name, p)


@dataclass(frozen=True)
class MultipathGroundTruth:
    """Per-link path lists plus derived cascaded parameters and generators."""

    direct: tuple        # L paths UE-BS, aoa = BS angle
    ue_ris: tuple        # P paths UE-RIS, aoa = RIS arrival angle
    ris_bs: tuple        # Q paths RIS-BS, aod = RIS departure, aoa = BS angle
    cascaded: tuple = field(init=False)
    omega1: np.ndarray = field(init=False)   # R delay generators (principal value)
    omega2: np.ndarray = field(init=False)   # C
    omega3: np.ndarray = field(init=False)   # C
    omega4: np.ndarray = field(init=False)   # R
    omega5: np.ndarray = field(init=False)   # R
    _cfg: SystemConfig = None

    def __post_init__(self):
        cfg = self._cfg
        if cfg is None:
            raise ValueError("SystemConfig required to derive generators")
        cascaded = []
        for q, hop2 in enumerate(self.ris_bs):
            for p, hop1 in enumerate(self.ue_ris):
                cascaded.append(cascade_parameters(hop1, hop2, cfg, p=p, q=q))
        object.__setattr__(self, "cascaded", tuple(cascaded))

        lam, d_R, d_B = cfg.lam, cfg.d_R, cfg.d_B
        delays = [pc.delay for pc in self.direct] + [c.delay for c in cascaded]
        om1 = np.array([-2 * np.pi * cfg.delta_f * t for t in delays])
        object.__setattr__(self, "omega1", _principal(om1))
        object.__setattr__(self, "omega2",
                           np.array([2 * np.pi / lam * d_R * c.psi2 for c in cascaded]))
        object.__setattr__(self, "omega3",
                           np.array([2 * np.pi / lam * d_R * c.psi3 for c in cascaded]))
        om4, om5 = [], []
        for pc in self.direct:
            wy, wz = spatial_generators(pc.aoa, d_B, lam)
            om4.append(wy)
            om5.append(wz)
        for c in cascaded:
            wy, wz = spatial_generators(self.ris_bs[c.q].aoa, d_B, lam)
            om4.append(wy)
            om5.append(wz)
        object.__setattr__(self, "omega4", np.array(om4))
        object.__setattr__(self, "omega5", np.array(om5))

    @property
    def L(self) -> int:
        return len(self.direct)

    @property
    def P(self) -> int:
        return len(self.ue_ris)

    @property
    def Q(self) -> int:
        return len(self.ris_bs)

    @property
    def C(self) -> int:
        return self.P * self.Q

    @property
    def R(self) -> int:
        return self.L + self.C


def _principal(omega: np.ndarray) -> np.ndarray:
    """Wrap phases into (-pi, pi]."""
    out = np.angle(np.exp(1j * np.asarray(omega, dtype=float)))
    return np.where(out == -np.pi, np.pi, out)


@dataclass(frozen=True)
class InterestParams:
    """The physical parameters that define the noise-free signal.

    Cascaded paths are enumerated q-major / p-fastest, matching the weight
    vector layout; ``group_of`` maps each cascaded path to its RIS-BS
    sub-path index q so the shared BS angle can be looked up.
    """

    tau_L: np.ndarray      # (L,) seconds
    theta_L: np.ndarray    # (L, 2) az, el
    beta_L: np.ndarray     # (L,) complex
    tau_R: np.ndarray      # (C,) seconds
    psi2: np.ndarray       # (C,)
    psi3: np.ndarray       # (C,)
    beta_R: np.ndarray     # (C,) complex
    theta_R: np.ndarray    # (Q, 2) az, el
    group_of: np.ndarray   # (C,) int in 0..Q-1

    def __post_init__(self):
        for name in ("tau_L", "psi2", "psi3", "tau_R"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("beta_L", "beta_R"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.complex128))
        object.__setattr__(self, "theta_L", np.asarray(self.theta_L, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "theta_R", np.asarray(self.theta_R, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "group_of", np.asarray(self.group_of, dtype=int))
        L, C, Q = self.tau_L.size, self.tau_R.size, self.theta_R.shape[0]
        if not (self.theta_L.shape[0] == L == self.beta_L.size):
            raise ValueError("direct-path arrays disagree on L")
        if not (self.psi2.size == self.psi3.size == self.beta_R.size == self.group_of.size == C):
            raise ValueError("cascaded arrays disagree on C")
        if C and (self.group_of.min() < 0 or self.group_of.max() >= Q):
            raise ValueError("group indices out of range")

    @property
    def L(self):
        return self.tau_L.size

    @property
    def C(self):
        return self.tau_R.size

    @property
    def Q(self):
        return self.theta_R.shape[0]

    @classmethod
    def from_ground_truth(cls, gt: MultipathGroundTruth) -> "InterestParams":
        return cls(
            tau_L=[pc.delay for pc in gt.direct],
            theta_L=[[pc.aoa.az, pc.aoa.el] for pc in gt.direct],
            beta_L=[pc.gain for pc in gt.direct],
            tau_R=[c.delay for c in gt.cascaded],
            psi2=[c.psi2 for c in gt.cascaded],
            psi3=[c.psi3 for c in gt.cascaded],
            beta_R=[c.gain for c in gt.cascaded],
            theta_R=[[pc.aoa.az, pc.aoa.el] for pc in gt.ris_bs],
            group_of=[c.q for c in gt.cascaded],
        )


def cascade_parameters(ue_ris: PathComponent, ris_bs: PathComponent,
                       cfg: SystemConfig, p: int = 0, q: int = 0) -> CascadedPath:
    """Combine one UE-RIS and one RIS-BS path into a cascaded entry."""
    phi_a = ue_ris.aoa
    phi_d = ris_bs.aod
    psi2 = (math.sin(phi_a.az) * math.cos(phi_a.el)
            + math.sin(phi_d.az) * math.cos(phi_d.el))
    psi3 = math.sin(phi_a.el) + math.sin(phi_d.el)
    return CascadedPath(
        p=p, q=q,
        gain=ue_ris.gain * ris_bs.gain,
        delay=ue_ris.delay + ris_bs.delay,
        psi2=psi2, psi3=psi3,
    )


def _hop_gain(lengths, lam, rng) -> complex:
    # free-space magnitude over the total traveled length of this one-hop
    # link's path; the cascade weakness comes from multiplying the two
    # one-hop gains, not from extra per-leg factors
    total = 0.0
    for d in lengths:
        if d <= 0:
            raise ValueError("coincident endpoints (zero hop length)")
        total += d
    return lam / (4 * np.pi * total) * np.exp(1j * rng.uniform(0.0, 2 * np.pi))


def geometry_to_paths(scene: Scene, cfg: SystemConfig, rng: np.random.Generator) -> MultipathGroundTruth:
    """Build ground truth from an explicit scene.

    Per link the LOS path comes first, then one path per scatterer in
    listed order. Delays are path length over c, angles are read off the
    direction vectors at the respective array, and gain magnitudes follow
    the per-hop free-space law with a random phase drawn from ``rng``.
    """
    ue = np.asarray(scene.ue)
    bs = np.asarray(scene.bs)
    ris = np.asarray(scene.ris)
    lam = cfg.lam

    direct = []
    hops = [np.linalg.norm(bs - ue)]
    direct.append(PathComponent(_hop_gain(hops, lam, rng), sum(hops) / C_LIGHT,
                                aoa=angles_from_direction(ue - bs)))
    for s in scene.scatterers_ue_bs:
        s = np.asarray(s)
        hops = [np.linalg.norm(s - ue), np.linalg.norm(bs - s)]
        direct.append(PathComponent(_hop_gain(hops, lam, rng), sum(hops) / C_LIGHT,
                                    aoa=angles_from_direction(s - bs)))

    ue_ris = []
    hops = [np.linalg.norm(ris - ue)]
    ue_ris.append(PathComponent(_hop_gain(hops, lam, rng), sum(hops) / C_LIGHT,
                                aoa=angles_from_direction(ue - ris)))
    for s in scene.scatterers_ue_ris:
        s = np.asarray(s)
        hops = [np.linalg.norm(s - ue), np.linalg.norm(ris - s)]
        ue_ris.append(PathComponent(_hop_gain(hops, lam, rng), sum(hops) / C_LIGHT,
                                    aoa=angles_from_direction(s - ris)))

    ris_bs = []
    hops = [np.linalg.norm(bs - ris)]
    ris_bs.append(PathComponent(_hop_gain(hops, lam, rng), sum(hops) / C_LIGHT,
                                aoa=angles_from_direction(ris - bs),
                                aod=angles_from_direction(bs - ris)))
    for s in scene.scatterers_ris_bs:
        s = np.asarray(s)
        hops = [np.linalg.norm(s - ris), np.linalg.norm(bs - s)]
        ris_bs.append(PathComponent(_hop_gain(hops, lam, rng), sum(hops) / C_LIGHT,
                                    aoa=angles_from_direction(s - bs),
                                    aod=angles_from_direction(s - ris)))

    return MultipathGroundTruth(tuple(direct), tuple(ue_ris), tuple(ris_bs), _cfg=cfg)


def channel_frequency_response(gt: MultipathGroundTruth, cfg: SystemConfig, k: int):
    """CFRs (h_L, h_R1, H_R2) at training subcarrier index k (0-based).

    The subcarrier frequency offset is f_k = k * delta_f, so k = 0 carries
    no delay phase.
    """
    if not 0 <= k < cfg.K:
        raise ValueError(f"subcarrier index {k} out of range 0..{cfg.K - 1}")
    f_k = k * cfg.delta_f
    lam = cfg.lam

    h_l = np.zeros(cfg.N_bs, dtype=np.complex128)
    for pc in gt.direct:
        phase = np.exp(-2j * np.pi * f_k * pc.delay)
        h_l += pc.gain * phase * upa_steering(cfg.Ny, cfg.Nz, cfg.d_B, lam, pc.aoa)

    h_r1 = np.zeros(cfg.M, dtype=np.complex128)
    for pc in gt.ue_ris:
        phase = np.exp(-2j * np.pi * f_k * pc.delay)
        h_r1 += pc.gain * phase * upa_steering(cfg.My, cfg.Mz, cfg.d_R, lam, pc.aoa)

    h_r2 = np.zeros((cfg.N_bs, cfg.M), dtype=np.complex128)
    for pc in gt.ris_bs:
        phase = np.exp(-2j * np.pi * f_k * pc.delay)
        a_b = upa_steering(cfg.Ny, cfg.Nz, cfg.d_B, lam, pc.aoa)
        a_r = upa_steering(cfg.My, cfg.Mz, cfg.d_R, lam, pc.aod)
        h_r2 += pc.gain * phase * np.outer(a_b, a_r)

    return h_l, h_r1, h_r2


def incident_power(gt: MultipathGroundTruth, cfg: SystemConfig) -> float:
    """Mean incident signal power per RIS element, averaged over subcarriers."""
    acc = 0.0
    for k in range(cfg.K):
        _, h_r1, _ = channel_frequency_response(gt, cfg, k)
        acc += float(np.vdot(h_r1, h_r1).real)
    return cfg.P_T * acc / (cfg.K * cfg.M)


def amplification_from_budget(p_r: float, p_in: float, sigma_r2: float, n_elements: int) -> float:
    """Amplification eta >= 1 sustained by the power budget p_r."""
    if p_r < 0:
        raise ValueError("RIS power budget must be non-negative")
    denom = n_elements * (p_in + sigma_r2)
    if denom <= 0:
        raise ValueError("incident-plus-noise power must be positive")
    return math.sqrt(1.0 + p_r / denom)


def validate_ground_truth(gt: MultipathGroundTruth, cfg: SystemConfig,
                          min_gap: float = 1e-3) -> None:
    """Reject scenes whose delays alias or nearly collide.

    All delays (direct and cascaded) must stay below 1/delta_f so the mode-1
    generator inversion is unambiguous, and pairwise generator gaps must
    exceed ``min_gap`` radians so the decomposition is well conditioned.
    """
    delays = np.array([pc.delay for pc in gt.direct] + [c.delay for c in gt.cascaded])
    if np.max(delays) >= 1.0 / cfg.delta_f:
        raise ValueError(
            f"max delay {np.max(delays):.3e} s exceeds 1/delta_f = {1.0 / cfg.delta_f:.3e} s")
    om = np.sort(gt.omega1)
    gaps = np.diff(np.concatenate([om, [om[0] + 2 * np.pi]]))
    if np.min(gaps) < min_gap:
        raise ValueError(f"delay generators nearly collide (min gap {np.min(gaps):.2e} rad)")
    # the arcsin-based azimuth inversion only covers the front half-space
    for pc in list(gt.direct) + list(gt.ris_bs):
        if abs(pc.aoa.az) >= np.pi / 2:
            raise ValueError(
                f"BS arrival azimuth {pc.aoa.az:.3f} rad outside (-pi/2, pi/2); "
                "place sources in the array's front half-space")
