"""Shift-invariance recovery of Vandermonde generators.

Three estimators are provided:

* :func:`element_esprit_joint` - joint EVD-based recovery of all generators
  from a subspace matrix whose leading grouped mode is Vandermonde.
* :func:`element_esprit_column` - one-lag least-squares phase of a single
  raw steering column.
* :func:`transformed_esprit_column` - closed-form recovery from a single
  column observed through a Vandermonde compression T^H.

The transformed-space construction follows from the geometric-sum identity
for b = T^H a(omega) with T Vandermonde (generators nu_g, M rows):

    b_g * (1 - e^{j(omega - nu_g)}) = 1 - e^{jM(omega - nu_g)}
    =>  b - e^{j omega} * (F b) = s * 1 + t * m,

with F = diag(e^{-j nu_g}), m = (e^{-j M nu_g})_g and scalars s, t that
absorb any scaling of b. Projecting out span{1, m} with Q leaves
Q b = e^{j omega} Q F b, solved in least squares. The identity holds in the
limit omega -> nu_g, so generator coincidence is not a singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RankDeficiencyError",
    "DegenerateProjectionError",
    "ShiftPair",
    "BeamspaceTransform",
    "element_esprit_joint",
    "element_esprit_column",
    "transformed_esprit_column",
    "build_beamspace",
]


class RankDeficiencyError(np.linalg.LinAlgError):
    """Selected subspace lost full column rank (uniqueness violated)."""


class DegenerateProjectionError(np.linalg.LinAlgError):
    """The projector annihilated the whole observed column."""


@dataclass(frozen=True)
class ShiftPair:
    """Row-selection index maps for the one-step shift in a grouped mode.

    Rows are assumed ordered with the shifted mode slowest and ``block``
    trailing rows per shift step, i.e. row (k, b) = k * block + b.
    """

    up: np.ndarray
    down: np.ndarray

    def __post_init__(self):
        up = np.asarray(self.up, dtype=np.intp)
        down = np.asarray(self.down, dtype=np.intp)
        if up.size != down.size:
            raise ValueError("selection maps must pick the same number of rows")
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "down", down)

    @classmethod
    def for_leading_mode(cls, n_lead: int, block: int) -> "ShiftPair":
        """Selections dropping the last / first slice of the leading mode."""
        if n_lead < 2:
            raise ValueError("leading mode must have at least 2 steps")
        return cls(np.arange((n_lead - 1) * block), np.arange(block, n_lead * block))


def element_esprit_joint(u: np.ndarray, pair: ShiftPair, rank_tol: float = 1e-10):
    """Joint element-space ESPRIT via EVD of (Jup U)^dagger (Jdown U).

    Returns ``(omega, d)`` with generators sorted ascending in (-pi, pi] and
    the eigenvector matrix ``d`` permuted consistently. Raises
    :class:`RankDeficiencyError` when Jup U loses full column rank.
    """
    u = np.asarray(u)
    r = u.shape[1]
    a_up = u[pair.up]
    a_dn = u[pair.down]
    sv = np.linalg.svd(a_up, compute_uv=False)
    if a_up.shape[0] < r or sv[-1] <= rank_tol * sv[0]:
        raise RankDeficiencyError(
            f"shifted subspace has numerical rank < {r} "
            f"(sigma_min/sigma_max = {sv[-1] / sv[0]:.2e})" if a_up.shape[0] >= r
            else f"only {a_up.shape[0]} selected rows for rank {r}"
        )
    psi = np.linalg.lstsq(a_up, a_dn, rcond=None)[0]
    eigvals, d = np.linalg.eig(psi)
    omega = np.angle(eigvals)
    order = np.argsort(omega, kind="stable")
    return omega[order], d[:, order]


def element_esprit_column(b: np.ndarray) -> float:
    """One-lag least-squares phase: omega = arg(b[:-1]^dagger b[1:])."""
    b = np.asarray(b).ravel()
    if b.size < 2:
        raise ValueError("need at least 2 entries")
    num = np.vdot(b[:-1], b[1:])
    if np.vdot(b, b).real == 0.0:
        raise ValueError("zero column")
    return float(np.angle(num))


@dataclass(frozen=True)
class BeamspaceTransform:
    """Vandermonde compression T plus its shift operator and projector.

    ``f_diag`` holds the diagonal of F = diag(e^{-j nu_g}) satisfying
    Jup T = Jdown T F; ``projector`` is the orthogonal projector onto the
    complement of span{1, (e^{-j M nu_g})_g}.
    """

    t: np.ndarray
    generators: np.ndarray
    f_diag: np.ndarray
    projector: np.ndarray
    n_elements: int


def build_beamspace(t: np.ndarray, n_elements: int, ratio_tol: float = 1e-8) -> BeamspaceTransform:
    """Construct the transformed-space operators for a Vandermonde matrix."""
    t = np.asarray(t, dtype=np.complex128)
    m, g = t.shape
    if n_elements != m:
        raise ValueError(f"element count {n_elements} != rows {m}")
    if m < 2:
        raise ValueError("need at least 2 rows to read generators")
    ratios = t[1:] / t[:-1]
    nu = np.angle(ratios[0])
    if np.max(np.abs(ratios - np.exp(1j * nu)[None, :])) > ratio_tol:
        raise ValueError("input is not Vandermonde (row-ratio test failed)")
    f_diag = np.exp(-1j * nu)
    v = np.column_stack([np.ones(g), np.exp(-1j * m * nu)])
    q = np.eye(g) - v @ np.linalg.lstsq(v, np.eye(g), rcond=None)[0]
    # construction invariant: Jup T == Jdown T F
    resid = np.linalg.norm(t[:-1] - t[1:] * f_diag[None, :])
    if resid > 1e-10 * np.linalg.norm(t):
        raise ValueError(f"shift invariance violated (residual {resid:.2e})")
    return BeamspaceTransform(t, nu, f_diag, q, m)


def transformed_esprit_column(b: np.ndarray, bt: BeamspaceTransform) -> float:
    """Recover omega from a single compressed column b ~ T^H a(omega).

    Scale and global phase of ``b`` cancel in the least-squares ratio. Exact
    on noise-free inputs, including omega coinciding with a generator.
    """
    b = np.asarray(b).ravel()
    g = bt.projector.shape[0]
    if b.size != g:
        raise ValueError(f"column length {b.size} != transform size {g}")
    if g < 3:
        raise ValueError("transform must keep at least 3 beams (Q kills 2 dimensions)")
    qb = bt.projector @ b
    qfb = bt.projector @ (bt.f_diag * b)
    denom = np.vdot(qfb, qfb).real
    if denom <= 1e-24 * np.vdot(b, b).real:
        raise DegenerateProjectionError("projection annihilated the column")
    return float(np.angle(np.vdot(qfb, qb)))
