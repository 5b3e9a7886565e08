"""Experiment configuration files: INI sections with strict key checking.

Sections and keys (all required unless noted):

  [arrays]      My Mz Ny Nz N1 N2 d_R_wavelengths d_B_wavelengths
  [ofdm]        f_c_hz bandwidth_hz K0 K K1 G1 G2
  [power]       P_T_dbm P_R_dbm noise_psd_dbm_hz noise_figure_db
  [multipath]   L P Q
  [scene]       ue bs ris scatterers_ue_bs scatterers_ue_ris scatterers_ris_bs
                (positions "x, y, z"; scatterer lists split by ";", may be empty)
  [search]      points iterations shrink
  [tolerances]  stage3_als_tol stage3_als_max_iters baseline_als_tol
                baseline_als_max_iters svd_gap_tol min_generator_gap

Per-subcarrier noise power is derived as PSD + NF + 10 log10(delta_f) with
delta_f = bandwidth / K0; unknown keys or sections are errors.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .channel import C_LIGHT, Scene, SystemConfig

__all__ = ["ConfigError", "Tolerances", "ConfigBundle", "load_config", "parse_config_text"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""


_SCHEMA = {
    "arrays": {"My", "Mz", "Ny", "Nz", "N1", "N2", "d_R_wavelengths", "d_B_wavelengths"},
    "ofdm": {"f_c_hz", "bandwidth_hz", "K0", "K", "K1", "G1", "G2"},
    "power": {"P_T_dbm", "P_R_dbm", "noise_psd_dbm_hz", "noise_figure_db"},
    "multipath": {"L", "P", "Q"},
    "scene": {"ue", "bs", "ris", "scatterers_ue_bs", "scatterers_ue_ris",
              "scatterers_ris_bs"},
    "search": {"points", "iterations", "shrink"},
    "tolerances": {"stage3_als_tol", "stage3_als_max_iters", "baseline_als_tol",
                   "baseline_als_max_iters", "svd_gap_tol", "min_generator_gap"},
}


@dataclass(frozen=True)
class Tolerances:
    stage3_als_tol: float = 1e-8
    stage3_als_max_iters: int = 300
    baseline_als_tol: float = 1e-15
    baseline_als_max_iters: int = 300
    svd_gap_tol: float = 1e-10
    min_generator_gap: float = 1e-3


@dataclass(frozen=True)
class ConfigBundle:
    system: SystemConfig
    scene: Scene
    L: int
    P: int
    Q: int
    search_points: int
    search_iterations: int
    search_shrink: float
    tolerances: Tolerances

    @property
    def R(self) -> int:
        return self.L + self.P * self.Q


def _point(text: str):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"position needs 3 coordinates, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad coordinate in {text!r}") from exc


def _points(text: str):
    text = text.strip()
    if not text:
        return ()
    return tuple(_point(part) for part in text.split(";"))


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def parse_config_text(text: str) -> ConfigBundle:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep key case (My vs my)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    sections = set(parser.sections())
    unknown = sections - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    missing = set(_SCHEMA) - sections
    if missing:
        raise ConfigError(f"missing sections: {sorted(missing)}")
    for name, keys in _SCHEMA.items():
        got = set(parser[name])
        bad = got - keys
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        lost = keys - got
        if lost:
            raise ConfigError(f"missing keys in [{name}]: {sorted(lost)}")

    def geti(sec, key):
        try:
            return parser[sec].getint(key)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key} must be an integer") from exc

    def getf(sec, key):
        try:
            return parser[sec].getfloat(key)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key} must be a number") from exc

    f_c = getf("ofdm", "f_c_hz")
    bandwidth = getf("ofdm", "bandwidth_hz")
    k0 = geti("ofdm", "K0")
    if f_c <= 0 or bandwidth <= 0:
        raise ConfigError("f_c_hz and bandwidth_hz must be positive")
    delta_f = bandwidth / k0
    lam = C_LIGHT / f_c
    psd = getf("power", "noise_psd_dbm_hz")
    nf = getf("power", "noise_figure_db")
    sigma2 = dbm_to_watt(psd + nf + 10.0 * math.log10(delta_f))

    try:
        system = SystemConfig(
            My=geti("arrays", "My"), Mz=geti("arrays", "Mz"),
            Ny=geti("arrays", "Ny"), Nz=geti("arrays", "Nz"),
            N1=geti("arrays", "N1"), N2=geti("arrays", "N2"),
            K0=k0, K=geti("ofdm", "K"), K1=geti("ofdm", "K1"),
            G1=geti("ofdm", "G1"), G2=geti("ofdm", "G2"),
            delta_f=delta_f, f_c=f_c,
            d_R=getf("arrays", "d_R_wavelengths") * lam,
            d_B=getf("arrays", "d_B_wavelengths") * lam,
            P_T=dbm_to_watt(getf("power", "P_T_dbm")),
            P_R=dbm_to_watt(getf("power", "P_R_dbm")),
            sigma_B2=sigma2, sigma_R2=sigma2,
            noise_psd_dbm_hz=psd, noise_figure_db=nf,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    scene = Scene(
        ue=_point(parser["scene"]["ue"]),
        bs=_point(parser["scene"]["bs"]),
        ris=_point(parser["scene"]["ris"]),
        scatterers_ue_bs=_points(parser["scene"]["scatterers_ue_bs"]),
        scatterers_ue_ris=_points(parser["scene"]["scatterers_ue_ris"]),
        scatterers_ris_bs=_points(parser["scene"]["scatterers_ris_bs"]),
    )
    l_paths = geti("multipath", "L")
    p_paths = geti("multipath", "P")
    q_paths = geti("multipath", "Q")
    counts = (
        ("L", l_paths, len(scene.scatterers_ue_bs)),
        ("P", p_paths, len(scene.scatterers_ue_ris)),
        ("Q", q_paths, len(scene.scatterers_ris_bs)),
    )
    for name, n, n_scat in counts:
        if n != n_scat + 1:
            raise ConfigError(
                f"{name} = {n} but the scene provides {n_scat} scatterers "
                f"(need {name} - 1 = {n - 1})")

    tol = parser["tolerances"]
    tolerances = Tolerances(
        stage3_als_tol=getf("tolerances", "stage3_als_tol"),
        stage3_als_max_iters=geti("tolerances", "stage3_als_max_iters"),
        baseline_als_tol=getf("tolerances", "baseline_als_tol"),
        baseline_als_max_iters=geti("tolerances", "baseline_als_max_iters"),
        svd_gap_tol=getf("tolerances", "svd_gap_tol"),
        min_generator_gap=getf("tolerances", "min_generator_gap"),
    )
    points = geti("search", "points")
    iterations = geti("search", "iterations")
    shrink = getf("search", "shrink")
    if points % 2 == 0 or points < 3:
        raise ConfigError("search points must be odd and >= 3")
    if not 0.0 < shrink < 1.0:
        raise ConfigError("search shrink must lie in (0, 1)")
    if iterations < 1:
        raise ConfigError("search iterations must be >= 1")
    return ConfigBundle(
        system=system, scene=scene, L=l_paths, P=p_paths, Q=q_paths,
        search_points=points, search_iterations=iterations, search_shrink=shrink,
        tolerances=tolerances,
    )


def load_config(path) -> ConfigBundle:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
