"""Monte Carlo experiment orchestration and CSV emission.

Each sweep point draws one ground truth and one probing design from streams
derived off the master seed, scales the noise floor to the target SNR, runs
independently seeded trials, and aggregates the metrics of every requested
method. The CRLB is computed once per point from the same configuration and
design the estimators see. Outputs are byte-reproducible for a fixed
(spec, seed): no timestamps, and wall-clock rows are emitted only on
request.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import crlb as crlb_mod
from .baselines import baseline_als_cpd, baseline_exhaustive_cbs, estimate_from_factors
from .channel import (
    C_LIGHT,
    InterestParams,
    Scene,
    amplification_from_budget,
    geometry_to_paths,
    incident_power,
    validate_ground_truth,
)
from .config import ConfigBundle
from .estimator import SearchSchedule, stage1, stage2_cbs, stage3_als
from .metrics import aggregate_rmse, nmse, sorted_sq_error
from .probing import (
    build_tensor,
    design_probing,
    scale_noise_to_snr,
    synthesize_rx,
)
from .vscpd import vscpd

__all__ = ["ExperimentSpec", "MetricRow", "run_experiment", "EXPERIMENT_KINDS",
           "STAGE_METHODS", "BASELINE_METHODS"]

EXPERIMENT_KINDS = ("los", "snr-sweep", "k-sweep", "active-vs-passive", "crlb-only")
STAGE_METHODS = {"I": "stage-I", "II": "stage-II", "III": "stage-III"}
BASELINE_METHODS = ("als-esprit", "als-cbs", "vscpd-cbs")
_DEG = 180.0 / math.pi


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    sweep_grid: tuple
    trials: int
    seed: int
    stages: tuple = ("I", "II", "III")
    baselines: tuple = ()
    out_path: Optional[str] = None
    per_trial: bool = False
    with_runtime: bool = False
    exhaustive_searches: int = 10000
    vscpd_cbs_searches: int = 1608

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not self.sweep_grid:
            raise ValueError("sweep grid must be non-empty")
        bad = set(self.stages) - set(STAGE_METHODS)
        if bad:
            raise ValueError(f"unknown stages {sorted(bad)}")
        bad = set(self.baselines) - set(BASELINE_METHODS)
        if bad:
            raise ValueError(f"unknown baselines {sorted(bad)}")


@dataclass(frozen=True)
class MetricRow:
    experiment: str
    sweep_value: float
    trial: str          # "agg" or the trial index as text
    method: str
    metric: str
    value: float
    units: str


@dataclass
class PointSetup:
    cfg: object
    scene: Scene
    gt: object
    design: object
    truth: InterestParams
    sched: SearchSchedule
    label: float
    config_hash: str
    design_hash: str
    mode: str = "active"


def _hash_cfg(cfg, scene) -> str:
    blob = repr((dataclasses.astuple(cfg), scene)).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _hash_design(design) -> str:
    h = hashlib.sha256()
    for arr in (design.nu2, design.nu3, design.nu4, design.nu5):
        h.update(np.asarray(arr).tobytes())
    h.update(repr((design.x, design.eta)).encode())
    return h.hexdigest()[:12]


def _prepare_point(bundle: ConfigBundle, seed: int, snr_db: float,
                   k_override: Optional[int] = None, passive: bool = False,
                   los: bool = False, label: Optional[float] = None) -> PointSetup:
    cfg = bundle.system
    scene = bundle.scene
    if los:
        scene = Scene(ue=scene.ue, bs=scene.bs, ris=scene.ris)
    if k_override is not None:
        cfg = dataclasses.replace(cfg, K=int(k_override), K1=int(k_override) // 2)
    if passive:
        # matched total power: the RIS budget is reassigned to the transmitter
        cfg = dataclasses.replace(cfg, P_T=cfg.P_T + cfg.P_R, P_R=0.0, sigma_R2=0.0)
    gt = geometry_to_paths(scene, cfg, np.random.default_rng((seed, 11)))
    validate_ground_truth(gt, cfg, min_gap=bundle.tolerances.min_generator_gap)
    if passive:
        eta = 1.0
    else:
        eta = amplification_from_budget(cfg.P_R, incident_power(gt, cfg),
                                        cfg.sigma_R2, cfg.M)
    design = design_probing(cfg, eta, seed=(seed, 101))
    cfg = scale_noise_to_snr(gt, cfg, design, snr_db)
    sched = SearchSchedule.from_config(cfg, points=bundle.search_points,
                                       iterations=bundle.search_iterations,
                                       shrink=bundle.search_shrink)
    return PointSetup(
        cfg=cfg, scene=scene, gt=gt, design=design,
        truth=InterestParams.from_ground_truth(gt), sched=sched,
        label=snr_db if label is None else label,
        config_hash=_hash_cfg(cfg, scene), design_hash=_hash_design(design),
        mode="passive" if passive else "active",
    )


def _family_sq_errors(truth: InterestParams, est: InterestParams) -> dict:
    out = {
        "rmse_tauL": (sorted_sq_error(truth.tau_L * C_LIGHT, est.tau_L * C_LIGHT), "m"),
        "rmse_tauR": (sorted_sq_error(truth.tau_R * C_LIGHT, est.tau_R * C_LIGHT), "m"),
        "rmse_psi2": (sorted_sq_error(truth.psi2, est.psi2), "unitless"),
        "rmse_psi3": (sorted_sq_error(truth.psi3, est.psi3), "unitless"),
        "rmse_thetaL": (
            sorted_sq_error(truth.theta_L[:, 0] * _DEG, est.theta_L[:, 0] * _DEG)
            + sorted_sq_error(truth.theta_L[:, 1] * _DEG, est.theta_L[:, 1] * _DEG),
            "deg"),
        "rmse_thetaR": (
            sorted_sq_error(truth.theta_R[:, 0] * _DEG, est.theta_R[:, 0] * _DEG)
            + sorted_sq_error(truth.theta_R[:, 1] * _DEG, est.theta_R[:, 1] * _DEG),
            "deg"),
    }
    return out


_CRLB_UNITS = {
    "tau_L": ("crlb_tauL", C_LIGHT, "m"),
    "tau_R": ("crlb_tauR", C_LIGHT, "m"),
    "psi2": ("crlb_psi2", 1.0, "unitless"),
    "psi3": ("crlb_psi3", 1.0, "unitless"),
    "theta_L": ("crlb_thetaL", _DEG, "deg"),
    "theta_R": ("crlb_thetaR", _DEG, "deg"),
}


@dataclass
class _MethodAccum:
    sq: dict = field(default_factory=dict)      # metric -> list of per-trial sq errors
    units: dict = field(default_factory=dict)
    nmse: list = field(default_factory=list)
    runtime: list = field(default_factory=list)
    successes: int = 0
    attempts: int = 0

    def add_success(self, truth, est_params, cfg, design, runtime_s):
        self.successes += 1
        fams = _family_sq_errors(truth, est_params)
        for metric, (sq, unit) in fams.items():
            self.sq.setdefault(metric, []).append(sq)
            self.units[metric] = unit
        self.nmse.append(nmse(truth, est_params, cfg, design))
        self.runtime.append(runtime_s * 1e3)


def _run_methods(point: PointSetup, bundle: ConfigBundle, spec: ExperimentSpec,
                 trial_seed) -> dict:
    """One trial: returns method -> (estimate-or-None, runtime_s, reason)."""
    cfg, gt, design = point.cfg, point.gt, point.design
    out = {}
    block = synthesize_rx(gt, cfg, design, noise_on=True, seed=trial_seed)
    y = build_tensor(block, cfg)

    need_vscpd = bool(spec.stages) or "vscpd-cbs" in spec.baselines
    vr = None
    if need_vscpd:
        t0 = time.perf_counter()
        try:
            vr = vscpd(y, bundle.R, cfg.K1, svd_gap_tol=bundle.tolerances.svd_gap_tol)
            ce1 = stage1(vr, vr.smoothed, cfg, design, bundle.L, bundle.P, bundle.Q)
        except Exception as exc:  # noqa: BLE001 - any failure aborts the trial
            out["stage-I"] = (None, time.perf_counter() - t0, type(exc).__name__)
            ce1 = None
        else:
            t1 = time.perf_counter() - t0
            if ce1.failed:
                out["stage-I"] = (None, t1, ce1.failure_reason)
            else:
                out["stage-I"] = (ce1, t1, None)
    if vr is not None and ce1 is not None and not ce1.failed:
        if "II" in spec.stages or "III" in spec.stages:
            t0 = time.perf_counter()
            try:
                ce2 = stage2_cbs(ce1, vr.factors, vr.smoothed, cfg, design, point.sched)
                out["stage-II"] = (ce2, out["stage-I"][1] + time.perf_counter() - t0, None)
            except Exception as exc:  # noqa: BLE001
                ce2 = None
                out["stage-II"] = (None, 0.0, type(exc).__name__)
        if "III" in spec.stages and out.get("stage-II", (None,))[0] is not None:
            t0 = time.perf_counter()
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    ce3 = stage3_als(vr.smoothed, ce2, cfg, design, point.sched,
                                     max_iters=bundle.tolerances.stage3_als_max_iters,
                                     tol=bundle.tolerances.stage3_als_tol)
                out["stage-III"] = (ce3, out["stage-II"][1] + time.perf_counter() - t0, None)
            except Exception as exc:  # noqa: BLE001
                out["stage-III"] = (None, 0.0, type(exc).__name__)
        if "vscpd-cbs" in spec.baselines:
            t0 = time.perf_counter()
            try:
                cb = baseline_exhaustive_cbs(ce1, vr.factors, vr.smoothed, cfg, design,
                                             spec.vscpd_cbs_searches)
                out["vscpd-cbs"] = (cb, out["stage-I"][1] + time.perf_counter() - t0, None)
            except Exception as exc:  # noqa: BLE001
                out["vscpd-cbs"] = (None, 0.0, type(exc).__name__)
    elif need_vscpd:
        reason = out["stage-I"][2]
        for name in ("stage-II", "stage-III"):
            if name.split("-")[1] in spec.stages:
                out[name] = (None, 0.0, reason)
        if "vscpd-cbs" in spec.baselines:
            out["vscpd-cbs"] = (None, 0.0, reason)

    if {"als-esprit", "als-cbs"} & set(spec.baselines):
        t0 = time.perf_counter()
        smoothed = vr.smoothed if vr is not None else None
        if smoothed is None:
            from .tensor_ops import spatial_smooth
            smoothed = spatial_smooth(y, cfg.K1)
        als = baseline_als_cpd(smoothed, bundle.R, seed=tuple(trial_seed) + (7,),
                               max_iters=bundle.tolerances.baseline_als_max_iters,
                               tol=bundle.tolerances.baseline_als_tol)
        t_als = time.perf_counter() - t0
        for name, search, n_s in (("als-esprit", "esprit", 0),
                                  ("als-cbs", "cbs", spec.exhaustive_searches)):
            if name not in spec.baselines:
                continue
            t0 = time.perf_counter()
            try:
                ce = estimate_from_factors(als.factors, smoothed, cfg, design,
                                           bundle.L, bundle.P, bundle.Q,
                                           search=search, n_searches=n_s or 2)
                if ce.failed:
                    out[name] = (None, t_als + time.perf_counter() - t0, ce.failure_reason)
                else:
                    out[name] = (ce, t_als + time.perf_counter() - t0, None)
            except Exception as exc:  # noqa: BLE001
                out[name] = (None, 0.0, type(exc).__name__)
    return out


def _point_rows(spec: ExperimentSpec, point: PointSetup, bundle: ConfigBundle,
                point_idx: int, compute_crlb: bool = True):
    """Trials, aggregation, and CRLB rows for one sweep point."""
    rows = []
    methods = [STAGE_METHODS[s] for s in ("I", "II", "III") if s in spec.stages]
    methods += [b for b in BASELINE_METHODS if b in spec.baselines]
    acc = {m: _MethodAccum() for m in methods}
    decomp_attempts = {"vscpd": 0, "als-cpd": 0}
    decomp_success = {"vscpd": 0, "als-cpd": 0}

    for trial in range(spec.trials if methods else 0):
        trial_seed = (spec.seed, point_idx, trial)
        results = _run_methods(point, bundle, spec, trial_seed)
        if "stage-I" in results:
            decomp_attempts["vscpd"] += 1
            decomp_success["vscpd"] += int(results["stage-I"][0] is not None)
        for b in ("als-esprit", "als-cbs"):
            if b in results:
                decomp_attempts["als-cpd"] += 1
                decomp_success["als-cpd"] += int(results[b][0] is not None)
                break
        for method in methods:
            if method not in results:
                continue
            ce, runtime_s, _reason = results[method]
            acc[method].attempts += 1
            if ce is None:
                continue
            acc[method].add_success(point.truth, ce.params, point.cfg,
                                    point.design, runtime_s)
            if spec.per_trial:
                fams = _family_sq_errors(point.truth, ce.params)
                for metric, (sq, unit) in fams.items():
                    rows.append(MetricRow(spec.kind, point.label, str(trial),
                                          method, metric, math.sqrt(sq), unit))
                rows.append(MetricRow(spec.kind, point.label, str(trial), method,
                                      "nmse", acc[method].nmse[-1], "unitless"))

    for name in ("vscpd", "als-cpd"):
        if decomp_attempts[name]:
            rate = decomp_success[name] / decomp_attempts[name]
            rows.append(MetricRow(spec.kind, point.label, "agg", name,
                                  "success_rate", rate, "unitless"))
    for method in methods:
        a = acc[method]
        if a.attempts == 0:
            continue
        for metric in sorted(a.sq):
            rows.append(MetricRow(spec.kind, point.label, "agg", method, metric,
                                  aggregate_rmse(a.sq[metric]), a.units[metric]))
        if a.nmse:
            rows.append(MetricRow(spec.kind, point.label, "agg", method, "nmse",
                                  float(np.mean(a.nmse)), "unitless"))
        if spec.with_runtime and a.runtime:
            rows.append(MetricRow(spec.kind, point.label, "agg", method,
                                  "runtime_ms", float(np.mean(a.runtime)), "ms"))

    if compute_crlb:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report = crlb_mod.fim(point.cfg, point.design, point.gt)
        for family, (metric, scale, unit) in _CRLB_UNITS.items():
            rows.append(MetricRow(spec.kind, point.label, "agg", "crlb", metric,
                                  report.family_bound(family, scale), unit))
    stats = {
        "success": {k: (decomp_success[k], decomp_attempts[k]) for k in decomp_attempts},
        "nmse": {m: (float(np.mean(acc[m].nmse)) if acc[m].nmse else float("nan"))
                 for m in methods},
    }
    return rows, stats


def _signal_power_split(point: PointSetup):
    """Cascaded-to-direct received energy ratio of the noise-free signal."""
    p = point.truth
    direct_only = InterestParams(
        tau_L=p.tau_L, theta_L=p.theta_L, beta_L=p.beta_L,
        tau_R=p.tau_R, psi2=p.psi2, psi3=p.psi3, beta_R=0 * p.beta_R,
        theta_R=p.theta_R, group_of=p.group_of)
    cascade_only = InterestParams(
        tau_L=p.tau_L, theta_L=p.theta_L, beta_L=0 * p.beta_L,
        tau_R=p.tau_R, psi2=p.psi2, psi3=p.psi3, beta_R=p.beta_R,
        theta_R=p.theta_R, group_of=p.group_of)
    from .probing import factor_set_from_params
    from .tensor_ops import cp_vec
    e_d = float(np.linalg.norm(cp_vec(factor_set_from_params(direct_only, point.cfg, point.design))) ** 2)
    e_r = float(np.linalg.norm(cp_vec(factor_set_from_params(cascade_only, point.cfg, point.design))) ** 2)
    return e_r / e_d


def run_experiment(spec: ExperimentSpec, bundle: ConfigBundle):
    """Execute an experiment; returns (rows, summary) and optionally writes CSV."""
    rows = []
    summary = {"kind": spec.kind, "seed": spec.seed, "points": []}
    comments = []
    if spec.kind == "los":
        bundle = dataclasses.replace(bundle, L=1, P=1, Q=1)

    if spec.kind in ("snr-sweep", "los", "crlb-only"):
        for idx, snr in enumerate(spec.sweep_grid):
            point = _prepare_point(bundle, spec.seed, float(snr),
                                   los=spec.kind == "los")
            comments.append(_point_comment(idx, point))
            if spec.kind == "crlb-only":
                point_rows, stats = _point_rows(
                    dataclasses.replace(spec, stages=(), baselines=(), trials=1),
                    point, bundle, idx)
            else:
                point_rows, stats = _point_rows(spec, point, bundle, idx)
            rows.extend(point_rows)
            summary["points"].append({"sweep": float(snr), **stats})
    elif spec.kind == "k-sweep":
        for idx, k in enumerate(spec.sweep_grid):
            point = _prepare_point(bundle, spec.seed, snr_db=15.0,
                                   k_override=int(k), label=float(k))
            comments.append(_point_comment(idx, point))
            point_rows, stats = _point_rows(spec, point, bundle, idx)
            rows.extend(point_rows)
            summary["points"].append({"sweep": float(k), **stats})
    elif spec.kind == "active-vs-passive":
        snr = float(spec.sweep_grid[0])
        for idx, passive in enumerate((False, True)):
            point = _prepare_point(bundle, spec.seed, snr, passive=passive,
                                   label=0.0 if passive else 1.0)
            comments.append(_point_comment(idx, point))
            point_rows, stats = _point_rows(spec, point, bundle, idx)
            rows.extend(point_rows)
            summary["points"].append({
                "sweep": point.label,
                "mode": point.mode,
                "amp_coef": point.design.eta,
                "power_ratio": _signal_power_split(point),
                **stats,
            })
    else:  # pragma: no cover - kinds validated in ExperimentSpec
        raise ValueError(spec.kind)

    if spec.out_path:
        text = render_csv(spec, rows, comments)
        with open(spec.out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return rows, summary


def _point_comment(idx: int, point: PointSetup) -> str:
    return (f"# point={idx} sweep={point.label!r} mode={point.mode} "
            f"config_hash={point.config_hash} design_hash={point.design_hash}")


def render_csv(spec: ExperimentSpec, rows, comments=()) -> str:
    buf = io.StringIO()
    buf.write(f"# experiment={spec.kind} seed={spec.seed} trials={spec.trials}\n")
    for line in comments:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["experiment", "sweep_value", "trial", "method",
                     "metric", "value", "units"])
    for row in rows:
        writer.writerow([row.experiment, repr(float(row.sweep_value)), row.trial,
                         row.method, row.metric, repr(float(row.value)), row.units])
    return buf.getvalue()
