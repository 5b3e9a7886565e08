"""Structured-tensor channel estimation for active-RIS SIMO-OFDM links.

Library layout:

* :mod:`risten.tensor_ops` - dense complex tensor algebra and the ALS core
* :mod:`risten.channel` - geometry, steering, CFRs, and the power budget
* :mod:`risten.probing` - pilot/RIS/combiner design and signal synthesis
* :mod:`risten.esprit` - shift-invariance generator estimators
* :mod:`risten.vscpd` - smoothing-based Vandermonde-structured CPD
* :mod:`risten.estimator` - the three-stage parameter pipeline
* :mod:`risten.crlb` - closed-form bound with parameter-dependent noise
* :mod:`risten.metrics`, :mod:`risten.baselines`, :mod:`risten.experiments`,
  :mod:`risten.config`, :mod:`risten.cli` - benchmark harness
"""

from .channel import (
    AnglePair,
    InterestParams,
    MultipathGroundTruth,
    PathComponent,
    Scene,
    SystemConfig,
    amplification_from_budget,
    geometry_to_paths,
)
from .config import ConfigBundle, ConfigError, load_config
from .crlb import CrlbReport, ParamVector, fim
from .estimator import ChannelEstimate, SearchSchedule, stage1, stage2_cbs, stage3_als
from .experiments import ExperimentSpec, MetricRow, run_experiment
from .metrics import nmse, rmse_sorted
from .probing import ProbingDesign, build_tensor, design_probing, synthesize_rx
from .tensor_ops import FactorSet, Tensor, cp_als, cp_reconstruct
from .vscpd import VscpdResult, uniqueness_check, vscpd

__version__ = "0.1.0"

__all__ = [
    "AnglePair", "InterestParams", "MultipathGroundTruth", "PathComponent",
    "Scene", "SystemConfig", "amplification_from_budget", "geometry_to_paths",
    "ConfigBundle", "ConfigError", "load_config",
    "CrlbReport", "ParamVector", "fim",
    "ChannelEstimate", "SearchSchedule", "stage1", "stage2_cbs", "stage3_als",
    "ExperimentSpec", "MetricRow", "run_experiment",
    "nmse", "rmse_sorted",
    "ProbingDesign", "build_tensor", "design_probing", "synthesize_rx",
    "FactorSet", "Tensor", "cp_als", "cp_reconstruct",
    "VscpdResult", "uniqueness_check", "vscpd",
    "__version__",
]
