"""Risk-based active learning with sparse multiclass relevance vector machines.

Main entry points:

* :mod:`rbal.decision` - maintenance decision process and EVPI
* :mod:`rbal.mrvm` - multiclass relevance vector machines (two training schemes)
* :mod:`rbal.gmm` - conjugate Gaussian class-conditional baseline
* :mod:`rbal.campaign` - the query-and-retrain loop over a stream
* :mod:`rbal.experiment` and :mod:`rbal.cli` - batch runs, aggregates and plots
"""

from .campaign import CampaignConfig, RunRecord, run_campaign
from .data import GeneratorConfig, MonitoringStream, generate_z24_analog, load_feature_csv
from .decision import DecisionProcess, evpi, meu, meu_perfect_info, should_query, z24_default
from .gmm import GmmModel, NiwPrior, gmm_fit, gmm_predict_proba
from .kernels import KernelSpec, Standardizer, gram, median_heuristic
from .metrics import aggregate_runs, decision_accuracy, macro_f1
from .mrvm import MrvmModel, TrainConfig, TrainingError, predict_label, predict_proba, train

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "RunRecord", "run_campaign",
    "GeneratorConfig", "MonitoringStream", "generate_z24_analog", "load_feature_csv",
    "DecisionProcess", "evpi", "meu", "meu_perfect_info", "should_query", "z24_default",
    "GmmModel", "NiwPrior", "gmm_fit", "gmm_predict_proba",
    "KernelSpec", "Standardizer", "gram", "median_heuristic",
    "aggregate_runs", "decision_accuracy", "macro_f1",
    "MrvmModel", "TrainConfig", "TrainingError", "predict_label", "predict_proba", "train",
]
