"""Mirror-averaging aggregation with a heavy-tailed sparsity prior.

Modules: ``prior`` (the truncated Student-type prior), ``models``
(dictionaries and Q-losses), ``tuning`` (temperature, scale and bound
formulas), ``aggregate`` (exact small-M aggregates), ``langevin`` (Euler
chains for larger M) and ``harness`` (generators, experiments, CLI).
"""
from .aggregate import AggregateResult, ewa_exact, ma_exact, predict
from .harness import ExperimentConfig, Report, run_experiment
from .langevin import LangevinConfig, ewa_langevin, ma_langevin
from .models import Dataset, Dictionary, LossModel, QuadratureGrid
from .prior import PriorConfig

__version__ = "0.1.0"

__all__ = [
    "AggregateResult", "Dataset", "Dictionary", "ExperimentConfig", "LangevinConfig",
    "LossModel", "PriorConfig", "QuadratureGrid", "Report", "ewa_exact", "ewa_langevin",
    "ma_exact", "ma_langevin", "predict", "run_experiment",
]
