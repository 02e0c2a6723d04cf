"""Monte Carlo pricing engine for path-dependent options with a learned
Girsanov drift.

One small network per time step parametrizes a change of measure on path
space; training minimizes the variance of the re-weighted payoff estimator,
and evaluation quantifies the reduction against plain Monte Carlo.
"""

from .diffusion import (
    BachelierParams,
    LocalVolParams,
    PathBatch,
    TimeGrid,
    accumulate_log_weight,
    is_estimator,
    simulate,
    simulate_bachelier,
    simulate_local_vol,
)
from .drift_nets import DriftStack, MlpParams, init_stack, load_stack, save_stack
from .errors import (
    ArbitrageError,
    DriftmcError,
    NumericalError,
    TrainingDivergedError,
    ValidationError,
)
from .evaluation import EvalReport, SweepSpec, compare, histogram, sweep
from .payoffs import AutoCallSpec, CallSpec, CallsPutsSpec, autocall_payoff, smooth_indicator
from .training import TrainConfig, TrainReport, auto_lambda, train
from .volsurface import SviParams, implied_vol, local_vol, svi_total_variance

__version__ = "0.1.0"

__all__ = [
    "ArbitrageError",
    "AutoCallSpec",
    "BachelierParams",
    "CallSpec",
    "CallsPutsSpec",
    "DriftStack",
    "DriftmcError",
    "EvalReport",
    "LocalVolParams",
    "MlpParams",
    "NumericalError",
    "PathBatch",
    "SviParams",
    "SweepSpec",
    "TimeGrid",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "ValidationError",
    "accumulate_log_weight",
    "autocall_payoff",
    "auto_lambda",
    "compare",
    "histogram",
    "implied_vol",
    "init_stack",
    "is_estimator",
    "load_stack",
    "local_vol",
    "save_stack",
    "simulate",
    "simulate_bachelier",
    "simulate_local_vol",
    "smooth_indicator",
    "svi_total_variance",
    "sweep",
    "train",
]
