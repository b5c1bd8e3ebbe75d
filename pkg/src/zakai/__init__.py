"""Monte Carlo solver for Zakai equations of nonlinear filtering.

The unnormalized filter density is written as a Feynman-Kac expectation over
auxiliary diffusions driven backwards through the observation record, and
estimated by plain Monte Carlo with per-sample counter-based random streams.
"""

from .errors import DimensionError, InvalidParameterError, SimulationError, ZakaiError
from .estimator import (
    Q975,
    Estimate,
    EstimatorConfig,
    confidence_interval,
    estimate_grid,
    estimate_point,
    sample_log_weight,
    simulate_R_path,
)
from .model import (
    ExampleModelParams,
    FilteringModel,
    B_example,
    B_general,
    build_example_model,
    check_model_consistency,
    drift_R,
)
from .oracles import (
    KalmanState,
    PdeGrid1d,
    as_estimates,
    check_conjugation_identity,
    crank_nicolson_random_pde,
    kalman_bucy_density,
    kalman_filter,
)
from .rng import RngStreamSpec, StreamFamily, ZeroStreamFamily, gaussian_vector
from .simulate import (
    SignalObservationPath,
    TimeGrid,
    read_path_csv,
    sample_initial,
    simulate_signal_observation,
    write_path_csv,
)

__version__ = "0.1.0"
