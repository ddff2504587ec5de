"""Joint edge caching and recommendation with online PTM learning."""
from .core import (
    Catalog,
    ConstraintSet,
    DemandMatrix,
    DemandVector,
    Ptm,
    Strategy,
    expected_hit,
    generate_demands,
    realized_hit,
    update_demand_matrix,
)
from .estimators import BayesEstimator, PointEstimator, bayes_sample, dirichlet_draw, point_estimate, sigma_bar_sq
from .federation import FusionWeights, fuse, schedule_weights
from .optimizer import OptimizerConfig, best_response_cache, best_response_recommend, exhaustive_solve, solve
from .config import RunConfig, ExperimentSpec, parse_config
from .simulator import RunMetrics, regret_scaling_experiment, run

__version__ = "0.1.0"
