"""Statistical performance modeling and active-learning design-space exploration."""

from .active import ObjectiveSpec, RunConfig, RunHistory, random_search, run_active_learning
from .bootstrap import BootstrapConfig, NoiseMode, bootstrap_sample
from .errors import StatDSEError
from .evaluators import TableEvaluator, SyntheticEvaluator, load_table_evaluator, make_synthetic_evaluator
from .gp import GPModel, KernelSpec, fit_gp, load_gp, posterior, posterior_joint, save_gp
from .pareto import ObjectivePoint, Provenance, dominates, pareto_frontier
from .regression import RegressionDataset, fit_lasso_path, fit_linear, fit_random_forest, normalized_rmse
from .space import DesignSpace, Direction, Manifest, Parameter, load_manifest
from .transfer import TransferConfig, combine_posterior, lambda_schedule, task_correlation

__version__ = "0.1.0"
