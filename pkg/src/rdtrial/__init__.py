"""Risk-difference estimation and testing for two-arm trials with binary
endpoints, plus a Monte Carlo engine for their operating characteristics."""

__version__ = "0.1.0"

from .gcomp import RiskDiffInference, infer, standardize  # noqa: F401
from .harness import ScenarioSpec, paper_grid, run_grid, run_scenario  # noqa: F401
from .methods import METHOD_NAMES, apply_method  # noqa: F401
from .simgen import ScenarioParams, gen_trial, solve_coefficients  # noqa: F401
from .trialdata import TrialDataset, load_csv, stratify  # noqa: F401
