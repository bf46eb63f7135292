"""Cox regression with temporal covariates whose paths follow a parametric drift.

Only the covariate value at the event time is needed: each subject's path is
reconstructed by integrating the drift backwards, the origin density is
estimated by a Gaussian kernel, and the baseline hazard is a step function
profiled out of the likelihood.
"""

from .drift import DEFAULT_SOLVER, DriftModel, SolverConfig, jacobian_logdet, solve_g, solve_g_inverse
from .density import KernelDensity, build_initial_density, log_density
from .estimators import AdaptiveLassoCoxFlow, CoxFlowRegressor, TwoStepCoxFlow
from .exceptions import (
    CoxFlowError,
    DataError,
    DivisionByZeroWeight,
    EmptyDataset,
    HazardTooFlat,
    InsufficientPanel,
    MissingEventRow,
    NoConvergence,
    NonFiniteForecast,
    NonFiniteLikelihood,
    NonFiniteState,
    PanelOrderError,
    SchemaError,
    SingularFlow,
)
from .forecast import ForecastQuery, ltsr, ltsr_batch
from .hazard import StepwiseHazard, cumulative, hazard_eval, profile_thetas
from .likelihood import (
    LikelihoodValue,
    ParameterProfile,
    ProfiledObjective,
    alasso_penalty,
    conditional_loglik,
    full_loglik,
    penalized_loglik,
)
from .optimize import FitConfig, FitResult, fit_alasso, fit_mle, fit_two_step
from .records import PanelRecord, TerminalRecord
from .report import StudyResult, hazard_curve, run_study, selection_metrics
from .simulate import SimDesign, sparse16_design, simulate_panel, simulate_terminal, simulate_thinning_oracle

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
