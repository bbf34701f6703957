"""Structure-preserving kernel regression for phase-space vector fields.

Recovers a scalar generator H: R^{2d} -> R from N noisy samples of its
vector field J grad H, in closed form, together with the matching GP
posterior, a streaming update rule, benchmark systems, model selection,
flow comparison, and grid-based evaluation reports.
"""

from .dynamics import IntegrationError, Trajectory, flow_sup_error, integrate
from .estimator import (
    FittedModel,
    GPPosterior,
    fit,
    gp_posterior,
    gp_posterior_mean,
    gp_posterior_var,
    predict_field,
    predict_field_batch,
    predict_grad,
    predict_grad_batch,
    predict_h,
    predict_h_batch,
)
from .evaluation import (
    ConvergenceResult,
    ErrorReport,
    GridSpec,
    NoiseSweepResult,
    convergence_study,
    model_potential_grid,
    noise_sweep,
    potential_grid,
    shifted_error,
)
from .gram import FactorizationError, SymplecticBlocks, assemble_gram, solve_regularized
from .kernel import GaussianKernel, fd_reference
from .modelselect import PAPER_C_GRID, GridSearchResult, SearchSpec, cv_score, grid_search
from .online import OnlineState, as_fitted_model, online_coeffs, online_init, online_update
from .systems import (
    Dataset,
    HamiltonianSystem,
    builtin,
    builtin_names,
    read_dataset,
    sample_dataset,
    write_dataset,
)

__version__ = "0.1.0"
