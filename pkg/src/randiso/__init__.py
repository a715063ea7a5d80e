"""Random isochrons and mean-return-time fields for stochastic oscillators."""

__version__ = "0.1.0"

from .attractor import (
    circle_semidistance,
    forward_fiber,
    hausdorff_semidistance,
    pullback_fiber,
    stationary_radius,
    stationary_trajectory,
)
from .crps import crps_eval, crps_residuals, crps_sample, random_period, random_periods
from .flow import ensemble_flow, flow, variational_flow
from .isochron import (
    asymptotic_phase_lag,
    foliation_report,
    forward_isochron,
    forward_isochrons,
    invariance_residuals,
    isochron_map,
)
from .lyapunov import lyapunov_spectrum
from .models import CATALOG, make_model
from .mrt import (
    AnnulusGrid,
    build_operators,
    expected_period_compare,
    isophase,
    mean_flux_period,
    probe_double_expectation,
    solve_mrt,
    stationary_density,
)
from .noise import NoisePath, evaluate, sample_path, shift, zero_path
