"""Certified lower bounds for transition densities of locally elliptic
diffusions: skeleton-control optimization, adaptive time grids, explicit
log-space bound formulas, and Monte Carlo verification."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DiffusionModel,
    SpectralData,
    check_hypothesis_A,
    growth_norm,
    spectral,
)
from .catalog import build_model, catalog_names, load_model_file, register_model  # noqa: F401
from .skeleton import (  # noqa: F401
    Control,
    SkeletonPath,
    ThetaParams,
    check_admissible,
    control_norm,
    growth_window,
    integrate_skeleton,
    recover_control,
)
from .distance import DistanceResult, OptimizerConfig, init_control, minimize_energy  # noqa: F401
from .grid import EnvelopeFn, TimeGrid, build_grid, envelope_constant, grid_count_bound  # noqa: F401
from .bounds import (  # noqa: F401
    BoundReport,
    UniversalConstants,
    derive_envelopes,
    elliptic_params,
    log_bound_evolution,
    log_bound_thm17,
    log_bound_thm21,
    log_bound_thm24,
    make_constants,
    tube_ellipticity_check,
)
from .evolution import (  # noqa: F401
    EvolutionConfig,
    Mollifier,
    StepSpec,
    gaussian_minorization_check,
    gram_perturbation_check,
    mollifier_eval,
    simulate_evolution,
)
from .verify import (  # noqa: F401
    McConfig,
    euler_maruyama,
    kde_at_point,
    remainder_scaling,
    verify_bound,
)
