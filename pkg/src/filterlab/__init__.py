"""filterlab: a desk-scale laboratory for nonlinear filter stability.

Measure representations with total-variation and dual bounded-Lipschitz
distances, hidden-Markov-model building blocks with executable assumption
checkers, grid/particle/closed-form filters, and twin-filter experiments
that quantify how quickly (or whether) a filter forgets its prior.
"""

from .filters import (
    DegenerateUpdateError,
    FilterState,
    GridSpec,
    KalmanStaticState,
    kalman_static,
    kernel_matrix,
    observation_predictive,
    predict,
    run_grid_filter,
    run_particle_filter,
    trace_records,
    update,
)
from .measures import (
    DensityFn,
    DiscreteMeasure,
    GaussianMeasure,
    GridDensity,
    bl_distance,
    convolve_density,
    discretize,
    gaussian_bl_same_variance,
    gaussian_tv_same_variance,
    sample_measure,
    tv_distance,
)
from .models import (
    ARKernel,
    CheckReport,
    HMMSpec,
    ObservationChannel,
    StaticGaussianModel,
    TransitionKernel,
    ar_kernel_tv,
    assumption_report,
    char_fn_min,
    kernel_tv_modulus,
    simulate_path,
)
from .presets import PRESET_NAMES, Preset, get_preset
from .stability import (
    RateFit,
    StabilityTrace,
    TwinRunConfig,
    check_coupling_bound,
    cos_bl_lower_bound,
    estimate_rate,
    filter_predictor_tv_check,
    liminf_constant,
    twin_run,
)

__version__ = "0.1.0"
