"""Anytime diffusion sampling at desk scale.

Exact Gaussian-mixture denoisers make every stage of the reverse process
checkable in closed form: plain reverse runs, nested refinement runs that
trade outer for inner steps, linear inverse problems, and an interactive
steering service on top of branching sessions.
"""

from .errors import NoPredictionError, ParameterError, StateError
from .schedule import (
    NoiseSchedule,
    make_cosine_schedule,
    make_linear_schedule,
    schedule_from_config,
    uniform_grid,
    validate_grid,
)
from .denoiser import (
    Condition,
    DenoiserOutput,
    GmmPrior,
    UNCONDITIONAL,
    class_condition,
    conditional_posterior_mean,
    guided_condition,
    make_denoiser,
    make_measurement_denoiser,
    measurement_posterior_mean,
    posterior_mean,
    posterior_sample,
    posterior_stats,
)
from .transition import (
    TransitionKind,
    apply_transition,
    ddim_sigma,
    ddim_step,
    ddpm_moments,
    ddpm_step,
    dpm_pp_2s_step,
)
from .sampler import (
    ReverseProcess,
    SamplerConfig,
    Trace,
    TraceEntry,
    intermediate_prediction,
    sample,
)
from .nested import (
    AnytimeSession,
    NestedPlan,
    PredictionEvent,
    anytime_result,
    make_plan,
    nested_sample,
    session_advance,
    session_create,
    session_edit_condition,
    session_select,
)
from .inverse import (
    InverseProblem,
    LinearOperator,
    average_pool_operator,
    degrade,
    identity_operator,
    mask_operator,
    nested_inverse_sample,
    operator_from_matrix,
    psnr,
)
from .metrics import (
    AnytimeCurve,
    GaussianFit,
    anytime_curve,
    auc,
    consistency_curve,
    curve_rows,
    fit_gaussian,
    frechet_distance,
    prior_moments,
    value_at,
)
from .experiments import (
    nested_population,
    ratio_sweep,
    sample_population,
    split_trace,
)

__version__ = "0.1.0"
