"""Unique ergodicity of the nonlinear filter for finite hidden Markov models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: F401
    HmmModel,
    ValidationReport,
    as_simplex,
    load_model,
    fully_observed_model,
    load_model_file,
    parity_model,
    period,
    point_mass,
    silent_model,
    stationary_distribution,
    validate,
)
from .filtering import (  # noqa: F401
    filter_path,
    filter_step,
    minmax_gap,
    product_normalized,
    simulate,
    tv_distance,
)
from .simplex_kernel import (  # noqa: F401
    AtomicMeasure,
    ConvexTestFamily,
    barycenter,
    check_invariant,
    convex_order_leq,
    dirac_at,
    find_invariant,
    kernel_push,
    spread,
)
from .conditions import (  # noqa: F401
    check_K,
    check_KR,
    check_N,
    check_O,
    condition_c_witness,
)
from .lab import entropy_rate, occupation_compare, stability_curve, verdict  # noqa: F401
