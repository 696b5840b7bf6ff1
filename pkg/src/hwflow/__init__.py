"""Discrete Howitt-Warren flows: environments, kernels, webs, nets and their exact oracles."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .environment import (
    ArrowField,
    ArrowPairField,
    Environment,
    MarkField,
    net_to_environment,
    sample_alpha,
    sample_environment,
    sample_net_environment,
    sample_pair_field,
)
from .errors import (
    BadSpeeds,
    ConfigError,
    DegenerateSplit,
    EpsTooLarge,
    GateFailure,
    HWFlowError,
    InfiniteB,
    InfiniteSpeed,
    InvalidTheta,
    MissingMark,
    NotProbability,
    OutOfWindow,
    ThetaTooSmall,
    WindowTooSmall,
)
from .estimators import (
    MCEstimate,
    PiecewiseLinear,
    density_estimate,
    invariant_moment_estimate,
    mc_accumulate,
    relevant_count_estimate,
    rescale_profile,
    speed_estimate,
)
from .lattice import LatticeWindow
from .measures import (
    CharacteristicMeasure,
    FlowParams,
    ThetaTable,
    beta_pm,
    flow_from_theta,
    moment,
    mu_k_net_family,
    mucon_verify,
    sample_q,
    split_left_right,
    stickiness_and_speeds,
    theta_from_flow,
)
from .mp_oracle import IndexSet, apply_A_theta, f_g_delta, martingale_residuals, one_sided_derivative
from .nets import (
    ReachSet,
    density_exact,
    net_flow_kernel,
    psi_continuum,
    reachable_set,
    relevant_separation_points,
    sample_web_in_net,
)
from .seeding import derive_seed
from .walks import (
    KernelRow,
    MassProfile,
    NPointPath,
    evolve_profile,
    hw_step,
    kernel_row,
    npoint_sample,
    split_probability,
)
from .webs import DualWebPath, WebPath, coalescence_time, dual_path, forward_path, switch_point
