"""Linear precoding of correlated Gaussian sources over fading MIMO multiple-access channels.

Submodules
----------
linalg      small dense complex linear algebra helpers
model       scenario, channel and source sampling, MMSE receiver, sum-MSE
two_user    closed-form optimum for two single-antenna users
precoders   projected gradient, AMRT, MRT and Nu-SVD designs
sdp         semidefinite relaxation for single-antenna users and receiver
bound       separate source-channel coding distortion bound
sim         Monte Carlo driver, figure presets and CSV output
"""

from .errors import (
    ConfigError, ContractViolation, CorrmacError, DegenerateChannel, InfeasibleDimensions,
    NotPositiveDefinite, NumericalFailure, SingularMatrix, UnsupportedConfiguration,
)
from .model import (
    ChannelRealization, PrecoderSet, RngStream, Scenario, SourceModel, empirical_sum_mse,
    mmse_receiver, sample_channel, sample_sources, sdr_db, snr_to_power, sum_mse,
    uniform_covariance,
)
from .two_user import TwoUserSolution, two_user_optimal, two_user_sum_mse
from .precoders import (
    GradientConfig, amrt, full_power, mrt, mrt_optimized, mse_gradient, nusvd,
    nusvd_optimized, project_feasible, projected_gradient,
)
from .sdp import siso_precoder, solve_sdp
from .bound import iterative_waterfilling, sdr_bound_curve, separation_bound, sum_rate_distortion
from .sim import ExperimentConfig, ResultRow, load_config, reproduce_figure, run_experiment, write_csv

__version__ = "0.1.0"
