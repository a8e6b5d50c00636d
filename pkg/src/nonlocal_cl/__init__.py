"""Particle and finite-volume solvers for nonlocal conservation laws
d_t u + div(u V(t, x, u * eta)) = 0, with kernel certification, existence
bounds and concentration diagnostics."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BlowupAbort, ConfigError, ContractViolation, DomainTooSmallError, NonIntegrableKernelError,
)
from .kernels import (  # noqa: E402
    ClosedFormKernel, Kernel, PiecewiseLinearKernel, RadialKernel, SmoothedStepKernel,
    check_decay_condition, kernel_norms, l1_distance, make_smoothed_kernel, make_step_kernel,
    smoothed_offset,
)
from .fields import GridField, GridSpec, convolve_grid, convolve_particles, lq_norm  # noqa: E402
from .velocity import (  # noqa: E402
    TransportField, VelocityModel, assemble_field, divergence_bound, lipschitz_bound,
    make_affine_desired_velocity, make_identity_velocity,
)
from .lagrangian import LagrangianRun, ParticleEnsemble, deposit, seed_from_datum, solution_values  # noqa: E402
from .eulerian import EulerianRun, cross_validate  # noqa: E402
from .analysis import (  # noqa: E402
    concentration_study, detect_blowup, existence_bound, predicted_position, qr_functional,
    velocity_window_bracket,
)
