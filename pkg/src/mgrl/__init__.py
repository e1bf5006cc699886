"""RL-tuned h/p-multigrid acceleration for 1D flux-reconstruction solvers."""

from .basis import Basis, build_basis, correction_function_derivs
from .equations import (
    BoundaryCondition,
    EquationSpec,
    burgers,
    linear_advection_diffusion,
    numerical_flux_inviscid,
    numerical_flux_viscous,
)
from .fr import (
    NonFiniteInput,
    SolutionField,
    compute_rhs,
    l2_error,
    l2_norm,
    residual_norm,
    rk4_step,
    stable_dt,
)
from .mesh import InvalidMesh, Mesh1D, map_ref_to_phys
from .multigrid import (
    CycleStats,
    Diverged,
    MaxCyclesExceeded,
    MultigridHierarchy,
    VCycleParams,
    baseline_params,
    build_hierarchy,
    prolong_h,
    prolong_p,
    restrict_h,
    restrict_p,
    solve_to_steady,
    v_cycle,
)
from .env import EpisodeConfig, EpisodeFinished, MultigridEnv, decode_action
from .ppo import PPOConfig, discounted_returns, ppo_clip_loss, sample_action, train
from .checkpoint import Checkpoint, CorruptFile, VersionMismatch, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
