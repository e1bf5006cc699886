"""Episodic RL environment wrapping the multigrid solver.

One step = one V-cycle with agent-chosen parameters.  The state is the
relative residual drop, its sign, and the equation coefficients; the reward
is the relative drop divided by the time the cycle took (wall seconds, or a
deterministic virtual clock counting finest-level tendency evaluations).
"""

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import equations
from .equations import EquationSpec, dirichlet_for, initial_condition
from .fr import SolutionField
from .mesh import Mesh1D
from .multigrid import VCycleParams, baseline_params, build_hierarchy, v_cycle

SWEEP_MAX = 10
VIRTUAL_SECONDS_PER_EVAL = 1e-3
DIVERGENCE_PENALTY = -10.0


class EpisodeFinished(RuntimeError):
    """step() was called after the episode ended."""


def decode_action(raw, order, sweep_max=SWEEP_MAX):
    """Map tanh-range action channels onto V-cycle parameters.

    Channels: P pre-sweeps, P-1 post-sweeps, then the finest correction
    fraction.  Sweeps use round-half-up of an affine map onto [1, sweep_max];
    the fraction maps onto [0.05, 1.0].
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (2 * order,):
        raise ValueError(f"expected {2 * order} action channels, got {raw.shape}")

    def to_sweeps(v):
        s = math.floor(1.0 + (v + 1.0) / 2.0 * (sweep_max - 1) + 0.5)
        return min(max(s, 1), sweep_max)

    pre = tuple(to_sweeps(v) for v in raw[:order])
    post = tuple(to_sweeps(v) for v in raw[order:2 * order - 1])
    alpha = 0.05 + (raw[-1] + 1.0) / 2.0 * 0.95
    alpha = min(max(alpha, 0.05), 1.0)
    return VCycleParams(pre, post, alpha, sweep_max=sweep_max)


def action_dim(order):
    return 2 * order


def state_dim(eq_kind):
    return 4 if eq_kind == equations.LINEAR else 3


@dataclass
class EpisodeConfig:
    """Everything needed to build one episode's solver instance.

    a_range / nu_range switch on per-episode coefficient sampling (uniform
    advection speed, log-uniform viscosity) used during training; fixed
    coefficients are used when the ranges are None.
    """

    eq_kind: str = equations.LINEAR
    a: float = 1.0
    nu: float = 0.01
    order: int = 2
    n_elements: int = 32
    mesh_kind: str = "uniform"
    mesh_seed: int = 0
    mode: str = "hp"
    tol: float = 1e-9
    max_steps: int = 2000
    sweep_max: int = SWEEP_MAX
    clock: str = "wall"
    seconds_per_eval: float = VIRTUAL_SECONDS_PER_EVAL
    a_range: tuple | None = None
    nu_range: tuple | None = None
    resample_mesh: bool = False

    def equation(self, a, nu):
        if self.eq_kind == equations.LINEAR:
            return equations.linear_advection_diffusion(a, nu)
        return equations.burgers(nu)

    def to_dict(self):
        return asdict(self)


def encode_state(rel_drop, eq: EquationSpec):
    sign = 1.0 if rel_drop >= 0.0 else -1.0
    if eq.kind == equations.LINEAR:
        return np.array([rel_drop, sign, eq.a, eq.nu])
    return np.array([rel_drop, sign, eq.nu])


class MultigridEnv:
    """Gym-flavoured episodic interface around solve-to-steady runs.

    reset() builds the mesh/hierarchy, samples the initial condition, and
    runs one baseline V-cycle to seed the first relative drop.  step(raw)
    decodes the action, runs one V-cycle, and pays out the drop-per-second
    reward.  Totals (cycles, evals, clock seconds) include the seeding
    cycle so episode costs are comparable with plain solver runs.
    """

    def __init__(self, config: EpisodeConfig, rng=None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.mesh_seed)
        self._episode = 0
        self._trace_path = None
        self._trace_rows = None
        self.done = True

    @property
    def order(self):
        return self.config.order

    @property
    def action_size(self):
        return action_dim(self.config.order)

    @property
    def state_size(self):
        return state_dim(self.config.eq_kind)

    def record_trace(self, path):
        """Write a JSON-lines record per step of the next episodes."""
        self._trace_path = path
        self._trace_rows = []

    def _sample_coefficients(self):
        cfg = self.config
        a, nu = cfg.a, cfg.nu
        if cfg.a_range is not None:
            a = float(self.rng.uniform(*cfg.a_range))
        if cfg.nu_range is not None:
            lo, hi = cfg.nu_range
            nu = float(np.exp(self.rng.uniform(np.log(lo), np.log(hi))))
        return a, nu

    def _build_mesh(self):
        cfg = self.config
        if cfg.mesh_kind == "uniform":
            return Mesh1D.uniform(cfg.n_elements)
        seed = cfg.mesh_seed
        if cfg.resample_mesh:
            seed = int(self.rng.integers(0, 2**31 - 1))
        return Mesh1D.perturbed(cfg.n_elements, seed)

    def _clock(self, stats):
        if self.config.clock == "virtual":
            return stats.rhs_evals * self.config.seconds_per_eval
        return stats.wall_time

    def reset(self):
        cfg = self.config
        a, nu = self._sample_coefficients()
        self.eq = cfg.equation(a, nu)
        self.bc = dirichlet_for(self.eq)
        mesh = self._build_mesh()
        self.hierarchy = build_hierarchy(cfg.order, mesh, self.eq, mode=cfg.mode)
        coeffs = initial_condition(self.hierarchy.finest.x_nodes)
        self.field = SolutionField(self.hierarchy.finest.ref, coeffs)

        self.steps = 0
        self.cycles = 0
        self.total_rhs_evals = 0
        self.total_clock = 0.0
        self.total_wall = 0.0
        self._episode += 1

        # seed r_0 and the first relative drop with one baseline cycle
        seed_params = baseline_params(self.hierarchy)
        out, stats = v_cycle(self.field.coeffs, self.hierarchy, seed_params, self.bc)
        self._account(stats)
        if stats.diverged:
            self.residual = np.inf
            rel_drop = -1.0
            self.done = True
        else:
            self.field = SolutionField(self.field.level_ref, out)
            self.residual = stats.residual_after
            rel_drop = (stats.residual_before - stats.residual_after) / stats.residual_before
            self.done = self.residual <= cfg.tol
        self.state = encode_state(rel_drop, self.eq)
        return self.state

    def _account(self, stats):
        self.cycles += 1
        self.total_rhs_evals += stats.rhs_evals
        self.total_clock += self._clock(stats)
        self.total_wall += stats.wall_time

    def step(self, raw_action):
        if self.done:
            raise EpisodeFinished("episode is over; call reset()")
        cfg = self.config
        params = decode_action(raw_action, cfg.order, cfg.sweep_max)
        out, stats = v_cycle(self.field.coeffs, self.hierarchy, params, self.bc)
        self._account(stats)
        self.steps += 1

        if stats.diverged:
            reward = DIVERGENCE_PENALTY
            rel_drop = -1.0
            self.done = True
        else:
            self.field = SolutionField(self.field.level_ref, out)
            rel_drop = (stats.residual_before - stats.residual_after) / stats.residual_before
            reward = rel_drop / self._clock(stats)
            self.residual = stats.residual_after
            if self.residual <= cfg.tol or self.steps >= cfg.max_steps:
                self.done = True

        self.state = encode_state(rel_drop, self.eq)
        if self._trace_rows is not None:
            self._trace_rows.append({
                "episode": self._episode,
                "step": self.steps,
                "state": [float(x) for x in self.state],
                "pre_sweeps": list(params.pre_sweeps),
                "post_sweeps": list(params.post_sweeps),
                "alpha": params.alpha_finest,
                "reward": float(reward),
                "residual": float(stats.residual_after),
            })
            if self.done:
                self.flush_trace()
        return self.state, float(reward), self.done

    @property
    def converged(self):
        return self.done and np.isfinite(self.residual) and self.residual <= self.config.tol

    def flush_trace(self):
        if self._trace_path and self._trace_rows is not None:
            with open(self._trace_path, "a") as fh:
                for row in self._trace_rows:
                    fh.write(json.dumps(row) + "\n")
            self._trace_rows = []


def run_episode(env, policy_fn, max_steps=None):
    """Drive one episode with policy_fn(state) -> raw action.  Returns the
    usual per-episode totals as a dict."""
    state = env.reset()
    limit = max_steps if max_steps is not None else env.config.max_steps
    rewards = []
    while not env.done and len(rewards) < limit:
        state, reward, done = env.step(policy_fn(state))
        rewards.append(reward)
    return {
        "steps": env.steps,
        "cycles": env.cycles,
        "rewards": rewards,
        "converged": env.converged,
        "residual": env.residual,
        "rhs_evals": env.total_rhs_evals,
        "clock_seconds": env.total_clock,
        "wall_seconds": env.total_wall,
    }
