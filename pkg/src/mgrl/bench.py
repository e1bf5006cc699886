"""Campaign harness: baseline runs, agent evaluation, training, and the
convergence study, with CSV/Markdown reports mirroring the comparison-table
layout (Original vs PPO, fastest entry bolded)."""

import csv
import json
import statistics
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import equations, ppo
from .checkpoint import Checkpoint, checkpoint_from_trainer, load_checkpoint, save_checkpoint
from .env import EpisodeConfig, MultigridEnv, VIRTUAL_SECONDS_PER_EVAL, run_episode
from .equations import dirichlet_for, initial_condition, steady_advection_diffusion
from .fr import l2_error
from .mesh import Mesh1D
from .multigrid import (
    Diverged,
    MaxCyclesExceeded,
    baseline_params,
    build_hierarchy,
    constant_params_provider,
    solve_to_steady,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointMismatch(RuntimeError):
    pass


@dataclass
class TrainSettings:
    episodes: int = 2000
    max_steps: int = 400
    seed: int = 0
    a_range: tuple = (0.2, 1.0)
    nu_range: tuple = (0.01, 1.0)
    timesteps_per_batch: int = 16
    gamma: float = 0.98
    actor_lr: float = 1e-5
    critic_lr: float = 0.05
    clip_eps: float = 0.2
    updates_per_batch: int = 4
    action_std: float = 0.15
    action_std_final: float = 0.05

    def ppo_config(self):
        return ppo.PPOConfig(
            episodes=self.episodes,
            timesteps_per_batch=self.timesteps_per_batch,
            gamma=self.gamma,
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            clip_eps=self.clip_eps,
            updates_per_batch=self.updates_per_batch,
            action_std=self.action_std,
            action_std_final=self.action_std_final,
            seed=self.seed,
        )


@dataclass
class CampaignConfig:
    equation: str = equations.LINEAR
    cases: list = field(default_factory=lambda: [(1.0, 0.01)])
    p: list = field(default_factory=lambda: [2])
    mesh_kind: str = "uniform"
    n_elements: int = 32
    mesh_seed: int = 0
    mode: str = "hp"
    tol: float = 1e-9
    max_cycles: int = 50000
    repetitions: int = 1
    sweep_max: int = 10
    checkpoint: str | None = None
    out: str = "out"
    virtual_clock: bool = False
    workers: int = 1
    convergence_n: list = field(default_factory=lambda: [8, 16, 32, 64])
    train: TrainSettings = field(default_factory=TrainSettings)

    def validate(self):
        if self.equation not in (equations.LINEAR, equations.BURGERS):
            raise ConfigError(f"unknown equation {self.equation!r}")
        if not self.cases:
            raise ConfigError("coefficient grid must not be empty")
        if not self.p:
            raise ConfigError("polynomial order list must not be empty")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.mode not in ("hp", "p"):
            raise ConfigError(f"unknown multigrid mode {self.mode!r}")
        if self.mesh_kind not in ("uniform", "nonuniform"):
            raise ConfigError(f"unknown mesh kind {self.mesh_kind!r}")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        for case in self.cases:
            if len(case) != 2:
                raise ConfigError(f"bad coefficient pair {case!r}")
        return self

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config schema_version {version}, expected {SCHEMA_VERSION}")
        mesh = doc.pop("mesh", {})
        train = doc.pop("train", {})
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        if mesh:
            cfg.mesh_kind = mesh.get("kind", cfg.mesh_kind)
            cfg.n_elements = mesh.get("n", cfg.n_elements)
            cfg.mesh_seed = mesh.get("seed", cfg.mesh_seed)
        if train:
            unknown = set(train) - {f.name for f in TrainSettings.__dataclass_fields__.values()}
            if unknown:
                raise ConfigError(f"unknown train keys: {sorted(unknown)}")
            t = TrainSettings(**train)
            t.a_range = tuple(t.a_range)
            t.nu_range = tuple(t.nu_range)
            cfg.train = t
        cfg.cases = [tuple(c) for c in cfg.cases]
        return cfg.validate()

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def build_mesh(self):
        if self.mesh_kind == "uniform":
            return Mesh1D.uniform(self.n_elements)
        return Mesh1D.perturbed(self.n_elements, self.mesh_seed)

    def equation_spec(self, a, nu):
        if self.equation == equations.LINEAR:
            return equations.linear_advection_diffusion(a, nu)
        return equations.burgers(nu)

    def episode_config(self, p, a, nu, max_steps=None):
        return EpisodeConfig(
            eq_kind=self.equation,
            a=a if a is not None else 1.0,
            nu=nu,
            order=p,
            n_elements=self.n_elements,
            mesh_kind=self.mesh_kind,
            mesh_seed=self.mesh_seed,
            mode=self.mode,
            tol=self.tol,
            max_steps=max_steps if max_steps is not None else self.max_cycles,
            sweep_max=self.sweep_max,
            clock="virtual" if self.virtual_clock else "wall",
        )


@dataclass
class CaseResult:
    solver: str
    equation: str
    p: int
    a: float | None
    nu: float
    rep: int
    cycles: int
    rhs_evals: int
    clock_seconds: float
    wall_seconds: float
    final_residual: float
    converged: bool

    @property
    def key(self):
        return (self.equation, self.p, self.a, self.nu)


@dataclass
class RunReport:
    rows: list

    def median(self, solver, key, attr):
        vals = [
            getattr(r, attr)
            for r in self.rows
            if r.solver == solver and r.key == key and r.converged
        ]
        return statistics.median(vals) if vals else None

    def keys(self):
        seen = []
        for r in self.rows:
            if r.key not in seen:
                seen.append(r.key)
        return seen

    def all_diverged(self):
        return bool(self.rows) and not any(r.converged for r in self.rows)


def _baseline_case(config_dict, p, a, nu, rep):
    config = CampaignConfig.from_dict(config_dict)
    eq = config.equation_spec(a if a is not None else 1.0, nu)
    mesh = config.build_mesh()
    hier = build_hierarchy(p, mesh, eq, mode=config.mode)
    bc = dirichlet_for(eq)
    u0 = initial_condition(hier.finest.x_nodes)
    import time as _time

    t0 = _time.perf_counter()
    try:
        _, history = solve_to_steady(
            u0, hier, constant_params_provider(baseline_params(hier)), bc,
            tol=config.tol, max_cycles=config.max_cycles,
        )
        converged = True
    except (Diverged, MaxCyclesExceeded) as exc:
        history = exc.history
        converged = False
    wall = _time.perf_counter() - t0
    evals = sum(s.rhs_evals for s in history)
    clock = evals * VIRTUAL_SECONDS_PER_EVAL if config.virtual_clock else wall
    final = history[-1].residual_after if history else np.inf
    return CaseResult(
        "baseline", config.equation, p, a, nu, rep,
        len(history), evals, clock, wall,
        float(final) if np.isfinite(final) else np.inf, converged,
    )


def run_baseline(config: CampaignConfig):
    """Fixed-parameter reference campaign over the coefficient grid."""
    jobs = [
        (asdict(config), p, a, nu, rep)
        for p in config.p
        for (a, nu) in config.cases
        for rep in range(config.repetitions)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_baseline_case_star, jobs))
    else:
        rows = [_baseline_case_star(job) for job in jobs]
    return RunReport(rows)


def _baseline_case_star(args):
    return _baseline_case(*args)


def _agent_case(config, ck, p, a, nu, rep):
    env = MultigridEnv(config.episode_config(p, a, nu, max_steps=config.max_cycles))
    policy = ppo.ActorPolicy(net=ck.actor, log_std=ck.log_std)
    result = run_episode(env, ppo.greedy_policy(policy))
    return CaseResult(
        "agent", config.equation, p, a, nu, rep,
        result["cycles"], result["rhs_evals"],
        result["clock_seconds"] if config.virtual_clock else result["wall_seconds"],
        result["wall_seconds"],
        float(result["residual"]) if np.isfinite(result["residual"]) else np.inf,
        bool(result["converged"]),
    )


def check_checkpoint(config: CampaignConfig, ck: Checkpoint):
    for p in config.p:
        if p != ck.order:
            raise CheckpointMismatch(
                f"checkpoint was trained at P={ck.order}, campaign asks P={p}"
            )
    if ck.eq_kind != config.equation:
        raise CheckpointMismatch(
            f"checkpoint equation {ck.eq_kind!r} != campaign {config.equation!r}"
        )
    trained_mode = ck.config.get("env", {}).get("mode")
    if trained_mode == "p" and config.mode == "hp":
        warnings.warn(
            "agent was trained in p-only multigrid but is evaluated in h/p mode; "
            "p-trained agents tend not to generalize in this direction",
            RuntimeWarning,
        )


def run_evaluate(config: CampaignConfig, ck: Checkpoint):
    """Side-by-side agent (eval-mode actor, no noise) vs baseline runs."""
    check_checkpoint(config, ck)
    rows = []
    for p in config.p:
        for (a, nu) in config.cases:
            for rep in range(config.repetitions):
                rows.append(_baseline_case(asdict(config), p, a, nu, rep))
                rows.append(_agent_case(config, ck, p, a, nu, rep))
    return RunReport(rows)


def run_train(config: CampaignConfig, progress=None):
    """Train an agent on the campaign's environment settings."""
    if config.mode == "p":
        warnings.warn(
            "training in p-only mode; such agents tend to fail when later "
            "evaluated in h/p mode",
            RuntimeWarning,
        )
    ts = config.train
    env_cfg = EpisodeConfig(
        eq_kind=config.equation,
        order=config.p[0],
        n_elements=config.n_elements,
        mesh_kind=config.mesh_kind,
        mesh_seed=config.mesh_seed,
        mode=config.mode,
        tol=config.tol,
        max_steps=ts.max_steps,
        sweep_max=config.sweep_max,
        clock="virtual" if config.virtual_clock else "wall",
        a_range=ts.a_range if config.equation == equations.LINEAR else None,
        nu_range=ts.nu_range,
        resample_mesh=config.mesh_kind == "nonuniform",
    )
    env = MultigridEnv(env_cfg, rng=np.random.default_rng(ts.seed))
    trainer, log = ppo.train(env, ts.ppo_config(), progress=progress)
    ck = checkpoint_from_trainer(trainer, config.equation, config.p[0], env_cfg.to_dict())
    return ck, log


def run_convergence(config: CampaignConfig):
    """L2-error-vs-N table and fitted order for the steady linear profile."""
    if config.equation != equations.LINEAR:
        raise ConfigError("convergence study requires the linear equation")
    a, nu = config.cases[0]
    rows = []
    for p in config.p:
        errs = []
        for n in config.convergence_n:
            eq = config.equation_spec(a, nu)
            mesh = Mesh1D.uniform(n)
            hier = build_hierarchy(p, mesh, eq, mode=config.mode)
            bc = dirichlet_for(eq)
            u0 = initial_condition(hier.finest.x_nodes)
            u, _ = solve_to_steady(
                u0, hier, constant_params_provider(baseline_params(hier)), bc,
                tol=min(config.tol, 1e-11), max_cycles=config.max_cycles,
            )
            err = l2_error(u, hier.finest.basis, mesh,
                           lambda x: steady_advection_diffusion(x, a, nu))
            errs.append(err)
            rows.append({"p": p, "n": n, "l2_error": err})
        slope = -np.polyfit(np.log(config.convergence_n), np.log(errs), 1)[0]
        rows.append({"p": p, "n": "slope", "l2_error": slope})
    return rows


# ---------------------------------------------------------------------------
# report rendering


def write_report_csv(report: RunReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "solver", "equation", "p", "a", "nu", "rep", "cycles", "rhs_evals",
            "clock_seconds", "wall_seconds", "final_residual", "converged",
        ])
        for r in report.rows:
            writer.writerow([
                r.solver, r.equation, r.p,
                "" if r.a is None else r.a, r.nu, r.rep, r.cycles, r.rhs_evals,
                f"{r.clock_seconds:.6e}", f"{r.wall_seconds:.6e}",
                f"{r.final_residual:.6e}" if np.isfinite(r.final_residual) else "inf",
                int(r.converged),
            ])


def _fmt_cell(value, bold=False, diverged=False):
    if diverged or value is None:
        return "DIV"
    text = f"{value:.3f}" if value >= 1e-3 else f"{value:.3e}"
    return f"**{text}**" if bold else text


def render_markdown(report: RunReport, config: CampaignConfig, with_agent):
    eq_names = {equations.LINEAR: "Linear Advection-Diffusion", equations.BURGERS: "Burgers"}
    mesh_name = "uniform" if config.mesh_kind == "uniform" else "non-uniform"
    mode_name = "h/p-multigrid" if config.mode == "hp" else "p-multigrid"
    lines = [f"# {mode_name}, {mesh_name} mesh", ""]
    if with_agent:
        lines += ["| Case | Original time (s) | Original cycles | PPO time (s) | PPO cycles | Speedup |",
                  "|---|---|---|---|---|---|"]
    else:
        lines += ["| Case | Original time (s) | Original cycles | Original final residual |",
                  "|---|---|---|---|"]
    current_block = None
    for key in report.keys():
        eq_kind, p, a, nu = key
        block = f"{eq_names[eq_kind]} - P={p}"
        if block != current_block:
            lines.append(f"| **{block}** |" + " |" * (5 if with_agent else 3))
            current_block = block
        label = f"a={a}, nu={nu}" if eq_kind == equations.LINEAR and a is not None else f"nu={nu}"
        base_t = report.median("baseline", key, "clock_seconds")
        base_c = report.median("baseline", key, "cycles")
        if with_agent:
            agent_t = report.median("agent", key, "clock_seconds")
            agent_c = report.median("agent", key, "cycles")
            base_fast = base_t is not None and (agent_t is None or base_t <= agent_t)
            agent_fast = agent_t is not None and (base_t is None or agent_t <= base_t)
            speedup = f"{base_t / agent_t:.2f}" if base_t and agent_t else "-"
            lines.append(
                f"| {label} | {_fmt_cell(base_t, base_fast and agent_t is not None, base_t is None)} | "
                f"{'' if base_c is None else int(base_c)} | "
                f"{_fmt_cell(agent_t, agent_fast and base_t is not None, agent_t is None)} | "
                f"{'' if agent_c is None else int(agent_c)} | {speedup} |"
            )
        else:
            res = report.median("baseline", key, "final_residual")
            lines.append(
                f"| {label} | {_fmt_cell(base_t, diverged=base_t is None)} | "
                f"{'' if base_c is None else int(base_c)} | "
                f"{'' if res is None else f'{res:.2e}'} |"
            )
    if with_agent:
        lines.append("")
        for (eq_kind, p, a) in {(k[0], k[1], k[2]) for k in report.keys()}:
            costs = [
                report.median("agent", key, "clock_seconds")
                for key in report.keys()
                if (key[0], key[1], key[2]) == (eq_kind, p, a)
            ]
            costs = [c for c in costs if c is not None]
            if len(costs) >= 2:
                arr = np.array(costs)
                cv = arr.std() / arr.mean()
                label = f"P={p}" + (f", a={a}" if a is not None else "")
                lines.append(
                    f"Agent cost variation across viscosities ({label}): CV = {cv:.3f}"
                )
    lines.append("")
    return "\n".join(lines)


def write_convergence_report(rows, out_dir):
    out_dir = Path(out_dir)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "n", "l2_error"])
        for row in rows:
            writer.writerow([row["p"], row["n"], f"{row['l2_error']:.6e}"])
    lines = ["# Convergence study", "", "| P | N | L2 error |", "|---|---|---|"]
    for row in rows:
        if row["n"] == "slope":
            lines.append(f"| {row['p']} | fitted order | {row['l2_error']:.2f} |")
        else:
            lines.append(f"| {row['p']} | {row['n']} | {row['l2_error']:.3e} |")
    lines.append("")
    (out_dir / "report.md").write_text("\n".join(lines))
