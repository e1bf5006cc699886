"""Command-line harness.

Subcommands: baseline, train, evaluate, convergence.  Each reads an optional
JSON config (--config) and applies flag overrides on top (CLI > file >
defaults).  Exit codes: 0 success, 2 config error, 3 checkpoint mismatch,
4 every case diverged.
"""

import argparse
import sys
import time
from pathlib import Path

from . import bench, ppo
from .bench import CampaignConfig, CheckpointMismatch, ConfigError
from .checkpoint import load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_DIVERGED = 4


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mgrl",
        description="RL-tuned h/p-multigrid benchmarks for 1D flux-reconstruction solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("baseline", "run the fixed-parameter reference campaign"),
        ("train", "train a PPO agent on the configured environment"),
        ("evaluate", "compare a trained agent against the baseline"),
        ("convergence", "steady-state order-of-accuracy study"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=str, help="JSON campaign config")
        cmd.add_argument("--p", type=int, help="polynomial order (replaces the list)")
        cmd.add_argument("--a", type=float, help="advection speed (with --nu replaces the grid)")
        cmd.add_argument("--nu", type=float, help="viscosity (with --a replaces the grid)")
        cmd.add_argument("--mesh", choices=["uniform", "nonuniform"])
        cmd.add_argument("--mode", choices=["p", "hp"])
        cmd.add_argument("--n", type=int, help="element count")
        cmd.add_argument("--seed", type=int, help="mesh seed (and training seed for train)")
        cmd.add_argument("--out", type=str, help="output directory")
        cmd.add_argument("--virtual-clock", action="store_true", default=None,
                         help="report deterministic eval-count time instead of wall time")
        cmd.add_argument("--checkpoint", type=str, help="checkpoint path")
        cmd.add_argument("--episodes", type=int, help="training episode count")
        cmd.add_argument("--workers", type=int, help="parallel campaign workers")
    return parser


def load_config(args):
    if args.config:
        config = CampaignConfig.from_file(args.config)
    else:
        config = CampaignConfig()
    if args.p is not None:
        config.p = [args.p]
    if args.nu is not None or args.a is not None:
        base = config.cases[0]
        a = args.a if args.a is not None else base[0]
        nu = args.nu if args.nu is not None else base[1]
        config.cases = [(a, nu)]
    if args.mesh is not None:
        config.mesh_kind = args.mesh
    if args.mode is not None:
        config.mode = args.mode
    if args.n is not None:
        config.n_elements = args.n
    if args.seed is not None:
        config.mesh_seed = args.seed
        config.train.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if args.virtual_clock:
        config.virtual_clock = True
    if args.checkpoint is not None:
        config.checkpoint = args.checkpoint
    if args.episodes is not None:
        config.train.episodes = args.episodes
    if args.workers is not None:
        config.workers = args.workers
    return config.validate()


def _out_dir(config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_baseline(config):
    out = _out_dir(config)
    report = bench.run_baseline(config)
    bench.write_report_csv(report, out / "report.csv")
    (out / "report.md").write_text(bench.render_markdown(report, config, with_agent=False))
    print(f"wrote {out / 'report.csv'} and {out / 'report.md'}")
    return EXIT_DIVERGED if report.all_diverged() else EXIT_OK


def cmd_train(config):
    out = _out_dir(config)
    t0 = time.perf_counter()

    def progress(row):
        if row["episode"] % 50 == 0:
            print(
                f"episode {row['episode']}: steps={row['steps']} "
                f"mean_reward={row['mean_reward']:.3f} residual={row['final_residual']:.2e}",
                flush=True,
            )

    ck, log = bench.run_train(config, progress=progress)
    ck_path = Path(config.checkpoint) if config.checkpoint else out / "checkpoint.mgrl"
    save_checkpoint(ck, ck_path)
    ppo.write_training_log(log, out / "training_log.csv")
    print(f"trained {len(log)} episodes in {time.perf_counter() - t0:.1f}s; "
          f"wrote {ck_path} and {out / 'training_log.csv'}")
    return EXIT_OK


def cmd_evaluate(config):
    if not config.checkpoint:
        raise ConfigError("evaluate requires a checkpoint path (--checkpoint or config)")
    out = _out_dir(config)
    try:
        ck = load_checkpoint(config.checkpoint)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {config.checkpoint}") from exc
    report = bench.run_evaluate(config, ck)
    bench.write_report_csv(report, out / "report.csv")
    (out / "report.md").write_text(bench.render_markdown(report, config, with_agent=True))
    print(f"wrote {out / 'report.csv'} and {out / 'report.md'}")
    return EXIT_DIVERGED if report.all_diverged() else EXIT_OK


def cmd_convergence(config):
    out = _out_dir(config)
    rows = bench.run_convergence(config)
    bench.write_convergence_report(rows, out)
    for row in rows:
        if row["n"] == "slope":
            print(f"P={row['p']}: fitted order {row['l2_error']:.2f}")
    return EXIT_OK


COMMANDS = {
    "baseline": cmd_baseline,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "convergence": cmd_convergence,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointMismatch as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
