"""Command-line entry point.

Every command except ``benchmark`` reads a run config (``--config``) and
writes its outputs under ``output.dir``. Exit status is 0 on success, 1 for
configuration or I/O problems and 2 when an input model violates its
invariants.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from gridplan.config import ConfigError, RunConfig, load_config
from gridplan.grid import (
    Environment,
    InvariantError,
    check_transition,
    generate_trajectory,
    make_environment,
    seeded_rng,
)
from gridplan.io import (
    ModelFormatError,
    load_model,
    save_model,
    save_trajectories,
)
from gridplan.metrics import EVAL_FIELDS, EvalReport, evaluate
from gridplan.planner import benchmark_iteration, loglog_slope, value_iterate, write_benchmark_csv
from gridplan.reward import counting_reward, expert_samples, observed_samples, train_reward
from gridplan.transition import (
    naive_count,
    train_transition,
    transition_error,
    weighted_count,
)

log = logging.getLogger("gridplan")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve(env: Environment, cfg: RunConfig, T=None, R=None):
    T = env.transition if T is None else T
    R = env.reward if R is None else R
    return value_iterate(T, R, env.dims.gamma, cfg.vi_epsilon, cfg.vi_max_iter)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def _eval_row(label: List[str], report: EvalReport) -> list:
    return label + [_fmt(report.replanning_accuracy_pct), _fmt(report.expected_reward_increase_pct),
                    report.states_excluded]


def _transition_data(cfg: RunConfig, env: Environment):
    rng = seeded_rng(cfg.seed, "transition-data")
    return [generate_trajectory(env, None, cfg.trajectory_length, rng) for _ in range(cfg.n_trajectories)]


# -- commands ------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    env = make_environment(cfg.dims, cfg.env)
    T = R = None
    if cfg.transition_file:
        T = load_model(cfg.transition_file, expect="transition").data
        check_transition(T, cfg.dims.na, cfg.dims.nt)
    if cfg.reward_file:
        R = load_model(cfg.reward_file, expect="reward").data
        if R.shape != env.reward.shape:
            raise InvariantError(f"reward shape {R.shape} does not match {env.reward.shape}")
    result = _solve(env, cfg, T, R)
    out = _out_dir(cfg)
    d = cfg.dims
    save_model(out / "value.txt", "value", result.v, d.nd, d.na, d.nt)
    save_model(out / "q.txt", "q", result.q, d.nd, d.na, d.nt)
    save_model(out / "policy.txt", "policy", result.policy, d.nd, d.na, d.nt)
    _write_csv(out / "solve_log.csv", ["iteration", "residual"],
               ((k + 1, _fmt(r)) for k, r in enumerate(result.residuals)))
    print(f"value iteration: {result.iterations} iterations, final residual {result.final_residual:.3e}")
    return EXIT_OK


def cmd_learn_transition(cfg: RunConfig) -> int:
    env = make_environment(cfg.dims, cfg.env)
    d = cfg.dims
    trajectories = _transition_data(cfg, env)
    reference = _solve(env, cfg).policy
    out = _out_dir(cfg)
    save_trajectories(out / "trajectories.csv", trajectories)

    algorithms = ("bp", "naive-count", "weighted-count") if cfg.bp_algorithm == "all" else (cfg.bp_algorithm,)
    rows = []
    for name in algorithms:
        if name == "bp":
            report = train_transition(trajectories, env.observation, d, cfg.bp, truth=env.transition)
            learnt = report.learnt
            _write_csv(out / "loss_bp.csv", ["step", "loss", "action", "alpha"],
                       ((s, _fmt(l), a, _fmt(al)) for s, l, a, al in report.loss_curve))
            if report.resets:
                log.warning("bp: %d belief resets", report.resets)
        elif name == "naive-count":
            learnt = naive_count(trajectories, d)
        else:
            learnt = weighted_count(trajectories, env.observation, d)
        save_model(out / f"transition_{name}.txt", "transition", learnt, d.nd, d.na, d.nt)
        policy = _solve(env, cfg, T=learnt).policy
        ev = evaluate(policy, reference, env.transition, env.reward, d.gamma, cfg.vi_epsilon)
        err = transition_error(learnt, env.transition)
        rows.append(_eval_row([name, _fmt(err)], ev))
        print(f"{name}: transition error {err:.4f}; {ev.summary()}")
    _write_csv(out / "comparison.csv", ["algorithm", "transition_error", *EVAL_FIELDS], rows)
    return EXIT_OK


def cmd_learn_reward(cfg: RunConfig) -> int:
    env = make_environment(cfg.dims, cfg.env)
    d = cfg.dims
    if cfg.qmdp_condition == "learnt-transition":
        if not cfg.transition_model:
            raise ConfigError("qmdp.condition = learnt-transition needs qmdp.transition_model")
        path = Path(cfg.transition_model)
        if not path.is_file():
            raise ConfigError(f"transition model file {path} does not exist")
        T_model = load_model(path, expect="transition").data
        check_transition(T_model, d.na, d.nt)
    else:
        T_model = env.transition

    reference = _solve(env, cfg).policy
    rng = seeded_rng(cfg.seed, "expert-data")
    experts = [generate_trajectory(env, reference, cfg.expert_length, rng) for _ in range(cfg.n_expert)]
    out = _out_dir(cfg)
    save_trajectories(out / "experts.csv", experts)

    report = train_reward(experts, T_model, env.observation, d, cfg.qmdp)
    if report.resets:
        log.warning("reward learning: %d belief resets", report.resets)
    save_model(out / "reward.txt", "reward", report.learnt_reward, d.nd, d.na, d.nt)
    save_model(out / "reward_q.txt", "q", report.final_q, d.nd, d.na, d.nt)
    save_model(out / "reward_policy.txt", "policy", report.policy, d.nd, d.na, d.nt)
    _write_csv(out / "loss_reward.csv", ["step", "cross_entropy", "replans"],
               ((s, _fmt(c), r) for s, c, r in report.loss_curve))

    ev = evaluate(report.policy, reference, env.transition, env.reward, d.gamma, cfg.vi_epsilon)
    rows = [_eval_row([cfg.qmdp_condition, "qmdp"], ev)]
    print(f"qmdp ({cfg.qmdp_condition}): {ev.summary()}")

    if cfg.qmdp_baselines:
        learnt_transition = cfg.qmdp_condition == "learnt-transition"
        trajectories = _transition_data(cfg, env) if learnt_transition else None
        for name in ("naive-count", "weighted-count"):
            if name == "naive-count":
                T_count = naive_count(trajectories, d) if learnt_transition else env.transition
                samples = observed_samples(experts, d.nd)
            else:
                T_count = weighted_count(trajectories, env.observation, d) if learnt_transition else env.transition
                samples, _ = expert_samples(experts, T_count, env.observation, d.nd)
            R_count = counting_reward(samples, d)
            policy = _solve(env, cfg, T=T_count, R=R_count).policy
            ev = evaluate(policy, reference, env.transition, env.reward, d.gamma, cfg.vi_epsilon)
            rows.append(_eval_row([cfg.qmdp_condition, name], ev))
            print(f"{name} ({cfg.qmdp_condition}): {ev.summary()}")
    _write_csv(out / "report.csv", ["condition", "method", *EVAL_FIELDS], rows)
    return EXIT_OK


def cmd_benchmark(cfg: Optional[RunConfig], sizes, repetitions, output, parallel) -> int:
    sizes = sizes or (cfg.benchmark_sizes if cfg else (10, 20, 40, 80, 160))
    repetitions = repetitions or (cfg.benchmark_repetitions if cfg else 3)
    na, w, seed = (cfg.dims.na, cfg.dims.w, cfg.seed) if cfg else (9, 1, 0)
    rows = benchmark_iteration(sizes, na=na, w=w, repetitions=repetitions, seed=seed, parallel=parallel)
    if output:
        with open(output, "w", newline="") as fh:
            write_benchmark_csv(rows, fh)
    else:
        write_benchmark_csv(rows, sys.stdout)
    summary = (f"log-log slope vs state count: conv {loglog_slope(rows, 'conv_ns'):.3f}, "
               f"naive {loglog_slope(rows, 'naive_ns'):.3f}") if len(rows) > 1 else "one size: no slope"
    print(summary, file=sys.stderr)
    for r in rows:
        print(f"nd={r['nd']}: speedup {r['naive_ns'] / r['conv_ns']:.1f}x", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, policy_a, policy_b, output) -> int:
    env = make_environment(cfg.dims, cfg.env)
    a = load_model(policy_a, expect="policy").data
    b = load_model(policy_b, expect="policy").data
    if a.shape != b.shape or a.shape != (cfg.dims.nd, cfg.dims.nd):
        raise ConfigError(f"policy shapes {a.shape} and {b.shape} do not match the {cfg.dims.nd}x{cfg.dims.nd} grid")
    ev = evaluate(a, b, env.transition, env.reward, cfg.dims.gamma, cfg.vi_epsilon)
    text = ",".join(EVAL_FIELDS) + "\n" + ev.csv_row() + "\n"
    if output:
        Path(output).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- argument handling -----------------------------------------------------------


def _sizes(text: str):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridplan", description="Gridworld planning and model learning with recurrent convolutions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, required=True):
        p.add_argument("--config", required=required, help="run config file (key = value lines)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key; repeatable")
        return p

    with_config(sub.add_parser("solve", help="value iteration on the configured environment"))
    with_config(sub.add_parser("learn-transition", help="learn transition filters from random-action data"))
    with_config(sub.add_parser("learn-reward", help="learn a reward from expert demonstrations"))
    bench = with_config(sub.add_parser("benchmark", help="time convolutional vs naive Bellman backups"), required=False)
    bench.add_argument("--sizes", type=_sizes, help="grid sides, e.g. 10,20,40")
    bench.add_argument("--repetitions", type=int)
    bench.add_argument("--output", help="CSV path (default: stdout)")
    bench.add_argument("--parallel", action="store_true", help="compute action planes on a thread pool")
    ev = with_config(sub.add_parser("evaluate", help="compare two policies under the true model"))
    ev.add_argument("policy_a", help="policy to score")
    ev.add_argument("policy_b", help="reference policy")
    ev.add_argument("--output", help="also write the report CSV here")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides) if args.config else None
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "learn-transition":
            return cmd_learn_transition(cfg)
        if args.command == "learn-reward":
            return cmd_learn_reward(cfg)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, args.sizes, args.repetitions, args.output, args.parallel)
        return cmd_evaluate(cfg, args.policy_a, args.policy_b, args.output)
    except InvariantError as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ModelFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
