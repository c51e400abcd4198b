"""Command-line entry point: ``panbayes <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .bayes_net import save_model
from .discrete_prob import read_dataset
from .distributed import STRATEGIES, partition_round_robin, run_strategy
from .experiments import (
    ExperimentConfig,
    load_config,
    run_bn_experiment,
    run_entropy_oracle,
    run_stream_experiment,
)
from .pan_private import KINDS, canonical_kind, estimate_density, optimize_sample_size
from .stream import read_stream

KIND_CHOICES = ["dwork", "opt-bernoulli", "laplace", "quantized"] + list(KINDS)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--out", dest="output", help="CSV path (stdout when omitted)")
    p.add_argument("--workers", type=int)
    p.add_argument("--paper-scale", action="store_true", help="use the original study's sizes")


def _experiment_config(args, experiment: str, overrides: dict) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=experiment)
    if experiment == "stream":
        cfg = replace(cfg, epsilons=[0.05, 0.1, 0.2, 0.5], repetitions=50)
    if experiment == "entropy":
        cfg = replace(cfg, holders=[3])
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.paper_scale:
        cfg = cfg.paper_scale()
    common = {k: getattr(args, k) for k in ("seed", "repetitions", "output", "workers")}
    updates = {k: v for k, v in {**common, **overrides}.items() if v is not None}
    return replace(cfg, **updates)


def cmd_bn_experiment(args) -> int:
    cfg = _experiment_config(args, "bn", {
        "epsilons": args.epsilons, "holders": args.holders, "degrees": args.degrees, "n": args.n,
        "strategies": args.strategies,
    })
    text = run_bn_experiment(cfg)
    if not cfg.output:
        sys.stdout.write(text)
    return 0


def cmd_stream_experiment(args) -> int:
    cfg = _experiment_config(args, "stream", {
        "epsilons": args.epsilons, "sample_sizes": args.m, "kinds": args.kinds,
        "distributions": args.distributions, "stream_length": args.length, "universe": args.universe,
        "alpha": args.alpha, "beta": args.beta, "mode": args.mode,
    })
    text = run_stream_experiment(cfg)
    if not cfg.output:
        sys.stdout.write(text)
    return 0


def cmd_entropy_oracle(args) -> int:
    cfg = _experiment_config(args, "entropy", {
        "n_values": args.n, "domain_sizes": args.d, "holders": args.M, "noise_scales": args.b,
        "trials": args.trials, "distribution": args.distribution,
    })
    text = run_entropy_oracle(cfg)
    if not cfg.output:
        sys.stdout.write(text)
    return 0


def cmd_bn_learn(args) -> int:
    data = read_dataset(args.data, args.schema)
    parts = partition_round_robin(data, args.holders)
    res = run_strategy(args.strategy, parts, args.degree, args.epsilon, args.seed, transport=args.transport,
                       smooth=args.smooth)
    save_model(res.model, args.out)
    if args.transcript:
        with open(args.transcript, "w") as fh:
            fh.write(res.transcript)
    for name in res.model.structure.insertion_order:
        pa = res.model.structure.parent_sets[name]
        print(f"{name} <- {', '.join(pa) if pa else '(none)'}")
    print("per-holder spend: " + ", ".join(f"{s:.6g}" for s in res.spend))
    return 0


def cmd_stream_estimate(args) -> int:
    s = read_stream(args.stream, args.universe)
    kind = canonical_kind(args.kind)
    m = args.m
    if m is None:
        m = optimize_sample_size(args.epsilon, args.alpha, args.beta, kind).m_star
        print(f"m* = {m}")
    if m > s.universe_size:
        print(f"error: sample size {m} exceeds universe {s.universe_size}", file=sys.stderr)
        return 2
    est, _ = estimate_density(kind, args.epsilon, m, s, args.seed)
    print(f"density estimate = {min(max(est, 0.0), 1.0) if args.clip else est!r}")
    return 0


def cmd_sample_size(args) -> int:
    res = optimize_sample_size(args.epsilon, args.alpha, args.beta, canonical_kind(args.kind))
    print(f"m* = {res.m_star}")
    for i, d in enumerate(res.delta, 1):
        print(f"delta{i} = {d!r}")
    print("m1, m2, m3 = " + ", ".join(f"{t:.6f}" for t in res.terms))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panbayes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bn-experiment", help="cross entropy of all strategies on the synthetic network")
    _add_experiment_args(p)
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--holders", type=_ints)
    p.add_argument("--degrees", type=_ints)
    p.add_argument("--n", type=int)
    p.add_argument("--strategies", type=lambda s: s.split(","))
    p.set_defaults(func=cmd_bn_experiment)

    p = sub.add_parser("stream-experiment", help="empirical vs closed-form estimator accuracy")
    _add_experiment_args(p)
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--m", type=_ints)
    p.add_argument("--kinds", type=lambda s: [canonical_kind(k) for k in s.split(",")])
    p.add_argument("--distributions", type=lambda s: s.split(","))
    p.add_argument("--length", type=int)
    p.add_argument("--universe", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--mode", choices=["mse", "perr"])
    p.set_defaults(func=cmd_stream_experiment)

    p = sub.add_parser("entropy-oracle", help="Monte Carlo check of the entropy bias and MSE formulas")
    _add_experiment_args(p)
    p.add_argument("--n", type=_ints)
    p.add_argument("--d", type=_ints)
    p.add_argument("--M", type=_ints)
    p.add_argument("--b", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--distribution", choices=["uniform", "linear"])
    p.set_defaults(func=cmd_entropy_oracle)

    p = sub.add_parser("bn-learn", help="learn a network from a CSV split across simulated holders")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--holders", type=int, default=1)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", help="sidecar file with attribute=v1,v2,... lines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--transport", choices=["inprocess", "socket"], default="inprocess")
    p.add_argument("--transcript", help="write the protocol transcript here")
    p.add_argument("--smooth", action="store_true", help="add-one smoothing of the parameters")
    p.set_defaults(func=cmd_bn_learn)

    p = sub.add_parser("stream-estimate", help="pan-private density estimate of a stream file")
    p.add_argument("--kind", choices=KIND_CHOICES, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--m", type=int)
    p.add_argument("--stream", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--universe", type=int, help="universe size; overrides a # universe=N line in the file")
    p.add_argument("--clip", action="store_true", help="clip the printed estimate to [0, 1]")
    p.set_defaults(func=cmd_stream_estimate)

    p = sub.add_parser("sample-size", help="optimized sample size m* and its deltas")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--kind", choices=KIND_CHOICES, default="dwork")
    p.set_defaults(func=cmd_sample_size)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
