"""Command-line experiment harness.

Subcommands: ``simulate`` (emit a dataset and its observed summaries),
``abc`` (plain SMC-ABC on the full or a marginal summary set), ``pilot``,
``localize`` (pilot + continuation for one parameter), ``reference``
(exact reference quantities), ``compare`` (TV report for an existing run
directory) and ``experiment`` (the full run matrix).

The ``ABC_LOCALIZE_THREADS`` environment variable mirrors ``--threads``;
results are identical for any thread count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import persist
from .core import PHASE_RUN, RandomStream, SummaryVector
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    build_bundle,
    build_metric,
    compare,
    generate_observed,
    run_experiment,
)
from .localize import attach_marginal_discrepancies, marginal_continue, pilot_run
from .reference import ma2_alternate_root, ma2_binding, normal_exact_marginals
from .smc import smc_abc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--data-seed", type=int, default=None)
    p.add_argument("--n-obs", type=int, default=None, help="observed dataset size")
    p.add_argument("--n-particles", type=int, default=1000)
    p.add_argument("--budget", type=int, default=2_000_000, help="simulation budget per run")
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--stop-acc-rate", type=float, default=0.01)
    p.add_argument("--p0", dest="pilot_acc_threshold", type=float, default=None)
    p.add_argument("--huber-k", type=float, default=1.345)


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        experiment=args.experiment,
        out_dir=args.out,
        seed=args.seed,
        data_seed=args.data_seed,
        n_obs=args.n_obs,
        n_particles=args.n_particles,
        stop_acc_rate=args.stop_acc_rate,
        max_simulations=args.budget,
        pilot_acc_threshold=args.pilot_acc_threshold,
        threads=args.threads,
        huber_k=args.huber_k,
    ).resolved()


def _prepare(config: ExperimentConfig):
    bundle = build_bundle(config)
    observed_data = generate_observed(bundle, config.data_seed)
    observed = SummaryVector(bundle.summary_fn(observed_data), bundle.summary_names)
    root = RandomStream(config.seed)
    metric = build_metric(bundle, config, root)
    return bundle, observed_data, observed, root, metric


def cmd_simulate(args) -> int:
    config = _config_from_args(args)
    bundle = build_bundle(config)
    observed_data = generate_observed(bundle, config.data_seed)
    observed = SummaryVector(bundle.summary_fn(observed_data), bundle.summary_names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_dataset(out / "observed.csv", observed_data)
    with open(out / "observed_summaries.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("name,value\n")
        for name, value in zip(observed.names, observed.values):
            fh.write(f"{name},{repr(float(value))}\n")
    print(f"wrote {out / 'observed.csv'} and observed_summaries.csv")
    return 0


def cmd_abc(args) -> int:
    config = _config_from_args(args)
    bundle, _, observed, root, metric = _prepare(config)
    if args.summaries == "full":
        idx = None
        name = "full"
    else:
        idx = bundle.summary_set.indices_for(args.summaries)
        name = args.summaries
    pop, trace = smc_abc(
        bundle.model,
        bundle.summary_fn,
        observed,
        metric,
        config.smc_config(),
        root.child(PHASE_RUN, 0),
        match_indices=idx,
        match_name=name,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_population(out / f"{args.label}.csv", pop)
    persist.write_trace(out / f"{args.label}_trace.csv", trace)
    eps = pop.epsilon_marginal if idx is not None else pop.epsilon_full
    print(f"{args.label}: stopped ({trace.stop_reason}) at epsilon={eps:.6g} "
          f"after {trace.total_simulations} simulations")
    return 0


def cmd_pilot(args) -> int:
    config = _config_from_args(args)
    bundle, _, observed, root, metric = _prepare(config)
    pop, eps0, trace = pilot_run(
        bundle.model,
        bundle.summary_fn,
        observed,
        metric,
        config.smc_config(),
        config.pilot_acc_threshold,
        root.child(PHASE_RUN, 1),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_population(out / "pilot.csv", pop)
    persist.write_trace(out / "pilot_trace.csv", trace)
    with open(out / "pilot.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"epsilon0": eps0, "stop_reason": trace.stop_reason}, fh, indent=2)
        fh.write("\n")
    print(f"pilot: epsilon0={eps0:.6g} after {trace.total_simulations} simulations")
    return 0


def cmd_localize(args) -> int:
    config = _config_from_args(args)
    bundle, _, observed, root, metric = _prepare(config)
    cfg = config.smc_config()
    pop, eps0, pilot_trace = pilot_run(
        bundle.model, bundle.summary_fn, observed, metric, cfg,
        config.pilot_acc_threshold, root.child(PHASE_RUN, 1),
    )
    attached, _ = attach_marginal_discrepancies(pop, bundle.summary_set, args.param, observed)
    loc, trace = marginal_continue(
        attached, eps0, bundle.model, bundle.summary_fn, bundle.summary_set,
        args.param, observed, metric, cfg, config.final_acc_threshold,
        root.child(PHASE_RUN, 2),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_population(out / "pilot.csv", pop)
    persist.write_trace(out / "pilot_trace.csv", pilot_trace)
    persist.write_population(out / f"{args.param}_localized.csv", loc)
    persist.write_trace(out / f"{args.param}_localized_trace.csv", trace)
    print(
        f"localized {args.param}: epsilon0={eps0:.6g} frozen, "
        f"epsilon_j={loc.epsilon_marginal:.6g} ({trace.stop_reason})"
    )
    return 0


def cmd_reference(args) -> int:
    config = _config_from_args(args)
    bundle = build_bundle(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.experiment == "normal":
        observed_data = generate_observed(bundle, config.data_seed)
        exact = normal_exact_marginals(observed_data, bundle.model)
        for gname in ("mu_full", "mu_mean_only", "phi_sd_only", "phi_full"):
            persist.write_grid(out / f"reference_{gname}.csv", exact.grid(gname))
        print(f"wrote 4 reference grids to {out}")
        return 0
    if config.experiment == "ma2":
        theta = np.asarray(config.true_theta)
        binding = ma2_binding(theta)
        alt = ma2_alternate_root(theta)
        payload = {
            "theta": list(map(float, theta)),
            "binding": list(map(float, binding)),
            "alternate_root": None if alt is None else list(map(float, alt)),
        }
        with open(out / "ma2_reference.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(json.dumps(payload))
        return 0
    print(f"no reference quantities for experiment {config.experiment!r}", file=sys.stderr)
    return 2


def cmd_compare(args) -> int:
    report = compare(args.run_dir, args.gold, args.labels, params=args.params)
    out = Path(args.out) if args.out else Path(args.run_dir) / "report.json"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(f"wrote {out}")
    return 0


def cmd_experiment(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json_file(args.config)
        overrides = {}
        if args.out:
            overrides["out_dir"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.n_particles is not None:
            overrides["n_particles"] = args.n_particles
        if args.budget is not None:
            overrides["max_simulations"] = args.budget
        if args.threads is not None:
            overrides["threads"] = args.threads
        config = dataclasses.replace(config, **overrides)
    else:
        if not args.experiment or not args.out:
            print("experiment: need --config or both --experiment and --out", file=sys.stderr)
            return 2
        config = ExperimentConfig(
            experiment=args.experiment,
            out_dir=args.out,
            seed=args.seed if args.seed is not None else 1,
            n_obs=args.n_obs,
            n_particles=args.n_particles if args.n_particles is not None else 1000,
            max_simulations=args.budget if args.budget is not None else 2_000_000,
            threads=args.threads if args.threads is not None else 0,
        )
    run_dir = run_experiment(config)
    print(f"experiment complete: {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abc-localize",
        description="Likelihood-free inference with pilot-localised marginal estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit dataset and observed summaries")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("abc", help="plain SMC-ABC run")
    _add_common(p)
    p.add_argument("--summaries", default="full",
                   help="'full' or a parameter name whose marginal subset to match")
    p.add_argument("--label", default="abc")
    p.set_defaults(func=cmd_abc)

    p = sub.add_parser("pilot", help="pilot run stopped at the pilot acceptance threshold")
    _add_common(p)
    p.set_defaults(func=cmd_pilot)

    p = sub.add_parser("localize", help="pilot + marginal continuation for one parameter")
    _add_common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--p-final", dest="final_acc_threshold", type=float, default=0.01)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("reference", help="exact reference quantities")
    _add_common(p)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("compare", help="TV comparison report for an existing run dir")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--gold", default="gold")
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--params", nargs="+", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("experiment", help="full run matrix for one experiment")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--experiment", choices=EXPERIMENTS, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-obs", type=int, default=None)
    p.add_argument("--n-particles", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
