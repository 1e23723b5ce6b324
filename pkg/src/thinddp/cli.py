"""Command line interface.

Subcommands: ``simulate`` (scenario file to metric CSVs), ``fit`` (grouped
CSV to posterior summaries), ``analytics`` (closed-form evaluators, JSON on
stdout), and ``prior-mc`` (Monte Carlo expected cluster counts to CSV).

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analytics
from .harness import (
    DataError,
    fit_csv,
    load_scenario,
    run_experiment,
    thinning_model_from_dict,
    _write_rows,
)
from .mcmc import MODES, ModelConfig
from .sticks import DPParams, monte_carlo_expected_k
from .thinning import BernoulliThinning, EventuallySingleAtomThinning, UnderTruncationError

USAGE_EXIT = 1
DATA_EXIT = 2
RUNTIME_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _binary_seq(text: str) -> list[int]:
    try:
        seq = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a 0/1 list: {text!r}") from exc
    if not seq or any(b not in (0, 1) for b in seq):
        raise argparse.ArgumentTypeError(f"not a 0/1 list: {text!r}")
    return seq


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thinddp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation-study scenario")
    sim.add_argument("--config", required=True, help="scenario JSON file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--verbose", action="store_true")

    fit = sub.add_parser("fit", help="fit one model to a group,y CSV")
    fit.add_argument("--input", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--mode", choices=MODES, default="thinned")
    fit.add_argument("--iterations", type=int, default=10_000)
    fit.add_argument("--burn-in", type=int, default=5_000)
    fit.add_argument("--truncation", type=int, default=100)
    fit.add_argument("--alpha", type=float, default=1.0)
    fit.add_argument("--loc0", type=float, default=None, help="base location (default: data mean)")
    fit.add_argument("--scale0", type=float, default=0.01)
    fit.add_argument("--shape0", type=float, default=2.5)
    fit.add_argument("--rate0", type=float, default=1.5)
    fit.add_argument("--a-keep", type=float, default=3.0)
    fit.add_argument("--b-keep", type=float, default=3.0)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--grid-points", type=int, default=300)
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--save-draws", action="store_true")

    ana = sub.add_parser("analytics", help="evaluate a closed-form formula; prints JSON")
    ana_sub = ana.add_subparsers(dest="formula", required=True)

    def add(name, **arguments):
        p = ana_sub.add_parser(name)
        p.add_argument("--alpha", type=float, required=True)
        for arg, kwargs in arguments.items():
            p.add_argument(f"--{arg.replace('_', '-')}", **kwargs)
        return p

    add("conditional",
        seq1={"type": _binary_seq, "required": True},
        seq2={"type": _binary_seq, "required": True},
        tail={"action": "store_true"})
    add("eventually", u1={"type": int, "required": True}, u2={"type": int, "required": True})
    add("bernoulli", p1={"type": float, "required": True}, p2={"type": float, "required": True})
    add("poisson",
        rate1={"type": float, "required": True},
        rate2={"type": float, "required": True},
        tol={"type": float, "default": 1e-10})
    add("poisson-diff", rate={"type": float, "required": True})
    add("dependent-bernoulli",
        p_both={"type": float, "required": True},
        p_neither={"type": float, "required": True})
    add("symmetric-blocked",
        b0={"type": int, "required": True},
        b1={"type": int, "required": True},
        b2={"type": int, "required": True})
    add("symmetric-poisson",
        rate0={"type": float, "required": True},
        rate1={"type": float, "required": True},
        rate2={"type": float, "required": True})
    add("parent-conditional", seq1={"type": _binary_seq, "required": True}, tail={"action": "store_true"})
    add("parent-eventually", u1={"type": int, "required": True})
    add("parent-bernoulli", p1={"type": float, "required": True})
    add("parent-poisson", rate1={"type": float, "required": True})
    add("expected-k-bounds", n1={"type": int, "required": True}, n2={"type": int, "required": True})
    add("expected-k-exact",
        n1={"type": int, "required": True}, n2={"type": int, "required": True},
        u1={"type": int, "required": True}, u2={"type": int, "required": True})
    bessel = ana_sub.add_parser("bessel-i")
    bessel.add_argument("--order", type=int, required=True)
    bessel.add_argument("--x", type=float, required=True)

    pmc = sub.add_parser("prior-mc", help="Monte Carlo expected cluster counts to CSV")
    group = pmc.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", choices=("bernoulli", "poisson"),
                       help="symmetric two-group model swept over --values")
    group.add_argument("--model-file",
                       help="JSON tagged record of a two-group thinning model")
    pmc.add_argument("--alpha", type=float, default=1.0)
    pmc.add_argument("--values", type=_float_list,
                     help="keep probabilities (bernoulli) or rates (poisson), comma separated")
    pmc.add_argument("--sizes", type=_int_list, required=True,
                     help="per-sample sizes n (used for both samples), comma separated")
    pmc.add_argument("--replications", type=int, default=1000)
    pmc.add_argument("--truncation", type=int, default=500)
    pmc.add_argument("--seed", type=int, default=0)
    pmc.add_argument("--out", required=True, help="output CSV path")
    return parser


def _run_analytics(args) -> dict:
    formula = args.formula
    if formula == "bessel-i":
        return {"value": analytics.bessel_i(args.order, args.x)}
    a = args.alpha
    if formula == "conditional":
        res = analytics.corr_conditional(a, args.seq1, args.seq2, args.tail)
    elif formula == "eventually":
        res = analytics.corr_eventually(a, args.u1, args.u2)
    elif formula == "bernoulli":
        res = analytics.corr_bernoulli(a, args.p1, args.p2)
    elif formula == "poisson":
        res = analytics.corr_poisson(a, args.rate1, args.rate2, args.tol)
    elif formula == "poisson-diff":
        res = analytics.corr_poisson_diff(a, args.rate)
    elif formula == "dependent-bernoulli":
        res = analytics.corr_dependent_bernoulli(a, args.p_both, args.p_neither)
    elif formula == "symmetric-blocked":
        res = analytics.corr_symmetric_blocked(a, args.b0, args.b1, args.b2)
    elif formula == "symmetric-poisson":
        res = analytics.corr_symmetric_poisson(a, args.rate0, args.rate1, args.rate2)
    elif formula == "parent-conditional":
        res = analytics.corr_parent_conditional(a, args.seq1, args.tail)
    elif formula == "parent-eventually":
        res = analytics.corr_parent_eventually(a, args.u1)
    elif formula == "parent-bernoulli":
        res = analytics.corr_parent_bernoulli(a, args.p1)
    elif formula == "parent-poisson":
        res = analytics.corr_parent_poisson(a, args.rate1)
    elif formula == "expected-k-bounds":
        lower, upper = analytics.expected_k_bounds(a, args.n1, args.n2)
        return {"lower": lower, "upper": upper}
    elif formula == "expected-k-exact":
        return {"value": analytics.expected_k_exact(a, args.n1, args.n2, args.u1, args.u2)}
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(formula)
    return {"value": res.value, "truncation_error": res.truncation_error}


def _run_prior_mc(args) -> None:
    params = DPParams(alpha=args.alpha)
    if args.model_file is not None:
        with open(args.model_file) as fh:
            record = json.load(fh)
        model = thinning_model_from_dict(record)
        if model.n_groups != 2:
            raise DataError("prior-mc needs a two-group thinning model")
        sweep = [(record.get("kind", "custom"), float("nan"), model)]
    else:
        if not args.values:
            raise DataError("--values is required with --model")
        sweep = []
        for value in args.values:
            if args.model == "bernoulli":
                model = BernoulliThinning((value, value))
            else:
                model = EventuallySingleAtomThinning(rates=(value, value))
            sweep.append((args.model, value, model))

    rows = []
    seq = np.random.SeedSequence(args.seed)
    streams = iter(seq.spawn(len(sweep) * len(args.sizes)))
    for name, value, model in sweep:
        for n in args.sizes:
            est = monte_carlo_expected_k(
                params, model, n, n, args.replications, args.truncation,
                seed=next(streams),
            )
            lower, upper = analytics.expected_k_bounds(args.alpha, n, n)
            rows.append((
                name, args.alpha, value, n, n,
                est.k0, est.k0_se, est.k1, est.k1_se, est.k2, est.k2_se,
                est.k, est.k_se, lower, upper,
            ))
    _write_rows(
        args.out,
        ["model", "alpha", "param", "n1", "n2",
         "ek0", "ek0_se", "ek1", "ek1_se", "ek2", "ek2_se",
         "ek", "ek_se", "lower", "upper"],
        rows,
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_EXIT

    try:
        if args.command == "simulate":
            scenario = load_scenario(args.config)
            _, failures = run_experiment(
                scenario, args.out, workers=args.workers, verbose=args.verbose
            )
            if failures:
                for failure in failures:
                    print(f"replication {failure['replication']} failed: {failure['error']}",
                          file=sys.stderr)
                return RUNTIME_EXIT
        elif args.command == "fit":
            config = ModelConfig(
                alpha=args.alpha, loc0=args.loc0, scale0=args.scale0,
                shape0=args.shape0, rate0=args.rate0,
                a_keep=args.a_keep, b_keep=args.b_keep,
                truncation=args.truncation, mode=args.mode,
            )
            fit_csv(
                args.input, args.out, config=config,
                iterations=args.iterations, burn_in=args.burn_in,
                seed=args.seed, grid_points=args.grid_points,
                level=args.level, with_draws=args.save_draws,
            )
        elif args.command == "analytics":
            print(json.dumps(_run_analytics(args)))
        elif args.command == "prior-mc":
            _run_prior_mc(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (ValueError, UnderTruncationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
