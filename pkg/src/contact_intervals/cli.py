"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as cio
from .experiments import SCENARIOS, run_coverage, scatter_csv, scatter_data
from .likelihoods import DataInconsistencyError, FitResult, fit_mle, likelihood_ratio_test
from .plotting import read_scatter_csv, scatter_svg
from .r0 import bootstrap_r0
from .simulation import ModelRejected, SimulationConfig, run_with_restarts

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def cmd_simulate(args):
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise cio.DecodeError(f"{args.config} line {exc.lineno}: {exc.msg}") from None
    raw["seed"] = args.seed
    try:
        config = SimulationConfig.from_dict(raw)
    except (KeyError, ValueError) as exc:
        raise cio.DecodeError(f"{args.config}: invalid config ({exc})") from None
    data = run_with_restarts(config, np.random.default_rng(args.seed))
    cio.write_dataset(data, args.out, seed=args.seed)
    print(_dump({"out": args.out, "m": data.m, "T": data.T, "attempts": data.meta["attempts"]}))
    return EXIT_OK


def _fit(data, family, likelihood):
    return fit_mle(data, family, likelihood)


def cmd_fit(args):
    data = cio.read_dataset(args.data)
    res = _fit(data, args.family, args.likelihood)
    print(res.to_json())
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _r0_payload(fit, data, estimator, n_bootstrap, seed, samples_path=None):
    use_network = estimator == "network" or (estimator == "auto" and fit.kind == "network")
    degrees = data.degrees if use_network else None
    est = bootstrap_r0(fit, data.infectious_periods, degrees, n_bootstrap=n_bootstrap, rng=seed)
    if samples_path:
        with open(samples_path, "w") as fh:
            fh.write("r0\n")
            fh.writelines(f"{cio.format_float(v)}\n" for v in est.samples)
    payload = est.to_dict()
    payload["estimator"] = "network" if use_network else "mass-action"
    return payload


def cmd_r0(args):
    with open(args.fit) as fh:
        try:
            fit = FitResult.from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError) as exc:
            raise cio.DecodeError(f"{args.fit}: invalid fit file ({exc})") from None
    if not fit.converged or fit.covariance is None:
        print(f"error: fit in {args.fit} did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    data = cio.read_dataset(args.data)
    print(_dump(_r0_payload(fit, data, args.estimator, args.bootstrap, args.seed, args.samples)))
    return EXIT_OK


def cmd_coverage(args):
    if args.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    kwargs = dict(
        replications=args.replications,
        seed=args.seed,
        full_scale=args.full_scale,
        n=args.n,
        m_target=args.m,
        n_bootstrap=args.bootstrap,
        n_jobs=args.jobs,
    )
    misspecified = args.misspecified or (args.scenario.startswith("net") and not args.no_misspecified)
    if misspecified:
        if not args.scenario.startswith("net"):
            raise UsageError("--misspecified applies to network scenarios only")
        reports = run_coverage(args.scenario, misspecified=True, **kwargs)
    else:
        reports = (run_coverage(args.scenario, **kwargs),)
    print("\n\n".join(r.table() for r in reports))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for r in reports:
            stem = os.path.join(args.out, f"{r.scenario}_{r.estimator}")
            with open(stem + ".json", "w") as fh:
                fh.write(r.to_json() + "\n")
            with open(stem + "_scatter.csv", "w") as fh:
                fh.write(scatter_csv(scatter_data(r)))
    return EXIT_OK


def cmd_epicurve(args):
    curve = cio.read_epicurve(args.counts, latent=args.latent, incubation=args.incubation, infectious=args.infectious)
    data = cio.epicurve_to_dataset(curve, args.n)
    fit = fit_mle(data, args.family, "mass-action")
    payload = {"fit": fit.to_dict(), "dataset": {"m": data.m, "T": data.T, "n": data.n}}
    if fit.converged and fit.covariance is not None:
        payload["r0"] = _r0_payload(fit, data, "mass-action", args.bootstrap, args.seed)
    if args.family == "weibull":
        null = fit_mle(data, "exponential", "mass-action", profile=False)
        stat, p = likelihood_ratio_test(null, fit)
        payload["lr_test_exponential"] = {"statistic": stat, "p_value": p}
    print(_dump(payload))
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_plot(args):
    rows = read_scatter_csv(args.scatter)
    log_scale = args.log and bool(rows) and "log_true_r0" in rows[0]
    with open(args.out, "w") as fh:
        fh.write(scatter_svg(rows, log_scale=log_scale))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="contact-intervals", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate an epidemic and write a dataset directory")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit a contact-interval model to a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--family", choices=("exponential", "weibull"), default="exponential")
    s.add_argument("--likelihood", choices=("network", "mass-action", "with-infectors"), default="network")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("r0", help="estimate R0 with a bootstrap interval")
    s.add_argument("--fit", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--bootstrap", type=int, default=10_000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--estimator", choices=("auto", "network", "mass-action"), default="auto")
    s.add_argument("--samples", help="write bootstrap samples to this CSV")
    s.set_defaults(func=cmd_r0)

    s = sub.add_parser("coverage", help="run a coverage study for one scenario")
    s.add_argument("--scenario", required=True, help=", ".join(SCENARIOS))
    s.add_argument("--replications", type=int)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--paper-scale", dest="full_scale", action="store_true", help="n=100000, m=1000, R=1000, B=10000")
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--bootstrap", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--misspecified", action="store_true", help="also fit mass-action models (network scenarios)")
    s.add_argument("--no-misspecified", action="store_true")
    s.add_argument("--out", help="directory for JSON reports and scatter CSVs")
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("epicurve", help="fit a mass-action model to daily case counts")
    s.add_argument("--counts", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--latent", type=float, default=1.0)
    s.add_argument("--incubation", type=float, default=2.0)
    s.add_argument("--infectious", type=float, default=1.0)
    s.add_argument("--family", choices=("exponential", "weibull"), default="weibull")
    s.add_argument("--bootstrap", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_epicurve)

    s = sub.add_parser("plot", help="render a scatter CSV as SVG")
    s.add_argument("--scatter", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--log", action="store_true", help="use the log columns when present")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (cio.DecodeError, DataInconsistencyError, FileNotFoundError, ModelRejected, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
