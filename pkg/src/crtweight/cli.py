"""Command-line interface: estimate, sensitivity, simulate, replicate.

Every subcommand is a pure function of its inputs, flags and seed; reports are
written atomically with a canonical JSON body (see :mod:`crtweight.report`).
Exit codes: 0 ok, 2 usage, 3 parse, 4 convergence, 5 degeneracy, 6 acceptance
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import acceptance
from .data import ColumnSchema, load_csv, summarize
from .errors import ConvergenceError, CrtWeightError, UsageError
from .estimators import estimate_all, strata_covariate_profile
from .inference import cluster_bootstrap, sandwich
from .report import csv_text, report_document, write_text_atomic
from .sensitivity import GammaSearch, bounds_for, minimal_gamma
from .simulate import StudyConfig, make_scenario, run_study
from .wps import FitSettings, fit, propensity_values

ESTIMAND_NAMES = ("tau_a", "tau_ac", "tau_c")


def _default_workers() -> int:
    env = os.environ.get("CRTWEIGHT_THREADS")
    return int(env) if env else 1


def _load_config_file(path: str) -> dict[str, str]:
    """Flat key=value config; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    return values


class _ConfigResolver:
    """Flag values win; config-file values fill in unset flags."""

    def __init__(self, args: argparse.Namespace):
        self.cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
        self.args = args

    def get(self, dest: str, key: str, cast, default=None, required: bool = False):
        flag_value = getattr(self.args, dest, None)
        if flag_value is not None:
            return flag_value
        if key in self.cfg:
            try:
                return cast(self.cfg[key])
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from None
        if required:
            raise UsageError(f"missing required option --{key}")
        return default


def _schema_from(resolver: _ConfigResolver) -> ColumnSchema:
    covs = resolver.get("covariate_cols", "covariate-cols", str, required=True)
    return ColumnSchema(
        cluster=resolver.get("cluster_col", "cluster-col", str, "cluster"),
        treatment=resolver.get("treatment_col", "treatment-col", str, "z"),
        outcome=resolver.get("outcome_col", "outcome-col", str, "y"),
        covariates=[c.strip() for c in covs.split(",") if c.strip()],
    )


def _emit(args, body: dict, rows: list[dict], command: str) -> None:
    fmt = args.format
    text = report_document(body, command) if fmt == "json" else csv_text(rows)
    if args.output:
        write_text_atomic(args.output, text)
    else:
        sys.stdout.write(text)


def _prepared_estimation(args):
    """Shared front half of estimate/sensitivity: load, fit or fix e."""
    resolver = _ConfigResolver(args)
    schema = _schema_from(resolver)
    pi_t = resolver.get("pi_t", "pi-t", float, required=True)
    input_path = resolver.get("input", "input", str, required=True)
    dataset = load_csv(input_path, schema, design_treatment_prob=pi_t)

    fit_result = None
    if args.no_fit:
        if args.e_const is None:
            raise UsageError("--no-fit requires --e-const")
        if not (0.0 < args.e_const < 1.0):
            raise UsageError(f"--e-const must be in (0, 1), got {args.e_const}")
        e_values = np.full(dataset.n, float(args.e_const))
    else:
        if args.e_const is not None:
            raise UsageError("--e-const requires --no-fit")
        settings = FitSettings(max_iterations=args.max_iterations)
        fit_result = fit(dataset, settings=settings)
        if not fit_result.converged:
            raise ConvergenceError(
                "working propensity score fit did not converge "
                f"(gradient max-norm {fit_result.gradient_max_norm:.3g})"
            )
        e_values = propensity_values(fit_result.model, dataset)
    return resolver, dataset, e_values, fit_result


def _check_level(level: float) -> float:
    if not (0.0 < level < 1.0):
        raise UsageError(f"--level must be in (0, 1), got {level}")
    return level


def cmd_estimate(args) -> int:
    resolver, dataset, e_values, fit_result = _prepared_estimation(args)
    level = _check_level(args.level)
    report = estimate_all(dataset, e_values=e_values, tau_c_eps=args.tau_c_eps)
    profiles = strata_covariate_profile(dataset, e_values, report.nu, eps=args.tau_c_eps)

    body = report.to_dict()
    body["summary"] = summarize(dataset).to_dict()
    body["covariate_profiles"] = profiles.to_dict()
    if fit_result is not None:
        body["wps_fit"] = fit_result.to_dict()
    else:
        body["propensity"] = {"mode": "constant", "value": float(args.e_const)}

    if args.sandwich:
        sw = sandwich(dataset, e_values, report.nu, level=level, tau_c_eps=args.tau_c_eps)
        body["sandwich"] = sw.to_dict()
        for k, v in sw.se.items():
            if np.isfinite(v):
                report.se[k] = v
                report.ci[k] = sw.ci[k]

    if args.boot > 0:
        if args.seed is None:
            raise UsageError("--seed is required with --boot")
        no_fit = args.no_fit
        e_const = args.e_const
        eps = args.tau_c_eps
        max_iterations = args.max_iterations
        warm = None if fit_result is None else fit_result.model.alpha

        def pipeline(ds):
            if no_fit:
                e = np.full(ds.n, float(e_const))
            else:
                res = fit(ds, init=warm, settings=FitSettings(max_iterations=max_iterations))
                if not res.converged:
                    raise ConvergenceError("bootstrap replicate fit did not converge")
                e = propensity_values(res.model, ds)
            rep = estimate_all(ds, e_values=e, tau_c_eps=eps)
            out = dict(rep.estimates())
            out["nu"] = rep.nu
            return out

        boot = cluster_bootstrap(
            dataset, pipeline, args.boot, args.seed, level=level, workers=args.threads
        )
        body["bootstrap"] = boot.to_dict()

    _emit(args, body, report.to_csv_rows(), "estimate")
    return 0


def cmd_sensitivity(args) -> int:
    resolver, dataset, e_values, _ = _prepared_estimation(args)
    report = estimate_all(dataset, e_values=e_values, tau_c_eps=args.tau_c_eps)
    estimands = list(ESTIMAND_NAMES)
    if report.tau_c is None:
        estimands.remove("tau_c")

    gammas: list[float] = []
    if args.gamma:
        try:
            gammas = [float(g) for g in args.gamma.split(",") if g.strip()]
        except ValueError:
            raise UsageError(f"--gamma must be a comma list of reals, got {args.gamma!r}")
        if any(g < 1.0 for g in gammas):
            raise UsageError("--gamma values must be >= 1")
    if not gammas and not args.find_gamma_star:
        raise UsageError("provide --gamma and/or --find-gamma-star")

    rows = []
    table = []
    for g in gammas:
        for name in estimands:
            b = bounds_for(dataset, e_values, name, g, nu=report.nu, eps=args.tau_c_eps)
            entry = {"gamma": g, "estimand": name, "lower": b.lower, "upper": b.upper}
            rows.append(entry)
            table.append(entry)

    body: dict = {"bounds": table, "nu": report.nu, "estimates": report.estimates()}
    if args.find_gamma_star:
        search = GammaSearch(gamma_max=args.gamma_max)
        stars = {}
        for name in estimands:
            res = minimal_gamma(
                dataset, estimand=name, config=search, e_values=e_values, nu=report.nu
            )
            stars[name] = {
                "gamma_star": res.gamma_star,
                "exceeds_gamma_max": res.exceeds_gamma_max,
                "gamma_max": res.gamma_max,
            }
            rows.append(
                {
                    "gamma": res.gamma_star,
                    "estimand": f"{name}:gamma_star",
                    "lower": None,
                    "upper": None,
                }
            )
        body["gamma_star"] = stars
    if report.tau_c is None:
        body["tau_c_message"] = report.tau_c_message

    _emit(args, body, rows, "sensitivity")
    return 0


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    _check_level(args.level)
    scenario = make_scenario(args.scenario, args.clusters)
    config = StudyConfig(
        use_estimated_propensity=not args.known_e,
        run_sandwich=not args.no_sandwich,
        bootstrap_replicates=args.boot,
        level=args.level,
        workers=args.threads,
    )
    if args.dump_population:
        from .simulate import _derive_seed, generate

        pop = generate(scenario, _derive_seed(args.seed, (0, 0)))
        stratum = pop.stratum
        z = pop.treatments
        rows = [
            {
                "cluster": int(pop.cluster_index[i]),
                "cluster_treatment": int(z[i]),
                "v1": float(pop.covariates[i, 0]),
                "v2": float(pop.covariates[i, 1]),
                "v3": float(pop.covariates[i, 2]),
                "v1c": float(pop.covariates[i, 3]),
                "v2c": float(pop.covariates[i, 4]),
                "y0": float(pop.y0[i]),
                "y1": float(pop.y1[i]),
                "r0": int(pop.r0[i]),
                "r1": int(pop.r1[i]),
                "stratum": stratum[i],
            }
            for i in range(pop.y0.shape[0])
        ]
        write_text_atomic(args.dump_population, csv_text(rows))
    summary = run_study(scenario, args.reps, args.seed, config)
    body = summary.to_dict()
    body["config"] = {
        "use_estimated_propensity": config.use_estimated_propensity,
        "run_sandwich": config.run_sandwich,
        "bootstrap_replicates": config.bootstrap_replicates,
        "level": config.level,
    }
    if args.per_replicate:
        rep_rows = []
        for o in summary.replicates:
            row: dict = {"replicate": o.index, "failed": o.failed}
            if o.truths is not None:
                row.update(
                    {f"truth_{k}": v for k, v in o.truths.as_mapping().items()}
                )
                row["truth_nu"] = o.truths.nu_true
            if o.estimates:
                row.update({f"est_{k}": v for k, v in o.estimates.items()})
            row["naive"] = o.naive
            rep_rows.append(row)
        write_text_atomic(args.per_replicate, csv_text(rep_rows))
    _emit(args, body, summary.to_csv_rows(), "simulate")
    return 0


def cmd_replicate(args) -> int:
    numbers = None
    if args.criteria:
        try:
            numbers = sorted({int(k) for k in args.criteria.split(",")})
        except ValueError:
            raise UsageError(f"--criteria must be a comma list of integers, got {args.criteria!r}")
        unknown = [k for k in numbers if k not in acceptance.CRITERIA]
        if unknown:
            raise UsageError(f"unknown criteria: {unknown}")

    overrides = None
    if args.inject_coefficient_fault:
        # test hook: corrupt the embedded generative coefficients so criteria fail
        def overrides(scn):
            import dataclasses

            bad = tuple(v + 1.5 for v in scn.beta_y1)
            return dataclasses.replace(scn, beta_y1=bad)

    results = acceptance.run_all(
        numbers, seed=args.seed, quick=args.quick, workers=args.threads, overrides=overrides
    )
    lines = []
    for res in results:
        lines.append(res.line())
        lines.extend("  " + d for d in res.details)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.output:
        body = {
            "quick": args.quick,
            "seed": args.seed,
            "criteria": [
                {
                    "number": r.number,
                    "name": r.name,
                    "passed": r.passed,
                    "details": r.details,
                }
                for r in results
            ],
        }
        write_text_atomic(args.output, report_document(body, "replicate"))
    return 0 if all(r.passed for r in results) else 6


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="json is canonical; csv is a lossy convenience export")
    p.add_argument("--config", help="flat key=value config file, overridden by flags")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="input CSV path")
    p.add_argument("--pi-t", dest="pi_t", type=float,
                   help="known cluster randomization probability, in (0, 1)")
    p.add_argument("--cluster-col", dest="cluster_col", help="cluster id column (default: cluster)")
    p.add_argument("--treatment-col", dest="treatment_col", help="treatment column (default: z)")
    p.add_argument("--outcome-col", dest="outcome_col", help="outcome column (default: y)")
    p.add_argument("--covariate-cols", dest="covariate_cols",
                   help="comma-separated covariate columns")
    p.add_argument("--no-fit", action="store_true",
                   help="skip the propensity fit; requires --e-const")
    p.add_argument("--e-const", dest="e_const", type=float,
                   help="constant working propensity score used with --no-fit")
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=500)
    p.add_argument("--tau-c-eps", dest="tau_c_eps", type=float, default=0.02,
                   help="guard on (1 - nu) below which tau_c is not reported")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crtweight",
        description="Weighting estimators for cluster randomized experiments "
        "with post-randomization recruitment.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("estimate", help="point estimates, intervals, profiles")
    _add_data_flags(p)
    p.add_argument("--boot", type=int, default=0, help="bootstrap replicates (0 = off)")
    p.add_argument("--seed", type=int, help="seed; required for stochastic runs")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--no-sandwich", dest="sandwich", action="store_false",
                   help="skip the known-propensity sandwich intervals")
    p.add_argument("--threads", type=int, default=_default_workers())
    _add_io_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sensitivity", help="estimator bounds under recruitment confounding")
    _add_data_flags(p)
    p.add_argument("--gamma", help="comma list of violation levels, each >= 1")
    p.add_argument("--find-gamma-star", dest="find_gamma_star", action="store_true",
                   help="search the smallest gamma whose bounds include zero")
    p.add_argument("--gamma-max", dest="gamma_max", type=float, default=10.0)
    _add_io_flags(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("simulate", help="Monte Carlo study on a registered scenario")
    p.add_argument("--scenario", required=True, help='label, e.g. "B-1-balanced"')
    p.add_argument("--clusters", type=int, required=True, help="number of clusters J")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--boot", type=int, default=0)
    p.add_argument("--known-e", dest="known_e", action="store_true",
                   help="use the scenario's true propensity instead of fitting")
    p.add_argument("--no-sandwich", dest="no_sandwich", action="store_true")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--threads", type=int, default=_default_workers())
    p.add_argument("--per-replicate", dest="per_replicate",
                   help="also write per-replicate estimates to this CSV")
    p.add_argument("--dump-population", dest="dump_population",
                   help="write the first replicate's raw population to this CSV")
    _add_io_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate", help="run the acceptance suite, exit 6 on failure")
    p.add_argument("--quick", action="store_true",
                   help="reduced replication count; indicative only")
    p.add_argument("--criteria", help="comma list of criterion numbers (default: all)")
    p.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=_default_workers())
    p.add_argument("--output", help="also write a JSON report here")
    p.add_argument("--inject-coefficient-fault", dest="inject_coefficient_fault",
                   action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_replicate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CrtWeightError as exc:
        print(f"crtweight: error: {exc}", file=sys.stderr)
        return exc.exit_code


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
