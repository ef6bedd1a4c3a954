"""Data-generating engine for the cluster-recruitment simulation study.

Each scenario draws J clusters of 100 individuals as the overall population:

1. exactly round(treat_frac * J) clusters are treated, chosen by a seeded
   shuffle;
2. covariates: V1, V3 (individual) and V1c (cluster) are standard normal
   truncated to [-3, 3]; V2 (individual) and V2c (cluster) are Bernoulli(0.5);
   the model vector is x~ = (1, V1, V2, V3, V1c, V2c);
3. potential outcomes share a cluster random effect and an individual
   residual: Y(z) = x~' beta_y[z] + eps_cluster + eps_individual, with
   variances sigma2*icc and sigma2*(1-icc);
4. recruitment under control is Bernoulli(expit(x~' beta_R0)); the violation
   variants append the two potential outcomes to the linear predictor;
5. recruitment is monotone: R(1) = 1 wherever R(0) = 1, and for R(0) = 0 units
   R(1) is Bernoulli((delta(x; alpha) - 1) * exp(linear predictor)), the
   unique choice making P(R(1)=1 | x) = delta(x) * P(R(0)=1 | x).  If the
   implied probability exceeds 1 anywhere, generation fails loudly naming the
   unit; it is never clamped.

Principal strata follow from (R(0), R(1)): always (1,1), incentivized (0,1),
never (0,0).  The observable dataset keeps only individuals recruited under
their cluster's realized arm.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .data import ClusterRecord, RecruitedDataset
from .errors import (
    ConvergenceError,
    CrtWeightError,
    GenerationError,
    UsageError,
)
from .estimators import estimate_all
from .inference import cluster_bootstrap, sandwich
from .wps import FitSettings, WpsModel, fit, propensity_values

CLUSTER_SIZE = 100
BETA_Y1 = (2.0, -1.0, 3.0, 0.1, -0.1, 0.3)
BETA_Y0 = (0.0, -0.5, 1.0, 0.1, -0.2, 0.3)
SIGMA2 = 1.0
ICC = 0.1

# base design: recruitment-under-control coefficients per stratum scenario,
# and the delta-model coefficients per (scenario, covariate-separation case)
_BETA_R0 = {
    "A": (-0.99, 0.3, -0.6, 0.0, 0.1, -0.3),
    "B": (-0.70, 0.3, -0.6, 0.0, 0.1, -0.3),
    "C": (-1.35, 0.3, -0.6, 0.0, 0.1, -0.3),
}
_ALPHA = {
    ("A", 1): (0.275, 0.3, -0.5, -0.1, 0.0, -0.15),
    ("A", 2): (0.160, 0.2, -0.3, -0.1, 0.0, -0.15),
    ("B", 1): (0.275, 0.3, -0.5, -0.1, 0.0, -0.15),
    ("B", 2): (0.160, 0.2, -0.3, -0.1, 0.0, -0.15),
    ("C", 1): (-0.235, 0.3, -0.5, -0.1, 0.0, -0.15),
    ("C", 2): (-0.340, 0.2, -0.3, -0.1, 0.0, -0.15),
}
# ignorability-violation variants: the last two recruitment coefficients
# multiply the potential outcomes Y(0), Y(1)
_BETA_R0_VIOLATION = {
    "A": (-0.70, 0.3, -0.6, 0.0, 0.1, -0.3, 0.2, -0.12),
    "B": (-0.40, 0.3, -0.6, 0.0, 0.1, -0.3, 0.2, -0.12),
    "C": (-1.07, 0.3, -0.6, 0.0, 0.1, -0.3, 0.2, -0.12),
}
_ALPHA_VIOLATION = {
    ("A", 1): (0.270, 0.3, -0.5, -0.1, 0.0, -0.15),
    ("A", 2): (0.160, 0.2, -0.3, -0.1, 0.0, -0.15),
    ("B", 1): (0.272, 0.3, -0.5, -0.1, 0.0, -0.15),
    ("B", 2): (0.177, 0.2, -0.3, -0.1, 0.0, -0.15),
    ("C", 1): (-0.268, 0.3, -0.5, -0.1, 0.0, -0.15),
    ("C", 2): (-0.355, 0.2, -0.3, -0.1, 0.0, -0.15),
}

STRATUM_TARGETS = {"A": (0.20, 0.20, 0.60), "B": (0.25, 0.25, 0.50), "C": (0.15, 0.25, 0.60)}


@dataclass(frozen=True)
class SimScenario:
    """A fully specified generative configuration plus the cluster count J."""

    label: str
    J: int
    treat_frac: float
    beta_R0: tuple[float, ...]
    alpha: tuple[float, ...]
    beta_y1: tuple[float, ...] = BETA_Y1
    beta_y0: tuple[float, ...] = BETA_Y0
    sigma2: float = SIGMA2
    icc: float = ICC
    cluster_size: int = CLUSTER_SIZE
    violation: bool = False

    def __post_init__(self) -> None:
        if self.J < 2:
            raise UsageError(f"J must be >= 2, got {self.J}")
        expected_r0 = 8 if self.violation else 6
        if len(self.beta_R0) != expected_r0:
            raise UsageError(
                f"beta_R0 must have {expected_r0} entries "
                f"({'violation' if self.violation else 'base'} design), "
                f"got {len(self.beta_R0)}"
            )
        for name, coef in (("alpha", self.alpha), ("beta_y1", self.beta_y1), ("beta_y0", self.beta_y0)):
            if len(coef) != 6:
                raise UsageError(f"{name} must have 6 entries, got {len(coef)}")
        m = self.treat_frac * self.J
        if abs(m - round(m)) > 1e-9 or not (0 < round(m) < self.J):
            raise UsageError(
                f"treat_frac * J must be a whole number of clusters strictly "
                f"between 0 and J, got {m}"
            )

    @property
    def n_treated_clusters(self) -> int:
        return int(round(self.treat_frac * self.J))

    @property
    def design_ratio(self) -> float:
        return self.treat_frac / (1.0 - self.treat_frac)

    def true_model(self) -> WpsModel:
        return WpsModel(alpha=np.asarray(self.alpha), r=self.design_ratio)


def scenario_labels(include_violation: bool = True) -> list[str]:
    labels = []
    for scn in "ABC":
        for case in (1, 2):
            for design in ("balanced", "imbalanced"):
                labels.append(f"{scn}-{case}-{design}")
                if include_violation:
                    labels.append(f"{scn}-{case}-{design}-violation")
    return labels


def make_scenario(label: str, J: int) -> SimScenario:
    """Resolve a registered scenario label, e.g. 'B-1-balanced' or
    'C-2-imbalanced-violation', at a given cluster count."""
    parts = label.split("-")
    violation = False
    if parts and parts[-1] == "violation":
        violation = True
        parts = parts[:-1]
    if len(parts) != 3:
        raise UsageError(f"unknown scenario label {label!r}")
    scn, case_s, design = parts[0].upper(), parts[1], parts[2].lower()
    if scn not in "ABC" or case_s not in ("1", "2") or design not in ("balanced", "imbalanced"):
        raise UsageError(f"unknown scenario label {label!r}")
    case = int(case_s)
    treat_frac = 0.5 if design == "balanced" else 0.25
    if violation:
        beta_R0 = _BETA_R0_VIOLATION[scn]
        alpha = _ALPHA_VIOLATION[(scn, case)]
    else:
        beta_R0 = _BETA_R0[scn]
        alpha = _ALPHA[(scn, case)]
    return SimScenario(
        label=label,
        J=J,
        treat_frac=treat_frac,
        beta_R0=beta_R0,
        alpha=alpha,
        violation=violation,
    )


def _truncated_standard_normal(
    rng: np.random.Generator, size: int, bound: float = 3.0
) -> np.ndarray:
    """Rejection sampling from N(0,1) restricted to [-bound, bound]."""
    x = rng.standard_normal(size)
    while True:
        bad = np.abs(x) > bound
        if not bad.any():
            return x
        x[bad] = rng.standard_normal(int(bad.sum()))


def _expit(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v, dtype=float)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


@dataclass(frozen=True)
class SimPopulation:
    """A realized overall population with potential outcomes and strata."""

    scenario: SimScenario
    cluster_treatment: np.ndarray  # (J,)
    cluster_index: np.ndarray  # (N,) individual -> cluster
    covariates: np.ndarray  # (N, 5): V1, V2, V3, V1c, V2c
    y0: np.ndarray
    y1: np.ndarray
    r0: np.ndarray
    r1: np.ndarray

    @property
    def stratum(self) -> np.ndarray:
        """'a' always-, 'c' incentivized-, 'n' never-recruited."""
        s = np.full(self.r0.shape, "n", dtype="<U1")
        s[self.r0 == 1] = "a"
        s[(self.r0 == 0) & (self.r1 == 1)] = "c"
        return s

    @property
    def treatments(self) -> np.ndarray:
        return self.cluster_treatment[self.cluster_index]

    @property
    def realized_recruitment(self) -> np.ndarray:
        return np.where(self.treatments == 1, self.r1, self.r0)

    def recruited_dataset(self) -> RecruitedDataset:
        """Observable sample: recruited individuals grouped by cluster.

        Clusters in which nobody was recruited are unobservable and dropped.
        """
        rec = self.realized_recruitment == 1
        y_obs = np.where(self.treatments == 1, self.y1, self.y0)
        width = len(str(self.scenario.J))
        clusters = []
        for j in range(self.scenario.J):
            rows = rec & (self.cluster_index == j)
            if not rows.any():
                continue
            clusters.append(
                ClusterRecord(
                    cluster_id=f"c{j:0{width}d}",
                    treatment=int(self.cluster_treatment[j]),
                    covariates=self.covariates[rows],
                    outcomes=y_obs[rows],
                )
            )
        return RecruitedDataset(
            clusters=tuple(clusters),
            covariate_dim=5,
            design_treatment_prob=self.scenario.treat_frac,
        )

    def true_propensities(self, dataset: RecruitedDataset) -> np.ndarray:
        return propensity_values(self.scenario.true_model(), dataset)


def generate(scenario: SimScenario, seed) -> SimPopulation:
    """Draw one overall population; deterministic per (scenario, seed)."""
    rng = np.random.default_rng(
        seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    )
    J, size = scenario.J, scenario.cluster_size
    n = J * size
    m = scenario.n_treated_clusters
    treated = rng.permutation(J)[:m]
    zc = np.zeros(J, dtype=np.int64)
    zc[treated] = 1
    cluster_index = np.repeat(np.arange(J), size)

    v1 = _truncated_standard_normal(rng, n)
    v2 = (rng.random(n) < 0.5).astype(float)
    v3 = _truncated_standard_normal(rng, n)
    v1c = _truncated_standard_normal(rng, J)[cluster_index]
    v2c = (rng.random(J) < 0.5).astype(float)[cluster_index]
    X = np.column_stack([v1, v2, v3, v1c, v2c])
    xa = np.column_stack([np.ones(n), X])

    eps_cluster = rng.normal(0.0, np.sqrt(scenario.sigma2 * scenario.icc), J)[
        cluster_index
    ]
    eps_indiv = rng.normal(0.0, np.sqrt(scenario.sigma2 * (1.0 - scenario.icc)), n)
    y0 = xa @ np.asarray(scenario.beta_y0) + eps_indiv + eps_cluster
    y1 = xa @ np.asarray(scenario.beta_y1) + eps_indiv + eps_cluster

    beta_r0 = np.asarray(scenario.beta_R0)
    if scenario.violation:
        lp0 = np.column_stack([xa, y0, y1]) @ beta_r0
    else:
        lp0 = xa @ beta_r0
    r0 = (rng.random(n) < _expit(lp0)).astype(np.int64)

    delta_x = 1.0 + np.exp(-(xa @ np.asarray(scenario.alpha)))
    p_r1_given_r0_zero = (delta_x - 1.0) * np.exp(lp0)
    invalid = (r0 == 0) & (p_r1_given_r0_zero > 1.0)
    if invalid.any():
        i = int(np.flatnonzero(invalid)[0])
        raise GenerationError(
            f"scenario {scenario.label!r}: implied treated-recruitment "
            f"probability {p_r1_given_r0_zero[i]:.6f} > 1 for unit {i} "
            f"(cluster {int(cluster_index[i])}); refusing to clamp"
        )
    u = rng.random(n)
    r1 = np.where(r0 == 1, 1, (u < p_r1_given_r0_zero).astype(np.int64))

    return SimPopulation(
        scenario=scenario,
        cluster_treatment=zc,
        cluster_index=cluster_index,
        covariates=X,
        y0=y0,
        y1=y1,
        r0=r0,
        r1=r1,
    )


@dataclass(frozen=True)
class SampleTruths:
    """Finite-population effect means of the realized population."""

    tau_O: float
    tau_R: float | None
    tau_a: float | None
    tau_ac: float | None
    tau_c: float | None
    pi_a: float
    pi_c: float
    pi_n: float
    nu_true: float | None

    def as_mapping(self) -> dict[str, float | None]:
        return {
            "tau_O": self.tau_O,
            "tau_R": self.tau_R,
            "tau_a": self.tau_a,
            "tau_ac": self.tau_ac,
            "tau_c": self.tau_c,
        }


def sample_truths(pop: SimPopulation) -> SampleTruths:
    effect = pop.y1 - pop.y0
    s = pop.stratum
    rec = pop.realized_recruitment == 1

    def mean_over(mask: np.ndarray) -> float | None:
        return float(effect[mask].mean()) if mask.any() else None

    pi_a = float((s == "a").mean())
    pi_c = float((s == "c").mean())
    nu_true = pi_a / (pi_a + pi_c) if (pi_a + pi_c) > 0 else None
    return SampleTruths(
        tau_O=float(effect.mean()),
        tau_R=mean_over(rec),
        tau_a=mean_over(s == "a"),
        tau_ac=mean_over(s != "n"),
        tau_c=mean_over(s == "c"),
        pi_a=pi_a,
        pi_c=pi_c,
        pi_n=float((s == "n").mean()),
        nu_true=nu_true,
    )


@dataclass(frozen=True)
class StudyConfig:
    """Estimation choices for a Monte Carlo run."""

    use_estimated_propensity: bool = True
    run_sandwich: bool = True
    bootstrap_replicates: int = 0
    level: float = 0.95
    tau_c_eps: float = 0.02
    workers: int = 1
    fit_settings: FitSettings = field(default_factory=FitSettings)


@dataclass
class ReplicateOutcome:
    index: int
    failed: bool
    failure_reason: str | None
    truths: SampleTruths | None = None
    estimates: dict | None = None  # tau_R/tau_a/tau_ac/tau_c/nu
    naive: float | None = None
    alpha_error: np.ndarray | None = None
    sandwich_covered: dict | None = None
    bootstrap_covered: dict | None = None
    bootstrap_failures: int = 0


def _naive_difference(dataset: RecruitedDataset) -> float:
    z = dataset.treatments
    y = dataset.outcomes
    return float(y[z == 1].mean() - y[z == 0].mean())


def _covered(interval: tuple[float, float], truth: float | None) -> bool | None:
    lo, hi = interval
    if truth is None or not (np.isfinite(lo) and np.isfinite(hi)):
        return None
    return bool(lo <= truth <= hi)


def _derive_seed(seed, key: tuple[int, ...]) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + key
        )
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def run_replicate(scenario: SimScenario, seed, index: int, config: StudyConfig) -> ReplicateOutcome:
    """One generate -> extract -> fit -> estimate -> infer pass."""
    gen_seed = _derive_seed(seed, (index, 0))
    boot_seed = _derive_seed(seed, (index, 1))
    pop = generate(scenario, gen_seed)
    truths = sample_truths(pop)
    try:
        dataset = pop.recruited_dataset()

        def estimate(ds: RecruitedDataset, warm: np.ndarray | None = None):
            if config.use_estimated_propensity:
                result = fit(ds, init=warm, settings=config.fit_settings)
                if not result.converged:
                    raise ConvergenceError(
                        f"pseudo-likelihood fit did not converge "
                        f"(gradient max-norm {result.gradient_max_norm:.3g})"
                    )
                e = propensity_values(result.model, ds)
                alpha = result.model.alpha
            else:
                e = propensity_values(scenario.true_model(), ds)
                alpha = None
            report = estimate_all(ds, e_values=e, tau_c_eps=config.tau_c_eps)
            return report, e, alpha

        report, e_values, alpha_hat = estimate(dataset)
        estimates = dict(report.estimates())
        estimates["nu"] = report.nu
        naive = _naive_difference(dataset)
        alpha_error = None
        if alpha_hat is not None:
            alpha_error = alpha_hat - np.asarray(scenario.alpha)

        sandwich_covered = None
        if config.run_sandwich:
            sw = sandwich(
                dataset,
                e_values,
                report.nu,
                level=config.level,
                tau_c_eps=config.tau_c_eps,
            )
            sandwich_covered = {
                name: _covered(sw.ci[name], getattr(truths, name))
                for name in ("tau_a", "tau_c", "tau_R")
            }

        bootstrap_covered = None
        boot_failures = 0
        if config.bootstrap_replicates > 0:
            warm = alpha_hat

            def pipeline(ds: RecruitedDataset):
                rep, _, _ = estimate(ds, warm=warm)
                out = dict(rep.estimates())
                out["nu"] = rep.nu
                return out

            boot = cluster_bootstrap(
                dataset,
                pipeline,
                config.bootstrap_replicates,
                boot_seed,
                level=config.level,
            )
            boot_failures = boot.n_failed
            bootstrap_covered = {
                name: _covered(boot.normal_ci[name], getattr(truths, name))
                if name in boot.normal_ci
                else None
                for name in ("tau_R", "tau_a", "tau_ac", "tau_c")
            }

        return ReplicateOutcome(
            index=index,
            failed=False,
            failure_reason=None,
            truths=truths,
            estimates=estimates,
            naive=naive,
            alpha_error=alpha_error,
            sandwich_covered=sandwich_covered,
            bootstrap_covered=bootstrap_covered,
            bootstrap_failures=boot_failures,
        )
    except CrtWeightError as exc:
        return ReplicateOutcome(
            index=index,
            failed=True,
            failure_reason=f"{type(exc).__name__}: {exc}",
            truths=truths,
        )


@dataclass
class MonteCarloSummary:
    """Aggregates of a simulation study, biases measured against the
    per-replicate sample truths."""

    label: str
    J: int
    n_reps: int
    seed: int | None
    config: StudyConfig
    n_failed: int
    estimands: dict[str, dict]  # name -> {mean_bias, sd, mean_truth, coverage...}
    naive_mean: float
    naive_sd: float
    naive_gaps: dict[str, dict]  # truth name -> {gap, se}
    alpha_mean_error: list[float] | None
    alpha_sd_error: list[float] | None
    nu_mean_error: float | None
    nu_mean_abs_error: float | None
    prevalence_means: dict[str, float]
    replicates: list[ReplicateOutcome] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.label,
            "J": self.J,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "estimands": self.estimands,
            "naive": {
                "mean": self.naive_mean,
                "sd": self.naive_sd,
                "gaps": self.naive_gaps,
            },
            "alpha_mean_error": self.alpha_mean_error,
            "alpha_sd_error": self.alpha_sd_error,
            "nu_mean_error": self.nu_mean_error,
            "nu_mean_abs_error": self.nu_mean_abs_error,
            "prevalence_means": self.prevalence_means,
        }

    def to_csv_rows(self) -> list[dict]:
        rows = []
        for name, stats in self.estimands.items():
            rows.append({"scenario": self.label, "J": self.J, "estimand": name, **stats})
        return rows


def _aggregate(
    scenario: SimScenario,
    seed,
    config: StudyConfig,
    outcomes: list[ReplicateOutcome],
) -> MonteCarloSummary:
    ok = [o for o in outcomes if not o.failed]
    n_failed = len(outcomes) - len(ok)
    if not ok:
        raise CrtWeightError("every replicate failed; nothing to aggregate")

    names = ("tau_R", "tau_a", "tau_ac", "tau_c")
    estimands: dict[str, dict] = {}
    for name in names:
        pairs = [
            (o.estimates[name], getattr(o.truths, name))
            for o in ok
            if o.estimates.get(name) is not None and getattr(o.truths, name) is not None
        ]
        if not pairs:
            continue
        est = np.array([p[0] for p in pairs])
        tru = np.array([p[1] for p in pairs])
        entry = {
            "n": len(pairs),
            "mean_estimate": float(est.mean()),
            "mean_truth": float(tru.mean()),
            "mean_bias": float((est - tru).mean()),
            "sd": float(est.std(ddof=1)) if len(pairs) > 1 else 0.0,
        }
        for attr, key in (
            ("sandwich_covered", "coverage_sandwich"),
            ("bootstrap_covered", "coverage_bootstrap"),
        ):
            flags = [
                getattr(o, attr)[name]
                for o in ok
                if getattr(o, attr) is not None and getattr(o, attr).get(name) is not None
            ]
            if flags:
                entry[key] = float(np.mean(flags))
        estimands[name] = entry

    naive = np.array([o.naive for o in ok])
    naive_gaps: dict[str, dict] = {}
    for truth_name in ("tau_O", "tau_R", "tau_a", "tau_ac", "tau_c"):
        diffs = [
            o.naive - getattr(o.truths, truth_name)
            for o in ok
            if getattr(o.truths, truth_name) is not None
        ]
        if len(diffs) > 1:
            d = np.asarray(diffs)
            naive_gaps[truth_name] = {
                "gap": float(d.mean()),
                "se": float(d.std(ddof=1) / np.sqrt(d.size)),
            }

    alpha_mean = alpha_sd = None
    errs = [o.alpha_error for o in ok if o.alpha_error is not None]
    if errs:
        E = np.vstack(errs)
        alpha_mean = [float(v) for v in E.mean(axis=0)]
        alpha_sd = [float(v) for v in E.std(axis=0, ddof=1)] if E.shape[0] > 1 else [0.0] * E.shape[1]

    nu_pairs = [
        (o.estimates["nu"], o.truths.nu_true)
        for o in ok
        if o.estimates.get("nu") is not None and o.truths.nu_true is not None
    ]
    nu_mean_error = nu_mean_abs = None
    if nu_pairs:
        dn = np.array([p[0] - p[1] for p in nu_pairs])
        nu_mean_error = float(dn.mean())
        nu_mean_abs = float(np.abs(dn).mean())

    prevalences = {
        "pi_a": float(np.mean([o.truths.pi_a for o in ok])),
        "pi_c": float(np.mean([o.truths.pi_c for o in ok])),
        "pi_n": float(np.mean([o.truths.pi_n for o in ok])),
    }

    return MonteCarloSummary(
        label=scenario.label,
        J=scenario.J,
        n_reps=len(outcomes),
        seed=seed if isinstance(seed, int) else None,
        config=config,
        n_failed=n_failed,
        estimands=estimands,
        naive_mean=float(naive.mean()),
        naive_sd=float(naive.std(ddof=1)) if naive.size > 1 else 0.0,
        naive_gaps=naive_gaps,
        alpha_mean_error=alpha_mean,
        alpha_sd_error=alpha_sd,
        nu_mean_error=nu_mean_error,
        nu_mean_abs_error=nu_mean_abs,
        prevalence_means=prevalences,
        replicates=outcomes,
    )


def run_study(
    scenario: SimScenario, n_reps: int, seed, config: StudyConfig | None = None
) -> MonteCarloSummary:
    """Run n_reps independent replicates and aggregate.

    Replicates use RNG streams derived from (seed, replicate index), so the
    summary is identical for any worker count.
    """
    if n_reps < 1:
        raise UsageError(f"n_reps must be >= 1, got {n_reps}")
    cfg = config or StudyConfig()
    indices = range(n_reps)
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(
                pool.map(
                    run_replicate,
                    [scenario] * n_reps,
                    [seed] * n_reps,
                    indices,
                    [cfg] * n_reps,
                    chunksize=max(1, n_reps // (4 * cfg.workers)),
                )
            )
    else:
        outcomes = [run_replicate(scenario, seed, i, cfg) for i in indices]
    outcomes.sort(key=lambda o: o.index)
    return _aggregate(scenario, seed, cfg, outcomes)
