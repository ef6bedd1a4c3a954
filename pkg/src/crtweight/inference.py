"""Variance estimation: M-estimation sandwich and stratified cluster bootstrap.

The sandwich treats the propensity values (and nu) as known.  Stacking, for
each weighting scheme, the weighted treated/control outcome sums and weight
sums normalized by the total recruited count gives a 12-dimensional parameter
theta = (theta^a, theta^ac, theta^R), each block (t1, t2, t3, t4) with

    tau_scheme = t1/t3 - t2/t4.

Each cluster contributes an estimating-equation residual
psi_k(D_j) = S_jk - theta_k * n_j (S_jk the cluster's weighted sum, n_j its
recruited count), so sum_j psi(D_j; theta_hat) = 0.  With A = E(n_j) I and
V = E(psi psi'), sqrt(J)(theta_hat - theta) -> N(0, A^-1 V A^-T), and the
delta method maps to (tau_a, tau_c, tau_R) through g with the nu-dependent
constants zeta1 = 1/(1-nu), zeta2 = -nu/(1-nu) in the tau_c row.

Uncertainty from the *estimated* propensity score and nu is handled by the
cluster bootstrap instead: resample clusters with replacement within each arm
(holding the number of treated clusters fixed), carry every individual of a
sampled cluster, and re-run the full pipeline per replicate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.stats import norm

from .data import RecruitedDataset
from .errors import BootstrapUnreliableError, CrtWeightError, NumericalDegeneracyError
from .estimators import TAU_C_EPS_DEFAULT, WeightScheme, _check_e

ESTIMAND_ORDER = ("tau_a", "tau_c", "tau_R")
_SCHEME_ORDER = (
    WeightScheme.ALWAYS_RECRUITED,
    WeightScheme.ALWAYS_OR_INCENTIVIZED,
    WeightScheme.RECRUITED,
)


@dataclass(frozen=True)
class ThetaHat:
    """The 12 stacked Hajek components, blocks ordered (a, ac, R)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).ravel().copy()
        if v.size != 12:
            raise ValueError(f"theta must have 12 components, got {v.size}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def block(self, index: int) -> np.ndarray:
        return self.values[4 * index : 4 * index + 4]

    def tau(self, index: int) -> float:
        t1, t2, t3, t4 = self.block(index)
        return float(t1 / t3 - t2 / t4)


def _per_row_components(
    dataset: RecruitedDataset, e: np.ndarray
) -> np.ndarray:
    z = dataset.treatments
    y = dataset.outcomes
    cols = []
    for scheme in _SCHEME_ORDER:
        w0, w1 = scheme.arm_weights(e)
        cols += [w1 * z * y, w0 * (1.0 - z) * y, w1 * z, w0 * (1.0 - z)]
    return np.column_stack(cols)


def compute_theta(dataset: RecruitedDataset, e_values: np.ndarray) -> ThetaHat:
    e = _check_e(dataset, e_values)
    m = _per_row_components(dataset, e)
    return ThetaHat(m.sum(axis=0) / dataset.n)


def psi_contributions(
    dataset: RecruitedDataset, e_values: np.ndarray
) -> tuple[np.ndarray, ThetaHat]:
    """Per-cluster estimating-equation residuals at theta_hat (J x 12).

    Each cluster's vector uses only that cluster's recruited individuals;
    the rows sum to zero by construction of theta_hat.
    """
    e = _check_e(dataset, e_values)
    m = _per_row_components(dataset, e)
    theta = ThetaHat(m.sum(axis=0) / dataset.n)
    sums = np.add.reduceat(m, dataset.cluster_starts, axis=0)
    nj = dataset.cluster_sizes.astype(float)
    psi = sums - np.outer(nj, theta.values)
    return psi, theta


def g_of_theta(theta: ThetaHat, nu: float) -> np.ndarray:
    """(tau_a, tau_c, tau_R) as a smooth map of theta; requires nu < 1."""
    if nu >= 1.0:
        raise ValueError(f"g is undefined at nu = {nu} (requires nu < 1)")
    zeta1 = 1.0 / (1.0 - nu)
    zeta2 = -nu / (1.0 - nu)
    tau_a = theta.tau(0)
    return np.array(
        [tau_a, zeta1 * theta.tau(1) + zeta2 * tau_a, theta.tau(2)]
    )


def grad_g(theta: ThetaHat, nu: float) -> np.ndarray:
    """Closed-form 3 x 12 Jacobian of g (rows are estimands)."""
    zeta1 = 1.0 / (1.0 - nu)
    zeta2 = -nu / (1.0 - nu)
    G = np.zeros((3, 12))

    def ratio_grad(block: np.ndarray) -> np.ndarray:
        t1, t2, t3, t4 = block
        return np.array([1.0 / t3, -1.0 / t4, -t1 / t3**2, t2 / t4**2])

    G[0, 0:4] = ratio_grad(theta.block(0))
    G[1, 0:4] = zeta2 * ratio_grad(theta.block(0))
    G[1, 4:8] = zeta1 * ratio_grad(theta.block(1))
    G[2, 8:12] = ratio_grad(theta.block(2))
    return G


@dataclass
class SandwichResult:
    """Delta-method covariance for (tau_a, tau_c, tau_R) with Wald intervals.

    ``covariance`` is the asymptotic covariance of the sqrt(J)-scaled
    estimates; standard errors are sqrt(diag / J).  When nu is too close to 1
    the tau_c row and column are NaN and ``tau_c_omitted`` is set.
    """

    covariance: np.ndarray  # 3 x 3, order (tau_a, tau_c, tau_R)
    se: dict[str, float]
    ci: dict[str, tuple[float, float]]
    level: float
    tau_c_omitted: bool
    theta: ThetaHat

    def to_dict(self) -> dict:
        def clean(x: float) -> float | None:
            return None if not np.isfinite(x) else float(x)

        return {
            "mode": "propensity-treated-as-known",
            "level": self.level,
            "se": {k: clean(v) for k, v in self.se.items()},
            "ci": {k: [clean(v[0]), clean(v[1])] for k, v in self.ci.items()},
            "tau_c_omitted": self.tau_c_omitted,
            "covariance": [[clean(x) for x in row] for row in self.covariance],
        }


def sandwich(
    dataset: RecruitedDataset,
    e_values: np.ndarray,
    nu: float,
    level: float = 0.95,
    tau_c_eps: float = TAU_C_EPS_DEFAULT,
) -> SandwichResult:
    """Sandwich covariance with the propensity values treated as known."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0, 1), got {level}")
    psi, theta = psi_contributions(dataset, e_values)
    denominators = theta.values[np.tile([False, False, True, True], 3)]
    if np.any(np.abs(denominators) < 1e-12):
        raise NumericalDegeneracyError(
            "near-zero weighted arm totals; sandwich covariance is not computable"
        )
    J = dataset.n_clusters
    mean_nj = float(dataset.cluster_sizes.mean())
    # A = mean cluster size times identity, so Sigma = V / mean(n_j)^2
    sigma_theta = (psi.T @ psi) / J / mean_nj**2

    tau_c_omitted = nu >= 1.0 - tau_c_eps
    nu_eff = 0.0 if tau_c_omitted else nu
    G = grad_g(theta, nu_eff)
    S = G @ sigma_theta @ G.T
    if tau_c_omitted:
        S[1, :] = np.nan
        S[:, 1] = np.nan

    point = g_of_theta(theta, nu_eff)
    zq = float(norm.ppf(0.5 + level / 2.0))
    se: dict[str, float] = {}
    ci: dict[str, tuple[float, float]] = {}
    for i, name in enumerate(ESTIMAND_ORDER):
        if tau_c_omitted and name == "tau_c":
            se[name] = float("nan")
            ci[name] = (float("nan"), float("nan"))
            continue
        se_i = float(np.sqrt(max(S[i, i], 0.0) / J))  # clamp -0 rounding noise
        se[name] = se_i
        ci[name] = (float(point[i] - zq * se_i), float(point[i] + zq * se_i))
    return SandwichResult(
        covariance=S,
        se=se,
        ci=ci,
        level=level,
        tau_c_omitted=tau_c_omitted,
        theta=theta,
    )


def _replicate_seed(seed, index: int) -> np.random.SeedSequence:
    """Independent stream per replicate, stable under execution order."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,)
        )
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def resample_clusters(
    dataset: RecruitedDataset, rng: np.random.Generator
) -> RecruitedDataset:
    """One stratified cluster resample: arm-wise draws with replacement,
    holding each arm's cluster count fixed and carrying whole clusters."""
    treated = dataset.arm_clusters(1)
    control = dataset.arm_clusters(0)
    idx_t = rng.integers(0, len(treated), size=len(treated))
    idx_c = rng.integers(0, len(control), size=len(control))
    clusters = tuple(treated[i] for i in idx_t) + tuple(control[i] for i in idx_c)
    return RecruitedDataset(
        clusters=clusters,
        covariate_dim=dataset.covariate_dim,
        design_treatment_prob=dataset.design_treatment_prob,
    )


@dataclass
class BootstrapResult:
    """Replicate-based SEs with normal and percentile intervals per estimand."""

    point: dict[str, float]
    se: dict[str, float]
    normal_ci: dict[str, tuple[float, float]]
    percentile_ci: dict[str, tuple[float, float]]
    replicates: dict[str, np.ndarray]
    n_replicates: int
    n_failed: int
    seed: int | None
    level: float

    def to_dict(self) -> dict:
        return {
            "n_replicates": self.n_replicates,
            "n_failed": self.n_failed,
            "seed": self.seed,
            "level": self.level,
            "se": {k: float(v) for k, v in self.se.items()},
            "normal_ci": {k: [float(v[0]), float(v[1])] for k, v in self.normal_ci.items()},
            "percentile_ci": {
                k: [float(v[0]), float(v[1])] for k, v in self.percentile_ci.items()
            },
        }


def cluster_bootstrap(
    dataset: RecruitedDataset,
    pipeline: Callable[[RecruitedDataset], Mapping[str, float | None]],
    n_replicates: int,
    seed,
    level: float = 0.95,
    max_failure_fraction: float = 0.10,
    workers: int = 1,
) -> BootstrapResult:
    """Stratified cluster bootstrap around an arbitrary estimate pipeline.

    ``pipeline`` maps a dataset to named estimates and is re-run on every
    replicate (re-fitting the working propensity score and nu when estimating
    them is part of the pipeline).  Replicates where the pipeline raises a
    package error are counted and excluded; more than ``max_failure_fraction``
    failures raises :class:`BootstrapUnreliableError`.  Replicate RNG streams
    are derived from (seed, replicate index), so the result is deterministic
    given (dataset, n_replicates, seed) for any worker count.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0, 1), got {level}")
    point = {k: v for k, v in pipeline(dataset).items()}

    def one(b: int) -> Mapping[str, float | None] | None:
        rng = np.random.default_rng(_replicate_seed(seed, b))
        replicate = resample_clusters(dataset, rng)
        try:
            return pipeline(replicate)
        except CrtWeightError:
            return None

    if workers > 1:
        import concurrent.futures

        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_replicates)))
    else:
        results = [one(b) for b in range(n_replicates)]

    values: dict[str, list[float]] = {k: [] for k in point}
    n_failed = 0
    for est in results:
        if est is None:
            n_failed += 1
            continue
        for k in values:
            v = est.get(k)
            if v is not None and np.isfinite(v):
                values[k].append(float(v))

    if n_failed > max_failure_fraction * n_replicates:
        raise BootstrapUnreliableError(
            f"{n_failed} of {n_replicates} bootstrap replicates failed "
            f"(more than {max_failure_fraction:.0%})"
        )

    zq = float(norm.ppf(0.5 + level / 2.0))
    lo_q, hi_q = 0.5 - level / 2.0, 0.5 + level / 2.0
    se: dict[str, float] = {}
    normal_ci: dict[str, tuple[float, float]] = {}
    percentile_ci: dict[str, tuple[float, float]] = {}
    reps: dict[str, np.ndarray] = {}
    minimum_valid = (1.0 - max_failure_fraction) * n_replicates
    for k, vals in values.items():
        arr = np.asarray(vals, dtype=float)
        reps[k] = arr
        if point.get(k) is None or arr.size < max(2, minimum_valid):
            continue
        sd = float(arr.std(ddof=1))
        se[k] = sd
        normal_ci[k] = (point[k] - zq * sd, point[k] + zq * sd)
        percentile_ci[k] = (
            float(np.quantile(arr, lo_q)),
            float(np.quantile(arr, hi_q)),
        )

    return BootstrapResult(
        point=point,
        se=se,
        normal_ci=normal_ci,
        percentile_ci=percentile_ci,
        replicates=reps,
        n_replicates=n_replicates,
        n_failed=n_failed,
        seed=seed if isinstance(seed, int) else None,
        level=level,
    )
