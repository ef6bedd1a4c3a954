"""Hajek weighting estimators for the recruited and overall-population estimands.

Three weighting schemes target three populations.  Writing e = e(x) for the
working propensity score, the treated/control weights are

    recruited               w1 = 1/e          w0 = 1/(1-e)
    always-recruited        w1 = (1-e)/e      w0 = 1
    always-or-incentivized  w1 = 1            w0 = e/(1-e)

and every estimate is a difference of within-arm weight-normalized means, so
all estimators are invariant to rescaling an arm's weights by a positive
constant and to duplicating the dataset.

The incentivized-recruited effect is recovered from the identity
tau_ac = nu * tau_a + (1 - nu) * tau_c, with nu estimated from the design
treatment probability and the recruited treated fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import RecruitedDataset
from .errors import DegenerateArmError, NoIncentivizedError
from .wps import WpsModel, propensity_values

TAU_C_EPS_DEFAULT = 0.02


class WeightScheme(Enum):
    RECRUITED = "recruited"
    ALWAYS_RECRUITED = "always_recruited"
    ALWAYS_OR_INCENTIVIZED = "always_or_incentivized"

    def arm_weights(self, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-individual (w0, w1) implied by this scheme at propensities e."""
        e = np.asarray(e, dtype=float)
        one = np.ones_like(e)
        if self is WeightScheme.RECRUITED:
            return 1.0 / (1.0 - e), 1.0 / e
        if self is WeightScheme.ALWAYS_RECRUITED:
            return one, (1.0 - e) / e
        return e / (1.0 - e), one


def _check_e(dataset: RecruitedDataset, e_values: np.ndarray) -> np.ndarray:
    e = np.asarray(e_values, dtype=float).ravel()
    if e.shape[0] != dataset.n:
        raise ValueError(
            f"{e.shape[0]} propensity values for {dataset.n} recruited rows"
        )
    if not ((e > 0.0) & (e < 1.0)).all():
        raise ValueError("propensity values must lie strictly inside (0, 1)")
    return e


def hajek(
    dataset: RecruitedDataset, e_values: np.ndarray, scheme: WeightScheme
) -> float:
    """Weight-normalized difference of arm means under the given scheme."""
    e = _check_e(dataset, e_values)
    z = dataset.treatments
    y = dataset.outcomes
    w0, w1 = scheme.arm_weights(e)
    den1 = float(np.sum(w1 * z))
    den0 = float(np.sum(w0 * (1.0 - z)))
    if den1 <= 0.0 or den0 <= 0.0:
        raise DegenerateArmError(
            f"scheme {scheme.value}: an arm has zero total weight "
            f"(treated {den1:.3g}, control {den0:.3g})"
        )
    return float(np.sum(w1 * z * y) / den1 - np.sum(w0 * (1.0 - z) * y) / den0)


@dataclass(frozen=True)
class NuEstimate:
    """Proportion of always-recruited among the always- and incentivized-recruited.

    ``raw`` can exceed 1 in finite samples; ``value`` is clipped at 1 with the
    ``clipped`` flag set, and the raw value is retained for inference.
    """

    raw: float
    value: float
    clipped: bool


def estimate_nu(dataset: RecruitedDataset) -> NuEstimate:
    """nu = pi_t (1 - p_t) / ((1 - pi_t) p_t), p_t = recruited treated fraction."""
    z = dataset.treatments
    p_t = float(z.mean())
    if p_t <= 0.0 or p_t >= 1.0:
        raise DegenerateArmError(f"recruited treated fraction is degenerate: {p_t}")
    pi_t = dataset.design_treatment_prob
    raw = pi_t * (1.0 - p_t) / ((1.0 - pi_t) * p_t)
    return NuEstimate(raw=raw, value=min(raw, 1.0), clipped=raw > 1.0)


def estimate_tau_c(
    tau_a: float, tau_ac: float, nu: float, eps: float = TAU_C_EPS_DEFAULT
) -> float:
    """Incentivized-recruited effect (tau_ac - nu tau_a) / (1 - nu).

    Guarded: the ratio is numerically explosive as nu approaches 1, and at
    nu = 1 there are no incentivized individuals to estimate on.
    """
    if not (0.0 <= nu <= 1.0):
        raise ValueError(f"nu must be in [0, 1], got {nu}")
    if nu >= 1.0 - eps:
        raise NoIncentivizedError(
            f"nu = {nu:.4f} >= 1 - {eps}: incentivized-recruited effect is "
            "undefined or unstable"
        )
    return (tau_ac - nu * tau_a) / (1.0 - nu)


def _kish_ess(w: np.ndarray) -> float:
    return float(np.sum(w) ** 2 / np.sum(w**2))


@dataclass
class EstimateReport:
    """Point estimates for all estimands, with slots for SEs and intervals.

    ``tau_c`` is None when nu is too close to 1 (``tau_c_message`` says why).
    ``ess`` holds Kish effective sample sizes per scheme and arm.  The ``se``
    and ``ci`` maps are filled by the inference module or the CLI.
    """

    tau_R: float
    tau_a: float
    tau_ac: float
    tau_c: float | None
    nu_raw: float
    nu: float
    nu_clipped: bool
    tau_c_message: str | None
    ess: dict[str, dict[str, float]]
    n: int
    n_clusters: int
    n_treated_clusters: int
    design_treatment_prob: float
    se: dict[str, float] = field(default_factory=dict)
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)

    def estimates(self) -> dict[str, float | None]:
        return {
            "tau_R": self.tau_R,
            "tau_a": self.tau_a,
            "tau_ac": self.tau_ac,
            "tau_c": self.tau_c,
        }

    def to_dict(self) -> dict:
        return {
            "estimates": self.estimates(),
            "nu": {"raw": self.nu_raw, "value": self.nu, "clipped": self.nu_clipped},
            "tau_c_message": self.tau_c_message,
            "effective_sample_size": self.ess,
            "design": {
                "n": self.n,
                "n_clusters": self.n_clusters,
                "n_treated_clusters": self.n_treated_clusters,
                "design_treatment_prob": self.design_treatment_prob,
            },
            "se": dict(self.se),
            "ci": {k: list(v) for k, v in self.ci.items()},
        }

    def to_csv_rows(self) -> list[dict]:
        rows = []
        for name, value in self.estimates().items():
            ci = self.ci.get(name)
            rows.append(
                {
                    "estimand": name,
                    "estimate": value,
                    "se": self.se.get(name),
                    "ci_lower": ci[0] if ci else None,
                    "ci_upper": ci[1] if ci else None,
                }
            )
        rows.append(
            {
                "estimand": "nu",
                "estimate": self.nu,
                "se": self.se.get("nu"),
                "ci_lower": self.ci.get("nu", (None, None))[0],
                "ci_upper": self.ci.get("nu", (None, None))[1],
            }
        )
        return rows


def estimate_all(
    dataset: RecruitedDataset,
    model: WpsModel | None = None,
    *,
    e_values: np.ndarray | None = None,
    tau_c_eps: float = TAU_C_EPS_DEFAULT,
) -> EstimateReport:
    """All point estimates from a fitted model or precomputed propensities."""
    if (model is None) == (e_values is None):
        raise ValueError("provide exactly one of model or e_values")
    if e_values is None:
        e_values = propensity_values(model, dataset)
    e = _check_e(dataset, e_values)

    tau_R = hajek(dataset, e, WeightScheme.RECRUITED)
    tau_a = hajek(dataset, e, WeightScheme.ALWAYS_RECRUITED)
    tau_ac = hajek(dataset, e, WeightScheme.ALWAYS_OR_INCENTIVIZED)
    nu = estimate_nu(dataset)

    tau_c: float | None
    message: str | None
    try:
        tau_c = estimate_tau_c(tau_a, tau_ac, nu.value, eps=tau_c_eps)
        message = None
    except NoIncentivizedError as exc:
        tau_c = None
        message = str(exc)

    z = dataset.treatments
    ess = {}
    for scheme in WeightScheme:
        w0, w1 = scheme.arm_weights(e)
        ess[scheme.value] = {
            "treated": _kish_ess(w1[z == 1]),
            "control": _kish_ess(w0[z == 0]),
        }

    return EstimateReport(
        tau_R=tau_R,
        tau_a=tau_a,
        tau_ac=tau_ac,
        tau_c=tau_c,
        nu_raw=nu.raw,
        nu=nu.value,
        nu_clipped=nu.clipped,
        tau_c_message=message,
        ess=ess,
        n=dataset.n,
        n_clusters=dataset.n_clusters,
        n_treated_clusters=dataset.n_treated_clusters,
        design_treatment_prob=dataset.design_treatment_prob,
    )


@dataclass(frozen=True)
class StrataProfiles:
    """Weighted covariate means per latent stratum (and the recruited sample)."""

    recruited: np.ndarray
    always_recruited: np.ndarray
    always_or_incentivized: np.ndarray
    incentivized: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "recruited": [float(v) for v in self.recruited],
            "always_recruited": [float(v) for v in self.always_recruited],
            "always_or_incentivized": [
                float(v) for v in self.always_or_incentivized
            ],
            "incentivized": None
            if self.incentivized is None
            else [float(v) for v in self.incentivized],
        }


def strata_covariate_profile(
    dataset: RecruitedDataset,
    e_values: np.ndarray,
    nu: float,
    eps: float = TAU_C_EPS_DEFAULT,
) -> StrataProfiles:
    """Covariate means for the recruited sample and the latent strata.

    The stratum profiles are pooled Hajek means over both arms with the
    stratum's scheme weights; the incentivized profile applies the same linear
    decomposition used for the effect: (profile_ac - nu profile_a) / (1 - nu).
    """
    e = _check_e(dataset, e_values)
    z = dataset.treatments
    X = dataset.covariates

    def pooled(scheme: WeightScheme) -> np.ndarray:
        w0, w1 = scheme.arm_weights(e)
        w = np.where(z == 1, w1, w0)
        total = float(np.sum(w))
        if total <= 0.0:
            raise DegenerateArmError(f"scheme {scheme.value}: zero pooled weight")
        return (w @ X) / total

    profile_a = pooled(WeightScheme.ALWAYS_RECRUITED)
    profile_ac = pooled(WeightScheme.ALWAYS_OR_INCENTIVIZED)
    incentivized = None
    if nu < 1.0 - eps:
        incentivized = (profile_ac - nu * profile_a) / (1.0 - nu)
    return StrataProfiles(
        recruited=X.mean(axis=0),
        always_recruited=profile_a,
        always_or_incentivized=profile_ac,
        incentivized=incentivized,
    )
