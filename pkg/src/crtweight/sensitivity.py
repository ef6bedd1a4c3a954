"""Bounds on the weighting estimators under bounded violations of ignorable
recruitment.

An unmeasured confounder can distort each individual's recruitment-probability
ratio by a factor rho in [1/Gamma, Gamma], which multiplies that individual's
weight by the same factor.  Bounding an estimator therefore means optimizing a
ratio sum(rho w y) / sum(rho w) over the box rho in [1/Gamma, Gamma]^n.  After
the Charnes-Cooper transformation this is a linear program whose optimum sits
at a vertex ordered by outcome: for the maximum, rho = Gamma exactly for the
units with outcomes above some threshold and rho = 1/Gamma below it.  Scanning
all n+1 split points of the outcome-sorted units finds the exact optimum in
O(n log n); the generic LP is kept as a test oracle only.

For the always-recruited effect only the treated arm carries propensity
weights, so its weighted mean is bounded while the unweighted control mean is
fixed; the always-or-incentivized effect mirrors this with the arms swapped.
Bounds for the incentivized-recruited effect combine the two through the
stratum decomposition and are conservative (never narrower than the sharp
joint bounds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RecruitedDataset
from .errors import DegenerateArmError, NoIncentivizedError
from .estimators import TAU_C_EPS_DEFAULT, _check_e
from .wps import WpsModel, propensity_values


@dataclass(frozen=True)
class GammaBound:
    """Estimator range at violation level gamma; collapses to the point at 1."""

    gamma: float
    estimand: str
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def includes_zero(self) -> bool:
        return self.lower <= 0.0 <= self.upper


def bound_weighted_mean(
    weights: np.ndarray, outcomes: np.ndarray, gamma: float
) -> tuple[float, float]:
    """Exact (min, max) of sum(rho w y)/sum(rho w) over rho in [1/gamma, gamma].

    Threshold scan: sort by outcome, put rho = gamma on every unit above each
    candidate split and rho = 1/gamma below, and take the best split.
    """
    w = np.asarray(weights, dtype=float).ravel()
    y = np.asarray(outcomes, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("empty weight list")
    if w.shape != y.shape:
        raise ValueError("weights and outcomes must have equal length")
    if not (w > 0).all():
        raise ValueError("weights must be strictly positive")
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")

    # stable sort: ties in y keep input order (the objective is tie-invariant,
    # this is for determinism only)
    desc = np.argsort(-y, kind="stable")
    wd, yd = w[desc], y[desc]
    wy = wd * yd
    cum_wy = np.concatenate([[0.0], np.cumsum(wy)])
    cum_w = np.concatenate([[0.0], np.cumsum(wd)])
    tot_wy, tot_w = cum_wy[-1], cum_w[-1]
    g, ig = gamma, 1.0 / gamma
    num = g * cum_wy + ig * (tot_wy - cum_wy)
    den = g * cum_w + ig * (tot_w - cum_w)
    vals = num / den
    hi = float(vals.max())

    # minimization: gamma on the units *below* the split
    num = ig * cum_wy + g * (tot_wy - cum_wy)
    den = ig * cum_w + g * (tot_w - cum_w)
    lo = float((num / den).min())
    return lo, hi


def _arm_arrays(
    dataset: RecruitedDataset, e_values: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    e = _check_e(dataset, e_values)
    z = dataset.treatments
    y = dataset.outcomes
    if not (z == 1).any() or not (z == 0).any():
        raise DegenerateArmError("both arms are required for sensitivity bounds")
    return z, y, e


def bounds_tau_a(
    dataset: RecruitedDataset, e_values: np.ndarray, gamma: float
) -> GammaBound:
    """Always-recruited effect bounds: the treated weighted mean moves, the
    unweighted control mean is fixed."""
    z, y, e = _arm_arrays(dataset, e_values)
    t = z == 1
    w1 = (1.0 - e[t]) / e[t]
    lo_t, hi_t = bound_weighted_mean(w1, y[t], gamma)
    control_mean = float(y[~t].mean())
    return GammaBound(
        gamma=gamma, estimand="tau_a", lower=lo_t - control_mean, upper=hi_t - control_mean
    )


def bounds_tau_ac(
    dataset: RecruitedDataset, e_values: np.ndarray, gamma: float
) -> GammaBound:
    """Always-or-incentivized effect bounds: the control weighted mean moves,
    the unweighted treated mean is fixed."""
    z, y, e = _arm_arrays(dataset, e_values)
    c = z == 0
    w0 = e[c] / (1.0 - e[c])
    lo_c, hi_c = bound_weighted_mean(w0, y[c], gamma)
    treated_mean = float(y[~c].mean())
    return GammaBound(
        gamma=gamma,
        estimand="tau_ac",
        lower=treated_mean - hi_c,
        upper=treated_mean - lo_c,
    )


def bounds_tau_c(
    bound_a: GammaBound,
    bound_ac: GammaBound,
    nu: float,
    eps: float = TAU_C_EPS_DEFAULT,
) -> GammaBound:
    """Conservative incentivized-recruited bounds from the stratum identity.

    With zeta1 = 1/(1-nu): lower = zeta1*l_ac - (zeta1-1)*u_a and
    upper = zeta1*u_ac - (zeta1-1)*l_a.  The interval always contains the
    sharp bounds obtained by jointly optimizing both arms.
    """
    if bound_a.gamma != bound_ac.gamma:
        raise ValueError(
            f"mismatched gamma: {bound_a.gamma} (tau_a) vs {bound_ac.gamma} (tau_ac)"
        )
    if nu >= 1.0 - eps:
        raise NoIncentivizedError(
            f"nu = {nu:.4f} >= 1 - {eps}: incentivized bounds are undefined"
        )
    zeta1 = 1.0 / (1.0 - nu)
    return GammaBound(
        gamma=bound_a.gamma,
        estimand="tau_c",
        lower=zeta1 * bound_ac.lower - (zeta1 - 1.0) * bound_a.upper,
        upper=zeta1 * bound_ac.upper - (zeta1 - 1.0) * bound_a.lower,
    )


def bounds_for(
    dataset: RecruitedDataset,
    e_values: np.ndarray,
    estimand: str,
    gamma: float,
    nu: float | None = None,
    eps: float = TAU_C_EPS_DEFAULT,
) -> GammaBound:
    """Bounds for one estimand by name ('tau_a', 'tau_ac' or 'tau_c')."""
    if estimand == "tau_a":
        return bounds_tau_a(dataset, e_values, gamma)
    if estimand == "tau_ac":
        return bounds_tau_ac(dataset, e_values, gamma)
    if estimand == "tau_c":
        if nu is None:
            raise ValueError("tau_c bounds require nu")
        return bounds_tau_c(
            bounds_tau_a(dataset, e_values, gamma),
            bounds_tau_ac(dataset, e_values, gamma),
            nu,
            eps=eps,
        )
    raise ValueError(f"unknown estimand {estimand!r}")


@dataclass(frozen=True)
class GammaSearch:
    gamma_max: float = 10.0
    tolerance: float = 1e-4


@dataclass(frozen=True)
class MinimalGammaResult:
    """Smallest gamma whose bounds include zero, or a flag that none does
    below gamma_max."""

    estimand: str
    gamma_star: float | None
    exceeds_gamma_max: bool
    gamma_max: float
    point_estimate: float


def minimal_gamma(
    dataset: RecruitedDataset,
    model: WpsModel | None = None,
    estimand: str = "tau_a",
    config: GammaSearch | None = None,
    *,
    e_values: np.ndarray | None = None,
    nu: float | None = None,
) -> MinimalGammaResult:
    """Bisect for the smallest gamma at which the bounds include zero.

    Bound width is nondecreasing in gamma (the feasible box only grows), so
    zero-inclusion is monotone and bisection is exact to the tolerance.
    """
    if (model is None) == (e_values is None):
        raise ValueError("provide exactly one of model or e_values")
    if e_values is None:
        e_values = propensity_values(model, dataset)
    cfg = config or GammaSearch()

    def bound(g: float) -> GammaBound:
        return bounds_for(dataset, e_values, estimand, g, nu=nu)

    at_one = bound(1.0)
    point = 0.5 * (at_one.lower + at_one.upper)
    if at_one.includes_zero():
        return MinimalGammaResult(estimand, 1.0, False, cfg.gamma_max, point)
    if not bound(cfg.gamma_max).includes_zero():
        return MinimalGammaResult(estimand, None, True, cfg.gamma_max, point)
    lo, hi = 1.0, cfg.gamma_max
    while hi - lo > cfg.tolerance:
        mid = 0.5 * (lo + hi)
        if bound(mid).includes_zero():
            hi = mid
        else:
            lo = mid
    return MinimalGammaResult(estimand, hi, False, cfg.gamma_max, point)
