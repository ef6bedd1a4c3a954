"""Working propensity score model and its pseudo-likelihood estimation.

The model is parameterized through the recruitment-probability ratio
``delta(x; alpha) = 1 + exp(-x~' alpha)`` (``x~`` is the intercept-augmented
covariate vector), which is strictly greater than 1 and therefore compatible
with recruitment monotonicity.  The propensity of being in the treated arm
among the recruited is

    e(x; alpha) = r * delta / (1 + r * delta) = expit(log(r * delta)),

where ``r`` is the design odds of cluster treatment.  A plain logistic model
on ``e`` could not enforce ``delta >= 1``, which is why the model is placed on
``delta`` instead.

Because all individuals in a cluster share the same treatment, cluster-level
random or fixed effects are not identifiable here; estimation maximizes the
working-independence pseudo-likelihood over the recruited individuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .data import RecruitedDataset, design_ratio
from .errors import SeparationError


def _softplus(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))


def _expit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


@dataclass(frozen=True)
class WpsModel:
    """Working propensity score parameters: alpha (intercept first) and r."""

    alpha: np.ndarray
    r: float

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha, dtype=float).ravel().copy()
        if a.size < 2:
            raise ValueError("alpha must have an intercept plus >= 1 coefficient")
        if not np.isfinite(a).all():
            raise ValueError("alpha must be finite")
        r = float(self.r)
        if not (np.isfinite(r) and r > 0):
            raise ValueError(f"design ratio r must be a positive real, got {r}")
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "r", r)

    @property
    def covariate_dim(self) -> int:
        return self.alpha.size - 1


def _augment(x: np.ndarray, d: int) -> np.ndarray:
    """Prepend the intercept column; accepts a single vector or a matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"covariate vector has length {x.shape[0]}, expected {d}")
        return np.concatenate([[1.0], x])
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"covariate matrix has shape {x.shape}, expected (*, {d})")
    return np.column_stack([np.ones(x.shape[0]), x])


def delta(model: WpsModel, x: np.ndarray):
    """Recruitment probability ratio delta(x; alpha) = 1 + exp(-x~' alpha) > 1."""
    xa = _augment(x, model.covariate_dim)
    u = xa @ model.alpha
    return 1.0 + np.exp(-u)


def propensity(model: WpsModel, x: np.ndarray):
    """Working propensity score e(x; alpha) = expit(log(r * delta(x; alpha)))."""
    xa = _augment(x, model.covariate_dim)
    u = np.atleast_1d(xa @ model.alpha)
    e = _expit(np.log(model.r) + _softplus(-u))
    return float(e[0]) if np.asarray(x).ndim == 1 else e


def propensity_values(model: WpsModel, dataset: RecruitedDataset) -> np.ndarray:
    """Propensity for every recruited row of the dataset, in row order."""
    if model.covariate_dim != dataset.covariate_dim:
        raise ValueError(
            f"model dimension {model.covariate_dim} does not match "
            f"dataset dimension {dataset.covariate_dim}"
        )
    return propensity(model, dataset.covariates)


def log_pseudo_likelihood(model: WpsModel, dataset: RecruitedDataset) -> float:
    """Working-independence Bernoulli log likelihood over the recruited sample."""
    e_logit = np.log(model.r) + _softplus(
        -(_augment(dataset.covariates, model.covariate_dim) @ model.alpha)
    )
    z = dataset.treatments
    # log e = -softplus(-logit), log(1 - e) = -softplus(logit)
    return float(-np.sum(z * _softplus(-e_logit) + (1.0 - z) * _softplus(e_logit)))


def _neg_mean_loglik_and_grad(
    alpha: np.ndarray, xa: np.ndarray, z: np.ndarray, log_r: float
) -> tuple[float, np.ndarray]:
    """Mean-scale negative pseudo-log-likelihood with its analytic gradient.

    With u = x~' alpha, s = expit(-u) and e = expit(log r + softplus(-u)),
    d loglik_i / d alpha = -(z_i - e_i) * s_i * x~_i.
    """
    u = xa @ alpha
    t = log_r + _softplus(-u)
    e = _expit(t)
    s = _expit(-u)
    n = z.shape[0]
    f = float(np.sum(z * _softplus(-t) + (1.0 - z) * _softplus(t))) / n
    g = xa.T @ ((z - e) * s) / n
    return f, g


@dataclass(frozen=True)
class FitSettings:
    """Optimizer configuration for the pseudo-likelihood fit.

    Convergence is declared when the max-norm of the mean-scale gradient falls
    below ``gradient_tol``, or, after the simplex fallback, when the objective
    could not be improved by more than ``objective_rel_tol`` (relative).
    ``parameter_cap`` bounds max|alpha|; exceeding it signals separation (the
    pseudo-likelihood is maximized on the boundary and no finite optimum
    exists).
    """

    gradient_tol: float = 1e-8
    objective_rel_tol: float = 1e-12
    max_iterations: int = 500
    parameter_cap: float = 30.0
    boundary_tol: float = 1e-5
    simplex_fallback: bool = True


@dataclass(frozen=True)
class FitResult:
    model: WpsModel
    converged: bool
    neg_log_pseudo_likelihood: float  # sum scale, matches log_pseudo_likelihood
    iterations: int
    gradient_max_norm: float  # mean scale, comparable to FitSettings.gradient_tol
    method: str

    def to_dict(self) -> dict:
        return {
            "alpha": [float(a) for a in self.model.alpha],
            "r": self.model.r,
            "converged": self.converged,
            "neg_log_pseudo_likelihood": self.neg_log_pseudo_likelihood,
            "iterations": self.iterations,
            "gradient_max_norm": self.gradient_max_norm,
            "method": self.method,
        }


def fit(
    dataset: RecruitedDataset,
    init: np.ndarray | None = None,
    settings: FitSettings | None = None,
) -> FitResult:
    """Maximize the pseudo-likelihood, quasi-Newton first, simplex fallback.

    Deterministic given (dataset, init, settings).  Non-convergence is an
    explicit status on the result, never a silently returned best-effort
    value; a diverging parameter norm raises :class:`SeparationError`.
    """
    s = settings or FitSettings()
    d = dataset.covariate_dim
    xa = _augment(dataset.covariates, d)
    z = dataset.treatments.astype(float)
    log_r = float(np.log(design_ratio(dataset)))

    x0 = np.zeros(d + 1) if init is None else np.asarray(init, dtype=float).ravel()
    if x0.size != d + 1:
        raise ValueError(f"init has length {x0.size}, expected {d + 1}")

    res = minimize(
        _neg_mean_loglik_and_grad,
        x0,
        args=(xa, z, log_r),
        jac=True,
        method="BFGS",
        options={"gtol": s.gradient_tol, "maxiter": s.max_iterations},
    )
    alpha_hat = res.x
    iterations = int(res.nit)
    method = "bfgs"
    f_at, g_at = _neg_mean_loglik_and_grad(alpha_hat, xa, z, log_r)
    gmax = float(np.max(np.abs(g_at)))
    converged = gmax <= s.gradient_tol

    if not converged and s.simplex_fallback:
        polish = minimize(
            lambda a: _neg_mean_loglik_and_grad(a, xa, z, log_r)[0],
            alpha_hat,
            method="Nelder-Mead",
            options={
                "xatol": 1e-10,
                "fatol": 1e-14,
                "maxiter": 200 * (d + 1),
                "maxfev": 400 * (d + 1),
            },
        )
        if polish.fun <= f_at:
            improvement = f_at - float(polish.fun)
            alpha_hat = polish.x
            f_at, g_at = _neg_mean_loglik_and_grad(alpha_hat, xa, z, log_r)
            gmax = float(np.max(np.abs(g_at)))
            converged = (
                gmax <= s.gradient_tol
                or improvement <= s.objective_rel_tol * max(1.0, abs(f_at))
            )
        iterations += int(polish.nit)
        method = "bfgs+nelder-mead"

    if float(np.max(np.abs(alpha_hat))) > s.parameter_cap:
        raise SeparationError(
            "pseudo-likelihood appears maximized on the boundary: "
            f"max|alpha| = {float(np.max(np.abs(alpha_hat))):.3g} exceeds the "
            f"cap {s.parameter_cap:.3g} (perfect or near-perfect arm separation)"
        )
    # a separated fit can also stall on the likelihood plateau below the cap:
    # every treated unit pinned at e ~ 1 and every control unit pinned at the
    # model floor e ~ r/(1+r) means the supremum is not attained
    if s.boundary_tol > 0:
        e_hat = _expit(log_r + _softplus(-(xa @ alpha_hat)))
        e_floor = float(_expit(log_r))
        treated_pinned = bool(np.max(1.0 - e_hat[z == 1]) < s.boundary_tol)
        control_pinned = bool(np.max(e_hat[z == 0] - e_floor) < s.boundary_tol)
        if treated_pinned and control_pinned:
            raise SeparationError(
                "pseudo-likelihood appears maximized on the boundary: every "
                "treated unit is pinned at e ~ 1 and every control unit at "
                f"e ~ r/(1+r) within {s.boundary_tol:g} (arm separation)"
            )

    model = WpsModel(alpha=alpha_hat, r=float(np.exp(log_r)))
    return FitResult(
        model=model,
        converged=bool(converged),
        neg_log_pseudo_likelihood=-log_pseudo_likelihood(model, dataset),
        iterations=iterations,
        gradient_max_norm=gmax,
        method=method,
    )
