"""Maximum simulated likelihood estimation and its report structure."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd
from scipy.linalg import qr
from scipy.optimize import minimize

from .model import CONSTANT, ModelSpec, Parameters, SimulatedLikelihood, SpecError, _response
from .normal import inverse_cdf
from .post import (
    DegenerateError,
    marginal_effects,
    random_param_correlation,
    share_above_zero,
    sigma_all,
)

log = logging.getLogger(__name__)

GRAD_TOL = 1e-5
MAX_ITER = 500
RETAIN_T = 1.645  # two-sided 90 %
INITIAL_SD = 0.1


@dataclass
class EstimationResult:
    spec: ModelSpec
    params: Parameters
    param_names: list[str]
    estimates: np.ndarray  # natural scale (u1 rather than log u1)
    std_errors: np.ndarray
    t_stats: np.ndarray
    cov: np.ndarray  # covariance of the internal parameter vector
    ll0: float
    ll: float
    n_obs: int
    converged: bool
    n_iter: int
    grad_norm: float
    se_method: str
    class_counts: list[int]
    sigma: dict[str, float] = field(default_factory=dict)
    correlation: list[list[float]] | None = None
    shares: dict[str, tuple[float, float]] = field(default_factory=dict)
    marginal_effects: dict[str, dict[str, float]] = field(default_factory=dict)
    marginal_effects_discrete: dict[str, dict[str, float]] = field(default_factory=dict)
    clamped: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.param_names)

    @property
    def aic(self) -> float:
        return aic(self.ll, self.k)

    @property
    def rho2(self) -> float:
        return rho_squared(self.ll, self.ll0)

    @property
    def retained(self) -> list[bool]:
        return [bool(abs(t) >= RETAIN_T) for t in self.t_stats]

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return v if np.isfinite(v) else None

        return {
            "spec": self.spec.to_dict(),
            "params": self.params.to_dict(),
            "estimates": {
                name: {"estimate": num(e), "std_error": num(s), "t_stat": num(t), "retained_90": r}
                for name, e, s, t, r in zip(self.param_names, self.estimates, self.std_errors,
                                            self.t_stats, self.retained)
            },
            "cov": [[num(v) for v in row] for row in self.cov],
            "n_obs": self.n_obs,
            "class_counts": self.class_counts,
            "k": self.k,
            "LL0": self.ll0,
            "LL": self.ll,
            "AIC": self.aic,
            "rho2": self.rho2,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "grad_norm": self.grad_norm,
            "se_method": self.se_method,
            "sigma": self.sigma,
            "correlation": self.correlation,
            "shares_above_below_zero": {k: list(v) for k, v in self.shares.items()},
            "marginal_effects": self.marginal_effects,
            "marginal_effects_discrete": self.marginal_effects_discrete,
            "clamped_probabilities": self.clamped,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EstimationResult":
        spec = ModelSpec.from_dict(d["spec"])
        names = list(d["estimates"])

        def arr(key):
            return np.array([np.nan if d["estimates"][n][key] is None else d["estimates"][n][key]
                             for n in names])

        return cls(
            spec=spec,
            params=Parameters.from_dict(d["params"], spec),
            param_names=names,
            estimates=arr("estimate"),
            std_errors=arr("std_error"),
            t_stats=arr("t_stat"),
            cov=np.array([[np.nan if v is None else v for v in row] for row in d["cov"]], dtype=float),
            ll0=d["LL0"],
            ll=d["LL"],
            n_obs=d["n_obs"],
            converged=d["converged"],
            n_iter=d["n_iter"],
            grad_norm=d["grad_norm"],
            se_method=d["se_method"],
            class_counts=d["class_counts"],
            sigma=d["sigma"],
            correlation=d["correlation"],
            shares={k: tuple(v) for k, v in d["shares_above_below_zero"].items()},
            marginal_effects=d["marginal_effects"],
            marginal_effects_discrete=d["marginal_effects_discrete"],
            clamped=d["clamped_probabilities"],
            notes=d["notes"],
        )


def aic(ll: float, k: int) -> float:
    return 2.0 * k - 2.0 * ll


def rho_squared(ll: float, ll0: float) -> float:
    return 1.0 - ll / ll0


def check_rank(data: pd.DataFrame, spec: ModelSpec) -> None:
    """Raise SpecError naming columns that are linear combinations of others."""
    names = list(spec.variables)
    x = np.column_stack([np.ones(len(data)) if c == CONSTANT else data[c].to_numpy(dtype=float)
                         for c in names])
    if x.shape[0] == 0:
        raise SpecError("no observations")
    _, r, piv = qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(x.shape) * np.finfo(float).eps * (diag[0] if len(diag) else 0.0)
    rank = int((diag > tol).sum())
    if rank < len(names):
        bad = sorted(names[i] for i in piv[rank:])
        raise SpecError(f"design matrix is rank deficient; collinear column(s): {bad}")


def _threshold_start(y: np.ndarray) -> tuple[float, float]:
    """Constant and u1 reproducing the observed class shares exactly."""
    n = len(y)
    shares = np.clip(np.bincount(y, minlength=3) / n, 1e-3, None)
    shares /= shares.sum()
    const = -float(inverse_cdf(shares[0]))
    u1 = const + float(inverse_cdf(1.0 - shares[2]))
    return const, max(u1, 1e-2)


def _maximize(sim: SimulatedLikelihood, theta0: np.ndarray, max_iter: int):
    ll0, _ = sim.loglik_and_grad(theta0)
    scale = max(1.0, abs(ll0))

    def f(theta):
        ll, g = sim.loglik_and_grad(theta)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(g)
        return -ll / scale, -g / scale

    theta, n_iter = np.asarray(theta0, dtype=float), 0
    for _ in range(3):
        res = minimize(f, theta, jac=True, method="BFGS",
                       options={"maxiter": max_iter - n_iter, "gtol": GRAD_TOL / 10, "norm": np.inf})
        theta, n_iter = res.x, n_iter + res.nit
        ll, g = sim.loglik_and_grad(theta)
        if np.max(np.abs(g)) < GRAD_TOL * abs(ll) or n_iter >= max_iter:
            break
    ll, g = sim.loglik_and_grad(theta)
    gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
    return theta, ll, gnorm, n_iter, gnorm < GRAD_TOL * max(abs(ll), 1.0)


def _hessian(sim: SimulatedLikelihood, theta: np.ndarray) -> np.ndarray:
    p = len(theta)
    h = np.empty((p, p))
    for i in range(p):
        step = 1e-4 * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += step
        tm[i] -= step
        h[:, i] = (sim.loglik_and_grad(tp)[1] - sim.loglik_and_grad(tm)[1]) / (2 * step)
    return 0.5 * (h + h.T)


def _covariance(sim: SimulatedLikelihood, theta: np.ndarray, notes: list[str]) -> tuple[np.ndarray, str]:
    neg_h = -_hessian(sim, theta)
    try:
        np.linalg.cholesky(neg_h)
        return np.linalg.inv(neg_h), "hessian"
    except np.linalg.LinAlgError:
        msg = "negative Hessian not positive definite; using outer product of gradients"
        warnings.warn(msg, stacklevel=3)
        notes.append(msg)
        _, s = sim.scores(theta)
        return np.linalg.pinv(s.T @ s), "opg"


def _flip_columns(theta: np.ndarray, spec: ModelSpec) -> np.ndarray | None:
    """Mirror draw dimensions so the factor has a non-negative diagonal."""
    p = Parameters.unpack(theta, spec)
    neg = np.diag(p.cholesky) < 0
    if not neg.any():
        return None
    p.cholesky[:, neg] *= -1
    return p.pack(spec)


def fit_thresholds(y) -> tuple[float, float, float]:
    """Constants-only model: (LL, constant, u1)."""
    frame = pd.DataFrame({"severity": _response(np.asarray(y))})
    spec = ModelSpec()
    sim = SimulatedLikelihood(frame, spec)
    c, u1 = _threshold_start(sim.design.y)
    theta, ll, *_ = _maximize(sim, np.array([c, np.log(u1)]), MAX_ITER)
    return ll, float(theta[0]), float(np.exp(theta[1]))


def start_values(data: pd.DataFrame, spec: ModelSpec, max_iter: int = MAX_ITER) -> Parameters:
    """Fixed-coefficient fit embedded in ``spec`` with small diagonal spreads."""
    fixed = spec.fixed_only()
    sim = SimulatedLikelihood(data, fixed)
    c, u1 = _threshold_start(sim.design.y)
    p0 = Parameters.zeros(fixed, u1)
    p0.beta_fixed[0] = c
    theta, *_ = _maximize(sim, p0.pack(fixed), max_iter)
    est = dict(zip(fixed.variables, Parameters.unpack(theta, fixed).beta_fixed))
    p = Parameters.zeros(spec, float(np.exp(theta[-1])))
    p.beta_fixed = np.array([est[v] for v in spec.fixed_names])
    p.beta_random_mean = np.array([est[v] for v in spec.random_names])
    np.fill_diagonal(p.cholesky, INITIAL_SD)
    return p


def estimate(
    data: pd.DataFrame,
    spec: ModelSpec,
    start: Parameters | None = None,
    max_iter: int = MAX_ITER,
    discrete_effects: bool = True,
) -> EstimationResult:
    """Fit ``spec`` to ``data`` by maximum simulated likelihood.

    Non-convergence is reported through ``converged`` and the notes rather than
    raised, so partial output survives.
    """
    check_rank(data, spec)
    notes: list[str] = []
    sim = SimulatedLikelihood(data, spec)
    y = sim.design.y
    counts = np.bincount(y, minlength=3).tolist()
    if min(counts) == 0:
        msg = f"severity class(es) {[j for j in range(3) if counts[j] == 0]} absent; thresholds weakly identified"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    if start is None:
        start = start_values(data, spec, max_iter)
    theta, ll, gnorm, n_iter, converged = _maximize(sim, start.pack(spec), max_iter)
    flipped = _flip_columns(theta, spec)
    if flipped is not None:
        theta, ll, gnorm, extra, converged = _maximize(sim, flipped, max_iter)
        n_iter += extra
    if not converged:
        msg = f"not converged after {n_iter} iterations (max |grad| = {gnorm:.3g})"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    sim.clamped = 0
    ll = sim.loglik(theta)
    clamped = sim.clamped
    ll0, *_ = fit_thresholds(y)

    cov, se_method = _covariance(sim, theta, notes)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    params = Parameters.unpack(theta, spec)
    est = theta.copy()
    est[-1] = params.threshold_u1
    se = se.copy()
    se[-1] *= params.threshold_u1  # delta method for u1 = exp(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, est / se, np.nan)

    result = EstimationResult(
        spec=spec, params=params, param_names=spec.param_names, estimates=est,
        std_errors=se, t_stats=t, cov=cov, ll0=ll0, ll=ll, n_obs=len(y),
        converged=converged, n_iter=n_iter, grad_norm=gnorm, se_method=se_method,
        class_counts=counts, clamped=clamped, notes=notes,
    )
    _derive(result, data, discrete_effects)
    return result


def _derive(result: EstimationResult, data: pd.DataFrame, discrete_effects: bool) -> None:
    spec, p = result.spec, result.params
    names = spec.random_names
    if names:
        sig = sigma_all(p.cholesky)
        result.sigma = dict(zip(names, sig.tolist()))
        for name, mu, s in zip(names, p.beta_random_mean, sig):
            result.shares[name] = share_above_zero(float(mu), float(s))
        try:
            result.correlation = random_param_correlation(p.cholesky, names).tolist()
        except DegenerateError as exc:
            result.notes.append(str(exc))
    result.marginal_effects = marginal_effects(p, spec, data)
    if discrete_effects:
        result.marginal_effects_discrete = marginal_effects(p, spec, data, mode="discrete")
