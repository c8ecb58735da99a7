"""Derived quantities of a fitted random-parameter ordered probit."""
from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from .model import CONSTANT, ModelSpec, Parameters, SimulatedLikelihood, SpecError
from .normal import cdf, pdf

OUTCOMES = ("serious", "minor", "none")


class DegenerateError(ValueError):
    pass


def random_param_stddev(cholesky, k: int) -> float:
    """Standard deviation of random parameter ``k``: norm of row ``k`` of the factor."""
    g = np.asarray(cholesky, dtype=float)
    return float(np.sqrt((g[k, : k + 1] ** 2).sum()))


def random_param_covariance(cholesky) -> np.ndarray:
    g = np.tril(np.asarray(cholesky, dtype=float))
    return g @ g.T


def random_param_correlation(cholesky, names: Sequence[str] | None = None) -> np.ndarray:
    cov = random_param_covariance(cholesky)
    sd = np.sqrt(np.diag(cov))
    for k, s in enumerate(sd):
        if s == 0:
            label = names[k] if names is not None else str(k)
            raise DegenerateError(f"random parameter {label} has zero standard deviation")
    cor = cov / np.outer(sd, sd)
    np.fill_diagonal(cor, 1.0)
    return np.clip(cor, -1.0, 1.0)


def share_above_zero(mean: float, sigma: float) -> tuple[float, float]:
    """Fractions of a N(mean, sigma^2) coefficient above and below zero."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        above = 1.0 if mean > 0 else 0.0 if mean < 0 else 0.5
    else:
        above = float(1.0 - cdf(-mean / sigma))
    return above, 1.0 - above


def _outcome_effects(dp: Sequence[float]) -> dict[str, float]:
    # dp is ordered (none, minor, serious)
    return {"serious": float(dp[2]), "minor": float(dp[1]), "none": float(dp[0])}


def marginal_effects(
    params: Parameters,
    spec: ModelSpec,
    data: pd.DataFrame,
    mode: str = "derivative",
    variables: Sequence[str] | None = None,
    fill_missing: bool = False,
) -> dict[str, dict[str, float]]:
    """Average effects of each variable on P(serious), P(minor), P(none).

    ``derivative`` mode scales the density difference at the cut points by the
    variable's coefficient, averaged over observations and draws.
    ``discrete`` mode is the average change in draw-averaged probabilities
    when an indicator moves from 0 to 1 (its mean-shifter role included).
    """
    if mode not in ("derivative", "discrete"):
        raise ValueError("mode must be 'derivative' or 'discrete'")
    names = [v for v in spec.variables if v != CONSTANT] if variables is None else list(variables)
    for v in names:
        if v not in spec.variables:
            raise SpecError(f"unknown variable {v!r}")
    sim = SimulatedLikelihood(data, spec, fill_missing=fill_missing)
    out = {}
    if mode == "derivative":
        xb = sim.index(params)
        u1 = params.threshold_u1
        # d P_j / d xb for j = none, minor, serious
        f0, f1 = pdf(-xb), pdf(u1 - xb)
        dens = (-f0, f0 - f1, f1)
        nf = len(spec.fixed_names)
        mk = sim._means(params)
        for v in names:
            pos = spec.variables.index(v)
            if pos < nf:
                coef = params.beta_fixed[pos]
            else:
                k = pos - nf
                coef = np.repeat(mk[:, k, None], sim.n_draws, axis=1)
                for j in range(len(sim.draws)):
                    if params.cholesky[k, j]:
                        coef = coef + params.cholesky[k, j] * sim.draws[j]
            eff = [float((dj * coef).mean()) for dj in dens]
            out[v] = _outcome_effects(eff)
        return out

    for v in names:
        probs = []
        for level in (1.0, 0.0):
            shifted = data.copy()
            shifted[v] = level
            s = SimulatedLikelihood(shifted, spec, fill_missing=fill_missing)
            probs.append(s.probabilities(params).mean(axis=0))
        out[v] = _outcome_effects(probs[0] - probs[1])
    return out


def single_obs_effect(xb: float, u1: float, coef: float) -> tuple[float, float, float]:
    """Derivative-mode effect for one observation, ordered (none, minor, serious)."""
    f0, f1 = float(pdf(-xb)), float(pdf(u1 - xb))
    return -f0 * coef, (f0 - f1) * coef, f1 * coef


def sigma_all(cholesky) -> np.ndarray:
    g = np.asarray(cholesky, dtype=float)
    return np.array([random_param_stddev(g, k) for k in range(g.shape[0])])
