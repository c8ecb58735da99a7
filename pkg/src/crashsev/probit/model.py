"""Three-outcome ordered probit with correlated normal random coefficients.

The latent index for observation i under draw r is

    y* = x_f . b_f + sum_k x_k * (b_k + eta_k . z + (Gamma w_r)_k) + e,   e ~ N(0, 1)

with cut points 0 and u1 > 0. The likelihood of an observation is the
average of its outcome probability over a fixed block of Halton draws.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .halton import HaltonConfig, normal_draws
from .normal import cdf, interval_prob, pdf

CONSTANT = "constant"
PROB_FLOOR = 1e-300


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    fixed_vars: tuple[str, ...] = ()
    random_vars: tuple[str, ...] = ()
    mean_shifters: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    correlated: bool = True
    n_draws: int = 1000
    include_random_intercept: bool = False
    response: str = "severity"
    halton: HaltonConfig = field(default_factory=HaltonConfig)

    def __post_init__(self):
        object.__setattr__(self, "fixed_vars", tuple(self.fixed_vars))
        object.__setattr__(self, "random_vars", tuple(self.random_vars))
        object.__setattr__(self, "mean_shifters",
                           {k: tuple(v) for k, v in dict(self.mean_shifters).items()})
        if CONSTANT in self.fixed_vars or CONSTANT in self.random_vars:
            raise SpecError(f"{CONSTANT!r} is implicit; use include_random_intercept to randomize it")
        overlap = set(self.fixed_vars) & set(self.random_vars)
        if overlap:
            raise SpecError(f"variables both fixed and random: {sorted(overlap)}")
        for names in (self.fixed_vars, self.random_vars):
            if len(set(names)) != len(names):
                raise SpecError("duplicate variable names")
        for key in self.mean_shifters:
            if key not in self.random_names:
                raise SpecError(f"mean shifter target {key!r} is not a random parameter")
        if self.n_draws < 1:
            raise SpecError("n_draws must be >= 1")

    @property
    def fixed_names(self) -> tuple[str, ...]:
        return self.fixed_vars if self.include_random_intercept else (CONSTANT,) + self.fixed_vars

    @property
    def random_names(self) -> tuple[str, ...]:
        return ((CONSTANT,) if self.include_random_intercept else ()) + self.random_vars

    @property
    def variables(self) -> tuple[str, ...]:
        return self.fixed_names + self.random_names

    @property
    def shifter_names(self) -> tuple[str, ...]:
        seen = []
        for k in self.random_names:
            for z in self.mean_shifters.get(k, ()):
                if z not in seen:
                    seen.append(z)
        return tuple(seen)

    @property
    def shifter_index(self) -> list[tuple[int, int]]:
        cols = {z: s for s, z in enumerate(self.shifter_names)}
        return [(k, cols[z]) for k, name in enumerate(self.random_names)
                for z in self.mean_shifters.get(name, ())]

    @property
    def chol_index(self) -> list[tuple[int, int]]:
        K = len(self.random_names)
        if self.correlated:
            return [(k, j) for k in range(K) for j in range(k + 1)]
        return [(k, k) for k in range(K)]

    @property
    def n_params(self) -> int:
        return (len(self.fixed_names) + len(self.random_names) + len(self.shifter_index)
                + len(self.chol_index) + 1)

    @property
    def param_names(self) -> list[str]:
        r = self.random_names
        s = self.shifter_names
        return (list(self.fixed_names)
                + list(r)
                + [f"{r[k]}:{s[m]}" for k, m in self.shifter_index]
                + [f"chol[{r[k]},{r[j]}]" for k, j in self.chol_index]
                + ["u1"])

    def covariates(self) -> tuple[str, ...]:
        """Every data column the model reads (excluding the response)."""
        out = [v for v in self.variables if v != CONSTANT]
        out += [z for z in self.shifter_names if z not in out]
        return tuple(out)

    def fixed_only(self) -> "ModelSpec":
        """All variables as fixed coefficients, no shifters or draws."""
        return replace(self, fixed_vars=tuple(v for v in self.variables if v != CONSTANT),
                       random_vars=(), mean_shifters={}, include_random_intercept=False)

    def to_dict(self) -> dict:
        return {
            "fixed_vars": list(self.fixed_vars),
            "random_vars": list(self.random_vars),
            "mean_shifters": {k: list(v) for k, v in self.mean_shifters.items()},
            "correlated": self.correlated,
            "n_draws": self.n_draws,
            "include_random_intercept": self.include_random_intercept,
            "response": self.response,
            "halton": {"bases": list(self.halton.bases), "skip": self.halton.skip},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        d = dict(d)
        h = d.pop("halton", None) or {}
        return cls(halton=HaltonConfig(tuple(h.get("bases", ())), h.get("skip", 10)), **d)


@dataclass
class Parameters:
    beta_fixed: np.ndarray
    beta_random_mean: np.ndarray
    eta: np.ndarray
    cholesky: np.ndarray
    threshold_u1: float

    @classmethod
    def zeros(cls, spec: ModelSpec, u1: float = 1.0) -> "Parameters":
        K = len(spec.random_names)
        return cls(np.zeros(len(spec.fixed_names)), np.zeros(K),
                   np.zeros((K, len(spec.shifter_names))), np.zeros((K, K)), u1)

    def pack(self, spec: ModelSpec) -> np.ndarray:
        if not self.threshold_u1 > 0:
            raise SpecError("threshold u1 must be positive")
        return np.concatenate([
            np.asarray(self.beta_fixed, dtype=float),
            np.asarray(self.beta_random_mean, dtype=float),
            [self.eta[k, m] for k, m in spec.shifter_index],
            [self.cholesky[k, j] for k, j in spec.chol_index],
            [np.log(self.threshold_u1)],
        ])

    @classmethod
    def unpack(cls, theta, spec: ModelSpec) -> "Parameters":
        theta = np.asarray(theta, dtype=float)
        if len(theta) != spec.n_params:
            raise SpecError(f"expected {spec.n_params} parameters, got {len(theta)}")
        nf, K = len(spec.fixed_names), len(spec.random_names)
        p = cls.zeros(spec)
        p.beta_fixed = theta[:nf].copy()
        p.beta_random_mean = theta[nf:nf + K].copy()
        pos = nf + K
        for k, m in spec.shifter_index:
            p.eta[k, m] = theta[pos]
            pos += 1
        for k, j in spec.chol_index:
            p.cholesky[k, j] = theta[pos]
            pos += 1
        p.threshold_u1 = float(np.exp(theta[pos]))
        return p

    def to_dict(self) -> dict:
        return {
            "beta_fixed": self.beta_fixed.tolist(),
            "beta_random_mean": self.beta_random_mean.tolist(),
            "eta": self.eta.tolist(),
            "cholesky": self.cholesky.tolist(),
            "threshold_u1": self.threshold_u1,
        }

    @classmethod
    def from_dict(cls, d: Mapping, spec: ModelSpec) -> "Parameters":
        K = len(spec.random_names)
        return cls(np.asarray(d["beta_fixed"], dtype=float),
                   np.asarray(d["beta_random_mean"], dtype=float),
                   np.asarray(d["eta"], dtype=float).reshape(K, len(spec.shifter_names)),
                   np.asarray(d["cholesky"], dtype=float).reshape(K, K),
                   float(d["threshold_u1"]))


def category_probabilities(xb, u1):
    """(P0, P1, P2) for linear index ``xb`` and upper cut point ``u1``."""
    u1 = np.asarray(u1, dtype=float)
    if np.any(u1 <= 0):
        raise ValueError("threshold u1 must be positive")
    xb = np.asarray(xb, dtype=float)
    p0 = cdf(-xb)
    p1 = interval_prob(-xb, u1 - xb)
    p2 = cdf(xb - u1)
    return p0, p1, p2


def draw_coefficients(params: Parameters, spec: ModelSpec, obs_covariates, draw) -> np.ndarray:
    """Coefficient vector for one observation and one draw, ordered as ``spec.variables``.

    ``obs_covariates`` supplies the heterogeneity-in-means covariates, either
    as a mapping by name or as an array ordered like ``spec.shifter_names``.
    """
    K = len(spec.random_names)
    draw = np.asarray(draw, dtype=float)
    if draw.shape != (K,):
        raise SpecError(f"draw must have {K} components, got shape {draw.shape}")
    if isinstance(obs_covariates, Mapping):
        z = np.array([float(obs_covariates.get(name, 0.0)) for name in spec.shifter_names])
    else:
        z = np.asarray(obs_covariates, dtype=float).reshape(-1)
        if len(z) != len(spec.shifter_names):
            raise SpecError("covariate vector does not match the mean shifters")
    rand = params.beta_random_mean + (params.eta @ z if z.size else 0.0) + params.cholesky @ draw
    return np.concatenate([params.beta_fixed, rand])


def _response(values) -> np.ndarray:
    y = np.asarray(values)
    if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
        raise SpecError("response must be integer-coded")
    y = y.astype(int)
    levels = np.unique(y)
    if set(levels) <= {0, 1, 2}:
        return y
    if len(levels) == 3 and levels[2] - levels[0] == 2:
        return y - levels[0]
    raise SpecError(f"response levels {levels.tolist()} cannot be mapped to 3 ordered classes")


@dataclass
class Design:
    y: np.ndarray
    xf: np.ndarray
    xr: np.ndarray
    z: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y)


def _column(data: pd.DataFrame, name: str, fill_missing: bool) -> np.ndarray:
    if name == CONSTANT:
        return np.ones(len(data))
    if name not in data.columns:
        if fill_missing:
            return np.zeros(len(data))
        raise SpecError(f"column {name!r} not in data")
    return data[name].to_numpy(dtype=float)


def build_design(data: pd.DataFrame, spec: ModelSpec, fill_missing: bool = False) -> Design:
    if spec.response not in data.columns:
        raise SpecError(f"response column {spec.response!r} not in data")
    n = len(data)

    def mat(names):
        if not names:
            return np.zeros((n, 0))
        return np.column_stack([_column(data, c, fill_missing) for c in names])

    return Design(_response(data[spec.response].to_numpy()),
                  mat(spec.fixed_names), mat(spec.random_names), mat(spec.shifter_names))


class SimulatedLikelihood:
    """Simulated log-likelihood of one dataset with frozen Halton draws."""

    def __init__(self, data: pd.DataFrame, spec: ModelSpec, fill_missing: bool = False):
        self.spec = spec
        self.design = build_design(data, spec, fill_missing=fill_missing)
        K = len(spec.random_names)
        self.n_draws = spec.n_draws if K else 1
        if K:
            w = normal_draws(self.design.n, self.n_draws, K, spec.halton)
            self.draws = np.ascontiguousarray(np.moveaxis(w, 2, 0))  # (K, n, R)
        else:
            self.draws = np.zeros((0, self.design.n, 1))
        self.clamped = 0

    def _means(self, p: Parameters) -> np.ndarray:
        d = self.design
        mk = np.broadcast_to(p.beta_random_mean, d.xr.shape)
        if d.z.shape[1]:
            mk = mk + d.z @ p.eta.T
        return mk

    def index(self, p: Parameters) -> np.ndarray:
        """Linear index for every observation and draw, shape (n, R)."""
        d = self.design
        base = d.xf @ p.beta_fixed + (d.xr * self._means(p)).sum(axis=1)
        xb = np.repeat(base[:, None], self.n_draws, axis=1)
        if len(self.draws):
            c = d.xr @ p.cholesky  # loading of each draw dimension
            for j in range(len(self.draws)):
                if np.any(c[:, j]):
                    xb += self.draws[j] * c[:, j, None]
        return xb

    def _bounds(self, u1: float):
        lo = np.array([-np.inf, 0.0, u1])[self.design.y]
        hi = np.array([0.0, u1, np.inf])[self.design.y]
        return lo[:, None], hi[:, None]

    def obs_likelihood(self, p: Parameters) -> np.ndarray:
        xb = self.index(p)
        lo, hi = self._bounds(p.threshold_u1)
        return interval_prob(lo - xb, hi - xb).mean(axis=1)

    def probabilities(self, p: Parameters) -> np.ndarray:
        """Draw-averaged probabilities of all three outcomes, shape (n, 3)."""
        xb = self.index(p)
        return np.column_stack([q.mean(axis=1) for q in category_probabilities(xb, p.threshold_u1)])

    def _clamp(self, li: np.ndarray) -> np.ndarray:
        low = li < PROB_FLOOR
        if low.any():
            self.clamped += int(low.sum())
            li = np.where(low, PROB_FLOOR, li)
        return li

    def loglik(self, theta_or_params) -> float:
        p = self._params(theta_or_params)
        return float(np.log(self._clamp(self.obs_likelihood(p))).sum())

    def _params(self, theta_or_params) -> Parameters:
        if isinstance(theta_or_params, Parameters):
            return theta_or_params
        return Parameters.unpack(theta_or_params, self.spec)

    def scores(self, theta) -> tuple[float, np.ndarray]:
        """Log-likelihood and per-observation scores d log L_i / d theta, shape (n, n_params)."""
        spec, d = self.spec, self.design
        p = Parameters.unpack(theta, spec)
        u1 = p.threshold_u1
        xb = self.index(p)
        lo, hi = self._bounds(u1)
        a, b = lo - xb, hi - xb
        prob = interval_prob(a, b)
        li = self._clamp(prob.mean(axis=1))
        pa, pb = pdf(a), pdf(b)  # pdf(+-inf) == 0
        g = pa - pb  # dP/dxb
        gbar = g.mean(axis=1) / li

        cols = [d.xf * gbar[:, None], d.xr * gbar[:, None]]
        for k, m in spec.shifter_index:
            cols.append((d.xr[:, k] * d.z[:, m] * gbar)[:, None])
        if spec.chol_index:
            gw = [(g * self.draws[j]).mean(axis=1) / li for j in range(len(self.draws))]
            for k, j in spec.chol_index:
                cols.append((d.xr[:, k] * gw[j])[:, None])
        # d P / d u1: +pdf at the upper bound for y=1, -pdf at the lower bound for y=2
        y = d.y
        du = np.zeros(d.n)
        m1, m2 = y == 1, y == 2
        du[m1] = pb[m1].mean(axis=1)
        du[m2] = -pa[m2].mean(axis=1)
        cols.append((du / li * u1)[:, None])
        return float(np.log(li).sum()), np.hstack(cols)

    def loglik_and_grad(self, theta) -> tuple[float, np.ndarray]:
        ll, s = self.scores(theta)
        return ll, s.sum(axis=0)


def simulated_loglik(data: pd.DataFrame, spec: ModelSpec, params: Parameters) -> float:
    return SimulatedLikelihood(data, spec).loglik(params)


def closed_form_loglik(data: pd.DataFrame, spec: ModelSpec, beta: Sequence[float], u1: float) -> float:
    """Plain ordered probit log-likelihood with every coefficient fixed.

    ``beta`` is ordered as ``spec.variables``.
    """
    y = _response(data[spec.response].to_numpy())
    x = np.column_stack([_column(data, c, False) for c in spec.variables])
    probs = category_probabilities(x @ np.asarray(beta, dtype=float), u1)
    return float(np.log(np.choose(y, probs)).sum())
