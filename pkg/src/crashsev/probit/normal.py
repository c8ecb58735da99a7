"""Standard normal cdf, pdf and quantile."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

_INV_SQRT_2PI = 0.3989422804014327


def cdf(t):
    return ndtr(t)


def pdf(t):
    t = np.asarray(t, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * t * t)


def inverse_cdf(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("inverse normal cdf needs arguments strictly inside (0, 1)")
    return ndtri(p)


def interval_prob(lo, hi):
    """P(lo < Z < hi) for a standard normal, accurate in both tails."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    s = np.where(lo > 0, -1.0, 1.0)
    return s * (ndtr(s * hi) - ndtr(s * lo))
