"""Likelihood-ratio tests of parameter stability across districts."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.special import gammainc

from .probit.estimate import EstimationResult
from .probit.model import SimulatedLikelihood

log = logging.getLogger(__name__)


def chi_square_cdf(x: float, df: int) -> float:
    """P(chi2_df <= x) as the regularized lower incomplete gamma P(df/2, x/2)."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x < 0:
        raise ValueError("chi-square argument must be non-negative")
    return float(gammainc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class LrTestResult:
    chi2: float
    df: int
    confidence: float
    level: float = 0.90

    @property
    def anomaly(self) -> bool:
        """Negative statistic: the restricted fit beat the unrestricted one."""
        return self.chi2 < 0

    @property
    def reject_null(self) -> bool:
        return not self.anomaly and self.confidence > self.level

    def format_cell(self) -> str:
        c = self.confidence
        pct = ">99.9%" if c > 0.999 else f"{100 * c:.1f}%"
        return f"{self.chi2:.2f}({self.df}) [{pct}]"

    def to_dict(self) -> dict:
        conf = self.confidence if np.isfinite(self.confidence) else None
        return {"chi2": self.chi2, "df": self.df, "confidence": conf,
                "level": self.level, "reject_null": self.reject_null, "anomaly": self.anomaly}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LrTestResult":
        conf = d["confidence"]
        return cls(d["chi2"], d["df"], float("nan") if conf is None else conf, d.get("level", 0.90))


def _result(chi2: float, df: int, level: float) -> LrTestResult:
    if chi2 < 0:
        log.warning("negative LR statistic %.6g (model misfit)", chi2)
        conf = float("nan")
    else:
        conf = chi_square_cdf(chi2, df)
    return LrTestResult(float(chi2), int(df), conf, level)


def lr_transfer_test(ll_own: float, ll_transferred: float, df: int, level: float = 0.90) -> LrTestResult:
    """-2 [LL(other district's parameters on own data) - LL(own fit)]."""
    return _result(-2.0 * (ll_transferred - ll_own), df, level)


def lr_pooled_test(ll_full: float, ll_districts: Sequence[float], df: int, level: float = 0.90) -> LrTestResult:
    """-2 [LL(pooled fit) - sum of separate district LLs]."""
    return _result(-2.0 * (ll_full - float(np.sum(ll_districts))), df, level)


def pooled_df(district_results: Sequence[EstimationResult], full: EstimationResult,
              significant_only: bool = False) -> int:
    """Degrees of freedom of the pooled test.

    With ``significant_only`` parameters are counted only when |t| >= 1.645.
    """
    def count(r):
        return sum(r.retained) if significant_only else r.k

    return sum(count(r) for r in district_results) - count(full)


def transferred_loglik(result: EstimationResult, data: pd.DataFrame) -> float:
    """Log-likelihood of a fitted model's parameters on another dataset.

    Covariates the model uses but ``data`` lacks are filled with zeros.
    """
    sim = SimulatedLikelihood(data, result.spec, fill_missing=True)
    return sim.loglik(result.params)


def transfer_matrix(
    results: Mapping[str, EstimationResult],
    datasets: Mapping[str, pd.DataFrame],
    level: float = 0.90,
) -> dict[tuple[str, str], LrTestResult]:
    """Pairwise tests keyed by (m1, m2): m2's parameters evaluated on m1's data."""
    keys = list(results)
    out = {}
    for m1 in keys:
        for m2 in keys:
            if m1 == m2:
                continue
            ll_t = transferred_loglik(results[m2], datasets[m1])
            out[(m1, m2)] = lr_transfer_test(results[m1].ll, ll_t, results[m2].k, level)
    return out


def write_transfer_csv(matrix: Mapping[tuple[str, str], LrTestResult], keys: Sequence[str], dest: IO[str]) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["m1 \\ m2"] + list(keys))
    for m1 in keys:
        row = [m1]
        for m2 in keys:
            row.append("--" if m1 == m2 else matrix[(m1, m2)].format_cell())
        w.writerow(row)
