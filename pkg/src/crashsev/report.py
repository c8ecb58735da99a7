"""Plain-text report tables."""
from __future__ import annotations

from typing import Mapping, Sequence

from .probit.estimate import EstimationResult
from .stability import LrTestResult


def _g(v) -> str:
    if v is None:
        return ""
    return f"{v:.4g}"


def fit_table(result: EstimationResult, title: str = "") -> str:
    """Coefficient, t-stat and the three marginal-effect columns per variable."""
    me = result.marginal_effects
    lines = []
    if title:
        lines.append(title)
    header = f"{'Variable':<44}{'Coef.':>10}{'t-stat':>10}{'S':>10}{'M':>10}{'N':>10}"
    lines += [header, "-" * len(header)]
    for name, est, t, keep in zip(result.param_names, result.estimates, result.t_stats, result.retained):
        row_me = me.get(name, {})
        flag = "" if keep else " ."
        lines.append(f"{name + flag:<44}{_g(est):>10}{_g(t):>10}"
                     f"{_g(row_me.get('serious')):>10}{_g(row_me.get('minor')):>10}{_g(row_me.get('none')):>10}")
    if result.sigma:
        lines.append("")
        lines.append("Random parameters")
        for name, s in result.sigma.items():
            above, below = result.shares[name]
            lines.append(f"  {name:<40} S.D. {_g(s):>8}   above zero {100 * above:6.2f}%   below zero {100 * below:6.2f}%")
        if result.correlation is not None and len(result.sigma) > 1:
            names = list(result.sigma)
            lines.append("  correlation")
            for name, row in zip(names, result.correlation):
                lines.append(f"    {name:<38}" + "".join(f"{_g(v):>10}" for v in row))
    lines += [
        "",
        f"Number of observations      {result.n_obs}",
        f"Number of parameters        {result.k}",
        f"LL(0)                       {_g(result.ll0)}",
        f"LL(beta)                    {_g(result.ll)}",
        f"rho^2                       {_g(result.rho2)}",
        f"AIC                         {_g(result.aic)}",
        f"converged                   {result.converged} ({result.n_iter} iterations, SE via {result.se_method})",
    ]
    if not all(result.retained):
        lines.append("'.' marks |t| < 1.645 (below 90% confidence)")
    return "\n".join(lines) + "\n"


def transfer_table(matrix: Mapping[tuple[str, str], LrTestResult], keys: Sequence[str]) -> str:
    width = 22
    lines = ["m1 \\ m2".ljust(12) + "".join(k.rjust(width) for k in keys)]
    for m1 in keys:
        cells = ["--" if m1 == m2 else matrix[(m1, m2)].format_cell() for m2 in keys]
        lines.append(m1.ljust(12) + "".join(c.rjust(width) for c in cells))
    return "\n".join(lines) + "\n"
