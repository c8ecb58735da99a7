"""Size and power of the pairwise transferability test on synthetic districts.

Each replication fits two districts of equal size and evaluates each fit on
the other district's data. Same-generator pairs give the size, pairs from
different coefficient vectors the power. For comparison the script prints
the rejection rate implied by a 2 * chi2(k) reference, the large-sample law
of the statistic when both districts have the same size and truth.

    python scripts/lr_size_power.py --reps 50 --n 3000
"""
import argparse
import time

import numpy as np
from scipy.stats import chi2

from crashsev.probit import estimate
from crashsev.probit.model import ModelSpec, Parameters
from crashsev.stability import transfer_matrix
from crashsev.synth import probit_frame, simulate_ordered_probit

SPEC = ModelSpec(fixed_vars=("x1", "x2", "x3"))
BETA_A = [0.2, 0.5, -0.4, 0.3]
BETA_B = [0.2, 0.8, -0.1, 0.0]


def district(seed, beta, n):
    rng = np.random.default_rng(seed)
    df = probit_frame(n, rng)
    p = Parameters.zeros(SPEC, 1.2)
    p.beta_fixed = np.asarray(beta, dtype=float)
    df["severity"] = simulate_ordered_probit(df, SPEC, p, rng)
    return df


def pair(seed, beta_a, beta_b, n):
    data = {"a": district(seed, beta_a, n), "b": district(seed + 10_000, beta_b, n)}
    res = {k: estimate(v, SPEC, discrete_effects=False) for k, v in data.items()}
    return transfer_matrix(res, data)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--n", type=int, default=3000)
    args = ap.parse_args()
    t0 = time.perf_counter()

    same = [t for s in range(args.reps) for t in pair(1000 + s, BETA_A, BETA_A, args.n).values()]
    stats = np.array([t.chi2 for t in same])
    k = same[0].df
    crit = chi2.ppf(0.90, k)
    print(f"same generator: {len(same)} directed tests, k = {k}")
    print(f"  mean chi2 {stats.mean():.2f} (chi2(k) mean {k}, 2*chi2(k) mean {2 * k})")
    print(f"  rejection at 90%: {np.mean(stats > crit):.2f}"
          f"   implied by 2*chi2(k): {chi2.sf(crit / 2, k):.2f}")
    print(f"  rejection of stat/2 at 90%: {np.mean(stats / 2 > crit):.2f}")

    diff = [pair(2000 + s, BETA_A, BETA_B, args.n) for s in range(args.reps)]
    power = np.mean([all(t.confidence > 0.99 for t in m.values()) for m in diff])
    print(f"different generators: both directions reject at 99% in {power:.2f} of {args.reps} replications")
    print(f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
