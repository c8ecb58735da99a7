"""Slow, loop-based reference implementations used only by the tests."""
import math
import random

import numpy as np


def moran_bruteforce(x, w):
    n = len(x)
    xbar = sum(x) / n
    num = 0.0
    s0 = 0.0
    for i in range(n):
        for j in range(n):
            if i != j and w[i][j]:
                num += w[i][j] * (x[i] - xbar) * (x[j] - xbar)
                s0 += w[i][j]
    den = sum((v - xbar) ** 2 for v in x)
    return n / s0 * num / den


def gstar_bruteforce(x, w):
    n = len(x)
    xbar = sum(x) / n
    s = math.sqrt(sum(v * v for v in x) / n - xbar ** 2)
    out = []
    for i in range(n):
        wi = [1.0 if j == i else float(w[i][j]) for j in range(n)]
        sw = sum(wi)
        sw2 = sum(v * v for v in wi)
        num = sum(wi[j] * x[j] for j in range(n)) - xbar * sw
        spread = n * sw2 - sw ** 2
        # a cell linked to every other cell has a 0/0 score; report 0
        out.append(0.0 if spread == 0 else num / (s * math.sqrt(spread / (n - 1))))
    return out


def random_adjacency(n, p, rng):
    a = (rng.random((n, n)) < p).astype(int)
    a = np.triu(a, 1)
    a = a + a.T
    # guarantee at least one link so S0 > 0
    if a.sum() == 0:
        a[0, 1] = a[1, 0] = 1
    return a


def permutation_moments(x, w, n_perm, seed):
    """Mean and variance of brute-force I over random relabellings of x."""
    rnd = random.Random(seed)
    xs = list(x)
    vals = []
    for _ in range(n_perm):
        rnd.shuffle(xs)
        vals.append(moran_bruteforce(xs, w))
    return float(np.mean(vals)), float(np.var(vals)), len(vals)


def halton_oracle(index, base):
    # digit expansion with exact fractions
    from fractions import Fraction
    f, r, i = Fraction(1), Fraction(0), index
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r
