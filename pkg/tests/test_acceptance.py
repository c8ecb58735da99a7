"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Slow criteria carry the ``slow`` marker but run by default.
"""
import json
import shutil
import time
import warnings

import numpy as np
import pytest

from crashsev import cli
from crashsev.probit import estimate
from crashsev.probit.estimate import aic, rho_squared
from crashsev.probit.model import (
    ModelSpec,
    Parameters,
    SimulatedLikelihood,
    category_probabilities,
    closed_form_loglik,
    simulated_loglik,
)
from crashsev.probit.post import random_param_correlation
from crashsev.raster import RasterCell, SpatialWeights, queen_weights, rasterize
from crashsev.spatial import (
    HotspotLabel,
    classify_hotspots,
    extract_districts,
    getis_ord_gstar,
    morans_expectation,
    morans_i,
    morans_variance,
)
from crashsev.stability import chi_square_cdf, lr_pooled_test, transfer_matrix
from crashsev.synth import probit_frame, recovery_dataset, recovery_spec, recovery_truth, simulate_ordered_probit, synthesize

from acceptance_log import record
from oracles import gstar_bruteforce, moran_bruteforce, random_adjacency

# spread of the random-coefficient regressors in the recovery design
RECOVERY_RANDOM_SD = 2.0


def _finish(number, title, checks, seconds, budget):
    """checks: list of (label, ok, detail)."""
    within = seconds < budget
    passed = all(ok for _, ok, _ in checks) and within
    detail = "; ".join(f"{label}: {detail}{'' if ok else ' [miss]'}" for label, ok, detail in checks)
    detail += f"; runtime {'<' if within else '>='} {budget:g} s"
    record(number, title, passed, detail, seconds)
    assert passed, detail


def test_criterion_1_chi_square_brackets():
    t0 = time.perf_counter()
    checks = []
    for x, df, pct in [(17.40, 18, 50.4), (14.88, 15, 53.9), (24.46, 16, 92.1)]:
        got = 100 * chi_square_cdf(x, df)
        checks.append((f"{x}({df})", abs(got - pct) <= 0.5, f"{got:.2f}% vs {pct}%"))
    got = 100 * chi_square_cdf(306.38, 16)
    checks.append(("306.38(16)", got > 99.9, f"{got:.4f}% vs >99.9%"))
    _finish(1, "chi-square confidence brackets", checks, time.perf_counter() - t0, 1.0)


def test_criterion_2_fit_statistic_identities():
    t0 = time.perf_counter()
    checks = []
    for k, ll, ll0, printed_aic, printed_rho in [
        (16, -436.25, -496.44, 904.5, 0.121),
        (15, -536.89, -611.52, 1103.8, 0.122),
        (18, -2780.96, -3079.21, 5597.9, 0.096),
    ]:
        a = aic(ll, k)
        r = rho_squared(ll, ll0)
        checks.append((f"AIC k={k}", abs(a - printed_aic) < 0.05, f"{a:.2f}"))
        checks.append((f"rho2 LL={ll}", abs(r - printed_rho) <= 0.001, f"{r:.4f}"))
    _finish(2, "AIC and rho^2 identities", checks, time.perf_counter() - t0, 1.0)


def _permutation_moments(x, w_dense, n_perm, rng):
    # independent vectorised evaluation of I for every relabelling
    n = len(x)
    z = x - x.mean()
    zp = np.array([z[rng.permutation(n)] for _ in range(n_perm)])
    vals = n / w_dense.sum() * np.einsum("ij,jk,ik->i", zp, w_dense, zp) / (z @ z)
    return vals


@pytest.mark.slow
def test_criterion_3_spatial_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    worst_i = worst_g = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 201))
        a = random_adjacency(n, rng.uniform(0.01, 0.3), rng)
        x = rng.lognormal(size=n)
        w = SpatialWeights.from_dense(a)
        worst_i = max(worst_i, abs(morans_i(x, w) - moran_bruteforce(x.tolist(), a.tolist())))
        g = getis_ord_gstar(x, w)
        worst_g = max(worst_g, float(np.max(np.abs(g - np.array(gstar_bruteforce(x.tolist(), a.tolist()))))))
    checks = [("Moran vs brute force", worst_i <= 1e-12, f"max err {worst_i:.1e}"),
              ("G* vs brute force", worst_g <= 1e-12, f"max err {worst_g:.1e}")]

    cells = [RasterCell(r, c, 1, 1.0) for r in range(10) for c in range(10)]
    w = queen_weights(cells)
    x = rng.gamma(1.5, size=100)
    sims = _permutation_moments(x, w.dense(), 20_000, rng)
    e = morans_expectation(100)
    se = sims.std(ddof=1) / np.sqrt(len(sims))
    checks.append(("permutation mean", abs(sims.mean() - e) < 3 * se,
                   f"{sims.mean():.5f} vs {e:.5f} ({abs(sims.mean() - e) / se:.2f} SE)"))
    v, v_perm = morans_variance(x, w), sims.var()
    checks.append(("permutation variance", abs(v - v_perm) / v_perm < 0.05,
                   f"rel err {abs(v - v_perm) / v_perm:.3f}"))
    _finish(3, "spatial oracle equivalence", checks, time.perf_counter() - t0, 60.0)


def _f1(found, planted):
    tp = len(found & planted)
    if tp == 0:
        return 0.0
    p, r = tp / len(found), tp / len(planted)
    return 2 * p * r / (p + r)


@pytest.mark.slow
def test_criterion_4_planted_hotspots():
    t0 = time.perf_counter()
    exact = 0
    for seed in range(20):
        s = synthesize(n=8000, seed=seed)
        grid = s.layout.grid
        cells = rasterize(s.records, grid)
        labels = classify_hotspots(getis_ord_gstar([c.attribute for c in cells], queen_weights(cells)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ds = extract_districts(cells, labels, s.records, grid, k=4, level=HotspotLabel.HOT99)
        planted = list(s.layout.clusters)
        ok = len(ds) == 4 and all(max(_f1(d.member_cells, p) for p in planted) == 1.0 for d in ds)
        exact += ok
    checks = [("exact recoveries", exact == 20, f"{exact}/20 seeds with 4 districts and F1 = 1.0")]
    _finish(4, "planted-hotspot recovery at 99%", checks, time.perf_counter() - t0, 30.0)


@pytest.mark.slow
def test_criterion_5_probit_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    xb = rng.uniform(-10, 10, 1_000_000)
    u1 = rng.uniform(1e-3, 10, 1_000_000)
    total = np.sum(category_probabilities(xb, u1), axis=0)
    dev = float(np.max(np.abs(total - 1.0)))
    checks = [("simplex over 1e6 points", dev <= 1e-12, f"max |sum - 1| = {dev:.1e}")]

    spec = recovery_spec(n_draws=200)
    data, truth = recovery_dataset(2000, seed=5, spec=spec)
    p = Parameters(truth.beta_fixed, truth.beta_random_mean, np.zeros_like(truth.eta),
                   np.zeros_like(truth.cholesky), truth.threshold_u1)
    sim_ll = simulated_loglik(data, spec, p)
    cf_ll = closed_form_loglik(data, spec.fixed_only(), np.concatenate([p.beta_fixed, p.beta_random_mean]), p.threshold_u1)
    checks.append(("zero-variance LL", abs(sim_ll - cf_ll) <= 1e-10, f"|diff| = {abs(sim_ll - cf_ll):.1e}"))

    sim = SimulatedLikelihood(data.iloc[:500].reset_index(drop=True), recovery_spec(n_draws=100))
    base = truth.pack(spec)
    worst = 0.0
    for _ in range(20):
        theta = base + rng.normal(scale=0.3, size=len(base))
        _, g = sim.loglik_and_grad(theta)
        fd = np.empty_like(theta)
        for k in range(len(theta)):
            h = 1e-5 * max(1.0, abs(theta[k]))
            e = np.zeros_like(theta)
            e[k] = h
            fd[k] = (sim.loglik(theta + e) - sim.loglik(theta - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0))))
    checks.append(("gradient vs finite differences", worst < 1e-4, f"max rel err {worst:.1e} at 20 points"))
    _finish(5, "ordered probit correctness", checks, time.perf_counter() - t0, 60.0)


@pytest.mark.slow
def test_criterion_6_parameter_recovery():
    t0 = time.perf_counter()
    spec = recovery_spec(n_draws=500)
    truth = recovery_truth(spec)
    true_vec = truth.pack(spec)
    true_vec[-1] = truth.threshold_u1
    rho_true = random_param_correlation(truth.cholesky)[0, 1]
    good = 0
    misses = []
    for seed in range(20):
        data, _ = recovery_dataset(5000, seed, spec, random_sd=RECOVERY_RANDOM_SD)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = estimate(data, spec, discrete_effects=False)
        within = bool(np.all(np.abs(res.estimates - true_vec) <= 3 * res.std_errors))
        rho_err = abs(res.correlation[0][1] - rho_true)
        if res.converged and within and rho_err <= 0.15:
            good += 1
        else:
            misses.append(f"seed {seed} (rho err {rho_err:.3f}, 3SE {'ok' if within else 'miss'})")
    detail = f"{good}/20 seeds" + (f"; misses: {', '.join(misses)}" if misses else "")
    _finish(6, "MSL parameter recovery", [("seeds within tolerance", good >= 18, detail)],
            time.perf_counter() - t0, 900.0)


@pytest.mark.slow
def test_criterion_7_nesting():
    t0 = time.perf_counter()
    spec_c = recovery_spec(n_draws=300, correlated=True)
    spec_d = recovery_spec(n_draws=300, correlated=False)
    data, _ = recovery_dataset(3000, seed=77, spec=spec_c, random_sd=RECOVERY_RANDOM_SD)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fixed = estimate(data, spec_c.fixed_only(), discrete_effects=False)
        diag = estimate(data, spec_d, discrete_effects=False)
        start = Parameters(diag.params.beta_fixed, diag.params.beta_random_mean, diag.params.eta,
                           diag.params.cholesky.copy(), diag.params.threshold_u1)
        corr = estimate(data, spec_c, start=start, discrete_effects=False)
    tol = 1e-6
    checks = [
        ("LL(correlated) >= LL(diagonal)", corr.ll >= diag.ll - tol, f"{corr.ll:.4f} vs {diag.ll:.4f}"),
        ("LL(diagonal) >= LL(fixed)", diag.ll >= fixed.ll - tol, f"{diag.ll:.4f} vs {fixed.ll:.4f}"),
    ]
    _finish(7, "nesting of fixed, diagonal and correlated fits", checks, time.perf_counter() - t0, 300.0)


LR_SPEC = ModelSpec(fixed_vars=("x1", "x2", "x3"))
LR_BETA_A = [0.2, 0.5, -0.4, 0.3]
LR_BETA_B = [0.2, 0.8, -0.1, 0.0]


def _lr_district(seed, beta, n=3000):
    rng = np.random.default_rng(seed)
    df = probit_frame(n, rng)
    p = Parameters.zeros(LR_SPEC, 1.2)
    p.beta_fixed = np.asarray(beta, dtype=float)
    df["severity"] = simulate_ordered_probit(df, LR_SPEC, p, rng)
    return df


def _pair(seed, beta_a, beta_b):
    data = {"a": _lr_district(seed, beta_a), "b": _lr_district(seed + 10_000, beta_b)}
    res = {k: estimate(v, LR_SPEC, discrete_effects=False) for k, v in data.items()}
    return transfer_matrix(res, data)


@pytest.mark.slow
def test_criterion_8_lr_size_and_power():
    t0 = time.perf_counter()
    same = [t for s in range(50) for t in _pair(1000 + s, LR_BETA_A, LR_BETA_A).values()]
    size = np.mean([t.confidence > 0.90 for t in same])
    mean_chi2 = np.mean([t.chi2 for t in same])
    diff = [_pair(2000 + s, LR_BETA_A, LR_BETA_B) for s in range(50)]
    power = np.mean([all(t.confidence > 0.99 for t in m.values()) for m in diff])
    pooled = lr_pooled_test(-4857.35, (-436.25, -986.15, -536.89, -2780.96), 25)
    checks = [
        ("size at 90%", abs(size - 0.10) <= 0.05,
         f"{100 * size:.0f}% of {len(same)} directed tests (mean chi2 {mean_chi2:.2f}, df {same[0].df})"),
        ("power at 99%", power >= 0.95, f"{100 * power:.0f}% of 50 replications"),
        ("pooled chain", abs(pooled.chi2 - 234.2) < 1e-9, f"chi2 = {pooled.chi2:.10g}"),
    ]
    _finish(8, "LR test size, power and pooled statistic", checks, time.perf_counter() - t0, 1200.0)


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    assert cli.main(["synth", "--out", str(tmp_path / "data"), "--seed", "9"]) == 0
    base = json.loads((tmp_path / "data" / "synth_config.json").read_text())
    base.update(input=str(tmp_path / "data" / "crashes.csv"), draws=100)
    outputs = []
    for name in ("run1", "run2"):
        d = tmp_path / name
        d.mkdir()
        cfg = dict(base, out_dir=".")
        (d / "config.json").write_text(json.dumps(cfg))
        assert cli.main(["run", "--config", str(d / "config.json")]) == 0
        outputs.append(d)
    names = sorted(p.name for p in outputs[0].iterdir() if p.name != "config.json")
    same = [n for n in names if (outputs[0] / n).read_bytes() == (outputs[1] / n).read_bytes()]
    checks = [("report.txt", (outputs[0] / "report.txt").read_bytes() == (outputs[1] / "report.txt").read_bytes(),
               "byte-identical" if "report.txt" in same else "differs"),
              ("all artifacts", len(same) == len(names), f"{len(same)}/{len(names)} files identical")]
    shutil.rmtree(tmp_path)
    _finish(9, "end-to-end determinism", checks, time.perf_counter() - t0, 120.0)
