import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crashsev.ingest import CrashRecord, KabcoLevel
from crashsev.raster import GridSpec, RasterCell, SpatialWeights, queen_weights, rasterize
from crashsev.spatial import (
    DegenerateInputError,
    HotspotLabel,
    WeightsError,
    classify_hotspots,
    extract_districts,
    getis_ord_gstar,
    moran,
    morans_expectation,
    morans_i,
    morans_permutations,
    morans_variance,
    morans_z,
)

from oracles import gstar_bruteforce, moran_bruteforce, permutation_moments, random_adjacency


def grid_weights(n_rows, n_cols):
    return queen_weights([RasterCell(r, c, 1, 1.0) for r in range(n_rows) for c in range(n_cols)])


def complete(n):
    return SpatialWeights.from_dense(np.ones((n, n)) - np.eye(n))


def test_two_by_two_example():
    w = grid_weights(2, 2)
    assert morans_i([1, 0, 0, 1], w) == pytest.approx(-1 / 3, abs=1e-15)
    assert moran_bruteforce([1, 0, 0, 1], w.dense()) == pytest.approx(-1 / 3, abs=1e-15)


@pytest.mark.parametrize("x", [(0.0, 1.0), (3.0, -7.5), (2.0, 2.5)])
def test_two_cells_complete(x):
    assert morans_i(x, complete(2)) == pytest.approx(-1.0, abs=1e-15)


def test_complete_graph_permutation_invariance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=12)
    w = complete(12)
    i0 = morans_i(x, w)
    for _ in range(5):
        assert morans_i(rng.permutation(x), w) == pytest.approx(i0, abs=1e-14)


@pytest.mark.parametrize("n, e", [(5, -0.25), (2, -1.0), (17448, -1 / 17447)])
def test_expectation(n, e):
    assert morans_expectation(n) == e


def test_variance_against_permutations():
    w = grid_weights(3, 3)
    x = np.arange(1, 10, dtype=float)
    _, var_perm, _ = permutation_moments(x, w.dense(), 20_000, seed=11)
    assert morans_variance(x, w) == pytest.approx(var_perm, rel=0.05)


def test_small_n_variance_is_exact():
    # n < 4: enumeration over all labelings
    w = SpatialWeights.from_dense([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    x = np.array([1.0, 2.0, 4.0])
    import itertools
    vals = [moran_bruteforce([x[k] for k in p], w.dense()) for p in itertools.permutations(range(3))]
    assert morans_variance(x, w) == pytest.approx(np.var(vals), abs=1e-14)


def test_constant_attribute():
    with pytest.raises(DegenerateInputError):
        moran(np.ones(9), grid_weights(3, 3))


def test_two_cells_degenerate_variance():
    w = complete(2)
    assert morans_variance([0.0, 1.0], w) == 0.0
    with pytest.raises(DegenerateInputError):
        moran([0.0, 1.0], w)


def test_no_neighbors():
    w = SpatialWeights.from_dense(np.zeros((3, 3)))
    with pytest.raises(WeightsError):
        morans_i([1, 2, 3], w)


def test_z_scores():
    assert morans_z(-0.1, -0.1, 0.04)[0] == 0.0
    z, p = morans_z(-0.1 + 2 * 0.2, -0.1, 0.04)
    assert z == pytest.approx(2.0)
    assert p == pytest.approx(0.0455002638963584, rel=1e-9)


def test_significance_flag():
    w = grid_weights(3, 3)
    r = moran(np.arange(9.0), w)
    assert r.significant == (abs(r.z) > 1.96)
    assert set(r.to_dict()) == {"I", "E", "V", "z", "p"}
    assert not moran_from_z(1.5).significant


def moran_from_z(z):
    from crashsev.spatial import MoranResult
    return MoranResult(0.0, 0.0, 1.0, z, 0.13)


def test_random_instances_match_bruteforce():
    rng = np.random.default_rng(2024)
    for _ in range(25):
        n = int(rng.integers(4, 60))
        a = random_adjacency(n, rng.uniform(0.05, 0.5), rng)
        x = rng.gamma(2.0, size=n)
        w = SpatialWeights.from_dense(a)
        assert morans_i(x, w) == pytest.approx(moran_bruteforce(x, a), abs=1e-12)
        assert np.allclose(getis_ord_gstar(x, w), gstar_bruteforce(x, a), rtol=0, atol=1e-12)


def test_gstar_isolated_cell_at_mean():
    w = SpatialWeights.from_dense([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    x = np.array([1.0, 3.0, 2.0])
    assert getis_ord_gstar(x, w)[2] == pytest.approx(0.0, abs=1e-15)


def test_gstar_planted_center():
    x = np.zeros((5, 5))
    x[1:4, 1:4] = 10.0
    g = getis_ord_gstar(x.ravel(), grid_weights(5, 5))
    assert int(np.argmax(g)) == 12
    # direct evaluation: centre sums all 9 hot values -> z = 4.3301...
    assert g[12] == pytest.approx(gstar_bruteforce(x.ravel(), grid_weights(5, 5).dense())[12], abs=1e-12)
    assert g[12] > 2.576


@pytest.mark.parametrize("z, label", [
    (2.0, HotspotLabel.HOT95), (-3.0, HotspotLabel.COLD99), (0.0, HotspotLabel.NOT_SIGNIFICANT),
    (1.645, HotspotLabel.HOT90), (1.6, HotspotLabel.NOT_SIGNIFICANT), (2.576, HotspotLabel.HOT99),
    (-1.7, HotspotLabel.COLD90),
])
def test_classify(z, label):
    assert classify_hotspots(z) == [label]


def test_label_names():
    assert HotspotLabel.parse("Hot90") is HotspotLabel.HOT90
    assert HotspotLabel.parse("NotSignificant") is HotspotLabel.NOT_SIGNIFICANT
    assert HotspotLabel.COLD99.display == "Cold99"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=9, max_size=9).filter(lambda v: np.ptp(v) > 1e-3))
def test_moran_scale_invariance(vals):
    w = grid_weights(3, 3)
    x = np.array(vals)
    assert morans_i(3.0 * x + 7.0, w) == pytest.approx(morans_i(x, w), abs=1e-9)


def test_permutation_helper_matches_bruteforce_mean():
    w = grid_weights(4, 4)
    x = np.random.default_rng(5).normal(size=16)
    sims = morans_permutations(x, w, 4000, np.random.default_rng(6))
    e = morans_expectation(16)
    assert abs(sims.mean() - e) < 3 * sims.std() / math.sqrt(len(sims))


# -- districts ---------------------------------------------------------------

def _field(blobs, n_rows=12, n_cols=12, per_cell=3):
    g = GridSpec(40.0, -78.0, 1.0, n_rows, n_cols)
    recs = []
    for r in range(n_rows):
        for c in range(n_cols):
            hot = any((r, c) in b for b in blobs)
            lat, lon = g.unproject(r + 0.5, c + 0.5)
            for k in range(per_cell):
                recs.append(CrashRecord(f"{r}-{c}-{k}", float(lat), float(lon),
                                        KabcoLevel.K if hot else KabcoLevel.O))
    return g, recs


def _hotspots(g, recs):
    cells = rasterize(recs, g)
    z = getis_ord_gstar([c.attribute for c in cells], queen_weights(cells))
    return cells, classify_hotspots(z)


def test_two_disjoint_blobs():
    a = {(r, c) for r in range(1, 4) for c in range(1, 4)}
    b = {(r, c) for r in range(7, 10) for c in range(7, 11)}
    g, recs = _field([a, b])
    cells, labels = _hotspots(g, recs)
    ds = extract_districts(cells, labels, recs, g, k=2)
    assert len(ds) == 2
    assert not ds[0].member_cells & ds[1].member_cells
    # larger blob ranks first
    assert ds[0].member_cells >= b and ds[1].member_cells >= a
    assert ds[0].district_id == 1
    assert all(d.crash_count == 3 * len(d.member_cells) for d in ds)


def test_shortfall_warns():
    a = {(r, c) for r in range(4, 7) for c in range(4, 7)}
    g, recs = _field([a])
    cells, labels = _hotspots(g, recs)
    with pytest.warns(UserWarning, match="1 qualifying"):
        ds = extract_districts(cells, labels, recs, g, k=4)
    assert len(ds) == 1


def test_min_cells_filter():
    cells = [RasterCell(0, 0, 5, 1.0), RasterCell(0, 1, 5, 1.0), RasterCell(5, 5, 11, 1.0)]
    labels = [HotspotLabel.HOT99] * 3
    g = GridSpec(40.0, -78.0, 1.0, 6, 6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert extract_districts(cells, labels, [], g, k=1, min_cells=3) == []
        ds = extract_districts(cells, labels, [], g, k=2, min_cells=1)
    assert [d.member_cells for d in ds] == [{(5, 5)}, {(0, 0), (0, 1)}]
