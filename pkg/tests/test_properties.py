"""Randomized invariants; the whole module is meant to finish well under a minute."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from potts_mcem.core import ModelParams, SufficientStats, build_lattice, sufficient_stats
from potts_mcem.mcem import e_step, estimate_bond_curve, exact_bond_curve, log_partition
from potts_mcem.seeding import chain_rng
from potts_mcem.simharness import gaussian_smooth, generate_scene, gmm_em_baseline, table1_scene

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
dims = st.integers(1, 9)


@st.composite
def image_and_labels(draw):
    h, w, m = draw(dims), draw(dims), draw(st.integers(1, 5))
    y = draw(arrays(float, (h, w), elements=finite))
    z = draw(arrays(np.int64, (h, w), elements=st.integers(0, m - 1)))
    return y, z, m


@FAST
@given(image_and_labels())
def test_sufficient_stats_invariants(case):
    y, z, m = case
    lat = build_lattice(y.shape[1], y.shape[0])
    s = sufficient_stats(y, z, lat, m)
    assert s.t1.sum() == y.size and np.all(s.t1 >= 0)
    assert np.isclose(s.t2.sum(), y.sum(), rtol=1e-9, atol=1e-6)
    assert np.all(s.t3 * s.t1 >= s.t2**2 - 1e-9 * np.maximum(s.t3 * s.t1, 1))
    assert 0 <= s.t4 <= lat.n_edges
    assert (m > 1) or s.t4 == lat.n_edges
    # relabelling permutes the per-component statistics and keeps t4
    perm = np.random.default_rng(0).permutation(m)
    p = sufficient_stats(y, perm[z], lat, m)
    assert np.array_equal(p.t1[perm], s.t1) and p.t4 == s.t4
    SufficientStats(s.t1, s.t2, s.t3, s.t4)


@FAST
@given(st.integers(2, 6), st.integers(2, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_bond_curve_monotone_with_anchor(w, h, m, seed):
    lat = build_lattice(w, h)
    curve = estimate_bond_curve(lat, m, [0.0, 0.3, 0.8, 1.5], 20, chain_rng(seed))
    assert curve.means[0] == lat.n_edges / m
    assert np.all(np.diff(curve.monotone_means) >= 0)
    assert curve.monotone_means[-1] <= lat.n_edges


@FAST
@given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 3))
def test_log_partition_convex(w, h, m):
    lat = build_lattice(w, h)
    grid = np.round(np.arange(0, 2.0001, 0.1), 10)
    curve = exact_bond_curve(lat, m, grid)
    vals = np.array([log_partition(b, curve) for b in grid])
    assert vals[0] == lat.n_pixels * np.log(m)
    assert np.all(np.diff(vals, 2) >= -1e-9)


@FAST
@given(st.integers(1, 20), st.integers(1, 20), st.floats(0, 12), st.integers(0, 2**32 - 1))
def test_smoothing_preserves_mean(h, w, fwhm, seed):
    y = np.random.default_rng(seed).normal(5.0, 3.0, size=(h, w))
    s = gaussian_smooth(y, fwhm)
    assert abs(s.mean() - y.mean()) <= 1e-10 * abs(y.mean()) + 1e-12
    assert s.min() >= y.min() - 1e-9 and s.max() <= y.max() + 1e-9


@FAST
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_gmm_em_monotone(m, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(12, 12)) + rng.integers(0, 3, size=(12, 12)) * 2.5
    init = ModelParams(np.sort(rng.uniform(y.min(), y.max(), m)), np.full(m, y.var()), 0.0)
    res = gmm_em_baseline(y, m, init, max_iters=60)
    tr = np.array(res.loglik_trace)
    assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[:-1]).max())


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_determinism_under_fixed_seed(seed):
    a = generate_scene(table1_scene(16, 16), chain_rng(seed))
    b = generate_scene(table1_scene(16, 16), chain_rng(seed))
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    lat = build_lattice(16, 16)
    p = ModelParams([-4.0, 0.0, 4.0], [1.0, 1.0, 1.0], 0.7)
    s1 = e_step(a[2], p, lat, 5, chain_rng(seed))
    s2 = e_step(a[2], p, lat, 5, chain_rng(seed))
    assert np.array_equal(s1.t2, s2.t2) and s1.t4 == s2.t4
