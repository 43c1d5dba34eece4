import math

import numpy as np
import pytest
from scipy.stats import chisquare

from potts_mcem.core import ModelParams, build_lattice, pixel_loglik
from potts_mcem.sampler import (
    ChainConfig,
    PosteriorKernel,
    PriorKernel,
    energy_histogram,
    enumerate_posterior,
    exact_enumerate,
    iter_chain,
    ml_labels,
    run_chain,
    sample_posterior,
    sw_posterior_sweep,
    sw_prior_sweep,
)
from potts_mcem.seeding import chain_rng

from conftest import brute_force


# --- exact enumeration against the plain-Python oracle --------------------------------


@pytest.mark.parametrize("w,h,m", [(3, 3, 2), (2, 3, 3), (2, 2, 4)])
def test_energy_histogram_matches_brute_force(w, h, m):
    lat = build_lattice(w, h)
    counts = energy_histogram(lat, m)
    assert counts.sum() == m ** (w * h)
    for beta in (0.0, 0.4, 1.3):
        ref = brute_force(w, h, m, beta)
        got = exact_enumerate(lat, m, beta)
        assert got.log_g == pytest.approx(math.log(ref["g"]), rel=1e-12)
        assert got.e_t4 == pytest.approx(ref["e_t4"], rel=1e-12)
        assert got.var_t4 == pytest.approx(ref["var_t4"], rel=1e-9, abs=1e-12)


def test_toy_partition_value():
    ex = exact_enumerate(build_lattice(2, 2), 2, math.log(2))
    assert math.exp(ex.log_g) == pytest.approx(82.0, rel=1e-14)
    assert ex.e_t4 == pytest.approx(224 / 82, rel=1e-14)
    assert energy_histogram(build_lattice(2, 2), 2).tolist() == [2, 0, 12, 0, 2]


def test_beta_zero_and_single_state():
    lat = build_lattice(3, 2)
    ex = exact_enumerate(lat, 3, 0.0)
    assert ex.log_g == pytest.approx(6 * math.log(3))
    assert ex.e_t4 == pytest.approx(lat.n_edges / 3)
    one = exact_enumerate(lat, 1, 0.8)
    assert one.log_g == pytest.approx(0.8 * lat.n_edges)
    assert one.e_t4 == lat.n_edges
    assert one.var_t4 == 0


def test_partition_derivatives_by_finite_differences():
    lat = build_lattice(3, 3)
    h = 1e-4
    for beta in (0.2, 0.7, 1.5):
        lo, mid, hi = (exact_enumerate(lat, 2, b) for b in (beta - h, beta, beta + h))
        assert (hi.log_g - lo.log_g) / (2 * h) == pytest.approx(mid.e_t4, rel=1e-5)
        assert (hi.e_t4 - lo.e_t4) / (2 * h) == pytest.approx(mid.var_t4, rel=1e-5)


def test_posterior_enumeration_matches_brute_force(toy):
    lat, y, p = toy
    ref = brute_force(2, 2, 2, p.beta, y.ravel(), p.means, p.variances)
    ex = exact_enumerate(lat, 2, p.beta, y, p)
    np.testing.assert_allclose(ex.marginals, ref["marginals"], atol=1e-12)
    assert ex.log_marginal == pytest.approx(ref["log_marginal"], rel=1e-12)
    np.testing.assert_allclose(ex.marginals.sum(axis=1), 1.0, atol=1e-12)
    configs, probs = enumerate_posterior(lat, y, p)
    np.testing.assert_allclose(probs, ref["probs"], atol=1e-12)
    assert probs.sum() == pytest.approx(1.0)


def test_enumeration_guard():
    with pytest.raises(ValueError):
        exact_enumerate(build_lattice(5, 5), 2, 0.5)


# --- Swendsen-Wang kernels -------------------------------------------------------------


def test_prior_beta_zero_is_uniform_and_independent():
    lat = build_lattice(3, 3)
    rng = chain_rng(11)
    z = np.zeros((3, 3), dtype=np.int32)
    counts = np.zeros((9, 3))
    agree = 0
    n = 20000
    for _ in range(n):
        z = sw_prior_sweep(z, lat, 0.0, 3, rng)
        counts[np.arange(9), z.ravel()] += 1
        agree += np.count_nonzero(z.ravel()[lat.edge_a] == z.ravel()[lat.edge_b])
    se = math.sqrt(1 / 3 * 2 / 3 / n)
    assert np.all(np.abs(counts / n - 1 / 3) < 5 * se)
    assert agree / (n * lat.n_edges) == pytest.approx(1 / 3, abs=0.01)


def test_prior_huge_beta_relabels_whole_field():
    lat = build_lattice(4, 4)
    rng = chain_rng(2)
    z = np.zeros((4, 4), dtype=np.int32)
    seen = set()
    for _ in range(200):
        z = sw_prior_sweep(z, lat, 1e6, 3, rng)
        assert len(np.unique(z)) == 1
        seen.add(int(z[0, 0]))
    assert seen == {0, 1, 2}


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_prior_bond_distribution_chi_square(beta):
    lat = build_lattice(3, 3)
    counts = energy_histogram(lat, 2)
    u = np.arange(counts.size)
    w = counts * np.exp(beta * u)
    keep = counts > 0
    expected = w[keep] / w[keep].sum()
    kernel = PriorKernel(lat, beta, 2)
    n = 100_000
    z0 = np.zeros(9, dtype=np.int32)
    obs = np.zeros(counts.size)
    for z in iter_chain(z0, kernel, ChainConfig(n + 100, 100), chain_rng(5)):
        obs[np.count_nonzero(z[lat.edge_a] == z[lat.edge_b])] += 1
    assert chisquare(obs[keep], expected * n).pvalue > 0.001


def test_posterior_toy_marginals(toy):
    lat, y, p = toy
    exact = exact_enumerate(lat, 2, p.beta, y, p).marginals
    kernel = PosteriorKernel(y, lat, p)
    freq = np.zeros((4, 2))
    n = 100_000
    for z in iter_chain(kernel.initial_state(), kernel, ChainConfig(n + 50, 50), chain_rng(9)):
        freq[np.arange(4), z] += 1
    assert np.max(np.abs(freq / n - exact)) < 0.01


def test_posterior_beta_zero_matches_responsibilities():
    rng = np.random.default_rng(4)
    lat = build_lattice(5, 4)
    y = rng.normal(size=(4, 5)) * 1.5
    p = ModelParams([-1.0, 0.5, 2.0], [1.0, 0.5, 2.0], 0.0)
    ll = pixel_loglik(y, p)
    resp = np.exp(ll - ll.max(axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)
    n = 20000
    freq = np.zeros_like(resp)
    kernel = PosteriorKernel(y, lat, p)
    for z in iter_chain(kernel.initial_state(), kernel, ChainConfig(n + 1, 1), chain_rng(1)):
        freq[np.arange(20), z] += 1
    se = np.sqrt(resp * (1 - resp) / n) + 1e-12
    assert np.all(np.abs(freq / n - resp) <= 4 * se + 1e-9)


def test_identical_components_reduce_to_prior():
    lat = build_lattice(3, 3)
    y = np.random.default_rng(0).normal(size=(3, 3))
    p = ModelParams([0.3, 0.3], [2.0, 2.0], 0.7)
    counts = energy_histogram(lat, 2)
    w = counts * np.exp(0.7 * np.arange(counts.size))
    keep = counts > 0
    kernel = PosteriorKernel(y, lat, p)
    n = 50_000
    obs = np.zeros(counts.size)
    for z in iter_chain(np.zeros(9, np.int32), kernel, ChainConfig(n + 50, 50), chain_rng(3)):
        obs[np.count_nonzero(z[lat.edge_a] == z[lat.edge_b])] += 1
    assert chisquare(obs[keep], w[keep] / w[keep].sum() * n).pvalue > 0.001


def test_posterior_sweep_survives_extreme_likelihoods():
    lat = build_lattice(40, 40)
    y = np.full((40, 40), 1000.0)
    p = ModelParams([0.0, 1000.0], [1.0, 1.0], 5.0)
    z = np.zeros((40, 40), dtype=np.int32)
    rng = chain_rng(0)
    for _ in range(3):
        z = sw_posterior_sweep(z, y, lat, p, rng)
    assert np.all(z == 1)


def test_sweeps_validate_inputs(toy):
    lat, y, p = toy
    with pytest.raises(ValueError):
        sw_prior_sweep(np.zeros((2, 2), int), lat, -1.0, 2, chain_rng(0))
    with pytest.raises(ValueError):
        sw_prior_sweep(np.full((2, 2), 3), lat, 0.5, 2, chain_rng(0))
    with pytest.raises(ValueError):
        sw_posterior_sweep(np.zeros((3, 3), int), y, lat, p, chain_rng(0))


def test_ml_labels_start(toy):
    lat, y, p = toy
    assert ml_labels(y, p).tolist() == [[0, 0], [1, 1]]


# --- chain runner ----------------------------------------------------------------------


def test_chain_config_contract():
    assert ChainConfig(11, 10).n_retained == 1
    assert ChainConfig(107, 7, 3).n_retained == 33
    with pytest.raises(ValueError):
        ChainConfig(10, 10)
    with pytest.raises(ValueError):
        ChainConfig(10, 2, 0)
    with pytest.raises(ValueError):
        ChainConfig(10, 2, 1, -1)


def test_run_chain_retains_and_repeats(toy):
    lat, y, p = toy
    kernel = PosteriorKernel(y, lat, p)
    cfg = ChainConfig(60, 10, 4, seed=123)
    a = run_chain(kernel.initial_state(), kernel, cfg)
    b = run_chain(kernel.initial_state(), kernel, cfg)
    assert len(a) == cfg.n_retained == 12
    assert all(np.array_equal(x, w) for x, w in zip(a, b))
    c = run_chain(kernel.initial_state(), kernel, ChainConfig(60, 10, 4, seed=124))
    assert not all(np.array_equal(x, w) for x, w in zip(a, c))


def test_sample_posterior_shape_and_determinism(toy):
    lat, y, p = toy
    s1 = sample_posterior(y, lat, p, 30, chain_rng(1))
    s2 = sample_posterior(y, lat, p, 30, chain_rng(1))
    assert s1.shape == (30, 4)
    assert np.array_equal(s1, s2)
