"""Swendsen-Wang cluster kernels, chain runner and exact enumeration.

A sweep freezes each like-labelled edge with probability ``1 - exp(-beta)``,
finds connected clusters of frozen edges with union-find, then relabels every
cluster at once.  For the prior the new label is uniform on ``0..M-1``; for
the posterior it is drawn with probability proportional to the product of the
cluster's Gaussian likelihoods, normalised in log space.

All randomness is drawn from a numpy ``Generator`` outside the compiled
kernel, so a sweep is a deterministic function of ``(state, rng state)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .core import Lattice, ModelParams, check_image, check_labels, pixel_loglik
from .seeding import chain_rng

MAX_ENUMERATION = 10**7


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _sw_sweep(labels, edge_a, edge_b, p_freeze, u_bond, u_cluster, loglik, n_states):
    n = labels.size
    parent = np.arange(n)
    for e in range(edge_a.size):
        a = edge_a[e]
        b = edge_b[e]
        if labels[a] == labels[b] and u_bond[e] < p_freeze:
            ra = _find(parent, a)
            rb = _find(parent, b)
            if ra < rb:
                parent[rb] = ra
            elif rb < ra:
                parent[ra] = rb

    cluster = np.empty(n, np.int64)
    root_id = np.full(n, -1, np.int64)
    n_clusters = 0
    for i in range(n):
        r = _find(parent, i)
        if root_id[r] < 0:
            root_id[r] = n_clusters
            n_clusters += 1
        cluster[i] = root_id[r]

    new_label = np.empty(n_clusters, labels.dtype)
    if loglik.shape[0] == 0:
        for c in range(n_clusters):
            k = int(u_cluster[c] * n_states)
            if k >= n_states:
                k = n_states - 1
            new_label[c] = k
    else:
        w = np.zeros((n_clusters, n_states))
        for i in range(n):
            c = cluster[i]
            for k in range(n_states):
                w[c, k] += loglik[i, k]
        prob = np.empty(n_states)
        for c in range(n_clusters):
            top = w[c, 0]
            for k in range(1, n_states):
                if w[c, k] > top:
                    top = w[c, k]
            total = 0.0
            for k in range(n_states):
                prob[k] = np.exp(w[c, k] - top)
                total += prob[k]
            target = u_cluster[c] * total
            acc = 0.0
            pick = n_states - 1
            for k in range(n_states):
                acc += prob[k]
                if target < acc:
                    pick = k
                    break
            new_label[c] = pick

    out = np.empty_like(labels)
    for i in range(n):
        out[i] = new_label[cluster[i]]
    return out


_EMPTY_LOGLIK = np.zeros((0, 1))


def _sweep(labels, lattice, beta, n_states, loglik, rng):
    z = np.ascontiguousarray(labels, dtype=np.int32).ravel()
    p_freeze = -np.expm1(-beta) if np.isfinite(beta) else 1.0
    u_bond = rng.random(lattice.n_edges)
    u_cluster = rng.random(z.size)
    return _sw_sweep(z, lattice.edge_a, lattice.edge_b, p_freeze, u_bond, u_cluster, loglik, n_states)


def sw_prior_sweep(labels, lattice: Lattice, beta: float, n_states: int, rng: np.random.Generator) -> np.ndarray:
    """One Swendsen-Wang sweep targeting the Potts prior at ``beta``."""
    if not beta >= 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    z = check_labels(labels, lattice, n_states)
    return _sweep(z, lattice, beta, n_states, _EMPTY_LOGLIK, rng).reshape(lattice.shape)


def sw_posterior_sweep(labels, image, lattice: Lattice, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """One Swendsen-Wang sweep targeting ``Pr(Z | y, params)``."""
    y = check_image(image, lattice)
    z = check_labels(labels, lattice, params.n_components)
    ll = pixel_loglik(y, params)
    return _sweep(z, lattice, params.beta, params.n_components, ll, rng).reshape(lattice.shape)


@dataclass
class PriorKernel:
    """Prior sweep as a ``(flat labels, rng) -> flat labels`` transition."""

    lattice: Lattice
    beta: float
    n_states: int

    def __call__(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return _sweep(z, self.lattice, self.beta, self.n_states, _EMPTY_LOGLIK, rng)


@dataclass
class PosteriorKernel:
    """Posterior sweep with the per-pixel log-likelihood table cached."""

    image: np.ndarray
    lattice: Lattice
    params: ModelParams
    loglik: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.image = check_image(self.image, self.lattice)
        self.loglik = np.ascontiguousarray(pixel_loglik(self.image, self.params))

    def __call__(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return _sweep(z, self.lattice, self.params.beta, self.params.n_components, self.loglik, rng)

    def initial_state(self) -> np.ndarray:
        return np.argmax(self.loglik, axis=1).astype(np.int32)


def ml_labels(image, params: ModelParams) -> np.ndarray:
    """Per-pixel maximum-likelihood labels, the default posterior chain start."""
    y = np.asarray(image, dtype=float)
    return np.argmax(pixel_loglik(y, params), axis=1).astype(np.int32).reshape(y.shape)


@dataclass(frozen=True)
class ChainConfig:
    sweeps: int
    burn_in: int = 50
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValueError("sweeps and thin must be positive, burn_in nonnegative")
        if self.burn_in >= self.sweeps:
            raise ValueError(f"burn_in ({self.burn_in}) must be smaller than sweeps ({self.sweeps})")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_retained(self) -> int:
        return (self.sweeps - self.burn_in) // self.thin

    @classmethod
    def for_samples(cls, n_samples: int, burn_in: int = 50, thin: int = 1, seed: int = 0) -> "ChainConfig":
        return cls(burn_in + n_samples * thin, burn_in, thin, seed)


Kernel = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def iter_chain(init, kernel: Kernel, config: ChainConfig, rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
    """Yield retained flat states; ``rng`` defaults to chain 0 of ``config.seed``."""
    if rng is None:
        rng = chain_rng(config.seed)
    z = np.ascontiguousarray(init, dtype=np.int32).ravel()
    for s in range(1, config.sweeps + 1):
        z = kernel(z, rng)
        if s > config.burn_in and (s - config.burn_in) % config.thin == 0:
            yield z


def run_chain(init, kernel: Kernel, config: ChainConfig, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    shape = np.shape(init)
    return [z.reshape(shape) for z in iter_chain(init, kernel, config, rng)]


def sample_posterior(image, lattice: Lattice, params: ModelParams, n_samples: int, rng: np.random.Generator,
                     burn_in: int = 50, thin: int = 1, init=None) -> np.ndarray:
    """Retained posterior states stacked into an ``(n_samples, N)`` array."""
    kernel = PosteriorKernel(image, lattice, params)
    start = kernel.initial_state() if init is None else np.asarray(init).ravel()
    config = ChainConfig.for_samples(n_samples, burn_in, thin)
    out = np.empty((n_samples, lattice.n_pixels), dtype=np.int32)
    for s, z in enumerate(iter_chain(start, kernel, config, rng)):
        out[s] = z
    return out


# --- exact enumeration -------------------------------------------------------


@dataclass(frozen=True)
class ExactDistribution:
    """Exact quantities of the Potts prior (and posterior, if an image was given).

    ``e_t4`` and ``var_t4`` always refer to the prior at ``beta``; posterior
    expectations live in ``posterior_stats`` and ``marginals``.
    """

    log_g: float
    e_t4: float
    var_t4: float
    marginals: np.ndarray | None = None
    log_marginal: float | None = None
    expected_complete: float | None = None
    posterior_t1: np.ndarray | None = None
    posterior_t2: np.ndarray | None = None
    posterior_t3: np.ndarray | None = None
    posterior_t4: float | None = None


def _check_enumerable(lattice: Lattice, n_states: int) -> None:
    if n_states < 1:
        raise ValueError("n_states must be positive")
    if float(n_states) ** lattice.n_pixels > MAX_ENUMERATION:
        raise ValueError(f"{n_states}^{lattice.n_pixels} configurations exceed the enumeration guard {MAX_ENUMERATION}")


def _configurations(lattice: Lattice, n_states: int, chunk: int = 1 << 16):
    n = lattice.n_pixels
    total = n_states**n
    powers = n_states ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % n_states


def energy_histogram(lattice: Lattice, n_states: int) -> np.ndarray:
    """Exact integer count of configurations for each bond count ``0..E``."""
    _check_enumerable(lattice, n_states)
    counts = np.zeros(lattice.n_edges + 1, dtype=np.int64)
    for z in _configurations(lattice, n_states):
        u = np.count_nonzero(z[:, lattice.edge_a] == z[:, lattice.edge_b], axis=1)
        counts += np.bincount(u, minlength=lattice.n_edges + 1)
    return counts


def prior_moments(counts: np.ndarray, beta: float) -> tuple[float, float, float]:
    """``(log g, E[T4], Var[T4])`` from an energy histogram."""
    u = np.arange(counts.size, dtype=float)
    keep = counts > 0
    logw = np.log(counts[keep].astype(float)) + beta * u[keep]
    log_g = float(logsumexp(logw))
    p = np.exp(logw - log_g)
    mean = float(np.sum(p * u[keep]))
    var = float(max(np.sum(p * (u[keep] - mean) ** 2), 0.0))
    return log_g, mean, var


def exact_enumerate(lattice: Lattice, n_states: int, beta: float, image=None, params: ModelParams | None = None) -> ExactDistribution:
    """Exact prior (and optional posterior) quantities by summing all M^N states."""
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    counts = energy_histogram(lattice, n_states)
    log_g, e_t4, var_t4 = prior_moments(counts, beta)
    if image is None:
        return ExactDistribution(log_g, e_t4, var_t4)
    if params is None or params.n_components != n_states:
        raise ValueError("posterior enumeration needs params with n_states components")
    y = check_image(image, lattice).ravel()
    ll = pixel_loglik(y, params)
    n = lattice.n_pixels

    logw_chunks = []
    for z in _configurations(lattice, n_states):
        u = np.count_nonzero(z[:, lattice.edge_a] == z[:, lattice.edge_b], axis=1)
        gauss = ll[np.arange(n)[None, :], z].sum(axis=1)
        logw_chunks.append(gauss + params.beta * u)
    logw = np.concatenate(logw_chunks)
    log_norm = float(logsumexp(logw))
    log_marginal = log_norm - float(logsumexp(np.log(counts[counts > 0]) + params.beta * np.flatnonzero(counts > 0)))

    marg = np.zeros((n, n_states))
    t1 = np.zeros(n_states)
    t2 = np.zeros(n_states)
    t3 = np.zeros(n_states)
    t4 = 0.0
    e_comp = 0.0
    pos = 0
    for z in _configurations(lattice, n_states):
        w = np.exp(logw[pos : pos + len(z)] - log_norm)
        pos += len(z)
        onehot = np.zeros((len(z), n, n_states))
        np.put_along_axis(onehot, z[:, :, None], 1.0, axis=2)
        marg += np.einsum("s,snk->nk", w, onehot)
        u = np.count_nonzero(z[:, lattice.edge_a] == z[:, lattice.edge_b], axis=1)
        t4 += float(np.sum(w * u))
        gauss = ll[np.arange(n)[None, :], z].sum(axis=1)
        e_comp += float(np.sum(w * (gauss + params.beta * u)))
    t1 = marg.sum(axis=0)
    t2 = marg.T @ y
    t3 = marg.T @ (y * y)
    return ExactDistribution(
        log_g, e_t4, var_t4,
        marginals=marg,
        log_marginal=log_marginal,
        expected_complete=e_comp - log_g,
        posterior_t1=t1, posterior_t2=t2, posterior_t3=t3, posterior_t4=t4,
    )


def enumerate_posterior(lattice: Lattice, image, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """All configurations with their exact posterior probabilities.

    Returns ``(configs, probs)`` with ``configs`` of shape ``(M^N, N)``.
    """
    m = params.n_components
    _check_enumerable(lattice, m)
    y = check_image(image, lattice).ravel()
    ll = pixel_loglik(y, params)
    n = lattice.n_pixels
    configs = np.concatenate(list(_configurations(lattice, m))).astype(np.int32)
    u = np.count_nonzero(configs[:, lattice.edge_a] == configs[:, lattice.edge_b], axis=1)
    logw = ll[np.arange(n)[None, :], configs].sum(axis=1) + params.beta * u
    return configs, np.exp(logw - logsumexp(logw))
