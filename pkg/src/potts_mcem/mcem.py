"""Monte Carlo EM for the hidden Potts model.

Each iteration draws posterior label fields with Swendsen-Wang sweeps,
averages the complete-data sufficient statistics over them, updates the
Gaussian parameters in closed form and solves ``E_beta[T4] = t4`` for beta on
a prior bond curve estimated once per fit.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .core import Lattice, ModelParams, SufficientStats, build_lattice, check_image, pixel_loglik
from .sampler import ChainConfig, PosteriorKernel, PriorKernel, energy_histogram, iter_chain, prior_moments
from .seeding import as_rng, chain_rng, derive_seed

log = logging.getLogger(__name__)


def critical_beta(n_states: int) -> float:
    """Infinite-lattice transition point ``log(1 + sqrt(M))`` of the Potts model."""
    return float(np.log1p(np.sqrt(n_states)))


def default_beta_grid(n_states: int, beta_max: float = 2.0, step: float = 0.05) -> np.ndarray:
    """Uniform grid on ``[0, beta_max]``, refined around the transition for M >= 5.

    For five or more states the transition is discontinuous, so two extra
    points bracket it closely to keep the integrated curve sharp.
    """
    grid = np.round(np.arange(0.0, beta_max + step / 2, step), 10)
    if n_states >= 5:
        bc = critical_beta(n_states)
        if bc + 0.005 < beta_max:
            grid = np.union1d(grid, [bc - 0.005, bc + 0.005])
    return grid


@dataclass(frozen=True)
class McemConfig:
    max_iters: int = 100
    sample_start: int = 50
    sample_step: int = 10
    sample_cap: int = 500
    beta_grid: tuple | None = None
    curve_samples: int = 100
    curve_burn_in: int = 20
    convergence_tol: float = 0.02
    convergence_window: int = 3
    burn_in: int = 50
    n_chains: int = 1
    beta_init: float = 0.5
    var_floor_frac: float = 1e-6
    extend_grid: bool = True
    beta_grid_limit: float = 6.0
    split_merge_rounds: int = 3
    split_merge_iters: int = 60
    fixed_beta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.convergence_window < 1 or self.n_chains < 1:
            raise ValueError("max_iters, convergence_window and n_chains must be positive")
        if self.sample_start < 1 or self.sample_step < 0 or self.sample_cap < self.sample_start:
            raise ValueError("sample schedule must start positive and be nondecreasing")
        if self.fixed_beta is not None and not self.fixed_beta >= 0:
            raise ValueError("fixed_beta must be nonnegative")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.beta_grid is not None:
            g = np.asarray(self.beta_grid, dtype=float)
            if g.size < 2 or g[0] != 0.0 or np.any(np.diff(g) <= 0):
                raise ValueError("beta_grid must start at 0 and be strictly increasing")

    def samples_at(self, t: int) -> int:
        """Monte Carlo sample size of the E-step at iteration ``t`` (0-based)."""
        return min(self.sample_start + self.sample_step * t, self.sample_cap)

    def grid_for(self, n_states: int) -> np.ndarray:
        if self.beta_grid is not None:
            return np.asarray(self.beta_grid, dtype=float)
        return default_beta_grid(n_states)


# --- initialisation and M1 -----------------------------------------------------


def init_params(image, n_states: int, beta: float = 0.5) -> ModelParams:
    """Evenly spaced means over the data range, every sd = range / (2M)."""
    if n_states < 1:
        raise ValueError("n_states must be positive")
    y = check_image(image)
    lo, hi = float(y.min()), float(y.max())
    span = hi - lo
    if span <= 0:
        raise ValueError(f"cannot initialise from a constant image (all values {lo})")
    means = np.array([(lo + hi) / 2]) if n_states == 1 else np.linspace(lo, hi, n_states)
    sd = span / (2 * n_states)
    return ModelParams(means, np.full(n_states, sd * sd), beta)


def m1_step(stats: SufficientStats, var_floor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Gaussian update.  Empty components come back as NaN."""
    t1 = np.asarray(stats.t1, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(t1 > 0, stats.t2 / t1, np.nan)
        variances = np.where(t1 > 0, stats.t3 / t1 - means**2, np.nan)
    variances = np.where(np.isnan(variances), np.nan, np.maximum(variances, var_floor))
    return means, variances


def _reseed_empty(means, variances, y, params: ModelParams, init_var: float):
    empty = np.isnan(means)
    if not empty.any():
        return means, variances
    # lowest equal-weight mixture density under the current parameters
    ll = pixel_loglik(y, params)
    top = ll.max(axis=1)
    dens = top + np.log(np.exp(ll - top[:, None]).sum(axis=1))
    worst = y.ravel()[np.argsort(dens, kind="stable")]
    for j, k in enumerate(np.flatnonzero(empty)):
        log.warning("component %d collapsed; re-seeding at y=%.4g", k + 1, worst[j])
        means[k] = worst[j]
        variances[k] = init_var
    return means, variances


# --- bond curve and M2 -----------------------------------------------------------


@dataclass(frozen=True)
class BondCurve:
    """Prior expectation and variance of the like-bond count over a beta grid."""

    betas: np.ndarray
    means: np.ndarray
    vars: np.ndarray
    ses: np.ndarray
    monotone_means: np.ndarray
    n_states: int
    n_pixels: int
    n_edges: int

    @property
    def beta_max(self) -> float:
        return float(self.betas[-1])

    def mean_at(self, beta: float) -> float:
        return float(np.interp(beta, self.betas, self.monotone_means))

    def smoothed(self, beta: float) -> tuple[float, float]:
        """``(E[T4], Var[T4])`` at ``beta`` from a 3-point local quadratic."""
        if self.betas.size < 3:
            return self.mean_at(beta), float(np.interp(beta, self.betas, self.vars))
        j = int(np.clip(np.searchsorted(self.betas, beta) - 1, 0, self.betas.size - 3))
        if j + 3 < self.betas.size and abs(self.betas[j + 3] - beta) < abs(self.betas[j] - beta):
            j += 1
        xs = self.betas[j : j + 3]
        mean = float(np.polyval(np.polyfit(xs, self.monotone_means[j : j + 3], 2), beta))
        var = float(np.polyval(np.polyfit(xs, self.vars[j : j + 3], 2), beta))
        mean = min(max(mean, 0.0), float(self.n_edges))
        return mean, max(var, 0.0)


def _make_curve(betas, means, vars_, ses, n_states, lattice: Lattice) -> BondCurve:
    means = np.asarray(means, dtype=float)
    mono = isotonic_regression(means, increasing=True).x
    mono = np.clip(mono, 0.0, lattice.n_edges)
    return BondCurve(np.asarray(betas, float), means, np.asarray(vars_, float), np.asarray(ses, float),
                     mono, n_states, lattice.n_pixels, lattice.n_edges)


def _batch_se(x: np.ndarray, n_batches: int = 10) -> float:
    if x.size < 2 * n_batches:
        return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    usable = x.size - x.size % n_batches
    bm = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(np.std(bm, ddof=1) / np.sqrt(n_batches))


def _curve_point(lattice: Lattice, n_states: int, beta: float, samples: int, burn_in: int, rng) -> tuple[float, float, float]:
    # ordered start above the transition, disordered below; this avoids
    # metastable hysteresis on large lattices when M >= 5
    if beta >= critical_beta(n_states):
        start = np.zeros(lattice.n_pixels, dtype=np.int32)
    else:
        start = rng.integers(0, n_states, lattice.n_pixels).astype(np.int32)
    kernel = PriorKernel(lattice, beta, n_states)
    a, b = lattice.edge_a, lattice.edge_b
    t4 = np.array([np.count_nonzero(z[a] == z[b]) for z in iter_chain(start, kernel, ChainConfig(samples + burn_in, burn_in), rng)],
                  dtype=float)
    return float(t4.mean()), float(t4.var()), _batch_se(t4)


def estimate_bond_curve(lattice: Lattice, n_states: int, beta_grid, curve_samples: int = 100, rng=None,
                        burn_in: int = 20) -> BondCurve:
    """Monte Carlo estimate of ``E_beta[T4]`` and ``Var_beta[T4]`` on a grid.

    The ``beta = 0`` entry is set analytically to ``E / M``.  Grid point
    ``j`` uses chain ``j`` of a seed drawn from ``rng``.
    """
    grid = np.asarray(beta_grid, dtype=float)
    if grid.size < 1 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("beta_grid must start at 0 and be strictly increasing")
    n_edges = lattice.n_edges
    if n_states == 1:
        z = np.zeros(grid.size)
        return _make_curve(grid, np.full(grid.size, float(n_edges)), z, z, 1, lattice)
    seed = int(as_rng(rng).integers(2**63))
    means = np.empty(grid.size)
    vars_ = np.empty(grid.size)
    ses = np.empty(grid.size)
    means[0], vars_[0], ses[0] = n_edges / n_states, n_edges * (n_states - 1) / n_states**2, 0.0
    for j in range(1, grid.size):
        means[j], vars_[j], ses[j] = _curve_point(lattice, n_states, grid[j], curve_samples, burn_in, chain_rng(seed, j))
    return _make_curve(grid, means, vars_, ses, n_states, lattice)


def extend_bond_curve(curve: BondCurve, lattice: Lattice, new_betas, curve_samples: int, rng, burn_in: int = 20) -> BondCurve:
    new_betas = np.asarray(new_betas, dtype=float)
    if new_betas.size == 0 or new_betas[0] <= curve.beta_max:
        raise ValueError("extension points must lie beyond the current grid")
    seed = int(as_rng(rng).integers(2**63))
    pts = [_curve_point(lattice, curve.n_states, b, curve_samples, burn_in, chain_rng(seed, j)) for j, b in enumerate(new_betas)]
    m, v, s = (np.array(x) for x in zip(*pts))
    return _make_curve(np.concatenate([curve.betas, new_betas]), np.concatenate([curve.means, m]),
                       np.concatenate([curve.vars, v]), np.concatenate([curve.ses, s]), curve.n_states, lattice)


def exact_bond_curve(lattice: Lattice, n_states: int, beta_grid) -> BondCurve:
    """Bond curve computed by full enumeration; for tiny lattices only."""
    counts = energy_histogram(lattice, n_states)
    grid = np.asarray(beta_grid, dtype=float)
    mv = np.array([prior_moments(counts, b)[1:] for b in grid])
    zero = grid == 0
    mv[zero, 0] = lattice.n_edges / n_states
    mv[zero, 1] = lattice.n_edges * (n_states - 1) / n_states**2
    return _make_curve(grid, mv[:, 0], mv[:, 1], np.zeros(grid.size), n_states, lattice)


def m2_step(t4: float, curve: BondCurve) -> tuple[float, bool]:
    """Solve ``E_beta[T4] = t4`` by bisection on the monotone interpolant.

    Returns ``(beta, at_boundary)``; targets outside the curve's range are
    clamped to ``0`` or the last grid point.
    """
    if curve.betas.size == 0:
        raise ValueError("empty bond curve")
    lo_val, hi_val = curve.monotone_means[0], curve.monotone_means[-1]
    if t4 <= lo_val:
        if t4 < lo_val:
            log.info("t4=%.3f below the bond curve; beta clamped to 0", t4)
        return 0.0, t4 < lo_val
    if t4 >= hi_val:
        log.warning("t4=%.3f beyond the bond curve (max %.3f); beta clamped to %.3f", t4, hi_val, curve.beta_max)
        return curve.beta_max, True
    lo, hi = 0.0, curve.beta_max
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if curve.mean_at(mid) < t4:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi), False


def log_partition(beta: float, curve: BondCurve) -> float:
    """``log g(beta)`` by integrating the monotone bond curve from zero.

    The integral of the piecewise-linear curve is exact on the grid
    (trapezoid rule) and linear in between.
    """
    if beta < 0 or beta > curve.beta_max + 1e-12:
        raise ValueError(f"beta={beta} outside the bond curve range [0, {curve.beta_max}]")
    base = curve.n_pixels * np.log(curve.n_states)
    b, e = curve.betas, curve.monotone_means
    j = min(int(np.searchsorted(b, beta, side="right")) - 1, b.size - 1)
    total = float(np.sum(0.5 * (e[1 : j + 1] + e[:j]) * np.diff(b[: j + 1])))
    if beta > b[j]:
        total += 0.5 * (e[j] + float(np.interp(beta, b, e))) * (beta - b[j])
    return float(base + total)


# --- E-step and the full loop --------------------------------------------------


def per_sample_stats(y_flat, samples, lattice: Lattice, n_states: int):
    """Sufficient statistics of every sample: ``t1, t2, t3`` of shape (S, M) and ``t4`` of shape (S,)."""
    z = np.asarray(samples).reshape(len(samples), -1)
    s = z.shape[0]
    flat = (z.astype(np.int64) + n_states * np.arange(s)[:, None]).ravel()
    yy = np.broadcast_to(y_flat, z.shape).ravel()
    size = s * n_states
    t1 = np.bincount(flat, minlength=size).reshape(s, n_states).astype(float)
    t2 = np.bincount(flat, weights=yy, minlength=size).reshape(s, n_states)
    t3 = np.bincount(flat, weights=yy * yy, minlength=size).reshape(s, n_states)
    t4 = np.count_nonzero(z[:, lattice.edge_a] == z[:, lattice.edge_b], axis=1).astype(float)
    return t1, t2, t3, t4


def _stats_from_samples(y_flat, samples, lattice: Lattice, n_states: int) -> SufficientStats:
    t1, t2, t3, t4 = per_sample_stats(y_flat, samples, lattice, n_states)
    return SufficientStats(t1.mean(0), t2.mean(0), t3.mean(0), float(t4.mean()))


def sample_logliks(y_flat, samples, lattice: Lattice, params: ModelParams, log_g: float) -> np.ndarray:
    """Complete-data log-likelihood at ``params`` of every sample."""
    t1, t2, t3, t4 = per_sample_stats(y_flat, samples, lattice, params.n_components)
    mu, var = params.means, params.variances
    sq = t3 - 2 * mu * t2 + mu * mu * t1
    gauss = -0.5 * (t1 * np.log(2 * np.pi * var) + sq / var).sum(axis=1)
    return gauss + params.beta * t4 - log_g


def draw_posterior(image, lattice: Lattice, params: ModelParams, n_samples: int, seed: int,
                   burn_in: int = 50, n_chains: int = 1) -> np.ndarray:
    """Pool retained samples of ``n_chains`` independent chains.

    Chain ``c`` uses stream ``chain_rng(seed, c)`` and starts from the
    per-pixel maximum-likelihood labelling.  Samples are split as evenly as
    possible, earlier chains taking the remainder.
    """
    kernel = PosteriorKernel(image, lattice, params)
    start = kernel.initial_state()
    dtype = np.uint8 if params.n_components <= 255 else np.int32
    out = np.empty((n_samples, lattice.n_pixels), dtype=dtype)
    sizes = [n_samples // n_chains + (c < n_samples % n_chains) for c in range(n_chains)]
    pos = 0
    for c, size in enumerate(sizes):
        if size == 0:
            continue
        for z in iter_chain(start, kernel, ChainConfig(burn_in + size, burn_in), chain_rng(seed, c)):
            out[pos] = z
            pos += 1
    return out


def e_step(image, params: ModelParams, lattice: Lattice, n_samples: int, rng, burn_in: int = 50,
           n_chains: int = 1, return_samples: bool = False):
    """Monte Carlo conditional expectation of the sufficient statistics."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    y = check_image(image, lattice)
    seed = int(as_rng(rng).integers(2**63))
    samples = draw_posterior(y, lattice, params, n_samples, seed, burn_in, n_chains)
    stats = _stats_from_samples(y.ravel(), samples, lattice, params.n_components)
    return (stats, samples) if return_samples else stats


@dataclass
class FitResult:
    """Outcome of an MCEM fit; inference fills ``info`` and ``loglik_obs``."""

    params: ModelParams
    samples: np.ndarray
    curve: BondCurve
    trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    beta_at_boundary: bool = False
    seed: int = 0
    seconds: float = 0.0
    info: object | None = None
    loglik_obs: float | None = None
    loglik_se: float | None = None
    restarts: int = 0

    @property
    def n_components(self) -> int:
        return self.params.n_components

    @property
    def n_params(self) -> int:
        return 2 * self.n_components + 1

    @property
    def n_pixels(self) -> int:
        return self.curve.n_pixels

    @property
    def aic(self) -> float | None:
        return None if self.loglik_obs is None else -2.0 * self.loglik_obs + 2.0 * self.n_params

    @property
    def bic(self) -> float | None:
        return None if self.loglik_obs is None else -2.0 * self.loglik_obs + np.log(self.n_pixels) * self.n_params


def _relative_change(new: ModelParams, old: ModelParams, mean_scale: float) -> float:
    dm = np.abs(new.means - old.means) / np.maximum(np.abs(old.means), mean_scale)
    dv = np.abs(new.sds - old.sds) / old.sds
    db = abs(new.beta - old.beta) / max(old.beta, 0.01)
    return float(max(dm.max(), dv.max(), db))


def _fit_single_component(y, lattice, config, seed, t0) -> FitResult:
    span = float(y.max() - y.min())
    var = max(float(y.var()), config.var_floor_frac * span * span, np.finfo(float).tiny)
    params = ModelParams([float(y.mean())], [var], 0.0)
    curve = estimate_bond_curve(lattice, 1, config.grid_for(1))
    trace = [dict(iteration=0, samples=1, means=params.means.tolist(), variances=params.variances.tolist(),
                  beta=0.0, t4=float(lattice.n_edges), boundary=True)]
    samples = np.zeros((1, lattice.n_pixels), dtype=np.uint8)
    return FitResult(params, samples, curve, trace, True, 1, True, seed, time.perf_counter() - t0)


@dataclass
class _Run:
    params: ModelParams
    samples: np.ndarray
    stats: SufficientStats
    curve: BondCurve
    trace: list
    converged: bool
    n_iter: int
    boundary: bool


def _mcem_loop(y, lattice, params, curve, config: McemConfig, seed: int, tag: str, max_iters: int) -> _Run:
    span = float(y.max() - y.min())
    var_floor = config.var_floor_frac * span * span
    init_var = (span / (2 * params.n_components)) ** 2
    trace = []
    calm = 0
    converged = False
    boundary = False
    samples = stats = None
    t = 0
    for t in range(max_iters):
        s_t = config.samples_at(t)
        stats, samples = e_step(y, params, lattice, s_t, chain_rng(derive_seed(seed, f"{tag}estep/{t}")),
                                config.burn_in, config.n_chains, return_samples=True)
        means, variances = m1_step(stats, var_floor)
        means, variances = _reseed_empty(means, variances, y, params, init_var)
        if config.fixed_beta is not None:
            beta, boundary = config.fixed_beta, False
        else:
            beta, boundary = m2_step(stats.t4, curve)
        while boundary and beta > 0 and config.extend_grid and curve.beta_max < config.beta_grid_limit:
            step = float(curve.betas[-1] - curve.betas[-2])
            extra = curve.beta_max + step * np.arange(1, 11)
            extra = extra[extra <= config.beta_grid_limit + 1e-9]
            log.info("extending bond curve to beta=%.2f", extra[-1])
            curve = extend_bond_curve(curve, lattice, extra, config.curve_samples,
                                      chain_rng(derive_seed(seed, f"curve/{curve.betas.size}")), config.curve_burn_in)
            beta, boundary = m2_step(stats.t4, curve)
        new, order = ModelParams(means, variances, beta).sorted()
        samples = np.argsort(order).astype(samples.dtype)[samples]
        trace.append(dict(iteration=t + 1, samples=s_t, means=new.means.tolist(), variances=new.variances.tolist(),
                          beta=new.beta, t4=stats.t4, boundary=boundary))
        change = _relative_change(new, params, 0.01 * span)
        log.debug("%siter %d S=%d beta=%.4f change=%.2e", tag, t + 1, s_t, new.beta, change)
        params = new
        calm = calm + 1 if change < config.convergence_tol else 0
        if calm >= config.convergence_window:
            converged = True
            break
    return _Run(params, samples, stats, curve, trace, converged, t + 1, boundary)


def _score(y_flat, run: _Run, lattice) -> tuple[float, float]:
    """Mean and batch-means SE of the complete log-likelihood over the final samples."""
    values = sample_logliks(y_flat, run.samples, lattice, run.params, log_partition(run.params.beta, run.curve))
    return float(values.mean()), _batch_se(values)


def split_merge_candidate(params: ModelParams, stats: SufficientStats, split_offset: float = 0.6) -> ModelParams | None:
    """Drop the least occupied component and split the widest remaining one.

    The split keeps the first two moments of the widest component: its
    halves sit at ``mu -/+ a`` with variance ``s2 - a^2``, ``a = split_offset * sd``.
    Returns None for fewer than three components.
    """
    m = params.n_components
    if m < 3:
        return None
    drop = int(np.argmin(stats.t1))
    keep = np.delete(np.arange(m), drop)
    widest = keep[int(np.argmax(params.variances[keep]))]
    a = split_offset * params.sds[widest]
    means = params.means.copy()
    variances = params.variances.copy()
    means[drop], means[widest] = means[widest] - a, means[widest] + a
    variances[drop] = variances[widest] = params.variances[widest] - a * a
    return ModelParams(means, variances, params.beta).sorted()[0]


def fit(image, n_states: int, config: McemConfig | None = None, rng=None, init: ModelParams | None = None,
        curve: BondCurve | None = None) -> FitResult:
    """Fit an ``n_states`` hidden Potts model by Monte Carlo EM.

    ``rng`` (a Generator or int) overrides ``config.seed`` as the master seed.
    Sub-streams: ``curve`` for the bond curve, ``estep/<t>`` per iteration
    and ``sm<r>/estep/<t>`` inside split/merge round ``r``.

    After the main loop converges, up to ``config.split_merge_rounds``
    candidates from :func:`split_merge_candidate` are refitted for at most
    ``min(split_merge_iters, max_iters)`` iterations; one is kept
    when its mean complete log-likelihood over the final samples beats the
    incumbent by more than three combined standard errors.
    """
    t0 = time.perf_counter()
    config = config or McemConfig()
    y = check_image(image)
    lattice = build_lattice(y.shape[1], y.shape[0])
    if rng is None:
        seed = config.seed
    elif isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2**63))
    else:
        seed = int(rng)
    if n_states < 1:
        raise ValueError("n_states must be positive")
    if n_states == 1:
        return _fit_single_component(y, lattice, config, seed, t0)

    beta0 = config.beta_init if config.fixed_beta is None else config.fixed_beta
    params = init if init is not None else init_params(y, n_states, beta0)
    if params.n_components != n_states:
        raise ValueError("init has the wrong number of components")
    if curve is None:
        curve = estimate_bond_curve(lattice, n_states, config.grid_for(n_states), config.curve_samples,
                                    chain_rng(derive_seed(seed, "curve")), config.curve_burn_in)
    run = _mcem_loop(y, lattice, params, curve, config, seed, "", config.max_iters)
    trace = list(run.trace)
    restarts = 0
    y_flat = y.ravel()
    for r in range(config.split_merge_rounds):
        candidate = split_merge_candidate(run.params, run.stats)
        if candidate is None:
            break
        alt = _mcem_loop(y, lattice, candidate, run.curve, config, seed, f"sm{r}/",
                        min(config.split_merge_iters, config.max_iters))
        (cur, cur_se), (new, new_se) = _score(y_flat, run, lattice), _score(y_flat, alt, lattice)
        gain = new - cur
        log.info("split/merge round %d: gain %.2f (se %.2f)", r, gain, np.hypot(cur_se, new_se))
        if gain <= 3 * np.hypot(cur_se, new_se):
            break
        run = alt
        trace.extend(dict(tr, iteration=len(trace) + 1 + i) for i, tr in enumerate(alt.trace))
        restarts += 1
    if not run.converged:
        log.warning("MCEM did not converge in %d iterations", len(trace))
    return FitResult(run.params, run.samples, run.curve, trace, run.converged, len(trace), run.boundary, seed,
                     time.perf_counter() - t0, restarts=restarts)
