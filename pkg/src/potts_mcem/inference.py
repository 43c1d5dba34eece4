"""Standard errors, observed log-likelihood, model choice and pixel summaries."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Lattice, ModelParams, build_lattice, check_image, complete_loglik
from .mcem import BondCurve, FitResult, McemConfig, draw_posterior, fit, log_partition, per_sample_stats
from .sampler import ChainConfig, PosteriorKernel, iter_chain
from .seeding import as_rng, chain_rng, derive_seed

log = logging.getLogger(__name__)


class NotPositiveDefinite(ArithmeticError):
    """Raised when an information matrix cannot be inverted as a covariance."""

    def __init__(self, eigenvalue: float):
        super().__init__(f"information matrix is not positive definite (smallest eigenvalue {eigenvalue:.6g})")
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class ObservedInformation:
    """Observed information in the order ``(mu_1..mu_M, s2_1..s2_M, beta)``.

    ``estimable`` masks coordinates the data identify; beta is dropped when
    the prior bond count has zero variance (one component).
    """

    matrix: np.ndarray
    estimable: np.ndarray
    min_eigenvalue: float

    @property
    def positive_definite(self) -> bool:
        return self.min_eigenvalue > 0

    @property
    def n_components(self) -> int:
        return (self.matrix.shape[0] - 1) // 2


def louis_from_samples(image, params: ModelParams, samples, lattice: Lattice, e_t4: float, var_t4: float,
                       weights=None) -> ObservedInformation:
    """Louis identity from label configurations and optional probability weights.

    ``e_t4`` and ``var_t4`` are the prior mean and variance of the bond
    count at ``params.beta``; the variance is the complete-data beta
    information and the mean centres the beta score.
    """
    y = check_image(image, lattice).ravel()
    z = np.asarray(samples).reshape(-1, lattice.n_pixels)
    m = params.n_components
    w = np.full(z.shape[0], 1.0 / z.shape[0]) if weights is None else np.asarray(weights, float) / np.sum(weights)
    mu, var = params.means, params.variances
    t1, t2, t3, t4 = per_sample_stats(y, z, lattice, m)
    s1 = t2 - mu * t1
    s2 = t3 - 2 * mu * t2 + mu**2 * t1
    score = np.hstack([s1 / var, -t1 / (2 * var) + s2 / (2 * var**2), (t4 - e_t4)[:, None]])

    n_bar, s1_bar, s2_bar = w @ t1, w @ s1, w @ s2
    p = 2 * m + 1
    neg_hess = np.zeros((p, p))
    idx = np.arange(m)
    neg_hess[idx, idx] = n_bar / var
    neg_hess[idx, m + idx] = neg_hess[m + idx, idx] = s1_bar / var**2
    neg_hess[m + idx, m + idx] = -n_bar / (2 * var**2) + s2_bar / var**3
    neg_hess[-1, -1] = var_t4

    mean_score = w @ score
    second = (score * w[:, None]).T @ score
    info = neg_hess - second + np.outer(mean_score, mean_score)
    info = 0.5 * (info + info.T)
    estimable = np.ones(p, dtype=bool)
    if var_t4 <= 0:
        estimable[-1] = False
    sub = info[np.ix_(estimable, estimable)]
    min_eig = float(np.linalg.eigvalsh(sub).min())
    if min_eig <= 0:
        log.warning("observed information not positive definite (min eigenvalue %.3g)", min_eig)
    return ObservedInformation(info, estimable, min_eig)


def louis_information(image, params: ModelParams, curve: BondCurve, n_samples: int = 2000, rng=None,
                      burn_in: int = 50, samples=None) -> ObservedInformation:
    """Monte Carlo observed information at ``params`` via Louis' identity.

    Draws ``n_samples`` posterior fields unless ``samples`` are supplied.
    The beta block uses the curve's locally smoothed mean and variance.
    """
    y = check_image(image)
    lattice = build_lattice(y.shape[1], y.shape[0])
    if params.beta > curve.beta_max:
        raise ValueError(f"beta={params.beta} lies beyond the bond curve (max {curve.beta_max})")
    if samples is None:
        seed = int(as_rng(rng).integers(2**63))
        samples = draw_posterior(y, lattice, params, n_samples, seed, burn_in)
    e_t4, var_t4 = curve.smoothed(params.beta)
    if curve.n_states == 1:
        e_t4, var_t4 = float(lattice.n_edges), 0.0
    return louis_from_samples(y, params, samples, lattice, e_t4, var_t4)


def standard_errors(info: ObservedInformation) -> np.ndarray:
    """Square roots of the diagonal of the inverse information.

    Coordinates outside ``info.estimable`` get NaN.
    """
    mask = info.estimable
    sub = info.matrix[np.ix_(mask, mask)]
    eig = np.linalg.eigvalsh(sub)
    if eig.min() <= 0:
        raise NotPositiveDefinite(float(eig.min()))
    out = np.full(info.matrix.shape[0], np.nan)
    out[mask] = np.sqrt(np.diag(np.linalg.inv(sub)))
    return out


def sd_standard_errors(params: ModelParams, se: np.ndarray) -> np.ndarray:
    """Delta-method SEs of the component sds from SEs of the variances."""
    m = params.n_components
    return se[m : 2 * m] / (2 * params.sds)


@dataclass(frozen=True)
class LoglikEstimate:
    value: float
    se: float
    draws: np.ndarray
    clamped: int = 0


def _draw_params(center: ModelParams, cov: np.ndarray | None, mask: np.ndarray, var_floor: float,
                 beta_max: float, rng: np.random.Generator) -> tuple[ModelParams, bool]:
    theta0 = center.as_vector()
    if cov is None:
        return center, False
    m = center.n_components
    for _ in range(100):
        theta = theta0.copy()
        theta[mask] = rng.multivariate_normal(theta0[mask], cov)
        if np.all(theta[m : 2 * m] > var_floor) and 0 <= theta[-1] <= beta_max:
            return ModelParams.from_vector(theta), False
    theta[m : 2 * m] = np.maximum(theta[m : 2 * m], var_floor)
    theta[-1] = min(max(theta[-1], 0.0), beta_max)
    return ModelParams.from_vector(theta), True


def observed_loglik(image, params: ModelParams, info: ObservedInformation | None, curve: BondCurve,
                    n_imputations: int = 20, rng=None, burn_in: int = 50) -> LoglikEstimate:
    """Multiple-imputation estimate of the observed log-likelihood at ``params``.

    Each imputation draws parameters from ``N(params, info^-1)``, one label
    field from the posterior under those parameters, and evaluates the
    complete-data log-likelihood at ``params`` itself.  Parameter draws with
    a variance below the floor or beta outside ``[0, beta_max]`` are redrawn
    up to 100 times, then clamped.  Imputation ``d`` uses chain ``d`` of one
    derived seed.
    """
    if info is None:
        raise ValueError("observed_loglik needs an observed information matrix")
    if n_imputations < 1:
        raise ValueError("n_imputations must be positive")
    y = check_image(image)
    lattice = build_lattice(y.shape[1], y.shape[0])
    rng = as_rng(rng)
    seed = int(rng.integers(2**63))
    log_g = log_partition(params.beta, curve)
    mask = info.estimable
    cov = None
    if info.positive_definite:
        cov = np.linalg.inv(info.matrix[np.ix_(mask, mask)])
        cov = 0.5 * (cov + cov.T)
    else:
        log.warning("information not positive definite; imputing at the point estimate")
    var_floor = 1e-6 * float(np.ptp(y)) ** 2
    values = np.empty(n_imputations)
    clamped = 0
    for d in range(n_imputations):
        sub = chain_rng(seed, d)
        theta_d, was_clamped = _draw_params(params, cov, mask, var_floor, curve.beta_max, sub)
        clamped += was_clamped
        kernel = PosteriorKernel(y, lattice, theta_d)
        z = None
        for z in iter_chain(kernel.initial_state(), kernel, ChainConfig(burn_in + 1, burn_in), sub):
            pass
        values[d] = complete_loglik(y, z.reshape(y.shape), params, log_g, lattice)
    if clamped:
        log.warning("%d of %d imputation draws were clamped to valid parameters", clamped, n_imputations)
    se = float(values.std(ddof=1) / np.sqrt(n_imputations)) if n_imputations > 1 else float("nan")
    return LoglikEstimate(float(values.mean()), se, values, clamped)


def assess_fit(image, result: FitResult, n_samples: int = 2000, n_imputations: int = 20, seed: int | None = None,
               burn_in: int = 50) -> FitResult:
    """Attach Louis information and the observed log-likelihood to a fit."""
    seed = result.seed if seed is None else seed
    info = louis_information(image, result.params, result.curve, n_samples, chain_rng(derive_seed(seed, "louis")),
                             burn_in)
    est = observed_loglik(image, result.params, info, result.curve, n_imputations,
                          chain_rng(derive_seed(seed, "imputation")), burn_in)
    result.info = info
    result.loglik_obs = est.value
    result.loglik_se = est.se
    return result


# --- model selection -----------------------------------------------------------


@dataclass
class SelectionResult:
    best_aic: int | None
    best_bic: int | None
    table: list
    fits: dict = field(default_factory=dict, repr=False)


def _select_one(image, m, config, seed, louis_samples, n_imputations):
    t0 = time.perf_counter()
    try:
        res = fit(image, m, config, rng=seed)
        assess_fit(image, res, louis_samples, n_imputations, seed)
        row = dict(M=m, loglik_obs=res.loglik_obs, loglik_se=res.loglik_se, AIC=res.aic, BIC=res.bic,
                   converged=res.converged, seconds=time.perf_counter() - t0, error="")
        res.samples = res.samples[:0]
        return row, res
    except Exception as exc:  # recorded per M, excluded from the choice
        log.exception("fit with M=%d failed", m)
        row = dict(M=m, loglik_obs=float("nan"), loglik_se=float("nan"), AIC=float("nan"), BIC=float("nan"),
                   converged=False, seconds=time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
        return row, None


def select_model(image, m_range, config: McemConfig | None = None, seed: int = 0, louis_samples: int = 2000,
                 n_imputations: int = 20, workers: int = 1) -> SelectionResult:
    """Fit every M independently and choose by AIC and BIC.

    The fit for ``M`` uses master seed ``derive_seed(seed, f"select/M={M}")``,
    so results do not depend on ``workers``.  Ties go to the smaller M.
    """
    ms = sorted(set(int(m) for m in m_range))
    if not ms:
        raise ValueError("empty range of component counts")
    config = config or McemConfig()
    y = check_image(image)
    seeds = {m: derive_seed(seed, f"select/M={m}") for m in ms}
    if workers > 1 and len(ms) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_select_one, y, m, config, seeds[m], louis_samples, n_imputations) for m in ms]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_select_one(y, m, config, seeds[m], louis_samples, n_imputations) for m in ms]
    table = [row for row, _ in outcomes]
    fits = {row["M"]: res for row, res in outcomes if res is not None}

    def best(key):
        ok = [r for r in table if np.isfinite(r[key])]
        if not ok:
            return None
        return min(ok, key=lambda r: (r[key], r["M"]))["M"]

    return SelectionResult(best("AIC"), best("BIC"), table, fits)


# --- pixel-level summaries ---------------------------------------------------------


@dataclass(frozen=True)
class PosteriorSummary:
    mean_map: np.ndarray
    sd_map: np.ndarray
    sample_count: int
    mode_labels: np.ndarray
    label_counts: np.ndarray = field(repr=False)


def summarize_samples(samples, params: ModelParams, shape) -> PosteriorSummary:
    z = np.asarray(samples).reshape(len(samples), -1)
    s, n = z.shape
    m = params.n_components
    counts = np.bincount((z.astype(np.int64) + m * np.arange(n)[None, :]).ravel(), minlength=n * m).reshape(n, m)
    mu = params.means
    mean = counts @ mu / s
    second = counts @ (mu * mu) / s
    sd = np.sqrt(np.maximum(second - mean * mean, 0.0))
    sd[counts.max(axis=1) == s] = 0.0
    mode = np.argmax(counts, axis=1)
    return PosteriorSummary(mean.reshape(shape), sd.reshape(shape), s, mode.reshape(shape), counts)


def posterior_summary(image, params: ModelParams, n_samples: int = 500, rng=None, burn_in: int = 50) -> PosteriorSummary:
    """Per-pixel posterior mean and sd of the component mean, plus the modal label."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    y = check_image(image)
    lattice = build_lattice(y.shape[1], y.shape[0])
    seed = int(as_rng(rng).integers(2**63))
    samples = draw_posterior(y, lattice, params, n_samples, seed, burn_in)
    return summarize_samples(samples, params, y.shape)


@dataclass(frozen=True)
class ThresholdResult:
    exceed: np.ndarray
    fraction: float
    region_fractions: dict


def threshold_map(values, tau: float, masks: dict | None = None) -> ThresholdResult:
    """Mark pixels above ``tau`` and report the exceedance fraction per region."""
    if not np.isfinite(tau):
        raise ValueError(f"threshold must be finite, got {tau}")
    v = np.asarray(values, dtype=float)
    exceed = v > tau
    regions = {}
    for name, mask in (masks or {}).items():
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != v.shape:
            raise ValueError(f"mask {name!r} has shape {mask.shape}, expected {v.shape}")
        n = np.count_nonzero(mask)
        regions[name] = float(np.count_nonzero(exceed & mask) / n) if n else float("nan")
    return ThresholdResult(exceed, float(exceed.mean()), regions)
