"""Lattice geometry, parameter containers and complete-data statistics.

Label fields and intensity images are plain numpy arrays of shape
``(height, width)`` in row-major order.  Labels are stored 0-based
internally (``0..M-1``); file formats and user-facing tables use 1-based
labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
MAX_PIXELS = 2**31 - 1


@dataclass(frozen=True)
class Lattice:
    """2D pixel grid with first-order (4-neighbour) edges and free boundary.

    Pixel ``(r, c)`` has flat index ``r * width + c``.  ``edge_a[e]`` and
    ``edge_b[e]`` are the two endpoints of edge ``e``; horizontal edges come
    first, then vertical ones.
    """

    width: int
    height: int
    edge_a: np.ndarray = field(repr=False)
    edge_b: np.ndarray = field(repr=False)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def n_edges(self) -> int:
        return int(self.edge_a.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def edges(self) -> np.ndarray:
        return np.column_stack([self.edge_a, self.edge_b])

    def neighbors(self, i: int) -> list[int]:
        r, c = divmod(int(i), self.width)
        out = []
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < self.height and 0 <= cc < self.width:
                out.append(rr * self.width + cc)
        return out


def build_lattice(width: int, height: int) -> Lattice:
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise ValueError(f"lattice dimensions must be positive, got {width}x{height}")
    if width * height > MAX_PIXELS:
        raise ValueError(f"lattice {width}x{height} overflows the pixel index range")
    idx = np.arange(width * height, dtype=np.int64).reshape(height, width)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    a.flags.writeable = False
    b.flags.writeable = False
    return Lattice(width, height, a, b)


@dataclass(frozen=True)
class ModelParams:
    """Means, variances and spatial coupling of an M-state model."""

    means: np.ndarray
    variances: np.ndarray
    beta: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).copy()
        variances = np.asarray(self.variances, dtype=float).copy()
        if means.ndim != 1 or means.shape != variances.shape or means.size == 0:
            raise ValueError("means and variances must be non-empty 1-D arrays of equal length")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        if not np.all(variances > 0) or not np.all(np.isfinite(variances)):
            raise ValueError(f"variances must be positive and finite, got {variances}")
        if not (self.beta >= 0) or not np.isfinite(self.beta):
            raise ValueError(f"beta must be a finite nonnegative number, got {self.beta}")
        means.flags.writeable = False
        variances.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_components(self) -> int:
        return int(self.means.size)

    @property
    def sds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def sorted(self) -> tuple["ModelParams", np.ndarray]:
        """Return params with ascending means and the permutation used.

        Ties keep the original component order.
        """
        order = np.argsort(self.means, kind="stable")
        return ModelParams(self.means[order], self.variances[order], self.beta), order

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.means, self.variances, [self.beta]])

    @classmethod
    def from_vector(cls, theta) -> "ModelParams":
        theta = np.asarray(theta, dtype=float)
        m = (theta.size - 1) // 2
        return cls(theta[:m], theta[m : 2 * m], theta[-1])


@dataclass(frozen=True)
class SufficientStats:
    """Complete-data sufficient statistics, possibly Monte Carlo averaged.

    ``t1`` counts, ``t2`` intensity sums, ``t3`` squared-intensity sums per
    component and ``t4`` the number of like-labelled edges.
    """

    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: float

    def __post_init__(self):
        t1, t2, t3 = (np.asarray(a, dtype=float) for a in (self.t1, self.t2, self.t3))
        if not (t1.shape == t2.shape == t3.shape) or t1.ndim != 1:
            raise ValueError("t1, t2 and t3 must be 1-D arrays of equal length")
        if np.any(t1 < 0) or self.t4 < 0:
            raise ValueError("counts must be nonnegative")
        slack = 1e-9 * np.maximum(t3 * t1, 1.0)
        if np.any(t3 * t1 - t2 * t2 < -slack):
            raise ValueError("t3 * t1 >= t2**2 violated")

    @property
    def n_components(self) -> int:
        return int(np.size(self.t1))


def check_image(image, lattice: Lattice | None = None) -> np.ndarray:
    y = np.asarray(image, dtype=float)
    if y.ndim != 2 or y.size == 0:
        raise ValueError(f"image must be a non-empty 2-D array, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("image contains non-finite values")
    if lattice is not None and y.shape != lattice.shape:
        raise ValueError(f"image shape {y.shape} does not match lattice {lattice.shape}")
    return y


def check_labels(labels, lattice: Lattice, n_components: int | None = None) -> np.ndarray:
    z = np.asarray(labels)
    if z.shape != lattice.shape:
        raise ValueError(f"label shape {z.shape} does not match lattice {lattice.shape}")
    if not np.issubdtype(z.dtype, np.integer):
        raise ValueError("labels must be integers")
    if z.min() < 0 or (n_components is not None and z.max() >= n_components):
        raise ValueError(f"labels must lie in 0..{n_components - 1 if n_components else 'M-1'}")
    return z


def potts_energy(labels, lattice: Lattice) -> float:
    """Number of edges whose endpoints carry the same label."""
    z = check_labels(labels, lattice).ravel()
    return float(np.count_nonzero(z[lattice.edge_a] == z[lattice.edge_b]))


def sufficient_stats(image, labels, lattice: Lattice, n_components: int) -> SufficientStats:
    y = check_image(image, lattice).ravel()
    z = check_labels(labels, lattice, n_components).ravel()
    t1 = np.bincount(z, minlength=n_components).astype(float)
    t2 = np.bincount(z, weights=y, minlength=n_components)
    t3 = np.bincount(z, weights=y * y, minlength=n_components)
    t4 = float(np.count_nonzero(z[lattice.edge_a] == z[lattice.edge_b]))
    return SufficientStats(t1, t2, t3, t4)


def pixel_loglik(image, params: ModelParams) -> np.ndarray:
    """Per-pixel Gaussian log-densities, shape ``(N, M)``."""
    y = np.asarray(image, dtype=float).ravel()[:, None]
    mu = params.means[None, :]
    var = params.variances[None, :]
    return -0.5 * (LOG_2PI + np.log(var) + (y - mu) ** 2 / var)


def gaussian_term(image, labels, params: ModelParams) -> float:
    """Sum of per-pixel Gaussian log-densities under a labelling."""
    y = np.asarray(image, dtype=float).ravel()
    z = np.asarray(labels).ravel()
    mu = params.means[z]
    var = params.variances[z]
    return float(-0.5 * np.sum(LOG_2PI + np.log(var) + (y - mu) ** 2 / var))


def complete_loglik(image, labels, params: ModelParams, log_g: float, lattice: Lattice | None = None) -> float:
    """Complete-data log-likelihood given an estimate of ``log g(beta)``."""
    y = check_image(image, lattice)
    if lattice is None:
        lattice = build_lattice(y.shape[1], y.shape[0])
    z = check_labels(labels, lattice, params.n_components)
    return gaussian_term(y, z, params) + params.beta * potts_energy(z, lattice) - float(log_g)


def loglik_from_stats(stats: SufficientStats, params: ModelParams, n_pixels: int, log_g: float) -> float:
    """Complete-data log-likelihood expressed through sufficient statistics."""
    mu, var = params.means, params.variances
    quad = (stats.t3 - 2 * mu * stats.t2 + mu**2 * stats.t1) / var
    gauss = -0.5 * n_pixels * LOG_2PI - float(np.sum(0.5 * stats.t1 * np.log(var) + 0.5 * quad))
    return gauss + params.beta * stats.t4 - float(log_g)
