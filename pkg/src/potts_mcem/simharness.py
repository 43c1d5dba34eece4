"""Simulation scenes, correlated noise, comparison baselines and metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .core import Lattice, ModelParams, build_lattice, check_image, pixel_loglik
from .mcem import BondCurve, McemConfig, m2_step

FWHM_TO_SD = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

# --- scenes -------------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    """Rows ``r0..r1`` and columns ``c0..c1``, inclusive."""

    r0: int
    r1: int
    c0: int
    c1: int

    def mask(self, h, w):
        rr, cc = np.mgrid[:h, :w]
        return (rr >= self.r0) & (rr <= self.r1) & (cc >= self.c0) & (cc <= self.c1)


@dataclass(frozen=True)
class Ellipse:
    row: float
    col: float
    radius_r: float
    radius_c: float

    def mask(self, h, w):
        rr, cc = np.mgrid[:h, :w]
        return ((rr - self.row) / self.radius_r) ** 2 + ((cc - self.col) / self.radius_c) ** 2 <= 1.0


@dataclass(frozen=True)
class Band:
    """Pixels with ``lo <= row - col < hi`` (``anti=False``) or ``lo <= row + col < hi``."""

    lo: float
    hi: float
    anti: bool = False

    def mask(self, h, w):
        rr, cc = np.mgrid[:h, :w]
        d = rr + cc if self.anti else rr - cc
        return (d >= self.lo) & (d < self.hi)


@dataclass(frozen=True)
class LabelMapRegion:
    """Pixels of an explicit 1-based label map equal to ``value``."""

    labels: np.ndarray = field(repr=False)
    value: int = 1

    def mask(self, h, w):
        lab = np.asarray(self.labels)
        if lab.shape != (h, w):
            raise ValueError(f"label map shape {lab.shape} does not match scene {(h, w)}")
        return lab == self.value


@dataclass(frozen=True)
class Full:
    """The whole lattice; used for the mandatory background."""

    def mask(self, h, w):
        return np.ones((h, w), dtype=bool)


@dataclass(frozen=True)
class SceneComponent:
    label: int
    mean: float
    sd: float
    region: object


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    components: tuple

    def paint(self) -> np.ndarray:
        """1-based label map; later components overwrite earlier ones."""
        lab = np.zeros((self.height, self.width), dtype=np.int32)
        for comp in self.components:
            lab[comp.region.mask(self.height, self.width)] = comp.label
        if np.any(lab == 0):
            raise ValueError(f"{int(np.sum(lab == 0))} pixels are not covered by any component")
        return lab

    def component_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(labels, means, sds)`` of the distinct components, sorted by label."""
        seen = {}
        for comp in self.components:
            seen[comp.label] = (comp.mean, comp.sd)
        keys = sorted(seen)
        return np.array(keys), np.array([seen[k][0] for k in keys]), np.array([seen[k][1] for k in keys])


TABLE1_MEANS = (-8.50, -5.95, -4.25, -2.55, -0.85, 0.85, 2.55, 4.25, 5.95, 8.50)


def table1_scene(width: int = 128, height: int = 128, sd: float = 1.0) -> SceneSpec:
    """Ten-component scene with horizontal, vertical, diagonal and curved edges.

    Region geometry is laid out on a 128x128 frame and scaled to other sizes;
    components have roughly equal areas.
    """
    sy, sx = height / 128.0, width / 128.0
    m = TABLE1_MEANS
    regions = [
        (5, Full()),
        (1, Rect(0, round(20 * sy) - 1, 0, round(82 * sx) - 1)),
        (2, Rect(round(20 * sy), round(39 * sy), 0, round(82 * sx) - 1)),
        (4, Rect(0, round(39 * sy), round(82 * sx), width - 1)),
        (3, Band(70 * sy, 10 * height)),
        (6, Band(44 * sy, 70 * sy)),
        (7, Rect(round(101 * sy), height - 1, round(70 * sx), width - 1)),
        (8, Ellipse(64 * sy, 106 * sx, 22 * sy, 21 * sx)),
        (9, Ellipse(68 * sy, 58 * sx, 30 * sy, 30 * sx)),
        (10, Ellipse(68 * sy, 58 * sx, 21 * sy, 21 * sx)),
    ]
    comps = tuple(SceneComponent(k, m[k - 1], sd, reg) for k, reg in regions)
    return SceneSpec(width, height, comps)


def noise_scene(width: int = 128, height: int = 128, mean: float = 0.0, sd: float = 1.0) -> SceneSpec:
    return SceneSpec(width, height, (SceneComponent(1, mean, sd, Full()),))


def generate_scene(spec: SceneSpec, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(true labels (1-based), true mean map, noisy image)``."""
    lab = spec.paint()
    keys, means, sds = spec.component_table()
    idx = np.searchsorted(keys, lab)
    mean_map = means[idx]
    noise = rng.standard_normal(lab.shape) * sds[idx]
    return lab, mean_map, mean_map + noise


# --- correlated noise ----------------------------------------------------------


def gaussian_kernel_1d(fwhm: float) -> np.ndarray:
    sd = fwhm * FWHM_TO_SD
    radius = int(np.ceil(4 * sd))
    x = np.arange(-radius, radius + 1, dtype=float)
    with np.errstate(over="ignore"):  # very narrow kernels collapse to a delta
        k = np.exp(-0.5 * (x / sd) ** 2)
    return k / k.sum()


def gaussian_smooth(image, fwhm: float) -> np.ndarray:
    """Separable Gaussian smoothing with sd ``fwhm / (2 sqrt(2 ln 2))``.

    The kernel is truncated at ``ceil(4 sd)`` and the image is extended by
    half-sample symmetric reflection, which keeps constants fixed and
    preserves the image mean exactly.
    """
    if fwhm < 0 or not np.isfinite(fwhm):
        raise ValueError(f"fwhm must be a nonnegative number, got {fwhm}")
    y = check_image(image)
    if fwhm == 0:
        return y.copy()
    k = gaussian_kernel_1d(fwhm)
    out = correlate1d(y, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


# --- baselines ------------------------------------------------------------------


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


@dataclass
class BaselineResult:
    params: ModelParams
    labels: np.ndarray
    loglik_trace: list
    n_iter: int
    converged: bool


def gmm_em_baseline(image, n_states: int, init: ModelParams, tol: float = 1e-8, max_iters: int = 1000,
                    var_floor: float | None = None) -> BaselineResult:
    """EM for a Gaussian mixture with fixed equal weights ``1/M``; ignores space."""
    y = check_image(image)
    flat = y.ravel()
    if var_floor is None:
        var_floor = 1e-6 * float(np.ptp(flat)) ** 2
    params = ModelParams(init.means, init.variances, 0.0)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        ll = pixel_loglik(flat, params) - np.log(n_states)
        norm = _logsumexp_rows(ll)
        trace.append(float(norm.sum()))
        resp = np.exp(ll - norm[:, None])
        nk = resp.sum(axis=0)
        means = np.where(nk > 0, resp.T @ flat / np.maximum(nk, 1e-300), params.means)
        var = np.where(nk > 0, (resp * (flat[:, None] - means[None, :]) ** 2).sum(axis=0) / np.maximum(nk, 1e-300),
                       params.variances)
        params = ModelParams(means, np.maximum(var, var_floor), 0.0)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-1]):
            converged = True
            break
    ll = pixel_loglik(flat, params) - np.log(n_states)
    trace.append(float(_logsumexp_rows(ll).sum()))
    params, order = params.sorted()
    labels = np.argmax(pixel_loglik(flat, params), axis=1).reshape(y.shape)
    return BaselineResult(params, labels, trace, it, converged)


def neighbor_label_counts(labels_flat: np.ndarray, lattice: Lattice, n_states: int) -> np.ndarray:
    """``(N, M)`` counts of each label among every pixel's neighbours."""
    counts = np.zeros((lattice.n_pixels, n_states))
    a, b = lattice.edge_a, lattice.edge_b
    np.add.at(counts, (a, labels_flat[b]), 1.0)
    np.add.at(counts, (b, labels_flat[a]), 1.0)
    return counts


def zbs_em_baseline(image, lattice: Lattice, n_states: int, init: ModelParams, beta: float | None = None,
                    curve: BondCurve | None = None, tol: float = 1e-6, max_iters: int = 200,
                    var_floor: float | None = None) -> BaselineResult:
    """EM-type fit with a hard-label neighbourhood approximation in the E-step.

    Per iteration: the hard label field is refreshed by conditional-mode
    updates on the two checkerboard colours, per-pixel weights are
    ``phi(y_i; mu_k, s2_k) * exp(beta * #{neighbours labelled k})`` under the
    refreshed field, and means/variances are weighted averages.  ``beta`` is
    held fixed, or when ``beta is None`` re-solved from the hard field's bond
    count on ``curve``.
    """
    y = check_image(image, lattice)
    flat = y.ravel()
    if var_floor is None:
        var_floor = 1e-6 * float(np.ptp(flat)) ** 2
    if beta is None and curve is None:
        raise ValueError("give a fixed beta or a bond curve to update it")
    cur_beta = init.beta if beta is None else float(beta)
    params = ModelParams(init.means, init.variances, cur_beta)
    labels = np.argmax(pixel_loglik(flat, params), axis=1)
    rr, cc = np.divmod(np.arange(lattice.n_pixels), lattice.width)
    colours = [(rr + cc) % 2 == 0, (rr + cc) % 2 == 1]
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        ll = pixel_loglik(flat, params)
        old_labels = labels.copy()
        for colour in colours:
            nb = neighbor_label_counts(labels, lattice, n_states)
            labels = np.where(colour, np.argmax(ll + params.beta * nb, axis=1), labels)
        nb = neighbor_label_counts(labels, lattice, n_states)
        logits = ll + params.beta * nb
        norm = _logsumexp_rows(logits)
        trace.append(float(norm.sum()))
        w = np.exp(logits - norm[:, None])
        nk = w.sum(axis=0)
        means = np.where(nk > 0, w.T @ flat / np.maximum(nk, 1e-300), params.means)
        var = np.where(nk > 0, (w * (flat[:, None] - means[None, :]) ** 2).sum(axis=0) / np.maximum(nk, 1e-300),
                       params.variances)
        if beta is None:
            t4 = float(np.count_nonzero(labels[lattice.edge_a] == labels[lattice.edge_b]))
            cur_beta = m2_step(t4, curve)[0]
        new = ModelParams(means, np.maximum(var, var_floor), cur_beta)
        delta = np.max(np.abs(new.as_vector() - params.as_vector()) / np.maximum(np.abs(params.as_vector()), 1e-3))
        params = new
        if np.array_equal(labels, old_labels) and delta < tol:
            converged = True
            break
    sorted_params, order = params.sorted()
    labels = np.argsort(order)[labels]
    return BaselineResult(sorted_params, labels.reshape(y.shape), trace, it, converged)


# --- metrics ----------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    ss_est_true: float
    ss_obs_true: float
    mcr: float | None
    fpr: float
    fnr: float
    fpr_obs: float
    fnr_obs: float
    tau: float
    mean_errors: np.ndarray | None = None
    sd_errors: np.ndarray | None = None

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("ss_est_true", "ss_obs_true", "mcr", "fpr", "fnr", "fpr_obs", "fnr_obs", "tau")}
        return out


def align_labels(est_labels, est_means, true_means) -> np.ndarray:
    """Map 0-based estimated labels onto 0-based ranks of the true means.

    Equal component counts align rank to rank; otherwise each estimated
    component goes to the true component with the nearest mean.
    """
    est_means = np.asarray(est_means, float)
    true_means = np.asarray(true_means, float)
    est_rank = np.argsort(np.argsort(est_means, kind="stable"), kind="stable")
    if est_means.size == true_means.size:
        mapping = est_rank
    else:
        true_sorted = np.sort(true_means)
        mapping = np.argmin(np.abs(est_means[:, None] - true_sorted[None, :]), axis=1)
    return mapping[np.asarray(est_labels)]


def exceedance_rates(pred_values, true_values, tau: float) -> tuple[float, float]:
    """``(FPR, FNR)`` with positives defined by ``true_values > tau``."""
    truth = np.asarray(true_values) > tau
    pred = np.asarray(pred_values) > tau
    neg = np.count_nonzero(~truth)
    pos = np.count_nonzero(truth)
    fpr = np.count_nonzero(pred & ~truth) / neg if neg else 0.0
    fnr = np.count_nonzero(~pred & truth) / pos if pos else 0.0
    return float(fpr), float(fnr)


def metrics(true_labels, true_mean_map, mean_map, y, tau: float = 5.0, hard_labels=None,
            est_means=None, true_means=None, est_sds=None, true_sds=None) -> MetricsReport:
    """Discrepancy, misclassification and exceedance metrics against the truth.

    ``true_labels`` are 1-based scene labels; ``hard_labels`` are 0-based
    indices into ``est_means``.  MCR is reported only when hard labels are
    given.
    """
    true_mean_map = np.asarray(true_mean_map, float)
    mean_map = np.asarray(mean_map, float)
    y = np.asarray(y, float)
    if not (true_mean_map.shape == mean_map.shape == y.shape == np.shape(true_labels)):
        raise ValueError("truth, estimate and image dimensions differ")
    ss_est = float(np.sum((mean_map - true_mean_map) ** 2))
    ss_obs = float(np.sum((y - true_mean_map) ** 2))
    mcr = None
    mean_err = sd_err = None
    if true_means is None:
        keys = np.unique(true_labels)
        true_means = np.array([true_mean_map[np.asarray(true_labels) == k][0] for k in keys])
    true_means = np.asarray(true_means, float)
    if hard_labels is not None:
        if np.shape(hard_labels) != y.shape:
            raise ValueError("hard label dimensions differ from the image")
        if est_means is None:
            raise ValueError("est_means are needed to align hard labels")
        aligned = align_labels(hard_labels, est_means, true_means)
        keys = np.unique(true_labels)
        order = np.argsort(true_means, kind="stable")
        rank_of_key = np.empty(len(keys), dtype=int)
        rank_of_key[order] = np.arange(len(keys))
        true_rank = rank_of_key[np.searchsorted(keys, true_labels)]
        mcr = float(np.mean(aligned != true_rank))
    if est_means is not None and len(est_means) == len(true_means):
        mean_err = np.sort(np.asarray(est_means, float)) - np.sort(true_means)
        if est_sds is not None and true_sds is not None:
            o_est = np.argsort(est_means, kind="stable")
            o_true = np.argsort(true_means, kind="stable")
            sd_err = np.asarray(est_sds, float)[o_est] - np.asarray(true_sds, float)[o_true]
    fpr, fnr = exceedance_rates(mean_map, true_mean_map, tau)
    fpr_obs, fnr_obs = exceedance_rates(y, true_mean_map, tau)
    return MetricsReport(ss_est, ss_obs, mcr, fpr, fnr, fpr_obs, fnr_obs, float(tau), mean_err, sd_err)


# --- experiments ------------------------------------------------------------------

PRESETS = {
    "paper-table1": dict(width=128, height=128, noise_sd=1.0, m=10, m_range=(6, 16), fwhm=(0.0,)),
    "pure-noise": dict(width=128, height=128, noise_sd=1.0, m=1, m_range=(1, 4), fwhm=(0.0,)),
    "degenerate": dict(width=1, height=1, noise_sd=0.0, m=1, m_range=None, fwhm=(0.0,)),
}
METHODS = ("proposed", "gmm", "zbs")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a simulation run depends on besides the output directory."""

    preset: str = "paper-table1"
    width: int | None = None
    height: int | None = None
    noise_sd: float | None = None
    seed: int = 0
    fwhm: tuple | None = None
    m: int | None = None
    m_range: tuple | None = None
    select: bool = False
    methods: tuple = METHODS
    tau: float = 5.0
    summary_samples: int = 500
    standard_errors: bool = True
    louis_samples: int = 2000
    imputations: int = 20
    label_map: str | None = None
    means: tuple | None = None
    sds: tuple | None = None
    mcem: McemConfig = field(default_factory=McemConfig)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[self.preset]
        for key in ("width", "height", "noise_sd", "fwhm", "m", "m_range"):
            if getattr(self, key) is None and key != "m_range":
                object.__setattr__(self, key, base[key])
        if self.m_range is None and base["m_range"] is not None and self.select:
            object.__setattr__(self, "m_range", base["m_range"])
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if not np.isfinite(self.tau):
            raise ValueError("tau must be finite")
        if any(f < 0 for f in self.fwhm):
            raise ValueError("fwhm values must be nonnegative")
        if self.m < 1 or self.width < 1 or self.height < 1 or self.noise_sd < 0:
            raise ValueError("m, width and height must be positive and noise_sd nonnegative")
        if self.m_range is not None and (len(self.m_range) != 2 or not 1 <= self.m_range[0] <= self.m_range[1]):
            raise ValueError("m_range must be 'a..b' with 1 <= a <= b")
        if self.label_map is not None and (self.means is None or self.sds is None):
            raise ValueError("label_map needs means and sds")

    def scene(self) -> SceneSpec:
        if self.label_map is not None:
            from .formats import read_labels

            lab = read_labels(self.label_map)
            keys = np.unique(lab)
            if len(self.means) < keys.max() or len(self.sds) < keys.max() or keys.min() < 1:
                raise ValueError("label map uses labels without a mean and sd")
            comps = tuple(SceneComponent(int(k), float(self.means[k - 1]), float(self.sds[k - 1]),
                                         LabelMapRegion(lab, int(k))) for k in keys)
            return SceneSpec(lab.shape[1], lab.shape[0], comps)
        if self.preset == "paper-table1":
            return table1_scene(self.width, self.height, self.noise_sd)
        mean = 1.0 if self.preset == "degenerate" else 0.0
        return noise_scene(self.width, self.height, mean, self.noise_sd)


def _parse_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError(f"range {text!r} must look like 'a..b'")
    return int(lo), int(hi)


def _parse_list(text: str, conv=float) -> tuple:
    return tuple(conv(v.strip()) for v in text.split(",") if v.strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_EXPERIMENT_KEYS = {
    "preset": str, "width": int, "height": int, "noise_sd": float, "seed": int, "fwhm": _parse_list,
    "m": int, "m_range": _parse_range, "select": _parse_bool, "methods": lambda s: _parse_list(s, str),
    "tau": float, "summary_samples": int, "standard_errors": _parse_bool, "louis_samples": int,
    "imputations": int,
}
_SCENE_KEYS = {"label_map": str, "means": _parse_list, "sds": _parse_list}


def parse_experiment_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse ``[experiment]``, ``[scene]`` and ``[mcem]`` sections of ``key = value`` lines.

    ``#`` starts a comment.  Unknown sections or keys are errors.  A relative
    ``label_map`` path is resolved against ``base_dir``.
    """
    import configparser
    from pathlib import Path

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"bad config: {exc}") from exc
    mcem_fields = {f.name: f.type for f in McemConfig.__dataclass_fields__.values()}
    kwargs, mcem_kwargs = {}, {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            try:
                if section == "experiment" and key in _EXPERIMENT_KEYS:
                    kwargs[key] = _EXPERIMENT_KEYS[key](raw)
                elif section == "scene" and key in _SCENE_KEYS:
                    kwargs[key] = _SCENE_KEYS[key](raw)
                    if key == "label_map" and base_dir is not None:
                        kwargs[key] = str(Path(base_dir) / raw) if not Path(raw).is_absolute() else raw
                elif section == "mcem" and key in mcem_fields and key != "seed":
                    kind = mcem_fields[key]
                    if key == "beta_grid":
                        mcem_kwargs[key] = _parse_list(raw)
                    elif "bool" in str(kind):
                        mcem_kwargs[key] = _parse_bool(raw)
                    elif "int" in str(kind):
                        mcem_kwargs[key] = int(raw)
                    else:
                        mcem_kwargs[key] = float(raw)
                else:
                    raise ValueError(f"unknown key {key!r} in section [{section}]")
            except ValueError as exc:
                raise ValueError(f"[{section}] {key}: {exc}") from exc
    return ExperimentConfig(**kwargs, mcem=McemConfig(**mcem_kwargs))


def _fmt_fwhm(f: float) -> str:
    return ("%g" % f).replace(".", "p")


def _hard_mean_map(params: ModelParams, labels) -> np.ndarray:
    return params.means[np.asarray(labels)]


def run_experiment(config: ExperimentConfig, out_dir, workers: int = 1, log_errors=None) -> list:
    """Generate, optionally smooth, fit each method and score against the truth.

    Writes ``params.csv``, ``selection.csv``, ``metrics.csv``, ``trace.csv``,
    ``errors.csv`` and PGM maps under ``out_dir``; returns the written paths.
    A failing step is recorded in ``errors.csv`` and the run goes on.
    """
    from pathlib import Path

    from . import formats
    from .inference import assess_fit, posterior_summary, sd_standard_errors, select_model, standard_errors
    from .mcem import fit, init_params
    from .seeding import chain_rng, derive_seed

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    spec = config.scene()
    true_labels, true_mean_map, y0 = generate_scene(spec, chain_rng(derive_seed(config.seed, "scene")))
    _, true_means, true_sds = spec.component_table()
    written += formats.write_labels(out / "truth_labels.pgm", true_labels)
    written.append(formats.write_grid(out / "truth_mean.csv", true_mean_map))
    written += formats.render_map(out / "truth_mean.pgm", true_mean_map)

    params_rows, sel_rows, metric_rows, trace_rows, errors = [], [], [], [], []
    lattice = build_lattice(spec.width, spec.height)
    for f in config.fwhm:
        tag = _fmt_fwhm(f)
        y = gaussian_smooth(y0, f)
        written.append(formats.write_grid(out / f"observed_fwhm{tag}.csv", y))
        written += formats.render_map(out / f"observed_fwhm{tag}.pgm", y)
        m = config.m
        if config.m_range is not None:
            try:
                sel = select_model(y, range(config.m_range[0], config.m_range[1] + 1), config.mcem,
                                   derive_seed(config.seed, f"select/fwhm={f}"), config.louis_samples,
                                   config.imputations, workers)
                for row in sel.table:
                    sel_rows.append(dict(fwhm=f, **row, best_aic=sel.best_aic, best_bic=sel.best_bic))
                if sel.best_bic is not None:
                    m = sel.best_bic
            except Exception as exc:
                errors.append(dict(fwhm=f, step="select", error=f"{type(exc).__name__}: {exc}"))
        proposed_beta = None
        for method in config.methods:
            try:
                span = float(np.ptp(y))
                if span > 0:
                    init = init_params(y, m)
                else:
                    init = ModelParams(np.full(m, float(y.mean())), np.full(m, np.finfo(float).tiny), 0.5)
                note = ""
                se_mu = se_sd = np.full(m, np.nan)
                se_beta = float("nan")
                if method == "proposed":
                    res = fit(y, m, config.mcem, rng=derive_seed(config.seed, f"fit/fwhm={f}"))
                    params = res.params
                    proposed_beta = params.beta
                    if config.standard_errors and m > 1:
                        assess_fit(y, res, config.louis_samples, config.imputations)
                        try:
                            se = standard_errors(res.info)
                            se_mu, se_sd, se_beta = se[:m], sd_standard_errors(params, se), float(se[-1])
                        except ArithmeticError as exc:
                            errors.append(dict(fwhm=f, step="standard_errors", error=str(exc)))
                    summ = posterior_summary(y, params, config.summary_samples,
                                             chain_rng(derive_seed(config.seed, f"summary/fwhm={f}")))
                    mean_map, sd_map, hard = summ.mean_map, summ.sd_map, summ.mode_labels
                    written += formats.render_map(out / f"sd_proposed_fwhm{tag}.pgm", sd_map)
                    for tr in res.trace:
                        for k, (mu, v) in enumerate(zip(tr["means"], tr["variances"]), start=1):
                            trace_rows.append(dict(fwhm=f, iteration=tr["iteration"], samples=tr["samples"],
                                                   t4=tr["t4"], beta=tr["beta"], k=k, mean=mu, sd=float(np.sqrt(v))))
                    note = "converged" if res.converged else "not converged"
                elif method == "gmm":
                    if span == 0:
                        params, hard = ModelParams(init.means, init.variances, 0.0), np.zeros(y.shape, dtype=int)
                    else:
                        base = gmm_em_baseline(y, m, init)
                        params, hard = base.params, base.labels
                    mean_map = _hard_mean_map(params, hard)
                else:
                    beta = proposed_beta if proposed_beta is not None else init.beta
                    note = "beta fixed at the proposed estimate" if proposed_beta is not None else "beta fixed at 0.5"
                    if span == 0:
                        params, hard = ModelParams(init.means, init.variances, beta), np.zeros(y.shape, dtype=int)
                    else:
                        base = zbs_em_baseline(y, lattice, m, init, beta=beta)
                        params, hard = base.params, base.labels
                    mean_map = _hard_mean_map(params, hard)
                rep = metrics(true_labels, true_mean_map, mean_map, y, config.tau, hard, params.means,
                              true_means, params.sds, true_sds)
                metric_rows.append(dict(fwhm=f, method=method, M=m, **rep.as_dict(), note=note))
                for k in range(m):
                    params_rows.append(dict(fwhm=f, method=method, parameter="mu", k=k + 1,
                                            estimate=params.means[k], se=se_mu[k]))
                for k in range(m):
                    params_rows.append(dict(fwhm=f, method=method, parameter="sigma", k=k + 1,
                                            estimate=params.sds[k], se=se_sd[k]))
                params_rows.append(dict(fwhm=f, method=method, parameter="beta", k=0, estimate=params.beta, se=se_beta))
                written += formats.render_map(out / f"mean_{method}_fwhm{tag}.pgm", mean_map)
                written += formats.write_labels(out / f"labels_{method}_fwhm{tag}.pgm", np.asarray(hard) + 1)
            except Exception as exc:
                errors.append(dict(fwhm=f, step=method, error=f"{type(exc).__name__}: {exc}"))
    written.append(formats.write_table(out / "params.csv", params_rows,
                                       ["fwhm", "method", "parameter", "k", "estimate", "se"]))
    written.append(formats.write_table(out / "selection.csv", sel_rows,
                                       ["fwhm", "M", "loglik_obs", "loglik_se", "AIC", "BIC", "converged", "seconds",
                                        "error", "best_aic", "best_bic"]))
    written.append(formats.write_table(out / "metrics.csv", metric_rows,
                                       ["fwhm", "method", "M", "ss_est_true", "ss_obs_true", "mcr", "fpr", "fnr",
                                        "fpr_obs", "fnr_obs", "tau", "note"]))
    written.append(formats.write_table(out / "trace.csv", trace_rows,
                                       ["fwhm", "iteration", "samples", "t4", "beta", "k", "mean", "sd"]))
    written.append(formats.write_table(out / "errors.csv", errors, ["fwhm", "step", "error"]))
    return [Path(p) for p in written]
