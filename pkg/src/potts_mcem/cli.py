"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, formats
from .core import ModelParams
from .formats import FormatError
from .inference import (
    NotPositiveDefinite,
    assess_fit,
    posterior_summary,
    sd_standard_errors,
    select_model,
    standard_errors,
    threshold_map,
)
from .mcem import McemConfig, fit
from .seeding import chain_rng, derive_seed
from .simharness import FWHM_TO_SD, ExperimentConfig, generate_scene, gaussian_smooth, metrics, parse_experiment_config, run_experiment

OUT_ENV = "POTTS_MCEM_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("potts_mcem")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """``manifest.json`` in the output directory, written at start and on completion."""

    def __init__(self, out: Path, command: str, args: argparse.Namespace):
        self.path = out / "manifest.json"
        self.data = {
            "command": command,
            "argv": sys.argv[1:],
            "config": getattr(args, "config", None),
            "seed": args.seed,
            "version": __version__,
            "start": _now(),
            "end": None,
            "status": "running",
            "output_dir": str(out),
            "outputs": [],
            "notes": {},
        }
        self.out = out
        self.write()

    def note(self, key, value):
        self.data["notes"][key] = value

    def finish(self, outputs, status: str):
        rel = sorted({str(Path(p).resolve().relative_to(self.out.resolve())) for p in outputs})
        self.data.update(end=_now(), status=status, outputs=rel)
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n")


def _out_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUT_ENV, "runs")) / f"{command}-seed{args.seed}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"cannot write to output directory {out}: {exc}") from exc
    return out


def _parse_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        a, b = int(lo), int(hi) if sep else int(lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from None
    if a < 1 or b < a:
        raise argparse.ArgumentTypeError(f"empty or invalid range {text!r}")
    return range(a, b + 1)


def _finite(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
    return v


def _nonneg(text: str) -> float:
    v = _finite(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**63:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**63)")
    return v


def _mcem_config(args) -> McemConfig:
    kw = {}
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    if args.tol is not None:
        kw["convergence_tol"] = args.tol
    if args.chains is not None:
        kw["n_chains"] = args.chains
    return McemConfig(seed=args.seed, **kw)


def _write_map(out: Path, stem: str, values) -> list:
    return [formats.write_grid(out / f"{stem}.csv", values), *formats.render_map(out / f"{stem}.pgm", values)]


# --- commands ---------------------------------------------------------------------


def cmd_simulate(args, out: Path, manifest: Manifest) -> tuple[list, int]:
    if args.config:
        cfg = parse_experiment_config(Path(args.config).read_text(), Path(args.config).parent)
    else:
        cfg = ExperimentConfig(preset=args.preset, seed=args.seed)
    fwhms = tuple(args.fwhm) if args.fwhm else cfg.fwhm
    spec = cfg.scene()
    labels, mean_map, y0 = generate_scene(spec, chain_rng(derive_seed(args.seed, "scene")))
    written = [*formats.write_labels(out / "truth_labels.pgm", labels), *_write_map(out, "truth_mean", mean_map)]
    _, means, sds = spec.component_table()
    written.append(formats.write_table(out / "components.csv",
                                       [dict(k=k + 1, mean=m, sd=s) for k, (m, s) in enumerate(zip(means, sds))]))
    kernels = {}
    for f in fwhms:
        tag = ("%g" % f).replace(".", "p")
        written += _write_map(out, f"observed_fwhm{tag}", gaussian_smooth(y0, f))
        kernels["%g" % f] = f * FWHM_TO_SD
    manifest.note("kernel_sd", kernels)
    return written, EXIT_OK


def cmd_fit(args, out: Path, manifest: Manifest) -> tuple[list, int]:
    y = formats.load_image(args.image)
    res = fit(y, args.M, _mcem_config(args))
    p = res.params
    code = EXIT_OK
    m = p.n_components
    se = np.full(2 * m + 1, np.nan)
    if args.se:
        assess_fit(y, res, args.louis_samples, args.imputations)
        try:
            se = standard_errors(res.info)
        except NotPositiveDefinite as exc:
            manifest.note("information_error", str(exc))
            log.error("%s", exc)
            code = EXIT_NUMERIC
    se_sd = sd_standard_errors(p, se)
    rows = [dict(k=k + 1, mu=p.means[k], sigma=p.sds[k], se_mu=se[k], se_sigma=se_sd[k]) for k in range(m)]
    written = [formats.write_table(out / "params.csv", rows, ["k", "mu", "sigma", "se_mu", "se_sigma"])]
    brow = dict(beta=p.beta, se_beta=se[-1], at_boundary=res.beta_at_boundary, converged=res.converged,
                iterations=res.n_iter, loglik_obs=res.loglik_obs, loglik_se=res.loglik_se, aic=res.aic, bic=res.bic)
    written.append(formats.write_table(out / "beta.csv", [brow]))
    trace = [dict(iteration=t["iteration"], samples=t["samples"], t4=t["t4"], beta=t["beta"], k=k + 1, mean=mu,
                  sd=float(np.sqrt(v)))
             for t in res.trace for k, (mu, v) in enumerate(zip(t["means"], t["variances"]))]
    written.append(formats.write_table(out / "trace.csv", trace,
                                       ["iteration", "samples", "t4", "beta", "k", "mean", "sd"]))
    summ = posterior_summary(y, p, args.summary, chain_rng(derive_seed(args.seed, "summary")))
    written += _write_map(out, "mean_map", summ.mean_map)
    written += _write_map(out, "sd_map", summ.sd_map)
    written += formats.write_labels(out / "labels.pgm", summ.mode_labels + 1)
    manifest.note("converged", res.converged)
    if not res.converged:
        log.warning("fit did not converge in %d iterations", res.n_iter)
        if not args.allow_nonconverged:
            code = EXIT_NUMERIC
    return written, code


def cmd_select(args, out: Path, manifest: Manifest) -> tuple[list, int]:
    y = formats.load_image(args.image)
    res = select_model(y, args.M_range, _mcem_config(args), args.seed, args.louis_samples, args.imputations,
                       args.threads)
    rows = [dict(r, chosen_aic=r["M"] == res.best_aic, chosen_bic=r["M"] == res.best_bic) for r in res.table]
    cols = ["M", "loglik_obs", "loglik_se", "AIC", "BIC", "converged", "seconds", "chosen_aic", "chosen_bic", "error"]
    written = [formats.write_table(out / "selection.csv", rows, cols)]
    manifest.note("best_aic", res.best_aic)
    manifest.note("best_bic", res.best_bic)
    if res.best_aic is None:
        log.error("every fit failed")
        return written, EXIT_NUMERIC
    return written, EXIT_OK


def _estimate_files(d: Path):
    if (d / "mean_map.csv").exists():
        mean_map = formats.read_grid(d / "mean_map.csv")
        labels = formats.read_labels(d / "labels.pgm") - 1 if (d / "labels.pgm").exists() else None
        means = None
        if (d / "params.csv").exists():
            means = np.array([float(r["mu"]) for r in formats.read_table(d / "params.csv")])
        return mean_map, labels, means
    if (d / "truth_mean.csv").exists():
        mean_map = formats.read_grid(d / "truth_mean.csv")
        lab = formats.read_labels(d / "truth_labels.pgm")
        keys = np.unique(lab)
        means = np.array([mean_map[lab == k][0] for k in keys])
        return mean_map, np.searchsorted(keys, lab), means
    raise FormatError(f"{d} holds neither a fit (mean_map.csv) nor a scene (truth_mean.csv)")


def cmd_metrics(args, out: Path, manifest: Manifest) -> tuple[list, int]:
    truth = Path(args.truth)
    true_mean = formats.read_grid(truth / "truth_mean.csv")
    true_labels = formats.read_labels(truth / "truth_labels.pgm")
    y = formats.load_image(args.observed) if args.observed else formats.read_grid(truth / "observed_fwhm0.csv")
    mean_map, labels, means = _estimate_files(Path(args.estimate))
    if labels is not None and means is None:
        labels = None
    rep = metrics(true_labels, true_mean, mean_map, y, args.tau, labels, means)
    written = [formats.write_table(out / "metrics.csv", [rep.as_dict()])]
    return written, EXIT_OK


def _read_params(path: Path, beta_path: Path | None) -> ModelParams:
    rows = formats.read_table(path)
    means = [float(r["mu"]) for r in rows]
    sds = [float(r["sigma"]) for r in rows]
    bp = beta_path or path.with_name("beta.csv")
    beta = float(formats.read_table(bp)[0]["beta"])
    return ModelParams(means, np.square(sds), beta)


def cmd_summarize(args, out: Path, manifest: Manifest) -> tuple[list, int]:
    y = formats.load_image(args.image)
    params = _read_params(Path(args.params), Path(args.beta) if args.beta else None)
    summ = posterior_summary(y, params, args.summary, chain_rng(derive_seed(args.seed, "summary")))
    written = [*_write_map(out, "mean_map", summ.mean_map), *_write_map(out, "sd_map", summ.sd_map)]
    written += formats.write_labels(out / "labels.pgm", summ.mode_labels + 1)
    if args.tau is not None:
        masks = {}
        for spec in args.mask or []:
            name, _, path = spec.partition("=")
            if not path:
                raise UsageError(f"--mask wants NAME=PATH, got {spec!r}")
            masks[name] = formats.read_labels(path) > 0
        rows = []
        for source, values in (("mean_map", summ.mean_map), ("observed", y)):
            thr = threshold_map(values, args.tau, masks)
            rows.append(dict(source=source, region="all", tau=args.tau, fraction=thr.fraction))
            rows += [dict(source=source, region=k, tau=args.tau, fraction=v) for k, v in thr.region_fractions.items()]
            if source == "mean_map":
                written += formats.write_labels(out / "exceed.pgm", thr.exceed.astype(int))
        written.append(formats.write_table(out / "threshold.csv", rows, ["source", "region", "tau", "fraction"]))
    return written, EXIT_OK


def cmd_run(args, out: Path, manifest: Manifest) -> tuple[list, int]:
    cfg = parse_experiment_config(Path(args.config).read_text(), Path(args.config).parent)
    if args.seed_given:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    manifest.data["seed"] = cfg.seed
    written = run_experiment(cfg, out, args.threads)
    errors = formats.read_table(out / "errors.csv")
    manifest.note("errors", len(errors))
    return written, EXIT_NUMERIC if errors else EXIT_OK


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="master seed (default 0)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>-seed<seed>, else ./runs/...)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker processes for independent jobs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--max-iters", type=_positive_int)
    mc.add_argument("--tol", type=_finite, help="relative-change convergence tolerance")
    mc.add_argument("--chains", type=_positive_int, help="independent E-step chains (changes the random stream)")
    mc.add_argument("--louis-samples", type=_positive_int, default=2000)
    mc.add_argument("--imputations", type=_positive_int, default=20)

    p = _Parser(prog="potts-mcem", description="Hidden Potts segmentation by Monte Carlo EM.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="paint a scene and write noisy images")
    s.add_argument("--preset", default="paper-table1", choices=["paper-table1", "pure-noise", "degenerate"])
    s.add_argument("--config", help="experiment config file (its [scene] and [experiment] keys)")
    s.add_argument("--fwhm", type=_nonneg, action="append", help="smoothing FWHM; repeat for several")

    f = sub.add_parser("fit", parents=[common, mc], help="fit one model")
    f.add_argument("image", help="CSV grid or PGM with sidecar")
    f.add_argument("--M", type=_positive_int, required=True, help="number of components")
    f.add_argument("--se", action="store_true", help="compute Louis standard errors and the observed log-likelihood")
    f.add_argument("--summary", type=_positive_int, default=500, help="posterior samples for the maps")
    f.add_argument("--allow-nonconverged", action="store_true")

    c = sub.add_parser("select", parents=[common, mc], help="choose M by AIC and BIC")
    c.add_argument("image")
    c.add_argument("--M-range", dest="M_range", type=_parse_range, required=True, help="a..b")

    m = sub.add_parser("metrics", parents=[common], help="score an estimate against a simulated truth")
    m.add_argument("--truth", required=True, help="directory written by simulate")
    m.add_argument("--estimate", required=True, help="directory written by fit or summarize")
    m.add_argument("--observed", help="observed image (default TRUTH/observed_fwhm0.csv)")
    m.add_argument("--tau", type=_finite, default=5.0)

    u = sub.add_parser("summarize", parents=[common], help="posterior maps and threshold exceedance")
    u.add_argument("image")
    u.add_argument("--params", required=True, help="params.csv from fit")
    u.add_argument("--beta", help="beta.csv (default next to params.csv)")
    u.add_argument("--summary", type=_positive_int, default=500)
    u.add_argument("--tau", type=_finite)
    u.add_argument("--mask", action="append", help="NAME=PATH of a label PGM; nonzero pixels form the region")

    r = sub.add_parser("run", parents=[common], help="run a full experiment from a config file")
    r.add_argument("--config", required=True)
    return p


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "select": cmd_select, "metrics": cmd_metrics,
            "summarize": cmd_summarize, "run": cmd_run}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        out = _out_dir(args, args.command)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = Manifest(out, args.command, args)
    written, code, status = [], EXIT_OK, "ok"
    try:
        written, code = COMMANDS[args.command](args, out, manifest)
        status = "ok" if code == EXIT_OK else "numerical-failure"
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, status = EXIT_USAGE, "usage-error"
    except (FormatError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        code, status = EXIT_DATA, "data-error"
    except (ArithmeticError, NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code, status = EXIT_NUMERIC, "numerical-failure"
    manifest.finish(written, status)
    return code


if __name__ == "__main__":
    sys.exit(main())
