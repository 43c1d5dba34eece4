import json
import subprocess
import sys

import numpy as np
import pytest

from potts_mcem import formats
from potts_mcem.cli import main


def two_level(path, seed=0, n=16):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n)[None, :] < n // 2, -3.0, 3.0) + 0.7 * rng.standard_normal((n, n))
    formats.write_grid(path, y)
    return y


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_simulate_preset_and_kernel_sd(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--preset", "paper-table1", "--seed", "1", "--fwhm", "0", "--fwhm", "2", "--out", str(out)]) == 0
    y0 = formats.read_grid(out / "observed_fwhm0.csv")
    assert y0.shape == (128, 128)
    assert formats.read_labels(out / "truth_labels.pgm").max() == 10
    man = manifest(out)
    assert man["status"] == "ok" and man["seed"] == 1
    assert man["notes"]["kernel_sd"]["2"] == pytest.approx(0.8493, abs=1e-4)
    listed = set(man["outputs"])
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert listed == on_disk


def test_fit_single_component(tmp_path):
    y = two_level(tmp_path / "y.csv")
    out = tmp_path / "fit"
    assert main(["fit", str(tmp_path / "y.csv"), "--M", "1", "--summary", "5", "--out", str(out)]) == 0
    row = formats.read_table(out / "params.csv")[0]
    assert float(row["mu"]) == pytest.approx(y.mean()) and float(row["sigma"]) == pytest.approx(y.std())
    assert np.all(formats.read_grid(out / "mean_map.csv") == float(row["mu"]))
    assert np.all(formats.read_grid(out / "sd_map.csv") == 0)


def test_fit_is_byte_identical(tmp_path):
    two_level(tmp_path / "y.csv", 1)
    args = ["fit", str(tmp_path / "y.csv"), "--M", "2", "--seed", "5", "--max-iters", "6", "--summary", "20",
            "--allow-nonconverged", "--se", "--louis-samples", "100", "--imputations", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    outputs = manifest(tmp_path / "a")["outputs"]
    assert "params.csv" in outputs and "beta.csv" in outputs and "trace.csv" in outputs
    for name in outputs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    mu = [float(r["mu"]) for r in formats.read_table(tmp_path / "a" / "params.csv")]
    assert mu == pytest.approx([-3, 3], abs=0.3)


def test_nonconvergence_exit_code(tmp_path):
    two_level(tmp_path / "y.csv", 2)
    out = tmp_path / "nc"
    code = main(["fit", str(tmp_path / "y.csv"), "--M", "3", "--max-iters", "1", "--summary", "5", "--out", str(out)])
    assert code == 3
    man = manifest(out)
    assert man["status"] == "numerical-failure" and man["notes"]["converged"] is False
    assert (out / "params.csv").exists()


def test_select_single_value(tmp_path):
    two_level(tmp_path / "y.csv")
    out = tmp_path / "sel"
    assert main(["select", str(tmp_path / "y.csv"), "--M-range", "2..2", "--max-iters", "5",
                 "--louis-samples", "100", "--imputations", "3", "--out", str(out)]) == 0
    row = formats.read_table(out / "selection.csv")[0]
    assert row["M"] == "2" and row["chosen_aic"] == "true" and row["chosen_bic"] == "true"


def test_metrics_truth_against_itself(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--preset", "degenerate", "--out", str(sim)])
    out = tmp_path / "m"
    assert main(["metrics", "--truth", str(sim), "--estimate", str(sim), "--observed", str(sim / "truth_mean.csv"),
                 "--out", str(out)]) == 0
    row = formats.read_table(out / "metrics.csv")[0]
    assert all(float(row[k]) == 0 for k in ("ss_est_true", "ss_obs_true", "mcr", "fpr", "fnr"))


def test_summarize_with_mask(tmp_path):
    two_level(tmp_path / "y.csv", 3, n=8)
    formats.write_table(tmp_path / "params.csv", [dict(k=1, mu=-3.0, sigma=0.7), dict(k=2, mu=3.0, sigma=0.7)])
    formats.write_table(tmp_path / "beta.csv", [dict(beta=0.8)])
    mask = np.zeros((8, 8), int)
    mask[:, 4:] = 1
    formats.write_labels(tmp_path / "right.pgm", mask)
    out = tmp_path / "s"
    assert main(["summarize", str(tmp_path / "y.csv"), "--params", str(tmp_path / "params.csv"), "--summary", "50",
                 "--tau", "1.0", "--mask", f"right={tmp_path / 'right.pgm'}", "--out", str(out)]) == 0
    rows = {(r["source"], r["region"]): float(r["fraction"]) for r in formats.read_table(out / "threshold.csv")}
    assert rows[("mean_map", "all")] == 0.5 and rows[("mean_map", "right")] == 1.0
    assert formats.read_labels(out / "exceed.pgm").sum() == 32


def test_run_config(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\npreset = degenerate\nseed = 4\n")
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert manifest(out)["seed"] == 4
    assert len(formats.read_table(out / "metrics.csv")) == 3


@pytest.mark.parametrize("argv", [
    ["metrics", "--truth", "x", "--estimate", "y", "--tau=-inf"],
    ["fit", "img.csv"],
    ["select", "img.csv", "--M-range", "5..2"],
    ["fit", "img.csv", "--M", "0"],
    ["bogus"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 1


def test_data_errors(tmp_path):
    assert main(["fit", str(tmp_path / "missing.csv"), "--M", "2", "--out", str(tmp_path / "o")]) == 2
    assert manifest(tmp_path / "o")["status"] == "data-error"
    (tmp_path / "bad.csv").write_text("1,2\nx,3\n")
    assert main(["fit", str(tmp_path / "bad.csv"), "--M", "2", "--out", str(tmp_path / "o2")]) == 2
    (tmp_path / "cfg.ini").write_text("[experiment]\nnope = 1\n")
    assert main(["run", "--config", str(tmp_path / "cfg.ini"), "--out", str(tmp_path / "o3")]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--preset", "degenerate", "--out", str(blocker / "sub")]) == 1


def test_env_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("POTTS_MCEM_OUT", str(tmp_path / "root"))
    assert main(["simulate", "--preset", "degenerate", "--seed", "7"]) == 0
    assert (tmp_path / "root" / "simulate-seed7" / "manifest.json").exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "potts_mcem.cli", "simulate", "--preset", "degenerate",
                          "--out", str(tmp_path / "e")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "potts_mcem.cli", "--version"], capture_output=True, text=True)
    assert res.stdout.strip() == "0.1.0"
