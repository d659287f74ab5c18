import csv
import subprocess
import sys

import numpy as np
import pytest

from svcscale.cli import main, parse_config, UsageError


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def toy_csv(path, n=10, seed=1, noise=0.0):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1, (n, 2))
    x1, x2 = rng.standard_normal(n), rng.standard_normal(n)
    y = 1 - 2 * x1 + 0.5 * x2 + noise * rng.standard_normal(n)
    return write_csv(path, ["px", "py", "x1", "x2", "y"],
                     [[repr(float(v)) for v in r] for r in zip(xy[:, 0], xy[:, 1], x1, x2, y)])


def read_fit(path):
    lines = path.read_text().splitlines()
    summary = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            k, v = line[2:].split(" = ", 1)
            summary[k] = v
        else:
            body.append(line)
    rows = list(csv.DictReader(body))
    return summary, rows


def fit_args(data, out, model="gwr", *extra):
    return ["fit", "--model", model, "--data", str(data), "--coords", "px,py",
            "--response", "y", "--predictors", "x1,x2", "--out", str(out), *extra]


def test_fit_noiseless_toy(tmp_path):
    data = toy_csv(tmp_path / "toy.csv")
    out = tmp_path / "fit.csv"
    assert main(fit_args(data, out)) == 0
    summary, rows = read_fit(out)
    assert len(rows) == 10
    assert list(rows[0]) == ["site_id", "coord_1", "coord_2", "beta_intercept",
                             "beta_x1", "beta_x2", "fitted", "residual"]
    B = np.array([[float(r[c]) for c in ("beta_intercept", "beta_x1", "beta_x2")]
                  for r in rows])
    assert np.allclose(B, [1.0, -2.0, 0.5], atol=1e-6)
    for key in ("pstar", "bandwidth", "residual_sd", "singular_sites"):
        assert key in summary


def test_fit_missing_response_flag(tmp_path, capsys):
    data = toy_csv(tmp_path / "toy.csv")
    out = tmp_path / "fit.csv"
    args = fit_args(data, out)
    i = args.index("--response")
    del args[i:i + 2]
    assert main(args) == 2
    assert not out.exists()
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("svcscale: error:")


def test_fit_reesf_summary(tmp_path):
    data = toy_csv(tmp_path / "toy.csv", n=50, noise=0.5)
    out = tmp_path / "fit.csv"
    assert main(fit_args(data, out, "reesf")) == 0
    summary, rows = read_fit(out)
    assert len(rows) == 50
    for name in ("intercept", "x1", "x2"):
        assert float(summary[f"alpha_{name}"]) > 0
        assert float(summary[f"sigma_gamma_{name}"]) >= 0


@pytest.mark.parametrize("model", ["gwra", "fbgwr", "fbgwra", "esf"])
def test_fit_other_models_run(tmp_path, model):
    data = toy_csv(tmp_path / "toy.csv", n=30, noise=0.3)
    out = tmp_path / "fit.csv"
    assert main(fit_args(data, out, model, "--criterion", "cv")) == 0
    summary, rows = read_fit(out)
    assert summary["model"] == model and len(rows) == 30


def test_fit_non_numeric_cell(tmp_path, capsys):
    data = write_csv(tmp_path / "bad.csv", ["px", "py", "x1", "x2", "y"],
                     [[0, 0, 1, 2, 3]] * 4 + [[0, 1, "abc", 2, 3]])
    out = tmp_path / "fit.csv"
    assert main(fit_args(data, out)) == 3
    assert "abc" in capsys.readouterr().err
    assert not out.exists()


def test_fit_missing_column(tmp_path):
    data = write_csv(tmp_path / "bad.csv", ["px", "py", "x1", "y"], [[0, 0, 1, 3]])
    assert main(fit_args(data, tmp_path / "fit.csv")) == 3


def test_fit_failure_exit_code(tmp_path):
    rng = np.random.default_rng(0)
    rows = [[*rng.uniform(size=2), *rng.standard_normal(2), 1.0] for _ in range(30)]
    data = write_csv(tmp_path / "const.csv", ["px", "py", "x1", "x2", "y"], rows)
    assert main(fit_args(data, tmp_path / "fit.csv", "esf")) == 4


def test_fit_seed_env_fallback(tmp_path, monkeypatch):
    data = toy_csv(tmp_path / "toy.csv")
    monkeypatch.setenv("SVCSCALE_SEED", "77")
    assert main(fit_args(data, tmp_path / "a.csv")) == 0
    assert read_fit(tmp_path / "a.csv")[0]["seed"] == "77"
    assert main(fit_args(data, tmp_path / "b.csv", "gwr", "--seed", "5")) == 0
    assert read_fit(tmp_path / "b.csv")[0]["seed"] == "5"
    monkeypatch.setenv("SVCSCALE_SEED", "x")
    assert main(fit_args(data, tmp_path / "c.csv")) == 2


def test_config_parser():
    cfg = parse_config("# header\nn = 50  # inline\nb_x = 0.2, 1.0\n\n", "complexity")
    assert cfg == {"n": 50, "b_x": (0.2, 1.0)}
    for bad in ("bogus = 1", "n = 5\nn = 6", "n 50", "b_x = a,b"):
        with pytest.raises(UsageError):
            parse_config(bad, "complexity")


def simulate(tmp_path, experiment, text, out="out", threads="1"):
    cfg = tmp_path / f"{experiment}.cfg"
    cfg.write_text(text)
    code = main(["simulate", "--experiment", experiment, "--config", str(cfg),
                 "--out", str(tmp_path / out), "--threads", threads])
    return code, tmp_path / out


def test_simulate_unknown_key(tmp_path):
    code, out = simulate(tmp_path, "complexity", "n = 50\ncolour = red\n")
    assert code == 2 and not out.exists()


@pytest.mark.parametrize("text", ["n = 5\n", "replicates = 0\n", "gwra_fraction = 1.5\n",
                                  "b_x = -1\n"])
def test_simulate_invalid_values(tmp_path, text):
    assert simulate(tmp_path, "complexity", text)[0] == 2


def test_simulate_complexity_row_count(tmp_path):
    code, out = simulate(tmp_path, "complexity",
                         "n = 50\nb_x = 1.0\nr_x = 1.0\nreplicates = 3\nseed = 2\n")
    assert code == 0
    cells = list(csv.DictReader(open(out / "cells.csv")))
    # 4 GWR + 4 GWRa + 4 ESF + 4x2 RE-ESF settings
    assert len(cells) == 20
    assert all(r["replicates"] == "3" for r in cells)
    assert len(list(csv.DictReader(open(out / "raw.csv")))) == 60


def test_simulate_accuracy_flagship_pairs(tmp_path):
    code, out = simulate(tmp_path, "accuracy",
                         "grid = flagship\nn = 50\nreplicates = 2\nmodels = gwr,esf,reesf\n")
    assert code == 0
    pairs = list(csv.DictReader(open(out / "pairs.csv")))
    assert [p["coefficient"] for p in pairs] == ["intercept", "x1", "x2"]
    assert (pairs[0]["b0"], pairs[0]["b1"], pairs[0]["b2"]) == ("1.0", "0.2", "1.0")
    for col in ("rmse_gwr", "rmse_esf", "rmse_reesf"):
        assert all(float(p[col]) > 0 for p in pairs)


def test_simulate_byte_identical(tmp_path):
    text = "n = 50\nb_x = 0.2,1.0\nr_x = 1.0\nreplicates = 2\nseed = 3\n"
    assert simulate(tmp_path, "complexity", text, "a")[0] == 0
    assert simulate(tmp_path, "complexity", text, "b", threads="2")[0] == 0
    for name in ("cells.csv", "raw.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bench_layout(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--sizes", "50", "--replicates", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 6
    assert [r["model"] for r in rows] == ["gwr", "gwra", "fbgwr", "fbgwra", "esf", "reesf"]
    assert main(["bench", "--sizes", "5", "--replicates", "2", "--out", str(out)]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "svcscale", "fit"], capture_output=True,
                         text=True)
    assert res.returncode == 2
    assert res.stderr.startswith("svcscale: error:")
