import csv
import hashlib
import json
import os

import numpy as np
import pytest

from corrdp.cli import main
from corrdp.config import parse_config
from corrdp.data import (ColumnSpec, default_partition, default_synthetic_spec, generate_synthetic,
                         ingest_csv, read_dataset_csv)
from corrdp.errors import ConfigError
from corrdp.experiment import SuiteSettings, aggregate, read_results, run_method_suite
from corrdp.losses import LossSpec, accuracy
from corrdp.optimizer import calibrate_noise
from corrdp.rng import RandomState
from corrdp.tv import TVProfile, tv_posterior_gaussian


def write_cfg(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, text, *args):
    return main([*args, "--config", write_cfg(tmp_path, text), "--out", str(tmp_path / "out")])


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_synth_defaults_and_determinism(tmp_path, capsys):
    assert run(tmp_path, "[dataset]\nn = 2000\n", "synth") == 0
    out = tmp_path / "out"
    d = read_dataset_csv(out / "dataset.csv")
    assert d.features.shape == (2000, 100)
    side = json.loads((out / "dataset.json").read_text())
    assert side["seed"] == 0 and side["partition"]["sensitive"] == list(range(1, 11))
    first = digest(out / "dataset.csv"), digest(out / "dataset.json")
    assert run(tmp_path, "[dataset]\nn = 2000\n", "synth") == 0
    assert (digest(out / "dataset.csv"), digest(out / "dataset.json")) == first
    assert main(["synth", "--config", str(tmp_path / "c.ini"), "--out", str(out), "--seed", "5"]) == 0
    assert digest(out / "dataset.csv") != first[0]


def test_synth_zero_rows_exit_2(tmp_path, capsys):
    assert run(tmp_path, "[dataset]\nn = 0\n", "synth") == 2
    err = capsys.readouterr().err
    assert err.startswith("corrdp-error code=2 kind=ConfigError")
    assert err.count("\n") == 1


def test_bad_method_exit_2(tmp_path, capsys):
    assert run(tmp_path, "[train]\nmethod = laplace\n", "train") == 2
    assert "laplace" in capsys.readouterr().err


def test_unknown_section_exit_2(tmp_path, capsys):
    assert run(tmp_path, "[bogus]\nx = 1\n", "synth") == 2


def test_estimate_tv_exact_matches_oracle(tmp_path):
    text = "[dataset]\nm = 20\nm_s = 4\nn = 300\n[tv]\nstrategy = exact\n"
    assert run(tmp_path, text, "estimate-tv") == 0
    prof = TVProfile.load(tmp_path / "out" / "tv_profile.json")
    spec = default_synthetic_spec(20, 4)
    part = default_partition(20, 4)
    for i in part.insensitive:
        assert abs(prof.values[i] - tv_posterior_gaussian(spec, part, i, 1e-4)) <= 1e-12
    assert prof.meta["seed"] == 0


def test_frozen_profile_missing_feature(tmp_path, capsys):
    part = default_partition(20, 4)
    TVProfile({i: 0.3 for i in part.insensitive if i != 7}).save(tmp_path / "tv.json")
    text = f"[dataset]\nm = 20\nm_s = 4\nn = 100\n[tv]\nprofile = {tmp_path / 'tv.json'}\n"
    assert run(tmp_path, text, "estimate-tv") == 2
    err = capsys.readouterr().err
    assert "x8" in err and "code=2" in err


def test_train_nonprivate_gap(tmp_path, capsys):
    text = "[train]\nloss = squared\nmethod = nonprivate\nT = 20000\n"
    assert run(tmp_path, text, "train") == 0
    res = json.loads((tmp_path / "out" / "fit_nonprivate.json").read_text())
    assert res["utility_gap"] <= 1e-3
    assert res["reference"]["converged"]


def test_train_corrdp_runtime_and_outputs(tmp_path, capsys):
    text = "[train]\nmethod = corrdp\nepsilon = 0.5\n"
    assert run(tmp_path, text, "train") == 0
    out = tmp_path / "out"
    res = json.loads((out / "fit_corrdp.json").read_text())
    assert res["wallclock_s"] < 60 and res["utility_gap"] > 0
    noise = json.loads((out / "noise_corrdp.json").read_text())
    assert len(noise["sigma_sq"]) == 100
    assert run(tmp_path, text, "train") == 0
    rows = list(csv.DictReader(open(out / "train.csv")))
    assert len(rows) == 2 and rows[0]["utility_gap"] == rows[1]["utility_gap"]
    assert rows[0]["accuracy"] == ""


def test_train_logistic_reports_accuracy(tmp_path, capsys):
    # labels must be in {0, 1}; ingest scales features to [0, 1] and there is
    # no intercept, so the accuracy is only checked against the fitted model
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 3))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    lines = ["a,b,c,y"] + [f"{r[0]},{r[1]},{r[2]},{v}" for r, v in zip(x, y)]
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    text = ("[dataset]\nsource = csv\npath = d.csv\nlabel = y\n"
            "[schema.a]\nsensitive = true\n[schema.b]\n[schema.c]\n"
            "[tv]\nstrategy = uniform\nvalue = 0.5\n"
            "[train]\nloss = logistic\nD = 5\nmethod = nonprivate\nT = 2000\nalpha = 0.5\n")
    assert run(tmp_path, text, "train") == 0
    res = json.loads((tmp_path / "out" / "fit_nonprivate.json").read_text())
    d, _, _ = ingest_csv(tmp_path / "d.csv", [ColumnSpec("a"), ColumnSpec("b"), ColumnSpec("c")], "y")
    assert res["accuracy"] == accuracy(np.array(res["theta"]), d.features, d.labels)
    assert 0.5 < res["accuracy"] <= 1.0


SMOKE = """[dataset]
m = 20
m_s = 4
n = 400
[train]
methods = corrdp, semi, standard, partial
epsilons = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0
seeds = 0
T = 200
"""


def test_experiment_smoke_and_resume(tmp_path, capsys):
    assert run(tmp_path, SMOKE, "experiment", "--jobs", "1") == 0
    out = tmp_path / "out"
    agg = list(csv.DictReader(open(out / "aggregate.csv")))
    assert len(agg) == 40
    assert {r["method"] for r in agg} == {"corrdp", "semi", "standard", "partial"}
    assert len({r["epsilon"] for r in agg}) == 10
    assert (out / "plot_results.py").exists() and (out / "tv_profile.json").exists()
    before = (out / "results.csv").read_text()
    # a rerun finds every cell done and leaves the table alone
    assert run(tmp_path, SMOKE, "experiment") == 0
    assert (out / "results.csv").read_text() == before
    # simulate an interrupted run: drop the tail and tear the last line
    lines = before.splitlines(keepends=True)
    (out / "results.csv").write_text("".join(lines[:11]) + lines[11][:10])
    assert len(read_results(out / "results.csv")) == 10
    assert run(tmp_path, SMOKE, "experiment") == 0
    rows = read_results(out / "results.csv")
    assert len({(r["method"], r["epsilon"], r["seed"]) for r in rows}) == 40
    first = {(r["method"], r["epsilon"]): r["utility_gap"] for r in read_results_text(before)}
    again = {(r["method"], r["epsilon"]): r["utility_gap"] for r in rows}
    assert first == again


def read_results_text(text):
    return [{"method": r["method"], "epsilon": float(r["epsilon"]),
             "utility_gap": float(r["utility_gap"])} for r in csv.DictReader(text.splitlines())]


def test_suite_parallel_equals_serial(tmp_path):
    spec = default_synthetic_spec(10, 2)
    d = generate_synthetic(spec, 200, RandomState(0, "data"))
    part = default_partition(10, 2)
    tv = TVProfile.uniform(part, 0.3)
    s = SuiteSettings(T=100, noise_constant=1.0)
    args = (d, part, LossSpec("ridge", D=100.0), [0.5, 1.0], 1e-4, [0, 1], tv)
    a = run_method_suite(*args, settings=s, jobs=1)
    b = run_method_suite(*args, settings=s, jobs=2, out_csv=str(tmp_path / "r.csv"))
    assert [r["utility_gap"] for r in a] == [r["utility_gap"] for r in b]
    assert not os.path.exists(tmp_path / "r.csv.errors")
    agg = aggregate(a)
    assert all(r["n_seeds"] == 2 for r in agg)


def test_suite_records_failed_cells(tmp_path):
    d = generate_synthetic(default_synthetic_spec(10, 2), 100, RandomState(0, "data"))
    part = default_partition(10, 2)
    # CorrDP without a TV profile fails; the other method still runs
    rows = run_method_suite(d, part, LossSpec("ridge", D=100.0), [1.0], 1e-4, [0], None,
                            methods=("corrdp", "standard"),
                            settings=SuiteSettings(T=50, noise_constant=1.0),
                            out_csv=str(tmp_path / "r.csv"))
    assert "error" in rows[0] and np.isnan(rows[0]["utility_gap"])
    assert "error" not in rows[1] and np.isfinite(rows[1]["utility_gap"])
    assert "ProfileError" in (tmp_path / "r.csv.errors").read_text()


def test_certify_command(tmp_path, capsys):
    text = "[dataset]\nm = 100\nm_s = 10\nn = 2000\n[train]\nloss = logistic\nD = 1\nmethod = corrdp\n"
    part = default_partition(100, 10)
    TVProfile.uniform(part, 0.3).save(tmp_path / "tv.json")
    calibrate_noise("corrdp", part, TVProfile.uniform(part, 0.3), 0.5, 1e-5, L=2.0, T=1000,
                    n=2000, B=1.0).save(tmp_path / "p.json")
    code = main(["certify", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path / "o"),
                 "--profile", str(tmp_path / "p.json"), "--tv", str(tmp_path / "tv.json"),
                 "--loss", "logistic"])
    assert code == 0
    printed = json.loads(capsys.readouterr().out.strip())
    assert printed["certified"] is True and printed["margin"] > 0
    verdict = json.loads((tmp_path / "o" / "verdict.json").read_text())
    assert "sensitive" in verdict["breakdown"] and len(verdict["breakdown"]) == 91
    # the same profile at half the budget is refused
    main(["certify", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path / "o"),
          "--profile", str(tmp_path / "p.json"), "--tv", str(tmp_path / "tv.json"),
          "--loss", "logistic", "--epsilon", "0.25"])
    assert json.loads(capsys.readouterr().out.strip())["certified"] is False


def test_estimate_tv_auto_c2(tmp_path):
    text = "[dataset]\nm = 10\nm_s = 2\nn = 300\n[tv]\nc2 = auto\n"
    assert run(tmp_path, text, "estimate-tv") == 0
    prof = TVProfile.load(tmp_path / "out" / "tv_profile.json")
    assert prof.kind.value == "confidence_adjusted" and prof.meta["c2"] > 0


def test_laplace_command(tmp_path, capsys):
    text = "[dataset]\nm = 20\nm_s = 4\nn = 500\n[tv]\nstrategy = uniform\nvalue = 0.5\n"
    assert run(tmp_path, text, "laplace", "--epsilon", "1", "--columns", "x1,x10") == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "laplace.csv")))
    assert [r["feature"] for r in rows] == ["x1", "x10"]
    assert "scale=0.002" in capsys.readouterr().out
    assert run(tmp_path, text, "laplace", "--columns", "nope") == 2


def test_parse_config_validation(tmp_path):
    c = parse_config("[train]\nseeds = 0-2, 7\nepsilons = 0.1, 0.5\nnoise_constant = none\n")
    assert c.train.seeds == (0, 1, 2, 7) and c.train.noise_constant is None
    assert parse_config("[tv]\nc2 = auto\n").tv.c2 == "auto"
    assert parse_config("[tv]\nc2 = 2.5\n").tv.c2 == 2.5
    with pytest.raises(ConfigError):
        parse_config("[train]\nepsilons = 0.5, 0.1\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\nepsilons = 0, 0.1\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\nmethods = corrdp, bogus\n")
    with pytest.raises(ConfigError):
        parse_config("[dataset]\nm = 5\nm_s = 6\n")
    with pytest.raises(ConfigError):
        parse_config("[tv]\nstrategy = uniform\n")


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    for name in os.listdir(root):
        cfg = parse_config(open(os.path.join(root, name)).read(), root)
        assert cfg.train.methods
