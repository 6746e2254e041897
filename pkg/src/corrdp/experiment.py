"""Grid runs over (method, epsilon, seed) with append-only CSV output."""

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import feature_bound
from .losses import accuracy, with_derived_lipschitz
from .optimizer import (TrainConfig, calibrate_noise, check_method, corrdp_sgd, embed,
                        reference_solution, utility_gap)
from .rng import RandomState

COLUMNS = ["method", "epsilon", "delta", "seed", "utility_gap", "accuracy", "wallclock_s"]
AGG_COLUMNS = ["method", "epsilon", "n_seeds", "mean_gap", "std_gap", "sem_gap",
               "mean_accuracy", "std_accuracy"]


@dataclass(frozen=True)
class SuiteSettings:
    """Training and calibration settings shared by every cell."""

    T: int = 4000
    step_rule: str = "constant"
    alpha: float = 0.001
    batch: Optional[int] = None
    sampling: str = "uniform"
    noise_constant: Optional[float] = None
    include_b2: bool = True


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_cell(d, part, loss, method, epsilon, delta, seed, tv, settings, theta_hat):
    """Calibrate, train and evaluate one cell; returns a CSV row dict."""
    start = time.perf_counter()
    private = method in ("standard", "semi", "corrdp")
    cfg = TrainConfig(T=settings.T, batch=settings.batch, step_rule=settings.step_rule,
                      alpha=settings.alpha, method=method, epsilon=epsilon if private else None,
                      delta=delta if private else None, seed=seed, sampling=settings.sampling)
    if private:
        noise = calibrate_noise(method, part, tv, epsilon, delta, L=loss.L, T=settings.T,
                                n=d.n, B=feature_bound(d), include_b2=settings.include_b2,
                                noise_constant=settings.noise_constant)
    else:
        noise = None
    fit = corrdp_sgd(d, part, loss, cfg, noise, RandomState(seed, "sgd"))
    gap = utility_gap(d, loss, fit.theta, theta_hat, part)
    acc = None
    if loss.kind == "logistic":
        th = fit.theta if fit.theta.shape[0] == d.m else embed(fit.theta, part, d.m)
        acc = accuracy(th, d.features, d.labels)
    return {"method": method, "epsilon": float(epsilon), "delta": float(delta), "seed": int(seed),
            "utility_gap": float(gap), "accuracy": acc,
            "wallclock_s": round(time.perf_counter() - start, 6)}


_STATE = {}


def _init_worker(state):
    _STATE.update(state)


def _safe_cell(key):
    s = _STATE
    method, eps, seed = key
    try:
        return run_cell(s["d"], s["part"], s["loss"], method, eps, s["delta"], seed, s["tv"],
                        s["settings"], s["theta_hat"])
    except Exception as e:  # a failed cell is recorded, not fatal
        return {"method": method, "epsilon": float(eps), "delta": float(s["delta"]),
                "seed": int(seed), "utility_gap": math.nan, "accuracy": None,
                "wallclock_s": 0.0, "error": f"{type(e).__name__}: {e}"}


def read_results(path):
    """Rows of a results CSV, numeric fields parsed."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            try:
                rows.append({"method": r["method"], "epsilon": float(r["epsilon"]),
                             "delta": float(r["delta"]), "seed": int(r["seed"]),
                             "utility_gap": float(r["utility_gap"]),
                             "accuracy": float(r["accuracy"]) if r["accuracy"] else None,
                             "wallclock_s": float(r["wallclock_s"])})
            except (KeyError, TypeError, ValueError):
                # a torn final line from an interrupted run
                continue
    return rows


def _drop_torn_tail(path):
    # an interrupted write can leave a partial last line; cut back to the last newline
    if not os.path.exists(path):
        return
    with open(path, "rb+") as fh:
        data = fh.read()
        if data and not data.endswith(b"\n"):
            fh.truncate(data.rfind(b"\n") + 1)


def run_method_suite(d, part, loss, eps_grid, delta, seeds, tv,
                     methods=("corrdp", "semi", "standard", "partial"),
                     settings=SuiteSettings(), jobs=1, out_csv=None, theta_hat=None):
    """Train every (method, epsilon, seed) cell and record its utility gap.

    Rows are appended to ``out_csv`` as cells finish, in grid order, so an
    interrupted run leaves valid rows behind; rerunning skips cells already
    present. Failed cells get a NaN gap and an ``error`` entry in the
    returned rows (and in ``<out_csv>.errors``).

    Returns the list of row dicts (including previously recorded ones).
    """
    if not len(eps_grid) or not len(seeds):
        raise ValueError("need a nonempty epsilon grid and seed list")
    methods = [check_method(m) for m in methods]
    loss = with_derived_lipschitz(loss, d)
    if theta_hat is None:
        theta_hat = reference_solution(d, loss).theta
    done = {}
    if out_csv and os.path.exists(out_csv):
        for r in read_results(out_csv):
            done[(r["method"], r["epsilon"], r["seed"])] = r
    keys = [(m, float(e), int(s)) for m in methods for e in eps_grid for s in seeds]
    todo = [k for k in keys if k not in done]
    state = dict(d=d, part=part, loss=loss, delta=delta, tv=tv, settings=settings,
                 theta_hat=theta_hat)

    fh = errfh = None
    if out_csv:
        _drop_torn_tail(out_csv)
        fresh = not os.path.exists(out_csv) or os.path.getsize(out_csv) == 0
        fh = open(out_csv, "a", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(COLUMNS)
            fh.flush()
    try:
        if jobs > 1 and len(todo) > 1:
            pool = ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(state,))
            results = pool.map(_safe_cell, todo, chunksize=1)
        else:
            pool = None
            _init_worker(state)
            results = map(_safe_cell, todo)
        for row in results:
            done[(row["method"], row["epsilon"], row["seed"])] = row
            if fh:
                writer.writerow([_fmt(row[c]) for c in COLUMNS])
                fh.flush()
                if "error" in row:
                    if errfh is None:
                        errfh = open(out_csv + ".errors", "a", encoding="utf-8")
                    errfh.write(f"{row['method']},{row['epsilon']!r},{row['seed']},{row['error']}\n")
                    errfh.flush()
        if pool:
            pool.shutdown()
    finally:
        if fh:
            fh.close()
        if errfh:
            errfh.close()
    return [done[k] for k in keys]


def aggregate(rows):
    """Mean, standard deviation and standard error of the gap per (method, epsilon)."""
    cells = {}
    for r in rows:
        cells.setdefault((r["method"], r["epsilon"]), []).append(r)
    out = []
    for (method, eps), rs in cells.items():
        g = np.array([r["utility_gap"] for r in rs if np.isfinite(r["utility_gap"])])
        a = np.array([r["accuracy"] for r in rs if r.get("accuracy") is not None])
        k = g.size
        std = float(np.std(g, ddof=1)) if k > 1 else 0.0
        out.append({"method": method, "epsilon": eps, "n_seeds": k,
                    "mean_gap": float(np.mean(g)) if k else math.nan, "std_gap": std,
                    "sem_gap": std / math.sqrt(k) if k else math.nan,
                    "mean_accuracy": float(np.mean(a)) if a.size else None,
                    "std_accuracy": float(np.std(a, ddof=1)) if a.size > 1 else None})
    return out


def write_aggregate(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for r in aggregate(rows):
            w.writerow([_fmt(r[c]) for c in AGG_COLUMNS])


PLOT_STUB = '''"""Plot mean utility gap against epsilon from an aggregate CSV.

Usage: python plot_results.py aggregate.csv [out.png]
Needs matplotlib, which the package itself does not depend on.
"""
import csv
import sys

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open(sys.argv[1])))
for method in sorted({r["method"] for r in rows}):
    rs = sorted((r for r in rows if r["method"] == method), key=lambda r: float(r["epsilon"]))
    x = [float(r["epsilon"]) for r in rs]
    y = [float(r["mean_gap"]) for r in rs]
    e = [float(r["sem_gap"]) for r in rs]
    plt.errorbar(x, y, yerr=e, label=method, marker="o", capsize=2)
plt.xlabel("epsilon")
plt.ylabel("utility gap")
plt.yscale("log")
plt.legend()
plt.savefig(sys.argv[2] if len(sys.argv) > 2 else "utility_gap.png", dpi=150)
'''


def write_plot_stub(path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PLOT_STUB)
