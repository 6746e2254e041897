"""Command-line entry point: ``corrdp <subcommand> [--config PATH] ...``.

Exit codes are 0 on success, 2 for configuration or validation errors and 3
for numerical or runtime failures. Errors print one line to stderr of the
form ``corrdp-error code=<n> kind=<ExceptionName>: <detail>``.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import errors as E
from .accounting import certify_profile
from .config import load_config
from .data import (default_partition, default_synthetic_spec, feature_bound, generate_synthetic,
                   ingest_csv, write_dataset_csv)
from .experiment import (COLUMNS, SuiteSettings, _fmt, run_method_suite, write_aggregate,
                         write_plot_stub)
from .mechanisms import (column_count_query, column_mean_query, correlated_sensitivity,
                         laplace_corrdp, laplace_standard)
from .losses import LossSpec, accuracy, smoothness_constants, with_derived_lipschitz
from .optimizer import (PRIVATE, NoiseProfile, TrainConfig, calibrate_noise, corrdp_sgd, embed,
                        reference_solution, utility_gap)
from .rng import RandomState
from .tv import TVProfile, build_tv_profile, calibrate_c2, confidence_adjust

VALIDATION = (E.ConfigError, E.ParameterError, E.SpecError, E.IngestError, E.ProfileError,
              E.EstimatorError, E.ShapeError, E.AssumptionError, E.DistributionError)
RUNTIME = (E.DivergenceError, E.DivergenceUndefined, ArithmeticError, np.linalg.LinAlgError,
           OSError)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(cfg):
    d = cfg.resolve(cfg.output.dir) if not os.path.isabs(cfg.output.dir) else cfg.output.dir
    os.makedirs(d, exist_ok=True)
    return d


# -- shared pipeline pieces ----------------------------------------------------

def load_data(cfg):
    """Return ``(dataset, partition, spec_or_None, sidecar_dict)`` for the config."""
    ds = cfg.dataset
    if ds.source == "synthetic":
        if ds.n < 1:
            raise E.ConfigError(f"[dataset] n must be at least 1, got {ds.n}")
        spec = default_synthetic_spec(ds.m, ds.m_s, ds.noise_std)
        d = generate_synthetic(spec, ds.n, RandomState(cfg.seed, "data"))
        part = default_partition(ds.m, ds.m_s)
        side = {"source": "synthetic", "seed": cfg.seed, "stream": "data", "n": ds.n,
                "spec": spec.to_dict()}
    else:
        path = cfg.resolve(ds.path)
        if not os.path.exists(path):
            raise E.ConfigError(f"[dataset] path does not exist: {path}")
        d, part, meta = ingest_csv(path, ds.schema, ds.label, ds.unseen)
        spec = None
        side = {"source": "csv", "path": ds.path, "n": d.n, "ingest": meta}
    side["partition"] = {"sensitive": [i + 1 for i in part.sensitive],
                         "insensitive": [i + 1 for i in part.insensitive]}
    side["columns"] = d.column_names()
    return d, part, spec, side


def get_tv(cfg, d, part, spec):
    t = cfg.tv
    if t.profile:
        prof = TVProfile.load(cfg.resolve(t.profile))
        prof.check_covers(part, d.column_names())
        return prof
    if t.strategy == "uniform":
        return TVProfile.uniform(part, t.value)
    params = {"delta": t.delta, "spec": spec}
    if t.bins:
        params["bins"] = t.bins
    prof = build_tv_profile(d, part, t.strategy, params)
    if t.adjust and prof.kind.value == "empirical":
        gamma = t.gamma if t.gamma is not None else prof.meta.get("gamma", 0.5)
        c2 = t.c2
        if c2 == "auto":
            c2 = calibrate_c2(d, part, t.strategy, params, gamma, t.delta,
                              rng=RandomState(cfg.seed, "c2"))
        prof = confidence_adjust(prof, c2, gamma, d.n, part.m, part.m_s, t.delta)
    return prof


def make_loss(cfg, d):
    tr = cfg.train
    loss = LossSpec(tr.loss, D=tr.D, L=tr.L, clip=tr.clip, reg=tr.reg, C=tr.C)
    return with_derived_lipschitz(loss, d)


def settings_of(cfg):
    tr = cfg.train
    return SuiteSettings(T=tr.T, step_rule=tr.step_rule, alpha=tr.alpha, batch=tr.batch,
                         sampling=tr.sampling, noise_constant=tr.noise_constant,
                         include_b2=tr.include_b2)


# -- subcommands -------------------------------------------------------------

def cmd_synth(cfg, args):
    if cfg.dataset.source != "synthetic":
        raise E.ConfigError("synth needs [dataset] source = synthetic")
    d, part, spec, side = load_data(cfg)
    out = _outdir(cfg)
    write_dataset_csv(d, os.path.join(out, "dataset.csv"))
    _write_json(os.path.join(out, "dataset.json"), side)
    print(os.path.join(out, "dataset.csv"))


def cmd_ingest(cfg, args):
    if cfg.dataset.source != "csv":
        raise E.ConfigError("ingest needs [dataset] source = csv")
    d, part, spec, side = load_data(cfg)
    out = _outdir(cfg)
    write_dataset_csv(d, os.path.join(out, "dataset.csv"), cfg.dataset.label)
    _write_json(os.path.join(out, "dataset.json"), side)
    print(os.path.join(out, "dataset.csv"))


def cmd_estimate_tv(cfg, args):
    d, part, spec, side = load_data(cfg)
    prof = get_tv(cfg, d, part, spec)
    prof.meta.setdefault("dataset", {k: side[k] for k in ("source", "n") if k in side})
    prof.meta["seed"] = cfg.seed
    out = _outdir(cfg)
    path = os.path.join(out, "tv_profile.json")
    prof.save(path)
    print(path)


def _train_one(cfg, d, part, spec, method, eps):
    tr = cfg.train
    loss = make_loss(cfg, d)
    ref = reference_solution(d, loss)
    private = method in PRIVATE
    tv = get_tv(cfg, d, part, spec) if method == "corrdp" else None
    noise = None
    if private:
        noise = calibrate_noise(method, part, tv, eps, tr.delta, L=loss.L, T=tr.T, n=d.n,
                                B=feature_bound(d), include_b2=tr.include_b2,
                                noise_constant=tr.noise_constant)
    tcfg = TrainConfig(T=tr.T, batch=tr.batch, step_rule=tr.step_rule, alpha=tr.alpha,
                       method=method, epsilon=eps if private else None,
                       delta=tr.delta if private else None, seed=cfg.seed,
                       sampling=tr.sampling, trace=cfg.output.trace)
    fit = corrdp_sgd(d, part, loss, tcfg, noise, RandomState(cfg.seed, "sgd"))
    fit.utility_gap = utility_gap(d, loss, fit.theta, ref.theta, part)
    return fit, ref, loss, noise


def cmd_train(cfg, args):
    tr = cfg.train
    method = tr.method or tr.methods[0]
    eps = tr.epsilon if tr.epsilon is not None else tr.epsilons[0]
    start = time.perf_counter()
    d, part, spec, side = load_data(cfg)
    fit, ref, loss, noise = _train_one(cfg, d, part, spec, method, eps)
    acc = None
    if loss.kind == "logistic":
        th = fit.theta if fit.theta.shape[0] == d.m else embed(fit.theta, part, d.m)
        acc = accuracy(th, d.features, d.labels)
    wall = time.perf_counter() - start
    out = _outdir(cfg)
    res = {"method": method, "epsilon": eps if method in PRIVATE else None, "delta": tr.delta,
           "seed": cfg.seed, "theta": [float(v) for v in fit.theta],
           "utility_gap": fit.utility_gap, "accuracy": acc,
           "reference": {"converged": ref.converged, "iterations": ref.iterations,
                         "grad_norm": ref.meta["grad_norm"]},
           "loss": {"kind": loss.kind, "D": loss.D, "L": loss.L, "clip": loss.clip, "C": loss.C},
           "T": tr.T, "step_rule": tr.step_rule, "alpha": tr.alpha, "wallclock_s": wall}
    if fit.trace is not None:
        res["trace"] = [float(v) for v in fit.trace]
    _write_json(os.path.join(out, f"fit_{method}.json"), res)
    if noise is not None:
        noise.save(os.path.join(out, f"noise_{method}.json"))
    path = os.path.join(out, "train.csv")
    fresh = not os.path.exists(path)
    row = {"method": method, "epsilon": float(eps), "delta": tr.delta, "seed": cfg.seed,
           "utility_gap": fit.utility_gap, "accuracy": acc, "wallclock_s": round(wall, 6)}
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(COLUMNS)
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    print(f"{method} epsilon={eps} utility_gap={fit.utility_gap:.6g}")


def cmd_experiment(cfg, args):
    tr = cfg.train
    d, part, spec, side = load_data(cfg)
    loss = make_loss(cfg, d)
    tv = get_tv(cfg, d, part, spec) if "corrdp" in tr.methods else None
    out = _outdir(cfg)
    if tv is not None:
        tv.save(os.path.join(out, "tv_profile.json"))
    jobs = cfg.jobs if cfg.jobs > 0 else (os.cpu_count() or 1)
    rows = run_method_suite(d, part, loss, list(tr.epsilons), tr.delta, list(tr.seeds), tv,
                            methods=tr.methods, settings=settings_of(cfg), jobs=jobs,
                            out_csv=os.path.join(out, "results.csv"))
    write_aggregate(rows, os.path.join(out, "aggregate.csv"))
    write_plot_stub(os.path.join(out, "plot_results.py"))
    failed = sum(1 for r in rows if "error" in r)
    print(f"{len(rows)} cells ({failed} failed) -> {os.path.join(out, 'aggregate.csv')}")


def cmd_certify(cfg, args):
    tr = cfg.train
    data = None
    if args.profile:
        profile = NoiseProfile.load(args.profile)
    else:
        data = load_data(cfg)
        method = tr.method or tr.methods[0]
        eps = tr.epsilon if tr.epsilon is not None else tr.epsilons[0]
        d, part, spec, _ = data
        loss = make_loss(cfg, d)
        tv = get_tv(cfg, d, part, spec) if method == "corrdp" else None
        profile = calibrate_noise(method, part, tv, eps, tr.delta, L=loss.L, T=tr.T, n=d.n,
                                  B=feature_bound(d), include_b2=tr.include_b2)
    m = profile.sigma_sq.shape[0]
    m_s = args.m_s if args.m_s is not None else profile.m_s
    if m_s is None:
        raise E.ConfigError("number of sensitive features unknown; pass --m-s")
    part = default_partition(m, m_s) if data is None else data[1]
    if args.tv:
        tv = TVProfile.load(args.tv)
    elif data is not None or part.insensitive:
        if data is None:
            data = load_data(cfg)
        tv = get_tv(cfg, data[0], data[1], data[2])
    else:
        tv = None
    if tv is not None:
        tv.check_covers(part)

    def pick(flag, recorded, name):
        v = flag if flag is not None else recorded
        if v is None:
            raise E.ConfigError(f"{name} unknown; pass --{name}")
        return v

    L = pick(args.L, profile.L, "L")
    B = pick(args.B, profile.B, "B")
    n = pick(args.n, profile.n, "n")
    T = pick(args.T, profile.T, "T")
    eps = pick(args.epsilon, profile.epsilon, "epsilon")
    delta = pick(args.delta, profile.delta, "delta")
    if args.C1 is not None and args.C2 is not None:
        C1, C2 = args.C1, args.C2
    else:
        C1, C2 = smoothness_constants(LossSpec(args.loss or tr.loss, D=tr.D, C=tr.C), B, tr.D, m)
    v = certify_profile(profile, part, tv, L, B, C1, C2, int(n), int(T), eps, delta)
    res = v.to_dict()
    res["constants"] = {"L": L, "B": B, "C1": C1, "C2": C2, "n": n, "T": T,
                        "epsilon": eps, "delta": delta}
    out = _outdir(cfg)
    _write_json(os.path.join(out, "verdict.json"), res)
    print(json.dumps({k: res[k] for k in ("certified", "lambda", "margin")}, sort_keys=True))


def cmd_laplace(cfg, args):
    d, part, spec, _ = load_data(cfg)
    names = d.column_names()
    cols = None
    if args.columns:
        want = [c.strip() for c in args.columns.split(",") if c.strip()]
        missing = [c for c in want if c not in names]
        if missing:
            raise E.ConfigError(f"unknown columns: {', '.join(missing)}")
        cols = [names.index(c) for c in want]
    q = column_mean_query(d.n, part, cols) if args.query == "mean" else column_count_query(part, cols)
    eps = args.epsilon if args.epsilon is not None else (
        cfg.train.epsilon if cfg.train.epsilon is not None else cfg.train.epsilons[0])
    rs = RandomState(cfg.seed, "laplace")
    if args.standard:
        noisy = laplace_standard(q(d), q.l1_sensitivity, eps, rs)
        scale = q.l1_sensitivity / eps
    else:
        tv = TVProfile.load(args.tv) if args.tv else get_tv(cfg, d, part, spec)
        tv.check_covers(part, names)
        rep = correlated_sensitivity(q, part, tv)
        noisy = laplace_corrdp(q(d), rep, eps, rs)
        scale = rep.correlated / eps
    out = _outdir(cfg)
    path = os.path.join(out, "laplace.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "value"])
        for j, v in zip(q.columns, noisy):
            w.writerow([names[j], repr(float(v))])
    print(f"{path} scale={scale:.6g}")


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "estimate-tv": cmd_estimate_tv,
            "train": cmd_train, "experiment": cmd_experiment, "certify": cmd_certify,
            "laplace": cmd_laplace}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    p = argparse.ArgumentParser(prog="corrdp", parents=[common],
                                description="Correlation-aware private ERM toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "certify":
            sp.add_argument("--profile", help="noise profile JSON (default: calibrate from config)")
            sp.add_argument("--tv", help="TV profile JSON")
            sp.add_argument("--loss", choices=("squared", "ridge", "logistic"))
            sp.add_argument("--m-s", dest="m_s", type=int)
            for flag in ("L", "B", "C1", "C2", "epsilon", "delta"):
                sp.add_argument(f"--{flag}", type=float)
            for flag in ("n", "T"):
                sp.add_argument(f"--{flag}", type=int)
        if name == "laplace":
            sp.add_argument("--query", choices=("mean", "count"), default="mean")
            sp.add_argument("--epsilon", type=float)
            sp.add_argument("--tv", help="TV profile JSON (default: estimate from config)")
            sp.add_argument("--columns", help="comma-separated column names (default: all)")
            sp.add_argument("--standard", action="store_true", help="use the l1 sensitivity")
    return p


def _fail(code, exc):
    detail = str(exc).replace("\n", " ")
    print(f"corrdp-error code={code} kind={type(exc).__name__}: {detail}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None:
            cfg.seed = args.seed
        if getattr(args, "out", None) is not None:
            cfg.output.dir = os.path.abspath(args.out)
        if getattr(args, "jobs", None) is not None:
            cfg.jobs = args.jobs
        COMMANDS[args.command](cfg, args)
    except VALIDATION as e:
        return _fail(2, e)
    except RUNTIME as e:
        return _fail(3, e)
    return 0


if __name__ == "__main__":
    sys.exit(main())
