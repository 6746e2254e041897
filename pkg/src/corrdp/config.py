"""INI experiment configuration.

A config has sections ``[dataset]``, ``[schema.<column>]`` (CSV input
only), ``[tv]``, ``[train]`` and ``[output]``. Every key has a default
matching the synthetic experiment, so a file only lists what it changes.
Feature indices in config files are 1-based.
"""

import configparser
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .data import ColumnSpec
from .errors import ConfigError
from .optimizer import METHODS

TRUE = ("1", "true", "yes", "on")
FALSE = ("0", "false", "no", "off")


def _bool(sec, key, default):
    v = sec.get(key)
    if v is None or v.strip() == "":
        return default
    v = v.strip().lower()
    if v in TRUE:
        return True
    if v in FALSE:
        return False
    raise ConfigError(f"[{sec.name}] {key}: expected a boolean, got {v!r}")


def _num(sec, key, default, kind=float, optional=False):
    v = sec.get(key)
    if v is None or v.strip() == "" or (optional and v.strip().lower() == "none"):
        return default
    try:
        return kind(v)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: expected a number, got {v!r}") from None


def _list(v):
    return [x.strip() for x in v.replace("\n", ",").split(",") if x.strip()]


def _seeds(sec, default):
    v = sec.get("seeds")
    if v is None:
        return default
    out = []
    for item in _list(v):
        try:
            if "-" in item.lstrip("-"):
                a, b = item.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(item))
        except ValueError:
            raise ConfigError(f"[{sec.name}] seeds: bad entry {item!r}") from None
    if not out:
        raise ConfigError("seed list is empty")
    return out


@dataclass
class DatasetConfig:
    source: str = "synthetic"
    m: int = 100
    m_s: int = 10
    n: int = 2000
    noise_std: float = 5.0
    path: Optional[str] = None
    label: str = "y"
    unseen: str = "error"
    schema: List[ColumnSpec] = field(default_factory=list)


@dataclass
class TVConfig:
    strategy: str = "gaussian_posterior"
    value: Optional[float] = None
    adjust: bool = True
    c2: object = 1.0  # a number, or "auto" for the bootstrap choice
    gamma: Optional[float] = None
    delta: float = 1e-4
    profile: Optional[str] = None
    bins: Optional[int] = None


@dataclass
class TrainSection:
    loss: str = "ridge"
    D: float = 100.0
    C: float = 1.0
    L: Optional[float] = None
    clip: Optional[float] = None
    reg: Optional[float] = None
    methods: Tuple[str, ...] = ("corrdp", "semi", "standard", "partial")
    method: Optional[str] = None
    epsilons: Tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(1, 11))
    epsilon: Optional[float] = None
    delta: float = 1e-4
    T: int = 4000
    batch: Optional[int] = None
    sampling: str = "uniform"
    step_rule: str = "constant"
    alpha: float = 0.001
    seeds: Tuple[int, ...] = tuple(range(10))
    noise_constant: Optional[float] = 1.0
    include_b2: bool = True


@dataclass
class OutputConfig:
    dir: str = "out"
    trace: bool = False


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    tv: TVConfig = field(default_factory=TVConfig)
    train: TrainSection = field(default_factory=TrainSection)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    jobs: int = 0
    base_dir: str = "."

    def resolve(self, path):
        if path is None or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)


def _dataset(cp):
    sec = cp["dataset"] if cp.has_section("dataset") else cp["DEFAULT"]
    ds = DatasetConfig(
        source=sec.get("source", "synthetic").strip().lower(),
        m=_num(sec, "m", 100, int), m_s=_num(sec, "m_s", 10, int), n=_num(sec, "n", 2000, int),
        noise_std=_num(sec, "noise_std", 5.0), path=sec.get("path"),
        label=sec.get("label", "y"), unseen=sec.get("unseen", "error"))
    if ds.source not in ("synthetic", "csv"):
        raise ConfigError(f"[dataset] source must be synthetic or csv, got {ds.source!r}")
    if ds.unseen not in ("error", "ignore"):
        raise ConfigError("[dataset] unseen must be error or ignore")
    for name in cp.sections():
        if not name.startswith("schema."):
            continue
        s = cp[name]
        cats = s.get("categories")
        ds.schema.append(ColumnSpec(name[len("schema."):], s.get("kind", "continuous").strip(),
                                    _bool(s, "sensitive", False),
                                    tuple(_list(cats)) if cats else None))
    if ds.source == "csv":
        if not ds.path:
            raise ConfigError("[dataset] path is required for csv input")
        if not ds.schema:
            raise ConfigError("csv input needs [schema.<column>] sections")
    if ds.source == "synthetic" and not 1 <= ds.m_s <= ds.m:
        raise ConfigError(f"[dataset] need 1 <= m_s <= m, got m_s={ds.m_s}, m={ds.m}")
    return ds


def _tv(cp):
    if not cp.has_section("tv"):
        return TVConfig()
    s = cp["tv"]
    auto_c2 = s.get("c2", "").strip().lower() == "auto"
    t = TVConfig(strategy=s.get("strategy", "gaussian_posterior").strip(),
                 value=_num(s, "value", None), adjust=_bool(s, "adjust", True),
                 c2="auto" if auto_c2 else _num(s, "c2", 1.0), gamma=_num(s, "gamma", None),
                 delta=_num(s, "delta", 1e-4), profile=s.get("profile"),
                 bins=_num(s, "bins", None, int))
    known = ("exact", "gaussian_posterior", "discrete", "histogram", "gaussian_regression", "uniform")
    if t.strategy not in known:
        raise ConfigError(f"[tv] unknown strategy {t.strategy!r}; expected one of {known}")
    if t.strategy == "uniform" and t.value is None:
        raise ConfigError("[tv] strategy uniform needs a value")
    return t


def _train(cp):
    if not cp.has_section("train"):
        return TrainSection()
    s = cp["train"]
    d = TrainSection()
    methods = tuple(x.lower() for x in _list(s.get("methods", ",".join(d.methods))))
    bad = [x for x in methods if x not in METHODS]
    method = s.get("method")
    if method is not None:
        method = method.strip().lower()
        if method not in METHODS:
            bad.append(method)
    if bad:
        raise ConfigError(f"[train] unknown method tag(s) {bad}; expected one of {METHODS}")
    try:
        eps = tuple(float(x) for x in _list(s["epsilons"])) if "epsilons" in s else d.epsilons
    except ValueError:
        raise ConfigError("[train] epsilons must be numbers") from None
    if not eps or any(e <= 0 for e in eps) or list(eps) != sorted(eps):
        raise ConfigError("[train] epsilon grid must be nonempty, positive and sorted")
    batch = s.get("batch", "full").strip().lower()
    nc = s.get("noise_constant")
    t = TrainSection(
        loss=s.get("loss", d.loss).strip().lower(), D=_num(s, "D", d.D), C=_num(s, "C", d.C),
        L=_num(s, "L", None, optional=True), clip=_num(s, "clip", None, optional=True),
        reg=_num(s, "reg", None, optional=True), methods=methods, method=method,
        epsilons=eps, epsilon=_num(s, "epsilon", None), delta=_num(s, "delta", d.delta),
        T=_num(s, "T", d.T, int), batch=None if batch in ("", "full", "none") else _num(s, "batch", None, int),
        sampling=s.get("sampling", d.sampling).strip(), step_rule=s.get("step_rule", d.step_rule).strip(),
        alpha=_num(s, "alpha", d.alpha), seeds=tuple(_seeds(s, list(d.seeds))),
        noise_constant=d.noise_constant if nc is None else (None if nc.strip().lower() in ("", "none") else _num(s, "noise_constant", None)),
        include_b2=_bool(s, "include_b2", True))
    if t.loss not in ("squared", "ridge", "logistic"):
        raise ConfigError(f"[train] unknown loss {t.loss!r}")
    if t.step_rule not in ("constant", "decay"):
        raise ConfigError(f"[train] step_rule must be constant or decay, got {t.step_rule!r}")
    if t.T < 1:
        raise ConfigError("[train] T must be at least 1")
    if not 0 < t.delta < 1:
        raise ConfigError("[train] delta must lie in (0, 1)")
    return t


def parse_config(text, base_dir="."):
    """Parse INI text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys such as D and T are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from None
    known = {"dataset", "tv", "train", "output", "run"}
    for name in cp.sections():
        if name not in known and not name.startswith("schema."):
            raise ConfigError(f"unknown config section [{name}]")
    out = OutputConfig()
    if cp.has_section("output"):
        out = OutputConfig(cp["output"].get("dir", "out"), _bool(cp["output"], "trace", False))
    run = cp["run"] if cp.has_section("run") else None
    return ExperimentConfig(
        _dataset(cp), _tv(cp), _train(cp), out,
        seed=_num(run, "seed", 0, int) if run is not None else 0,
        jobs=_num(run, "jobs", 0, int) if run is not None else 0,
        base_dir=base_dir)


def load_config(path):
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
