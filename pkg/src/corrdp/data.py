"""Datasets, feature partitions and synthetic data.

Features are indexed from 0 internally. Command-line tools and documentation
number them from 1.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import IngestError, SpecError
from .rng import as_generator


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Row-major features ``(n, m)`` and labels ``(n,)``."""

    features: np.ndarray
    labels: np.ndarray
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        x = _frozen(self.features)
        y = _frozen(self.labels).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-d array, got shape {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        if self.names is not None and len(self.names) != x.shape[1]:
            raise ValueError("names must have one entry per feature column")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def m(self):
        return self.features.shape[1]

    def column_names(self):
        if self.names is not None:
            return list(self.names)
        return [f"x{i + 1}" for i in range(self.m)]

    def subset(self, rows):
        return Dataset(self.features[rows], self.labels[rows], self.names)


@dataclass(frozen=True)
class FeaturePartition:
    """Split of the feature indices into sensitive and insensitive sets.

    ``groups`` optionally maps a raw feature name to the encoded columns it
    produced (one-hot encoding yields several columns per raw feature).
    """

    sensitive: Tuple[int, ...]
    insensitive: Tuple[int, ...]
    groups: Dict[str, Tuple[int, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = tuple(sorted(int(i) for i in self.sensitive))
        u = tuple(sorted(int(i) for i in self.insensitive))
        if set(s) & set(u):
            raise ValueError("sensitive and insensitive sets overlap")
        allidx = sorted(s + u)
        if allidx != list(range(len(allidx))):
            raise ValueError("sensitive and insensitive sets must cover 0..m-1 exactly")
        object.__setattr__(self, "sensitive", s)
        object.__setattr__(self, "insensitive", u)
        object.__setattr__(self, "groups", {k: tuple(v) for k, v in self.groups.items()})

    @classmethod
    def from_sensitive(cls, sensitive, m, groups=None):
        s = set(int(i) for i in sensitive)
        if any(i < 0 or i >= m for i in s):
            raise ValueError(f"sensitive index out of range for m={m}")
        return cls(tuple(sorted(s)), tuple(i for i in range(m) if i not in s), groups or {})

    @property
    def m(self):
        return len(self.sensitive) + len(self.insensitive)

    @property
    def m_s(self):
        return len(self.sensitive)

    def sensitive_mask(self):
        mask = np.zeros(self.m, dtype=bool)
        mask[list(self.sensitive)] = True
        return mask

    def insensitive_groups(self):
        """Insensitive columns grouped by raw feature.

        Columns that do not belong to a declared group form singleton groups
        keyed by their index.
        """
        out = {}
        seen = set()
        for name, cols in self.groups.items():
            if cols and all(c in self.insensitive for c in cols):
                out[name] = cols
                seen.update(cols)
        for c in self.insensitive:
            if c not in seen:
                out[c] = (c,)
        return out


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Joint Gaussian features with a linear-Gaussian label."""

    mean: np.ndarray
    covariance: np.ndarray
    theta_true: np.ndarray
    noise_std: float = 5.0

    def __post_init__(self):
        mu = _frozen(self.mean).reshape(-1)
        cov = _frozen(self.covariance)
        theta = _frozen(self.theta_true).reshape(-1)
        m = mu.shape[0]
        if cov.shape != (m, m) or theta.shape != (m,):
            raise SpecError(f"inconsistent shapes: mean {mu.shape}, cov {cov.shape}, theta {theta.shape}")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise SpecError("covariance is not symmetric")
        if self.noise_std < 0:
            raise SpecError("noise_std must be non-negative")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise SpecError("covariance is not positive definite") from None
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "theta_true", theta)
        object.__setattr__(self, "noise_std", float(self.noise_std))
        chol.setflags(write=False)
        object.__setattr__(self, "_chol", chol)

    @property
    def m(self):
        return self.mean.shape[0]

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "theta_true": self.theta_true.tolist(),
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["covariance"]),
                   np.asarray(d["theta_true"]), d.get("noise_std", 5.0))


def default_synthetic_spec(m=100, m_s=10, noise_std=5.0):
    """Block-covariance Gaussian with the first ``m_s`` features sensitive.

    With 1-based feature index i: mean ``(-1)**(i+1)``, true coefficient
    ``(-1)**(i+1) * sqrt(i+1)``, variance 1 on sensitive and 2 on insensitive
    features, covariance 0.5 within a block and 0.1 across blocks.
    """
    if not 1 <= m_s <= m:
        raise SpecError(f"need 1 <= m_s <= m, got m_s={m_s}, m={m}")
    i = np.arange(1, m + 1)
    sign = np.where(i % 2 == 1, 1.0, -1.0)
    sens = i <= m_s
    same_block = sens[:, None] == sens[None, :]
    cov = np.where(same_block, 0.5, 0.1)
    np.fill_diagonal(cov, np.where(sens, 1.0, 2.0))
    return GaussianSpec(sign, cov, sign * np.sqrt(i + 1.0), noise_std)


def default_partition(m, m_s):
    return FeaturePartition.from_sensitive(range(m_s), m)


def generate_synthetic(spec, n, rng):
    """Draw ``n`` i.i.d. rows from ``spec``; labels are ``theta.x + noise``."""
    if int(n) != n or n < 1:
        raise SpecError(f"n must be a positive integer, got {n}")
    gen = as_generator(rng)
    z = gen.standard_normal((int(n), spec.m))
    x = spec.mean + z @ spec._chol.T
    eta = gen.standard_normal(int(n)) * spec.noise_std
    y = x @ spec.theta_true + eta
    return Dataset(x, y)


def feature_bound(d):
    """Largest row L2 norm of the feature matrix."""
    return float(np.max(np.linalg.norm(d.features, axis=1)))


# -- CSV ingestion -----------------------------------------------------------

@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "continuous"  # or "categorical"
    sensitive: bool = False
    categories: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise IngestError(f"unknown column kind {self.kind!r}", column=self.name)


def _minmax(col):
    lo, hi = float(np.min(col)), float(np.max(col))
    if hi - lo == 0.0:
        return np.zeros_like(col), (lo, hi)
    return (col - lo) / (hi - lo), (lo, hi)


def ingest_csv(path, schema: Sequence[ColumnSpec], label_column, unseen="error"):
    """Read a CSV file into an encoded dataset.

    Categorical columns are one-hot encoded and every encoded column inherits
    the sensitivity of its raw feature. Continuous columns are min-max scaled
    to [0, 1] (constant columns map to 0). Scaling statistics are computed on
    the full file without privacy.

    Parameters
    ----------
    path : str or path-like
    schema : sequence of ColumnSpec
        Feature columns, in the order they should appear in the output.
    label_column : str
        Numeric label column (not part of ``schema``).
    unseen : {"error", "ignore"}
        Policy for categorical values absent from a declared category list.
        ``"ignore"`` leaves the one-hot block all zero.

    Returns
    -------
    (Dataset, FeaturePartition, dict)
        The dict records per-column scaling ranges and category lists.
    """
    if unseen not in ("error", "ignore"):
        raise IngestError(f"unknown unseen-category policy {unseen!r}")
    names = [c.name for c in schema]
    if label_column in names:
        raise IngestError("label column is also declared as a feature", column=label_column)
    if len(set(names)) != len(names):
        raise IngestError("duplicate column in schema")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file") from None
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    pos = {h: i for i, h in enumerate(header)}
    for name in names + [label_column]:
        if name not in pos:
            raise IngestError("missing column", column=name)
    if not rows:
        raise IngestError("no data rows")

    def cell(r, rownum, name):
        j = pos[name]
        if j >= len(r):
            raise IngestError("short row", row=rownum, column=name)
        return r[j].strip()

    def numeric(r, rownum, name):
        s = cell(r, rownum, name)
        try:
            v = float(s)
        except ValueError:
            raise IngestError(f"non-numeric value {s!r}", row=rownum, column=name) from None
        if not math.isfinite(v):
            raise IngestError(f"non-finite value {s!r}", row=rownum, column=name)
        return v

    # data rows are numbered from 2 (row 1 is the header)
    labels = np.array([numeric(r, k + 2, label_column) for k, r in enumerate(rows)])
    blocks, col_names, sens_cols, groups, meta = [], [], [], {}, {}
    for spec in schema:
        start = len(col_names)
        if spec.kind == "continuous":
            raw = np.array([numeric(r, k + 2, spec.name) for k, r in enumerate(rows)])
            scaled, rng_ = _minmax(raw)
            blocks.append(scaled[:, None])
            col_names.append(spec.name)
            meta[spec.name] = {"kind": "continuous", "min": rng_[0], "max": rng_[1]}
        else:
            values = [cell(r, k + 2, spec.name) for k, r in enumerate(rows)]
            cats = list(spec.categories) if spec.categories else sorted(set(values))
            index = {c: i for i, c in enumerate(cats)}
            onehot = np.zeros((len(rows), len(cats)))
            for k, v in enumerate(values):
                if v in index:
                    onehot[k, index[v]] = 1.0
                elif unseen == "error":
                    raise IngestError(f"unseen category {v!r}", row=k + 2, column=spec.name)
            blocks.append(onehot)
            col_names.extend(f"{spec.name}={c}" for c in cats)
            meta[spec.name] = {"kind": "categorical", "categories": cats}
        cols = tuple(range(start, len(col_names)))
        groups[spec.name] = cols
        if spec.sensitive:
            sens_cols.extend(cols)
    x = np.hstack(blocks)
    d = Dataset(x, labels, tuple(col_names))
    part = FeaturePartition.from_sensitive(sens_cols, d.m, groups)
    return d, part, meta


def write_dataset_csv(d, path, label_name="y"):
    """Write features and labels as CSV with ``repr`` float formatting."""
    names = d.column_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [label_name])
        for row, y in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def read_dataset_csv(path, label_name="y"):
    """Inverse of :func:`write_dataset_csv` (no scaling or encoding)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = np.array([[float(v) for v in r] for r in reader if r])
    if label_name not in header:
        raise IngestError("missing column", column=label_name)
    j = header.index(label_name)
    feats = [k for k in range(len(header)) if k != j]
    return Dataset(body[:, feats], body[:, j], tuple(header[k] for k in feats))
