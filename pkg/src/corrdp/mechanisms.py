"""Correlated sensitivity and the Laplace mechanism built on it."""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .data import Dataset
from .errors import ParameterError, ProfileError
from .rng import as_generator
from .tv import CategoricalPMF, tv_exact


@dataclass(frozen=True)
class SensitivityReport:
    per_coordinate: np.ndarray
    l1: float
    correlated: float


@dataclass(frozen=True)
class QuerySpec:
    """A coordinate-separable query: output ``k`` reads only ``columns[k]``.

    For queries outside the built-in library the declared sensitivities are
    taken on trust; verifying them is the caller's job.
    """

    columns: Tuple[int, ...]
    func: Callable[[Dataset], np.ndarray]
    coord_sensitivity: np.ndarray
    l1_sensitivity: float
    name: str = "custom"

    @property
    def K(self):
        return len(self.columns)

    def __call__(self, d):
        return np.asarray(self.func(d), dtype=float)


def _split_l1(columns, part, per_coord):
    # a neighbour changes only sensitive or only insensitive columns of one row
    s = set(part.sensitive)
    on_s = sum(c for k, c in zip(columns, per_coord) if k in s)
    on_u = sum(c for k, c in zip(columns, per_coord) if k not in s)
    return max(on_s, on_u)


def column_mean_query(n, part, columns=None):
    """Column means of data in [0, 1]; each coordinate has sensitivity 1/n."""
    cols = tuple(range(part.m)) if columns is None else tuple(int(c) for c in columns)
    per = np.full(len(cols), 1.0 / n)

    def f(d):
        return d.features[:, list(cols)].mean(axis=0)

    return QuerySpec(cols, f, per, _split_l1(cols, part, per), "mean")


def column_count_query(part, columns=None, threshold=0.5):
    """Number of rows with ``x_k > threshold``; each coordinate has sensitivity 1."""
    cols = tuple(range(part.m)) if columns is None else tuple(int(c) for c in columns)
    per = np.ones(len(cols))

    def f(d):
        return (d.features[:, list(cols)] > threshold).sum(axis=0).astype(float)

    return QuerySpec(cols, f, per, _split_l1(cols, part, per), "count")


def entry_distance(e1, e2, part, conditional):
    """Distance between datasets whose differing entries are ``e1`` and ``e2``.

    If the sensitive values differ (whatever the insensitive ones do) the
    conditioning can be on the sensitive values themselves, two point
    masses, so the distance is 1. If only
    insensitive values differ it is the TV distance between the conditional
    laws of the sensitive block, ``conditional(u_values)``.
    """
    e1, e2 = np.asarray(e1, dtype=float), np.asarray(e2, dtype=float)
    s, u = list(part.sensitive), list(part.insensitive)
    if np.array_equal(e1, e2):
        return 0.0
    if not np.array_equal(e1[s], e2[s]):
        # conditioning on the sensitive values gives disjoint point masses
        return tv_exact(CategoricalPMF([1.0, 0.0]), CategoricalPMF([0.0, 1.0]))
    return tv_exact(conditional(tuple(e1[u])), conditional(tuple(e2[u])))


def correlated_sensitivity(q, part, tv):
    """``min(sum_S df_k + sum_U df_k TV(k), df)`` together with ``df`` and ``df_k``."""
    s = set(part.sensitive)
    total = 0.0
    for col, dk in zip(q.columns, q.coord_sensitivity):
        if col in s:
            total += dk
        else:
            if col not in tv.values:
                raise ProfileError(f"TV profile has no value for feature {col + 1}")
            total += dk * tv.values[col]
    per = np.asarray(q.coord_sensitivity, dtype=float)
    return SensitivityReport(per, float(q.l1_sensitivity), float(min(total, q.l1_sensitivity)))


def _laplace(values, scale, epsilon, rng):
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if scale < 0:
        raise ParameterError("sensitivity must be non-negative")
    values = np.asarray(values, dtype=float)
    if scale == 0:
        return values.copy()
    gen = as_generator(rng)
    return values + gen.laplace(0.0, scale / epsilon, size=values.shape)


def laplace_standard(values, l1_sensitivity, epsilon, rng=None):
    """Add i.i.d. ``Lap(l1_sensitivity / epsilon)`` noise to every coordinate."""
    return _laplace(values, float(l1_sensitivity), epsilon, rng)


def laplace_corrdp(values, report, epsilon, rng=None):
    """Add i.i.d. ``Lap(correlated_sensitivity / epsilon)`` noise."""
    return _laplace(values, report.correlated, epsilon, rng)


def laplace_accuracy_bound(sensitivity, epsilon, K, beta):
    """Sup-norm error that holds with probability at least ``1 - beta``."""
    if not 0 < beta <= 1:
        raise ParameterError("beta must lie in (0, 1]")
    return sensitivity * math.log(K / beta) / epsilon


def neighbors(d, part, grid, rows=None):
    """Yield every neighbouring dataset whose changed values lie on ``grid``.

    One row changes, and within it either only sensitive or only insensitive
    features change (never both). ``rows`` restricts which rows may change.
    """
    grid = list(grid)
    rows = range(d.n) if rows is None else rows
    for r in rows:
        for block in (part.sensitive, part.insensitive):
            block = list(block)
            if not block:
                continue
            current = tuple(d.features[r, block])
            for vals in itertools.product(grid, repeat=len(block)):
                if vals == current:
                    continue
                x = np.array(d.features)
                x[r, block] = vals
                yield Dataset(x, d.labels, d.names), (r, "sensitive" if block == list(part.sensitive) else "insensitive")


def empirical_sensitivities(q, d, part, grid, rows=None):
    """Brute-force ``(df_k, df)`` over :func:`neighbors` of ``d``."""
    base = q(d)
    per = np.zeros(q.K)
    l1 = 0.0
    for nb, _ in neighbors(d, part, grid, rows):
        diff = np.abs(q(nb) - base)
        per = np.maximum(per, diff)
        l1 = max(l1, float(diff.sum()))
    return per, l1
