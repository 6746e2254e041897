"""Total-variation distances between conditional distributions.

The noise calibration needs, for every insensitive feature ``u``, the largest
TV distance between the conditional laws of the sensitive block given two
values of ``u``. Only single-feature conditioning is computed; maximising over
every subset of conditioning features is intractable and the single-feature
version is what the calibration uses.
"""

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy import integrate, special, stats
from scipy.linalg import solve_triangular

from .errors import (ConditioningUnsupported, DegenerateFitWarning, DistributionError,
                     EstimatorError, EstimatorMismatch, ParameterError, ProfileError,
                     SpecError)
from .rng import as_generator


def _clamp01(v):
    return float(min(1.0, max(0.0, v)))


def gaussian_shift_tv(z):
    """TV between N(0, 1) and N(z, 1): ``2 Phi(|z|/2) - 1``."""
    return float(special.erf(abs(z) / (2.0 * math.sqrt(2.0))))


# -- one-dimensional distributions -------------------------------------------

@dataclass(frozen=True)
class GaussianMeanVar:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise DistributionError(f"Gaussian variance must be positive, got {self.var}")

    def pdf(self, x):
        return stats.norm.pdf(x, self.mean, math.sqrt(self.var))

    def cdf(self, x):
        return stats.norm.cdf(x, self.mean, math.sqrt(self.var))


@dataclass(frozen=True, eq=False)
class CategoricalPMF:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise DistributionError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probabilities", p)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Piecewise-constant density: ``masses[k]`` spread uniformly over bin k."""

    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float).reshape(-1)
        w = np.asarray(self.masses, dtype=float).reshape(-1)
        if e.shape[0] != w.shape[0] + 1 or np.any(np.diff(e) <= 0):
            raise DistributionError("edges must be increasing with len(masses) + 1 entries")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DistributionError("masses must be non-negative and sum to 1")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "masses", w)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.edges, x, side="right") - 1
        inside = (k >= 0) & (k < self.masses.shape[0])
        widths = np.diff(self.edges)
        out = np.zeros_like(x)
        out[inside] = self.masses[k[inside]] / widths[k[inside]]
        return out


def _tv_gauss_gauss(p, q):
    if p.var == q.var:
        return gaussian_shift_tv((p.mean - q.mean) / math.sqrt(p.var))
    # densities cross at the roots of a quadratic; TV = sup over the region p > q
    a = 1 / (2 * q.var) - 1 / (2 * p.var)
    b = p.mean / p.var - q.mean / q.var
    c = (q.mean ** 2 / (2 * q.var) - p.mean ** 2 / (2 * p.var)
         + 0.5 * math.log(q.var / p.var))
    roots = np.roots([a, b, c])
    roots = np.sort(roots[np.isreal(roots)].real)
    pts = np.concatenate([[-np.inf], roots, [np.inf]])
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = (lo + hi) / 2 if np.isfinite(lo) and np.isfinite(hi) else (
            hi - 1 if np.isfinite(hi) else (lo + 1 if np.isfinite(lo) else 0.0))
        if p.pdf(mid) > q.pdf(mid):
            total += (p.cdf(hi) - p.cdf(lo)) - (q.cdf(hi) - q.cdf(lo))
    return total


def _tv_hist_hist(p, q):
    edges = np.union1d(p.edges, q.edges)
    mids = (edges[:-1] + edges[1:]) / 2
    w = np.diff(edges)
    return 0.5 * float(np.sum(np.abs(p.density(mids) - q.density(mids)) * w))


def _tv_hist_gauss(h, g):
    lo, hi = h.edges[0], h.edges[-1]
    outside = g.cdf(lo) + (1 - g.cdf(hi))
    inner = 0.0
    for k in range(h.masses.shape[0]):
        a, b = h.edges[k], h.edges[k + 1]
        level = h.masses[k] / (b - a)
        val, _ = integrate.quad(lambda x: abs(level - g.pdf(x)), a, b,
                                epsabs=1e-11, epsrel=1e-10, limit=200)
        inner += val
    return 0.5 * (outside + inner)


def tv_exact(p, q):
    """TV distance between two one-dimensional distributions.

    Categorical pairs use ``0.5 * sum|p - q|``. Equal-variance Gaussians use
    the closed form ``2 Phi(|mu1 - mu2| / (2 sigma)) - 1``; unequal variances
    integrate between the density crossing points. Histograms are compared on
    the union of their edges, and a histogram against a Gaussian is integrated
    numerically bin by bin.
    """
    if isinstance(p, CategoricalPMF) and isinstance(q, CategoricalPMF):
        if p.probabilities.shape != q.probabilities.shape:
            raise DistributionError("categorical supports differ in size")
        return _clamp01(0.5 * np.sum(np.abs(p.probabilities - q.probabilities)))
    if isinstance(p, CategoricalPMF) or isinstance(q, CategoricalPMF):
        raise DistributionError("cannot compare a categorical with a continuous distribution")
    if isinstance(p, GaussianMeanVar) and isinstance(q, GaussianMeanVar):
        return _clamp01(_tv_gauss_gauss(p, q))
    if isinstance(p, Histogram) and isinstance(q, Histogram):
        return _clamp01(_tv_hist_hist(p, q))
    if isinstance(p, Histogram) and isinstance(q, GaussianMeanVar):
        return _clamp01(_tv_hist_gauss(p, q))
    if isinstance(p, GaussianMeanVar) and isinstance(q, Histogram):
        return _clamp01(_tv_hist_gauss(q, p))
    raise DistributionError(f"unsupported pair {type(p).__name__}, {type(q).__name__}")


def tv_gaussian_equal_cov(mean_shift, cov):
    """TV between N(a, cov) and N(a + mean_shift, cov) via the Mahalanobis norm."""
    shift = np.atleast_1d(np.asarray(mean_shift, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SpecError("conditional covariance is not positive definite") from None
    z = solve_triangular(chol, shift, lower=True)
    return _clamp01(gaussian_shift_tv(float(np.linalg.norm(z))))


# -- estimators ----------------------------------------------------------------

def _as_cols(u_index):
    if np.ndim(u_index) == 0:
        return [int(u_index)]
    return [int(c) for c in u_index]


def _codes(block):
    """Integer codes for the distinct rows of ``block``."""
    _, inv = np.unique(block, axis=0, return_inverse=True)
    return inv.reshape(-1)


def tv_plugin_from_counts(counts):
    """Largest pairwise TV between the columns of a contingency table.

    ``counts[i, j]`` is the number of rows with sensitive category ``i`` and
    conditioning category ``j``.
    """
    counts = np.asarray(counts, dtype=float)
    col = counts.sum(axis=0)
    if np.any(col <= 0):
        raise ConditioningUnsupported(
            f"conditioning categories {np.flatnonzero(col <= 0).tolist()} have no rows")
    cond = counts / col
    best = 0.0
    for j in range(cond.shape[1] - 1):
        d = 0.5 * np.abs(cond[:, j + 1:] - cond[:, j:j + 1]).sum(axis=0)
        best = max(best, float(d.max()))
    return _clamp01(best)


def _cond_codes(d, u_index, u_values):
    cols = _as_cols(u_index)
    ublock = d.features[:, cols]
    if u_values is None:
        return _codes(ublock), None
    declared = np.atleast_2d(np.asarray(u_values, dtype=float))
    if declared.shape[1] != len(cols):
        declared = declared.reshape(-1, len(cols))
    codes = np.full(d.n, -1)
    for k, v in enumerate(declared):
        codes[np.all(ublock == v, axis=1)] = k
    if np.any(codes < 0):
        raise EstimatorError("conditioning feature takes values outside u_values")
    return codes, declared.shape[0]


def tv_discrete_plugin(d, part, u_index, u_values=None, sensitive=None):
    """Plug-in estimate for a discrete sensitive block and a discrete ``u``.

    The sensitive block is treated as one categorical variable over its
    observed joint values. ``u_index`` may be one column or the columns of a
    one-hot group. If ``u_values`` lists the admissible conditioning values,
    any value with no rows raises :class:`ConditioningUnsupported`.
    """
    s_cols = list(part.sensitive if sensitive is None else sensitive)
    if not s_cols:
        raise EstimatorMismatch("no sensitive features to condition")
    s_codes = _codes(d.features[:, s_cols])
    u_codes, n_u = _cond_codes(d, u_index, u_values)
    k_u = int(u_codes.max()) + 1 if n_u is None else n_u
    counts = np.zeros((int(s_codes.max()) + 1, k_u))
    np.add.at(counts, (s_codes, u_codes), 1.0)
    return tv_plugin_from_counts(counts)


def _single_sensitive(part, sensitive_index):
    if sensitive_index is not None:
        if sensitive_index not in part.sensitive:
            raise EstimatorMismatch(f"feature {sensitive_index} is not sensitive")
        return int(sensitive_index)
    if part.m_s != 1:
        raise EstimatorMismatch(
            f"estimator needs one continuous sensitive feature, partition has {part.m_s}")
    return part.sensitive[0]


def tv_histogram(d, part, u_index, bins=None, sensitive_index=None, bound=None, u_values=None):
    """Histogram estimate for a scalar continuous sensitive feature.

    The range ``[-B, B]`` is cut into ``bins`` equal bins; by default
    ``bins = ceil(n ** (1/3))`` and ``B`` is the largest absolute value of the
    sensitive column. Values outside ``[-B, B]`` fall in the end bins.
    """
    s = _single_sensitive(part, sensitive_index)
    xs = d.features[:, s]
    k = int(math.ceil(d.n ** (1.0 / 3.0))) if bins is None else int(bins)
    if k < 1:
        raise ParameterError("bins must be positive")
    b = float(np.max(np.abs(xs))) if bound is None else float(bound)
    if b <= 0:
        b = 1.0
    edges = np.linspace(-b, b, k + 1)
    idx = np.clip(np.searchsorted(edges, xs, side="right") - 1, 0, k - 1)
    u_codes, n_u = _cond_codes(d, u_index, u_values)
    k_u = int(u_codes.max()) + 1 if n_u is None else n_u
    counts = np.zeros((k, k_u))
    np.add.at(counts, (idx, u_codes), 1.0)
    return tv_plugin_from_counts(counts)


def tv_gaussian_regression(d, part, u_index, sensitive_index=None):
    """Linear-Gaussian fit of a scalar sensitive feature on a scalar ``u``.

    Fits ``x_s = phi * u + psi + N(0, eta^2)`` by least squares and returns
    ``2 Phi(|phi| (u_max - u_min) / (2 eta)) - 1``, the largest value over
    observed pairs. A perfect fit (``eta = 0``) returns 1 with a
    :class:`DegenerateFitWarning`.
    """
    s = _single_sensitive(part, sensitive_index)
    cols = _as_cols(u_index)
    if len(cols) != 1:
        raise EstimatorMismatch("regression estimator needs a scalar conditioning feature")
    if d.n < 3:
        raise EstimatorError("need at least 3 rows")
    xu, xs = d.features[:, cols[0]], d.features[:, s]
    du = xu - xu.mean()
    suu = float(du @ du)
    if suu <= 0:
        raise EstimatorError("conditioning feature has zero variance")
    phi = float(du @ (xs - xs.mean())) / suu
    psi = xs.mean() - phi * xu.mean()
    resid = xs - phi * xu - psi
    eta2 = float(resid @ resid) / d.n
    if eta2 <= 1e-14 * max(1.0, float(np.var(xs))):
        warnings.warn("perfect linear fit; returning TV = 1", DegenerateFitWarning, stacklevel=2)
        return 1.0
    spread = float(xu.max() - xu.min())
    return _clamp01(gaussian_shift_tv(abs(phi) * spread / math.sqrt(eta2)))


def clipped_endpoints(mean_u, m_s, delta):
    """Conditioning values ``mean_u -/+ 2 sqrt(log(2 m_s / delta))``."""
    r = 2.0 * math.sqrt(math.log(2.0 * m_s / delta))
    return mean_u - r, mean_u + r


def tv_posterior_moments(mean, cov, part, u_index, delta):
    """Posterior TV for a joint Gaussian with the given moments."""
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    u = int(u_index)
    if u not in part.insensitive:
        raise ParameterError(f"feature {u} is not insensitive")
    s = list(part.sensitive)
    if not s:
        return 0.0
    cov = np.asarray(cov, dtype=float)
    suu = float(cov[u, u])
    if suu <= 0:
        raise SpecError(f"variance of feature {u} is not positive")
    s_u = cov[s, u]
    post = cov[np.ix_(s, s)] - np.outer(s_u, s_u) / suu
    lo, hi = clipped_endpoints(float(mean[u]), len(s), delta)
    return tv_gaussian_equal_cov(s_u / suu * (hi - lo), post)


def tv_posterior_gaussian(spec, part, u_index, delta):
    """TV between the sensitive-block posteriors at the two clipped endpoints.

    Conditioning a Gaussian on one coordinate shifts the mean linearly and
    leaves the covariance unchanged, so the two posteriors share covariance
    and the distance has a Mahalanobis closed form.
    """
    return tv_posterior_moments(spec.mean, spec.covariance, part, u_index, delta)


def tv_posterior_empirical(d, part, u_index, delta):
    """:func:`tv_posterior_gaussian` with sample mean and covariance."""
    mean = d.features.mean(axis=0)
    cov = np.cov(d.features, rowvar=False)
    return tv_posterior_moments(mean, np.atleast_2d(cov), part, u_index, delta)


def combine_block_tv(*values):
    """Upper bound for a mixed sensitive block: ``min(sum of block TVs, 1)``.

    This additive split across continuous and discrete sensitive blocks is a
    heuristic without a proof; use it knowingly.
    """
    return _clamp01(sum(values))


# -- profiles ----------------------------------------------------------------

class TVKind(str, enum.Enum):
    EXACT = "exact"
    EMPIRICAL = "empirical"
    CONFIDENCE_ADJUSTED = "confidence_adjusted"


DEFAULT_GAMMA = {
    "exact": None,
    "gaussian_posterior": 0.5,
    "gaussian_regression": 0.5,
    "discrete": 0.5,
    "histogram": 1.0 / 3.0,
}


@dataclass
class TVProfile:
    """Per-insensitive-feature TV values (0-based column keys)."""

    values: Dict[int, float]
    kind: TVKind = TVKind.EMPIRICAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = {int(k): _clamp01(v) for k, v in self.values.items()}
        self.kind = TVKind(self.kind)

    def check_covers(self, part, names=None):
        missing = [i for i in part.insensitive if i not in self.values]
        if missing:
            label = [names[i] if names else i + 1 for i in missing]
            raise ProfileError(f"TV profile has no value for features {label}")
        extra = [i for i in self.values if i not in part.insensitive]
        if extra:
            raise ProfileError(f"TV profile has values for non-insensitive features {[i + 1 for i in extra]}")

    def vector(self, part):
        """Values in the order of ``part.insensitive``."""
        self.check_covers(part)
        return np.array([self.values[i] for i in part.insensitive])

    @classmethod
    def uniform(cls, part, value, kind=TVKind.EXACT):
        return cls({i: value for i in part.insensitive}, kind, {"estimator": "uniform"})

    def to_dict(self):
        est = self.meta.get("estimators", {})
        return {
            "kind": self.kind.value,
            "meta": {k: v for k, v in self.meta.items() if k != "estimators"},
            "features": [
                {"feature": i + 1, "value": v, "estimator": est.get(str(i), self.meta.get("estimator"))}
                for i, v in sorted(self.values.items())
            ],
        }

    @classmethod
    def from_dict(cls, obj):
        values, est = {}, {}
        for row in obj["features"]:
            i = int(row["feature"]) - 1
            values[i] = float(row["value"])
            if row.get("estimator") is not None:
                est[str(i)] = row["estimator"]
        meta = dict(obj.get("meta", {}))
        if est:
            meta["estimators"] = est
        return cls(values, TVKind(obj.get("kind", "empirical")), meta)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def confidence_margin(c2, gamma, n, m, m_s, delta):
    """Upper-confidence margin ``2 c2 sqrt(log((m - m_s)/delta)) / n**gamma``."""
    if not c2 > 0:
        raise ParameterError("c2 must be positive")
    if not 0 < gamma <= 0.5:
        raise ParameterError("gamma must lie in (0, 1/2]")
    if n < 2:
        raise ParameterError("n must be at least 2")
    if not m > m_s:
        raise ParameterError("need at least one insensitive feature (m > m_s)")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    return 2.0 * c2 * math.sqrt(math.log((m - m_s) / delta)) / n ** gamma


def confidence_adjust(profile, c2, gamma, n, m, m_s, delta):
    """Inflate empirical TV values so they upper-bound the truth w.h.p."""
    if profile.kind is not TVKind.EMPIRICAL:
        raise ProfileError(f"can only adjust an empirical profile, got {profile.kind.value}")
    margin = confidence_margin(c2, gamma, n, m, m_s, delta)
    meta = dict(profile.meta)
    meta.update({"c2": c2, "gamma": gamma, "n": n, "m": m, "m_s": m_s,
                 "delta": delta, "margin": margin})
    return TVProfile({i: v + margin for i, v in profile.values.items()},
                     TVKind.CONFIDENCE_ADJUSTED, meta)


def calibrate_c2(d, part, strategy, params=None, gamma=0.5, delta=1e-4, n_boot=50, rng=None):
    """Bootstrap a value of ``c2`` that makes the adjustment margin cover the estimator.

    The largest bootstrap standard deviation ``s`` over the insensitive
    features is turned into a Gaussian tail bound at level
    ``delta / (m - m_s)`` (a union over features), and ``c2`` is chosen so the
    margin of :func:`confidence_margin` equals that bound::

        c2 = s * n**gamma * z / (2 sqrt(log((m - m_s) / delta)))

    with ``z`` the upper ``delta / (2 (m - m_s))`` normal quantile.
    """
    if n_boot < 2:
        raise ParameterError("need at least two bootstrap replicates")
    g = as_generator(rng)
    n = d.n
    K = part.m - part.m_s
    if K < 1:
        raise ParameterError("need at least one insensitive feature")
    reps = []
    for _ in range(n_boot):
        idx = g.integers(0, n, n)
        sub = type(d)(d.features[idx], d.labels[idx], d.names)
        reps.append(build_tv_profile(sub, part, strategy, params).vector(part))
    spread = float(np.max(np.std(reps, axis=0, ddof=1)))
    z = stats.norm.isf(delta / (2.0 * K))
    return spread * n ** gamma * z / (2.0 * math.sqrt(math.log(K / delta)))


def _estimate_one(name, d, part, cols, params):
    delta = params.get("delta", 1e-4)
    if name == "exact":
        spec = params.get("spec")
        if spec is None:
            raise EstimatorError("exact TV needs the generating GaussianSpec")
        if len(cols) != 1:
            raise EstimatorMismatch("exact posterior TV needs a scalar feature")
        return tv_posterior_gaussian(spec, part, cols[0], delta)
    if name == "gaussian_posterior":
        if len(cols) != 1:
            raise EstimatorMismatch("posterior TV needs a scalar feature")
        return tv_posterior_empirical(d, part, cols[0], delta)
    if name == "discrete":
        return tv_discrete_plugin(d, part, cols)
    if name == "histogram":
        return tv_histogram(d, part, cols, bins=params.get("bins"),
                            sensitive_index=params.get("sensitive_index"),
                            bound=params.get("bound"))
    if name == "gaussian_regression":
        return tv_gaussian_regression(d, part, cols, params.get("sensitive_index"))
    raise EstimatorError(f"unknown estimator {name!r}")


def build_tv_profile(d, part, strategy, params=None):
    """Estimate TV for every insensitive feature.

    Parameters
    ----------
    strategy : str or dict
        One estimator name for every feature, or a map from a group key (raw
        feature name, or 0-based column index for ungrouped columns) to an
        estimator name. Names: ``exact``, ``gaussian_posterior``,
        ``discrete``, ``histogram``, ``gaussian_regression``.
    params : dict, optional
        ``spec`` (for ``exact``), ``delta``, ``bins``, ``sensitive_index``,
        ``bound``.

    All columns of a one-hot group receive the group's single value.
    """
    params = params or {}
    groups = part.insensitive_groups()
    values, est, failures = {}, {}, []
    for key, cols in groups.items():
        label = key + 1 if isinstance(key, int) else key
        name = strategy if isinstance(strategy, str) else strategy.get(key, strategy.get(str(key)))
        if name is None:
            failures.append((label, EstimatorError("no estimator assigned")))
            continue
        try:
            v = _estimate_one(name, d, part, list(cols), params)
        except EstimatorError as e:
            failures.append((label, e))
            continue
        for c in cols:
            values[c] = v
            est[str(c)] = name
    if failures:
        # report every failing feature; never return a partial profile
        msg = "; ".join(f"feature {k}: {e}" for k, e in failures)
        kinds = {type(e) for _, e in failures}
        raise (kinds.pop() if len(kinds) == 1 else EstimatorError)(msg)
    names = set(est.values())
    kind = TVKind.EXACT if names == {"exact"} else TVKind.EMPIRICAL
    gammas = {DEFAULT_GAMMA.get(x) for x in names} - {None}
    meta = {"estimators": est, "n": d.n, "delta": params.get("delta", 1e-4)}
    if len(names) == 1:
        meta["estimator"] = next(iter(names))
    if len(gammas) == 1:
        meta["gamma"] = next(iter(gammas))
    elif gammas:
        meta["gamma"] = min(gammas)
    return TVProfile(values, kind, meta)
