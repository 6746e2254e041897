"""Noisy projected gradient descent with per-coordinate noise calibration."""

import json
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DivergenceError, ParameterError, ProfileError
from .losses import mean_gradient, objective, with_derived_lipschitz
from .rng import RandomState

METHODS = ("nonprivate", "standard", "semi", "partial", "corrdp")
PRIVATE = ("standard", "semi", "corrdp")


def check_method(method):
    m = str(method).lower()
    if m not in METHODS:
        raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    return m


@dataclass(frozen=True, eq=False)
class NoiseProfile:
    """Per-coordinate Gaussian variances together with their inputs."""

    sigma_sq: np.ndarray
    method: str
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    L: Optional[float] = None
    T: Optional[int] = None
    n: Optional[int] = None
    m_s: Optional[int] = None
    B: Optional[float] = None
    include_b2: bool = True
    noise_constant: Optional[float] = None
    tv_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.array(self.sigma_sq, dtype=float)
        if s.ndim != 1 or np.any(~np.isfinite(s)) or np.any(s < 0):
            raise ParameterError("noise variances must be a finite non-negative vector")
        s.setflags(write=False)
        object.__setattr__(self, "sigma_sq", s)
        object.__setattr__(self, "method", check_method(self.method))

    @property
    def total(self):
        return float(self.sigma_sq.sum())

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("method", "epsilon", "delta", "L", "T", "n", "m_s",
                                          "B", "include_b2", "noise_constant", "tv_meta")}
        d["sigma_sq"] = [float(v) for v in self.sigma_sq]
        return d

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def base_variance(epsilon, delta, L, T, n, B=None, include_b2=True, noise_constant=None):
    """Variance put on every sensitive coordinate.

    By default ``(log(1/delta) + 1) B^2 L^2 T / (n^2 eps^2)``; ``include_b2``
    drops the ``B^2`` factor. Passing ``noise_constant=C`` switches to the
    experiment recipe ``C (log(1/delta) + 1) / eps^2``, which does not depend
    on ``L``, ``T`` or ``n``.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    core = (math.log(1.0 / delta) + 1.0) / epsilon ** 2
    if noise_constant is not None:
        if not noise_constant > 0:
            raise ParameterError("noise constant must be positive")
        return noise_constant * core
    if L is None or T is None or n is None:
        raise ParameterError("L, T and n are required for the calibrated noise")
    v = core * L ** 2 * T / n ** 2
    if include_b2:
        if B is None:
            raise ParameterError("B is required when the B^2 factor is included")
        v *= B ** 2
    return v


def calibrate_noise(method, part, tv, epsilon, delta, L=None, T=None, n=None, B=None,
                    include_b2=True, noise_constant=None):
    """Per-coordinate noise variances for one of the five methods.

    CorrDP puts the base variance on sensitive coordinates and
    ``base * max(TV(i), m_s^2 / m^2)`` on insensitive ones; Standard uses the
    base everywhere; Semi zeroes the insensitive entries; NonPrivate and
    Partial add no noise.
    """
    method = check_method(method)
    m = part.m
    info = dict(method=method, epsilon=epsilon, delta=delta, L=L, T=T, n=n, m_s=part.m_s, B=B,
                include_b2=include_b2, noise_constant=noise_constant)
    if method in ("nonprivate", "partial"):
        return NoiseProfile(np.zeros(m), **info)
    if method == "corrdp" and part.m_s == 0:
        warnings.warn("no sensitive features: CorrDP noise degenerates to Semi", UserWarning)
    base = base_variance(epsilon, delta, L, T, n, B, include_b2, noise_constant)
    s = np.full(m, base)
    U = list(part.insensitive)
    if method == "semi" or (method == "corrdp" and part.m_s == 0):
        s[U] = 0.0
    elif method == "corrdp":
        if tv is None:
            raise ProfileError("CorrDP calibration needs a TV profile")
        floor = (part.m_s / m) ** 2
        s[U] = base * np.maximum(tv.vector(part), floor)
    meta = {"kind": tv.kind.value, **{k: v for k, v in tv.meta.items() if k != "estimators"}} \
        if (tv is not None and method == "corrdp") else {}
    return NoiseProfile(s, tv_meta=meta, **info)


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Settings for one training run.

    ``batch=None`` means full batch. ``step_rule`` is ``"decay"`` for
    ``alpha_t = D / sqrt((L^2 + sum sigma^2) t)`` or ``"constant"`` for a fixed
    ``alpha``.
    """

    T: int = 4000
    batch: Optional[int] = None
    step_rule: str = "constant"
    alpha: float = 0.001
    method: str = "corrdp"
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    seed: int = 0
    sampling: str = "uniform"
    average: bool = False
    trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", check_method(self.method))
        if self.T < 1:
            raise ParameterError("T must be at least 1")
        if self.step_rule not in ("decay", "constant"):
            raise ParameterError(f"unknown step rule {self.step_rule!r}")
        if self.sampling not in ("uniform", "poisson"):
            raise ParameterError(f"unknown sampling scheme {self.sampling!r}")
        if self.alpha < 0:
            raise ParameterError("step size must be non-negative")
        if self.method in PRIVATE:
            if self.epsilon is None or not self.epsilon > 0:
                raise ParameterError("private methods need epsilon > 0")
            if self.delta is None or not 0 < self.delta < 1:
                raise ParameterError("private methods need delta in (0, 1)")


@dataclass
class FitResult:
    theta: np.ndarray
    method: str
    trace: Optional[np.ndarray] = None
    utility_gap: Optional[float] = None
    wallclock: float = 0.0
    converged: bool = True
    iterations: int = 0
    meta: dict = field(default_factory=dict)


def project_ball(theta, D):
    """Euclidean projection onto ``{||theta|| <= D}``."""
    norm = float(np.linalg.norm(theta))
    if norm > D:
        return theta * (D / norm)
    return theta


def decay_steps(D, L, sigma_total, T):
    """Step sizes ``D / sqrt((L^2 + sum sigma^2) t)`` for ``t = 1..T``."""
    return D / np.sqrt((L ** 2 + sigma_total) * np.arange(1, T + 1))


def _design(d, part, method):
    if method == "partial":
        cols = list(part.insensitive)
        return np.ascontiguousarray(d.features[:, cols]), cols
    return np.asarray(d.features), None


def corrdp_sgd(d, part, loss, cfg, noise=None, rng=None, theta0=None):
    """Noisy projected (stochastic) gradient descent.

    Each iteration takes the mean (clipped) gradient of a batch, adds
    ``b ~ N(0, diag(sigma^2))``, steps and projects onto the radius-``D``
    ball. Returns ``theta_{T+1}`` (or the iterate average if
    ``cfg.average``).

    Noise is drawn from the stream ``rng.derive("noise")`` as standard
    normals scaled by ``sigma``, so methods trained with the same seed see
    the same underlying randomness. Partial trains unregularised on the
    insensitive columns only.
    """
    start = time.perf_counter()
    method = cfg.method
    if noise is None:
        if method not in ("nonprivate", "partial"):
            raise ParameterError(f"method {method!r} needs a noise profile")
        noise = NoiseProfile(np.zeros(part.m), method)
    if noise.method != method:
        raise ParameterError(f"noise profile is for {noise.method!r}, config says {method!r}")
    if rng is None:
        rng = RandomState(cfg.seed, "sgd")
    if not isinstance(rng, RandomState):
        raise ParameterError("corrdp_sgd needs a RandomState so its streams can be derived")

    X, cols = _design(d, part, method)
    y = np.asarray(d.labels)
    n, k = X.shape
    sigma = np.sqrt(noise.sigma_sq if cols is None else noise.sigma_sq[cols])
    if method == "partial":
        loss = replace(loss, kind=loss.base_kind, reg=0.0)
    if cfg.step_rule == "decay":
        L = with_derived_lipschitz(loss, d).L
        steps = decay_steps(loss.D, L, float(np.sum(sigma ** 2)), cfg.T)
    else:
        steps = np.full(cfg.T, cfg.alpha)

    nq = n if cfg.batch is None else int(cfg.batch)
    if not 1 <= nq <= n:
        raise ParameterError(f"batch size must lie in [1, {n}], got {nq}")
    full = nq == n and cfg.sampling == "uniform"
    noisy = bool(np.any(sigma > 0))
    g_noise = rng.derive("noise").generator()
    g_batch = rng.derive("batch").generator()

    # full-batch squared loss without clipping only needs the Gram matrix
    gram = None
    if full and loss.base_kind == "squared" and loss.clip is None:
        w = loss.ridge_weight(n)
        gram = (2.0 / n) * (X.T @ X) + 2.0 * w * np.eye(k)
        xty = (2.0 / n) * (X.T @ y)

    theta = np.zeros(k) if theta0 is None else np.array(theta0, dtype=float)
    theta = project_ball(theta, loss.D)
    avg = np.zeros(k)
    trace = np.empty(cfg.T) if cfg.trace else None
    for t in range(cfg.T):
        if gram is not None:
            g = gram @ theta - xty
        elif full:
            g = mean_gradient(loss, theta, X, y, n)
        elif cfg.sampling == "uniform":
            idx = g_batch.choice(n, nq, replace=False)
            g = mean_gradient(loss, theta, X[idx], y[idx], n)
        else:
            idx = np.flatnonzero(g_batch.random(n) < nq / n)
            if idx.size:
                g = mean_gradient(loss, theta, X[idx], y[idx], n) * (idx.size / nq)
            else:
                g = 2.0 * loss.ridge_weight(n) * theta
        if noisy:
            g = g + sigma * g_noise.standard_normal(k)
        theta = project_ball(theta - steps[t] * g, loss.D)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(f"non-finite iterate at iteration {t + 1}", iteration=t + 1)
        if cfg.average:
            avg += (theta - avg) / (t + 1)
        if trace is not None:
            trace[t] = objective(loss, theta, X, y)
            if not math.isfinite(trace[t]):
                raise DivergenceError(f"non-finite objective at iteration {t + 1}", iteration=t + 1)
    out = avg if cfg.average else theta
    return FitResult(out, method, trace, wallclock=time.perf_counter() - start,
                     iterations=cfg.T, meta={"columns": cols})


def _smoothness(loss, X, n):
    top = np.linalg.norm(X, 2) ** 2 / X.shape[0] if X.size else 0.0
    scale = 2.0 if loss.base_kind == "squared" else 0.25
    return scale * top + 2.0 * loss.ridge_weight(n)


def reference_solution(d, loss, tol=1e-8, max_iter=200000, part=None, method="nonprivate"):
    """Non-private minimiser over the radius-``D`` ball.

    Accelerated projected gradient descent with adaptive restart; stops once
    the gradient-mapping norm is at most ``tol``. Returns a FitResult whose
    ``converged`` flag is False if ``max_iter`` was reached first.
    """
    start = time.perf_counter()
    X, cols = _design(d, part, method) if part is not None else (np.asarray(d.features), None)
    y = np.asarray(d.labels)
    n, k = X.shape
    if method == "partial":
        loss = replace(loss, kind=loss.base_kind, reg=0.0)
    beta = _smoothness(loss, X, n)
    step = 1.0 / beta if beta > 0 else 1.0

    def gmap(z):
        return beta * (z - project_ball(z - step * mean_gradient(loss, z, X, y, n), loss.D))

    theta = np.zeros(k)
    best, best_norm = theta, float(np.linalg.norm(gmap(theta)))
    if best_norm <= tol:
        return FitResult(theta, "reference", wallclock=time.perf_counter() - start,
                         meta={"grad_norm": best_norm, "columns": cols})
    z, tk, f_prev = theta.copy(), 1.0, objective(loss, theta, X, y)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        new = project_ball(z - step * mean_gradient(loss, z, X, y, n), loss.D)
        f_new = objective(loss, new, X, y)
        if f_new > f_prev:
            # restart momentum
            z, tk = theta.copy(), 1.0
            new = project_ball(z - step * mean_gradient(loss, z, X, y, n), loss.D)
            f_new = objective(loss, new, X, y)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        z = new + ((tk - 1.0) / t_next) * (new - theta)
        theta, tk, f_prev = new, t_next, f_new
        gn = float(np.linalg.norm(gmap(theta)))
        if gn < best_norm:
            best, best_norm = theta, gn
        if gn <= tol:
            converged = True
            break
    return FitResult(best, "reference", wallclock=time.perf_counter() - start, converged=converged,
                     iterations=it, meta={"grad_norm": best_norm, "columns": cols})


def embed(theta, part, m):
    """Zero-pad a parameter trained on the insensitive columns."""
    full = np.zeros(m)
    full[list(part.insensitive)] = theta
    return full


def utility_gap(d, loss, theta_priv, theta_hat, part=None):
    """``F(theta_priv) - F(theta_hat)`` on the full objective.

    A vector of length ``|U|`` (a Partial fit) is zero-padded on the
    sensitive coordinates first, which needs ``part``.
    """
    theta_priv = np.asarray(theta_priv, dtype=float)
    if theta_priv.shape[0] != d.m:
        if part is None or theta_priv.shape[0] != len(part.insensitive):
            raise ParameterError("parameter length does not match the data")
        theta_priv = embed(theta_priv, part, d.m)
    X, y = d.features, d.labels
    return objective(loss, theta_priv, X, y) - objective(loss, theta_hat, X, y)
