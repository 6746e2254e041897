"""Generalized-linear-model losses and their regularity constants."""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import AssumptionError, ParameterError, ShapeError

KINDS = ("squared", "ridge", "logistic")


@dataclass(frozen=True)
class LossSpec:
    """Loss family plus the bounds used for noise calibration.

    ``reg`` is the ridge weight on ``||theta||^2`` at the objective level
    (``None`` means ``1/n``). ``L`` may be declared; otherwise call
    :func:`with_derived_lipschitz`. ``clip`` rescales each per-sample gradient
    to at most that norm.
    """

    kind: str = "squared"
    D: float = 1.0
    L: Optional[float] = None
    clip: Optional[float] = None
    reg: Optional[float] = None
    C: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not self.D > 0:
            raise ParameterError("D must be positive")
        if self.L is not None and not self.L > 0:
            raise ParameterError("L must be positive")
        if self.reg is not None and self.reg < 0:
            raise ParameterError("ridge weight must be non-negative")
        if self.clip is not None and not self.clip > 0:
            raise ParameterError("clip must be positive")

    @property
    def base_kind(self):
        return "squared" if self.kind == "ridge" else self.kind

    def ridge_weight(self, n):
        if self.kind != "ridge":
            return 0.0
        return 1.0 / n if self.reg is None else float(self.reg)


def _check(theta, x):
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.shape[0]:
        raise ShapeError(f"theta has dimension {theta.shape[0]}, x has {x.shape[-1]}")
    return theta, x


def _check_labels(spec, y):
    if spec.kind == "logistic" and np.any((np.asarray(y) != 0) & (np.asarray(y) != 1)):
        raise ParameterError("logistic loss needs labels in {0, 1}")


def loss_value(spec, theta, x, y):
    """Per-sample loss; the ridge term lives in :func:`objective`, not here."""
    theta, x = _check(theta, x)
    _check_labels(spec, y)
    z = x @ theta
    if spec.base_kind == "squared":
        return (z - y) ** 2
    return np.logaddexp(0.0, z) - y * z


def _clip_rows(g, norms, clip):
    if clip is None:
        return np.ones_like(norms)
    with np.errstate(divide="ignore"):
        return np.minimum(1.0, np.where(norms > 0, clip / norms, 1.0))


def _residual(spec, z, y):
    if spec.base_kind == "squared":
        return 2.0 * (z - y)
    return expit(z) - y


def loss_gradient(spec, theta, x, y):
    """Per-sample gradient in theta, rescaled to norm ``clip`` if set."""
    theta, x = _check(theta, x)
    _check_labels(spec, y)
    r = _residual(spec, x @ theta, y)
    g = r * x
    if spec.clip is not None:
        norm = float(np.linalg.norm(g))
        if norm > spec.clip:
            g = g * (spec.clip / norm)
    return g


def objective(spec, theta, X, y):
    """Empirical risk ``mean loss + ridge_weight * ||theta||^2``."""
    theta, X = _check(theta, X)
    v = float(np.mean(loss_value(spec, theta, X, y)))
    return v + spec.ridge_weight(X.shape[0]) * float(theta @ theta)


def mean_gradient(spec, theta, X, y, n_objective=None):
    """Mean of the (clipped) per-sample gradients plus the ridge gradient.

    ``n_objective`` is the dataset size that sets the default ridge weight,
    so mini-batches use the same regulariser as the full objective.
    """
    z = X @ theta
    r = _residual(spec, z, y)
    if spec.clip is not None:
        norms = np.abs(r) * np.linalg.norm(X, axis=1)
        r = r * _clip_rows(None, norms, spec.clip)
    g = X.T @ r / X.shape[0]
    w = spec.ridge_weight(n_objective or X.shape[0])
    if w:
        g = g + 2.0 * w * theta
    return g


def lipschitz_constant(kind, B, D, y_max=1.0):
    """Gradient-norm bound on the domain ``||x|| <= B``, ``||theta|| <= D``.

    Squared loss: ``2 B (D + max|y|)``. Logistic: ``2 B``.
    """
    if kind in ("squared", "ridge"):
        return 2.0 * B * (D + y_max)
    if kind == "logistic":
        return 2.0 * B
    raise ParameterError(f"unknown loss kind {kind!r}")


def with_derived_lipschitz(spec, d):
    """Return ``spec`` with ``L`` filled in from the data bounds."""
    if spec.L is not None:
        return spec
    B = float(np.max(np.linalg.norm(d.features, axis=1)))
    y_max = float(np.max(np.abs(d.labels)))
    return replace(spec, L=lipschitz_constant(spec.kind, B, spec.D, y_max))


def smoothness_constants(spec, B, D, m, C=None, theta=None):
    """Constants ``(C1, C2)`` of the per-coordinate gradient-difference bound.

    Squared loss: ``C1 = 4B + 2CD/m``, ``C2 = 2CD``. Logistic:
    ``C1 = 2 + CD/(4m)``, ``C2 = CD/4``. When ``theta`` is given the boundary
    condition ``B |theta_i| <= C D / m`` is checked first.
    """
    C = spec.C if C is None else C
    if theta is not None:
        theta = np.asarray(theta, dtype=float)
        bad = np.flatnonzero(B * np.abs(theta) > C * D / m + 1e-12)
        if bad.size:
            i = int(bad[0])
            raise AssumptionError(
                f"B*|theta_{i + 1}| = {B * abs(theta[i]):.4g} exceeds C*D/m = {C * D / m:.4g}")
    if spec.base_kind == "squared":
        return 4.0 * B + 2.0 * C * D / m, 2.0 * C * D
    return 2.0 + C * D / (4.0 * m), C * D / 4.0


def gradient_difference_bound(C1, C2, L, x1, x2):
    """Right-hand side ``C1 L |dx_i| + C2 (L/m) sum_{j != i} |dx_j|`` per coordinate."""
    dx = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    m = dx.shape[-1]
    rest = dx.sum(axis=-1, keepdims=True) - dx
    return C1 * L * dx + C2 * (L / m) * rest


def accuracy(theta, X, y):
    """Classification accuracy of ``1{theta.x > 0}``."""
    return float(np.mean(((X @ theta) > 0).astype(float) == y))
