"""Renyi-divergence privacy checks for a per-coordinate Gaussian noise profile.

The checker re-derives the proof's sufficient condition numerically: for a
worst-case neighbouring pair the per-step Gaussians share the diagonal
covariance ``diag(sigma^2)`` and differ in mean by a bounded shift. A
``certified=True`` verdict means the condition holds; ``False`` means only
that this argument does not certify the profile.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergenceUndefined, ParameterError

DISTANCE_FLOOR = 1e-6


def renyi_gaussian(mu1, var1, mu2, var2, alpha):
    """Order-``alpha`` Renyi divergence ``D_alpha(P || Q)`` of diagonal Gaussians.

    ``alpha = 1`` gives the KL divergence. For other orders the mixed
    variance ``(1 - alpha) var1 + alpha var2`` must be positive everywhere.
    """
    mu1, var1, mu2, var2 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (mu1, var1, mu2, var2))
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    if np.any(var1 <= 0) or np.any(var2 <= 0):
        raise DivergenceUndefined("variances must be positive")
    dmu2 = (mu1 - mu2) ** 2
    if alpha == 1:
        return float(0.5 * np.sum(np.log(var2 / var1) + var1 / var2 + dmu2 / var2 - 1.0))
    mix = (1.0 - alpha) * var1 + alpha * var2
    if np.any(mix <= 0):
        raise DivergenceUndefined(f"mixed variance is not positive at order {alpha}")
    logdet = 0.5 * (alpha * np.log(var2) + (1.0 - alpha) * np.log(var1) - np.log(mix))
    return float(np.sum(logdet) / (alpha - 1.0) + 0.5 * alpha * np.sum(dmu2 / mix))


@dataclass(frozen=True, eq=False)
class NeighborScenario:
    """A worst-case neighbouring pair.

    ``which`` is ``"sensitive"`` (the sensitive block of one row changes,
    distance 1) or ``"insensitive"`` (feature ``feature`` of one row changes,
    distance ``max(TV(feature), floor)``).
    """

    which: str
    distance: float
    shift: np.ndarray
    feature: Optional[int] = None

    def __post_init__(self):
        if self.which not in ("sensitive", "insensitive"):
            raise ParameterError(f"unknown scenario {self.which!r}")
        if not 0 < self.distance <= 1:
            raise ParameterError("distance must lie in (0, 1]")
        if self.which == "sensitive" and self.distance != 1:
            raise ParameterError("a sensitive change has distance 1")

    def label(self):
        return "sensitive" if self.which == "sensitive" else f"insensitive:{self.feature + 1}"


def mean_shift(which, part, L, B, C1, C2, n, feature=None):
    """Per-coordinate bound on ``|mu_D - mu_D'|`` with ``B_i = B / sqrt(m)``.

    A row change on the coordinates ``J`` moves gradient coordinate ``i`` by
    at most ``(C1 L B_i 1{i in J} + C2 (L/m) sum_{j in J, j != i} B_j) / n``.
    """
    m = part.m
    Bi = B / math.sqrt(m)
    if which == "sensitive":
        changed = np.zeros(m, dtype=bool)
        changed[list(part.sensitive)] = True
    else:
        if feature is None or feature not in part.insensitive:
            raise ParameterError("an insensitive change needs an insensitive feature index")
        changed = np.zeros(m, dtype=bool)
        changed[feature] = True
    k = int(changed.sum())
    others = np.where(changed, k - 1, k) * Bi
    return (C1 * L * Bi * changed + C2 * (L / m) * others) / n


def scenario(which, part, tv, L, B, C1, C2, n, feature=None, floor=DISTANCE_FLOOR):
    """Build a :class:`NeighborScenario` with its mean shift and distance."""
    shift = mean_shift(which, part, L, B, C1, C2, n, feature)
    if which == "sensitive":
        return NeighborScenario("sensitive", 1.0, shift)
    d = max(float(tv.values[feature]), floor)
    return NeighborScenario("insensitive", min(d, 1.0), shift, feature)


def moment(lam, shift, sigma_sq):
    """``alpha_M(lambda) = lambda (lambda + 1) / 2 * sum (shift_i / sigma_i)^2``."""
    shift = np.asarray(shift, dtype=float)
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    moving = shift != 0
    if np.any(moving & (sigma_sq <= 0)):
        return math.inf
    q = float(np.sum(shift[moving] ** 2 / sigma_sq[moving]))
    return 0.5 * lam * (lam + 1.0) * q


def lambda_grid(epsilon, delta):
    """Integers ``1..ceil(4 log(1/delta) / eps)`` plus the value ``2 log(1/delta) / eps``."""
    top = math.ceil(4.0 * math.log(1.0 / delta) / epsilon)
    grid = [float(v) for v in range(1, top + 1)]
    return sorted(set(grid + [2.0 * math.log(1.0 / delta) / epsilon]))


@dataclass
class Verdict:
    certified: bool
    lambda_used: Optional[float]
    margin: float
    breakdown: dict = field(default_factory=dict)
    reason: str = ""

    def to_dict(self):
        return {"certified": self.certified, "lambda": self.lambda_used,
                "margin": None if math.isinf(self.margin) else self.margin,
                "breakdown": self.breakdown, "reason": self.reason}


def moment_bound_check(profile, scen, T, epsilon, delta):
    """Check the proof's two conditions for one neighbouring scenario.

    For some ``lambda`` on :func:`lambda_grid` both
    ``alpha_M(lambda) <= lambda eps / (2 T d)`` and
    ``exp(T alpha_M(lambda) - lambda eps / d) <= delta`` must hold. The
    margin (in nats) is the best over ``lambda`` of the smaller slack.
    """
    sigma_sq = np.asarray(getattr(profile, "sigma_sq", profile), dtype=float)
    if sigma_sq.shape != scen.shift.shape:
        raise ParameterError("profile and scenario dimensions differ")
    if not epsilon > 0 or not 0 < delta < 1:
        raise ParameterError("need epsilon > 0 and delta in (0, 1)")
    d = scen.distance
    lam = np.asarray(lambda_grid(epsilon, delta))
    per_unit = moment(1.0, scen.shift, sigma_sq)  # equals sum (shift / sigma)^2
    if math.isinf(per_unit):
        return Verdict(False, None, -math.inf, reason="zero noise on a coordinate whose mean moves")
    total = T * 0.5 * lam * (lam + 1.0) * per_unit
    slack = np.minimum(lam * epsilon / (2.0 * d) - total,
                       lam * epsilon / d - total - math.log(1.0 / delta))
    k = int(np.argmax(slack))
    best = float(slack[k])
    return Verdict(best >= 0, float(lam[k]), best)


def certify_profile(profile, part, tv, L, B, C1, C2, n, T, epsilon, delta, floor=DISTANCE_FLOOR):
    """Run :func:`moment_bound_check` for the sensitive change and every insensitive feature.

    The overall verdict is certified only if every scenario is; the reported
    margin and lambda are those of the tightest scenario.
    """
    scens = [scenario("sensitive", part, tv, L, B, C1, C2, n)]
    if part.insensitive:
        if tv is None:
            raise ParameterError("insensitive scenarios need a TV profile")
        scens += [scenario("insensitive", part, tv, L, B, C1, C2, n, i, floor) for i in part.insensitive]
    out = {}
    worst = None
    for s in scens:
        v = moment_bound_check(profile, s, T, epsilon, delta)
        row = v.to_dict()
        del row["breakdown"]
        out[s.label()] = row
        if worst is None or v.margin < worst.margin:
            worst = v
    return Verdict(all(r["certified"] for r in out.values()), worst.lambda_used, worst.margin,
                   breakdown=out, reason=worst.reason)


def amplify_subsampling(epsilon, delta, zeta):
    """Budget of a mechanism run on a Poisson sample with rate ``zeta``: ``(zeta eps, zeta delta)``."""
    if not 0 < zeta <= 1:
        raise ParameterError(f"sampling rate must lie in (0, 1], got {zeta}")
    return zeta * epsilon, zeta * delta


def compose(budgets):
    """Basic composition: coordinate-wise sum of ``(eps, delta)`` pairs."""
    eps = dl = 0.0
    for e, d in budgets:
        if e < 0 or not 0 <= d <= 1:
            raise ParameterError(f"invalid budget ({e}, {d})")
        eps += e
        dl += d
    return eps, dl
