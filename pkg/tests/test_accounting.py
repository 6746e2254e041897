import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrdp.accounting import (NeighborScenario, amplify_subsampling, certify_profile, compose,
                               lambda_grid, mean_shift, moment, moment_bound_check, renyi_gaussian,
                               scenario)
from corrdp.data import default_partition
from corrdp.errors import DivergenceUndefined, ParameterError
from corrdp.losses import LossSpec, smoothness_constants
from corrdp.optimizer import NoiseProfile, calibrate_noise
from corrdp.tv import TVProfile

M, MS = 100, 10
PART = default_partition(M, MS)
B, L, T, N = 1.0, 2.0, 1000, 2000
C1, C2 = smoothness_constants(LossSpec("logistic"), B, 1.0, M)


def profile(method, eps, tv=None):
    return calibrate_noise(method, PART, tv, eps, 1e-5, L=L, T=T, n=N, B=B)


def certify(prof, tv, eps):
    return certify_profile(prof, PART, tv, L, B, C1, C2, N, T, eps, 1e-5)


def test_renyi_identical_is_zero():
    for a in (0.5, 1, 2, 7.5):
        assert renyi_gaussian([1.0, 2.0], [1.0, 3.0], [1.0, 2.0], [1.0, 3.0], a) == pytest.approx(0, abs=1e-14)


def test_renyi_kl_example():
    assert renyi_gaussian(0.0, 1.0, 1.0, 1.0, 1) == pytest.approx(0.5)


def test_renyi_monte_carlo():
    # importance-sampling estimate of log E_P[(p/q)^(alpha-1)] / (alpha-1)
    rng = np.random.default_rng(0)
    x = rng.normal(0.0, 1.0, 10 ** 7)
    logp = -0.5 * x ** 2 - 0.5 * math.log(2 * math.pi)
    logq = -0.25 * (x - 1.0) ** 2 - 0.5 * math.log(4 * math.pi)
    mc = math.log(np.mean(np.exp(logp - logq)))
    exact = renyi_gaussian(0.0, 1.0, 1.0, 2.0, 2)
    assert mc == pytest.approx(exact, rel=0.01)


def test_renyi_undefined():
    with pytest.raises(DivergenceUndefined):
        renyi_gaussian(0.0, 4.0, 0.0, 1.0, 3)  # mixed variance -2 * 4 + 3 * 1 < 0
    with pytest.raises(DivergenceUndefined):
        renyi_gaussian(0.0, 1.0, 0.0, 0.0, 2)
    with pytest.raises(ParameterError):
        renyi_gaussian(0.0, 1.0, 0.0, 1.0, 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0.2, 4), st.floats(-3, 3), st.floats(0.2, 4))
def test_renyi_nonnegative_and_monotone(m1, v1, m2, v2):
    vals = []
    for a in (0.25, 0.5, 1.0, 1.5, 2.0, 3.0):
        try:
            vals.append(renyi_gaussian(m1, v1, m2, v2, a))
        except DivergenceUndefined:
            break
    assert all(v >= -1e-10 for v in vals)
    assert all(b >= a - 1e-10 for a, b in zip(vals, vals[1:]))


def test_moment_and_grid():
    assert moment(2.0, np.array([1.0, 0.0]), np.array([4.0, 0.0])) == pytest.approx(3 * 0.25)
    assert moment(1.0, np.array([1.0]), np.array([0.0])) == math.inf
    g = lambda_grid(1.0, 1e-5)
    assert g[0] == 1.0 and g[-1] == math.ceil(4 * math.log(1e5))
    assert 2 * math.log(1e5) in g


def test_mean_shift_structure():
    s = mean_shift("sensitive", PART, L, B, C1, C2, N)
    Bi = B / math.sqrt(M)
    assert s[0] == pytest.approx((C1 * L * Bi + C2 * L / M * (MS - 1) * Bi) / N)
    assert s[50] == pytest.approx(C2 * L / M * MS * Bi / N)
    u = mean_shift("insensitive", PART, L, B, C1, C2, N, feature=42)
    assert u[42] == pytest.approx(C1 * L * Bi / N)
    assert u[0] == pytest.approx(C2 * L / M * Bi / N)
    with pytest.raises(ParameterError):
        mean_shift("insensitive", PART, L, B, C1, C2, N, feature=3)


def test_scenario_validation():
    with pytest.raises(ParameterError):
        NeighborScenario("sensitive", 0.5, np.zeros(2))
    with pytest.raises(ParameterError):
        NeighborScenario("other", 1.0, np.zeros(2))
    tv = TVProfile.uniform(PART, 0.0)
    s = scenario("insensitive", PART, tv, L, B, C1, C2, N, feature=20)
    assert s.distance == 1e-6 and s.label() == "insensitive:21"


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
def test_corrdp_profile_certified(eps):
    tv = TVProfile.uniform(PART, 0.3)
    v = certify(profile("corrdp", eps, tv), tv, eps)
    assert v.certified and v.margin > 0
    assert set(v.breakdown) == {"sensitive"} | {f"insensitive:{i + 1}" for i in PART.insensitive}


def test_semi_refused():
    tv = TVProfile.uniform(PART, 0.3)
    v = certify(profile("semi", 0.5), tv, 0.5)
    assert not v.certified and v.margin == -math.inf
    assert "zero noise" in v.reason
    assert v.breakdown["sensitive"]["certified"] is False
    assert v.to_dict()["margin"] is None


def test_standard_refused_at_half_epsilon():
    tv = TVProfile.uniform(PART, 0.3)
    prof = profile("standard", 0.5)
    assert certify(prof, tv, 0.5).certified
    assert not certify(prof, tv, 0.25).certified


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 1e4), st.sampled_from([0.1, 0.5, 1.0]))
def test_noise_monotonicity(scale, eps):
    tv = TVProfile.uniform(PART, 0.3)
    prof = profile("corrdp", eps, tv)
    bigger = NoiseProfile(prof.sigma_sq * scale, "corrdp")
    v0, v1 = certify(prof, tv, eps), certify(bigger, tv, eps)
    assert v1.margin >= v0.margin - 1e-9
    assert not (v0.certified and not v1.certified)


def test_index_invariance():
    tv = TVProfile.uniform(PART, 0.3)
    prof = profile("corrdp", 0.5, tv)
    margins = {moment_bound_check(prof, scenario("insensitive", PART, tv, L, B, C1, C2, N, i),
                                  T, 0.5, 1e-5).margin for i in PART.insensitive}
    assert max(margins) - min(margins) < 1e-9


def test_adjusted_profile_dominates():
    rng = np.random.default_rng(3)
    exact_vals = rng.uniform(0.05, 0.6, M - MS)
    exact = TVProfile(dict(zip(PART.insensitive, exact_vals)))
    adjusted = TVProfile(dict(zip(PART.insensitive, np.minimum(1.0, exact_vals + 0.2))))
    for eps in (0.1, 0.5, 1.0):
        ve = certify(profile("corrdp", eps, exact), exact, eps)
        # the adjusted noise is certified against the true distances whenever the exact one is
        va = certify(profile("corrdp", eps, adjusted), exact, eps)
        if ve.certified:
            assert va.certified and va.margin >= ve.margin - 1e-9


def test_dimension_mismatch():
    s = scenario("sensitive", PART, None, L, B, C1, C2, N)
    with pytest.raises(ParameterError):
        moment_bound_check(np.ones(3), s, T, 1.0, 1e-5)


def test_amplify_and_compose():
    assert amplify_subsampling(1.0, 1e-5, 1.0) == (1.0, 1e-5)
    e, d = amplify_subsampling(1.0, 1e-5, 0.1)
    assert e == pytest.approx(0.1) and d == pytest.approx(1e-6)
    with pytest.raises(ParameterError):
        amplify_subsampling(1.0, 1e-5, 0.0)
    with pytest.raises(ParameterError):
        amplify_subsampling(1.0, 1e-5, 1.5)
    e2, d2 = compose([(1, 1e-5), (1, 1e-5)])
    assert e2 == 2 and d2 == pytest.approx(2e-5)
    assert compose([]) == (0.0, 0.0)
    assert compose([(0.3, 1e-6)]) == (0.3, 1e-6)
    # 1/zeta rounds of the amplified budget give back at most the original
    ea, da = compose([amplify_subsampling(1.0, 1e-5, 0.1)] * 10)
    assert ea <= 1.0 + 1e-12 and da <= 1e-5 + 1e-18
    with pytest.raises(ParameterError):
        compose([(-1, 0)])
