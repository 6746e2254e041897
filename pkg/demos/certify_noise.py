"""Check calibrated noise profiles against the moments accountant.

The correlation-aware profile is certified at its own budget. Dropping the
noise on insensitive features (the "semi" baseline) is refused, and the
standard profile cannot claim half its budget.
"""
from corrdp.accounting import certify_profile
from corrdp.data import default_partition, default_synthetic_spec
from corrdp.losses import LossSpec, smoothness_constants
from corrdp.optimizer import calibrate_noise
from corrdp.tv import TVProfile, tv_posterior_gaussian

M, MS, N, DELTA = 100, 10, 2000, 1e-4
B, L, T = 1.0, 2.0, 1000
spec, part = default_synthetic_spec(M, MS), default_partition(M, MS)
tv = TVProfile({i: tv_posterior_gaussian(spec, part, i, DELTA) for i in part.insensitive}, "exact")
C1, C2 = smoothness_constants(LossSpec("logistic", D=1.0), B, 1.0, M)

for eps in (0.1, 0.5, 1.0):
    for method, claim in (("corrdp", eps), ("semi", eps), ("standard", eps / 2)):
        prof = calibrate_noise(method, part, tv, eps, DELTA, L=L, T=T, n=N, B=B)
        v = certify_profile(prof, part, tv, L, B, C1, C2, N, T, claim, DELTA)
        print(f"eps={eps:<4} {method:<9} claimed {claim:<5} certified={v.certified!s:<5} "
              f"margin={v.margin:.3f}")
