"""Fiberwise loop factorization of the integrating factor.

At a base point the integrating factor is a loop of invertible matrices in
the direction angle.  Factoring it as a holomorphic loop times a unitary
loop gives a new attenuation B, which is skew-Hermitian and of degree one.
"""
import numpy as np

from twistray import AttenuationPair, LambdaField, Scenario
from twistray.fiber_fourier import skew_hermitian_degree_check
from twistray.flow import extend_scenario
from twistray.loopfact import derived_attenuation_B, integrating_factor_loops, iwasawa_factorize

ext = extend_scenario(Scenario(lam=LambdaField.constant(0.3)))
print("extension certificate:", {k: ext.certification[k] for k in ("convexity_margin", "n_probe")})
pair = AttenuationPair.random(2, 1, 0)

(R,) = integrating_factor_loops(ext, pair, [0.2], [-0.1], 128, 40)
fac = iwasawa_factorize(R, 128, 40)
for k, v in fac.diagnostics.items():
    print(f"{k:>24}: {v}")

d = derived_attenuation_B(ext, pair, (0.2, -0.1), N_theta=128, K_trunc=40)
rep = skew_hermitian_degree_check(d.modes, 1)
print(f"B: skew defect {rep['skew_defect']:.2e}, out-of-band energy {rep['out_of_band_energy']:.2e}")
print("mode norms of B:", {k: round(float(np.linalg.norm(v)), 6) for k, v in d.modes.items() if abs(k) <= 2})
