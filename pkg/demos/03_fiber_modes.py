"""Vertical Fourier modes and the mapping property of the generator.

For a field of direction degree at most 2, the generator sends functions with
modes k >= 0 to modes k >= -1.  A degree 3 field breaks this.
"""
import numpy as np

from twistray import FiberFunction, LambdaField, PolyField, Scenario
from twistray.fiber_fourier import decompose, mapping_property_check, obstruction_demo

theta = 2 * np.pi * np.arange(64) / 64
print("modes of cos(theta)^2:", {k: round(float(v.real), 12) for k, v in decompose(np.cos(theta) ** 2).items()})

w = FiberFunction({0: PolyField.random(2, (), 0), 1: PolyField.random(2, (), 1), 2: 1.0})
g = np.linspace(-0.8, 0.8, 9)
X, Y = np.meshgrid(g, g)
for deg, lam in [(0, LambdaField.constant(0.7)),
                 (1, LambdaField.real({1: 0.3})),
                 (2, LambdaField.real({0: 0.1, 2: 1.0}))]:
    rep = mapping_property_check(Scenario(lam=lam), w, X, Y)
    print(f"deg {deg}: lowest mode {rep['lowest_mode']}, leakage {rep['leakage']}")

rep = obstruction_demo(Scenario(lam=LambdaField.real({3: 1.0})))
print(f"deg 3: mode -2 picks up {rep['coefficient']} (magnitude {rep['magnitude']})")
