"""Scattering data of matrix attenuations.

Builds random attenuation pairs (a matrix connection plus a matrix potential)
and checks gauge invariance, the pseudolinearization identity and the
kernel of the attenuated transform.
"""
import numpy as np

from twistray import AttenuationPair, GaugeElement, LambdaField, PolyField, Scenario
from twistray.flow import boundary_fan
from twistray.transport import (
    attenuated_transform,
    boundary_vanishing,
    gauge_equivalence_witness,
    gauge_transform,
    kernel_element,
    nonabelian_transform,
    pseudolinearization_residual,
    unitarity_defect,
)

sc = Scenario(lam=LambdaField.constant(0.3))
fan = boundary_fan(sc.surface, 8, 8)[0]
pair = AttenuationPair.random(2, 1, 0)

C = nonabelian_transform(sc, pair, fan)
print("scattering data shape:", C.shape, " det range:", np.ptp(np.abs(np.linalg.det(C))))

# A gauge equal to Id on the boundary leaves the scattering data unchanged.
g = GaugeElement(PolyField.identity(2) + boundary_vanishing(PolyField.random(1, (2, 2), 1, 0.3)))
rep = gauge_equivalence_witness(sc, pair, gauge_transform(pair, g), g, fan)
print(f"gauge: scattering residual {rep['scattering_residual']:.2e}")

# Two different pairs: C_A C_B^{-1} - Id is an attenuated transform
# with attenuation H -> A H - H B applied to A - B.
other = AttenuationPair.random(2, 1, 1)
print(f"pseudolinearization residual {pseudolinearization_residual(sc, pair, other, fan)['residual']:.2e}")

# Sources of the form (d + A) p with p = 0 on the boundary are invisible.
f = kernel_element(pair, boundary_vanishing(PolyField.random(1, (2,), 2)))
print(f"kernel element: max |I f| = {np.max(np.abs(attenuated_transform(sc, pair, f, fan))):.2e}")

# Skew-Hermitian pairs give unitary scattering data.
skew = AttenuationPair.random(2, 1, 3, skew=True)
print(f"unitary pair: defect {unitarity_defect(nonabelian_transform(sc, skew, fan)):.2e}")
