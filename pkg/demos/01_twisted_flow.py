"""Twisted geodesic flows on the unit disk.

Traces a few curves, checks their exit times against closed forms and shows
the nontrapping certificate.  Run with ``python3 demos/01_twisted_flow.py``.
"""
import numpy as np

from twistray import ConformalSurface, LambdaField, PolyField, Scenario
from twistray.flow import (
    boundary_fan,
    exit_times,
    integrate_flow,
    nontrapping_certificate,
    random_interior_states,
    scattering_relation,
)

# Flat disk: straight lines, so the diameter takes time 2.
flat = Scenario()
tr = integrate_flow(flat, (-1, 0, 0))
print(f"flat diameter: exit time {tr.tau_plus:.12f} at {tr.states[-1, :2]}")

# Chords from a boundary fan obey tau = -2 <x, v>.
states, _, _ = boundary_fan(flat.surface, 16, 8)
tp, _ = exit_times(flat, states)
v = np.stack([np.cos(states[:, 2]), np.sin(states[:, 2])], axis=-1)
print("max chord error:", np.max(np.abs(tp + 2 * np.sum(states[:, :2] * v, axis=-1))))

# A constant magnetic field of strength 1 bends rays into unit circles.
# From the centre heading east the curve leaves after an arc of pi/3.
magnetic = Scenario(lam=LambdaField.constant(1.0))
tr = integrate_flow(magnetic, (0, 0, 0))
print(f"magnetic arc: {tr.tau_plus:.10f} vs pi/3 = {np.pi / 3:.10f}")

# A thermostat field depends linearly on the direction, on a curved metric.
phi = PolyField.from_terms([(1, 0, 0.1), (0, 2, 0.05)])
thermo = Scenario(surface=ConformalSurface(phi),
                  lam=LambdaField.real({1: PolyField.from_terms([(0, 0, 0.15 + 0.1j)])}))
tr = integrate_flow(thermo, (0.2, -0.1, 1.0))
print(f"thermostat curve: {len(tr.t)} nodes, forward {tr.tau_plus:.4f}, backward {tr.tau_minus:.4f}")

# -tau~ increases at rate 2 along every curve, which rules out trapping.
for name, sc in [("flat", flat), ("magnetic 0.3", Scenario(lam=LambdaField.constant(0.3))), ("thermostat", thermo)]:
    rep = nontrapping_certificate(sc, random_interior_states(sc.surface, 50, 0))
    print(f"{name:>13}: generator of -tau~ deviates from 2 by {rep['max_deviation']:.2e}")

# The scattering relation maps an entry state to the state where its curve leaves.
s = np.array([-1.0, 0.0, 0.4])
print("entry", s, "-> exit", scattering_relation(Scenario(lam=LambdaField.constant(0.3)), s))
