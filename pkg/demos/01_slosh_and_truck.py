"""
Slosh pendulum and the tank truck
=================================

The liquid load is modelled as a trammel pendulum whose bob runs on an
ellipse inside the tank.  This walk-through checks the free pendulum and
then compares the truck's response to a steering step with a liquid, a
solid and no load.
"""

# %%
import math

import numpy as np

from lrg.vehicle import (G, TruckPlant, VehicleParams, derive, pendulum_energy, rest_state,
                         simulate_free_pendulum, slosh_force)

vp = VehicleParams()
pend = derive(vp).pend
print(f"moving mass m_p = {pend.m_p:.0f} kg, fixed mass m_f = {pend.m_f:.0f} kg")
print(f"semi-axes a_p = {pend.a_p:.3f} m, b_p = {pend.b_p:.3f} m")

# %% Free oscillation: energy is conserved and the small-angle frequency is sqrt(g b_p) / a_p
tr = simulate_free_pendulum(-math.pi / 2 + 0.3, 0.0, pend, 20.0)
e = pendulum_energy(tr[:, 1], tr[:, 2], pend)
print(f"relative energy drift over 20 s: {np.ptp(e) / abs(e[0]):.1e}")
print(f"natural frequency {pend.natural_frequency:.3f} rad/s "
      f"(sqrt(g b_p)/a_p = {math.sqrt(G * pend.b_p) / pend.a_p:.3f})")
print(f"peak lateral slosh force: {slosh_force(tr[:, 1], tr[:, 2], tr[:, 3], pend):.0f} N")

# %% Steering step of 30 degrees at the hand wheel
for name, params in [("liquid", vp), ("solid", vp.solid_load()), ("none", vp.replace(m_l=0.0))]:
    plant = TruckPlant(params)
    run = plant.simulate(rest_state(), [30.0], 15.0, 0.005)
    ltr = run.y[:, 0]
    print(f"{name:>6}: peak |LTR| {np.abs(ltr).max():.3f}, final LTR {ltr[-1]:.3f}, "
          f"final yaw rate {run.x[-1, 3]:.3f} rad/s")
