"""
Torque-per-ampere map of the diagonal coil pair
===============================================

Builds the map from the coil field model, then shows the equilibrium current
needed to hold each angle against gravity.
"""

import numpy as np

from magpitch.actuation import ActuationMode, build_table, tau_fe
from magpitch.harness import SCENARIO_ALPHA, scenario_capsule
from magpitch.plant import equilibrium_current

# The map is tabulated every 5 degrees. Between nodes it is linearly interpolated.
table = build_table(ActuationMode.DIAGONAL).with_alpha(SCENARIO_ALPHA)
params = scenario_capsule()

print(f"{'theta [deg]':>12}{'tau_FE [N m/A]':>18}{'i_eq [A]':>10}")
for deg in range(0, 91, 10):
    theta = np.deg2rad(deg)
    tau = tau_fe(table, theta)
    # i_eq is undefined where the map vanishes (near 45 degrees the pair only pushes sideways)
    i_eq = equilibrium_current(params, table, theta) if abs(tau) > 1e-9 else float("nan")
    print(f"{deg:>12}{tau:>18.3e}{i_eq:>10.3f}")

# Vertical mode energizes all four coils. The field is then almost vertical,
# so the torque at upright vanishes: this is what re-initializes the capsule.
vertical = build_table(ActuationMode.VERTICAL)
print("\nvertical mode torque at 90 deg:", tau_fe(vertical, np.pi / 2))
