"""
How much gas can a storage well deliver?
========================================

With the wellhead held at its lowest allowed pressure, the largest
steady withdrawal depends only on the reservoir pressure. Below the
pressure of a static gas column nothing comes out; above it, friction
in the well limits the rate.
"""

import matplotlib.pyplot as plt

from gasnetopt import load_network
from gasnetopt.analysis import storage_curve
from gasnetopt.cli import resolve_network
from gasnetopt.nondim import PSI_TO_PA

model = load_network(resolve_network("six_junction_storage"))
curve = storage_curve(model, samples=40, p_min=700 * PSI_TO_PA, p_max=1365 * PSI_TO_PA)

print(f"static column threshold: {curve.threshold_pressure / PSI_TO_PA:.0f} psi")
print(f"withdrawal at 1365 psi:  {curve.withdrawal[-1]:.1f} kg/s "
      f"(flow limit {model.storages[0].flow_max:g} kg/s)")

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(curve.reservoir_pressure / PSI_TO_PA, curve.withdrawal, label="well capacity")
ax.plot(curve.reservoir_pressure / PSI_TO_PA, curve.withdrawal_capped, "--", label="with flow limit")
ax.axvline(curve.threshold_pressure / PSI_TO_PA, color="grey", lw=0.8)
ax.set(xlabel="reservoir pressure (psi)", ylabel="max withdrawal (kg/s)")
ax.legend()
fig.tight_layout()
plt.show()
