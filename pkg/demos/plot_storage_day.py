"""
A day of operation with and without storage
===========================================

The six-junction network feeds five off-takes from a single supply
through two compressors. Without storage, the cheapest off-take is cut
off during the afternoon peak. A storage field at junction 3 changes the
picture: it is filled at night and emptied during the day, so the
supply can run almost flat and every nomination is met.
"""

import matplotlib.pyplot as plt
import numpy as np

from gasnetopt import TimeGrid, build_nlp, extract_solution, load_network, segment_network, solve
from gasnetopt.cli import resolve_network

##############################################################################
# Solve both cases
# ----------------
# ``resolve_network`` finds the bundled fixtures by name. Pipes are split
# into sub-pipes of at most 10 km and the day into hourly steps.

runs = {}
for name in ("six_junction", "six_junction_storage"):
    model = load_network(resolve_network(name))
    net = segment_network(model, 10_000.0)
    grid = TimeGrid(24, 1)
    sol = solve(build_nlp(net, grid))
    runs[name] = extract_solution(net, grid, sol.x)
    print(f"{name}: {sol.status} after {sol.iterations} iterations, objective {sol.objective:.2f}")

##############################################################################
# Supply and curtailment
# ----------------------
# The baseline's supply follows demand and still cannot reach off-take 4
# in time. With storage the supply drops to its lower limit at the peak.

base, store = runs["six_junction"], runs["six_junction_storage"]
hours = base.times_hours

fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
axes[0].step(hours, base.receipt("r1"), where="post", label="without storage")
axes[0].step(hours, store.receipt("r1"), where="post", label="with storage")
axes[0].set(xlabel="hour", ylabel="supply (kg/s)", title="Supply at junction 1")
axes[0].legend()
for label, tr in (("without storage", base), ("with storage", store)):
    axes[1].plot(hours, tr.curtailment().sum(axis=0), label=label)
axes[1].set(xlabel="hour", ylabel="curtailment (kg/s)", title="Unserved demand")
axes[1].legend()
fig.tight_layout()

##############################################################################
# The storage cycle
# -----------------
# Positive flow is injection. Reservoir inventory falls over the day;
# it is not required to return to its starting value.

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.bar(hours[:-1], store.storage("s1")[:-1], width=0.8, color="tab:green")
ax.axhline(0.0, color="k", lw=0.5)
ax.set(xlabel="hour", ylabel="storage flow (kg/s)")
twin = ax.twinx()
twin.plot(hours, store.reservoir_mass[0] / 1e8, color="tab:red")
twin.set_ylabel("reservoir mass (1e8 kg)", color="tab:red")
fig.tight_layout()

print("total curtailment without storage: "
      f"{np.sum(base.curtailment()[:, :-1]) * 3600 / 1e3:.0f} t over the day")
plt.show()
