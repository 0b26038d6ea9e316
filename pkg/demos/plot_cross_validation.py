"""
Replaying optimal controls in the simulator
===========================================

The optimizer works on an hourly grid. To check that its solution is a
physically sound schedule, we hand the compressor ratios, regulator
ratios and transfer flows to the forward simulator, which steps the
same network equations with one-minute implicit Euler steps.
"""

import matplotlib.pyplot as plt

from gasnetopt import TimeGrid, build_nlp, extract_solution, load_network, segment_network, solve
from gasnetopt.analysis import mean_relative_error
from gasnetopt.cli import resolve_network
from gasnetopt.simulator import ControlSchedule, simulate

model = load_network(resolve_network("six_junction_storage"))
net = segment_network(model, 10_000.0)
grid = TimeGrid(24, 1)
optimal = extract_solution(net, grid, solve(build_nlp(net, grid)).x)

##############################################################################
# Controls are read straight off the optimal trajectory. Each hourly value
# is held over the hour that ends at its node, matching the backward
# differences of the transcription.

controls = ControlSchedule.from_trajectory(optimal, model)
replay = simulate(net, controls, initial_state=optimal, dt_seconds=60.0, sample_hours=1 / 12)

##############################################################################
# Compare at the hourly nodes.

hours = optimal.times_hours[1:]
sim, opt = replay.sample(hours), optimal.sample(hours)
print("junction 3 pressure error:", f"{100 * mean_relative_error(sim.junction('3'), opt.junction('3')):.3f}%")
print("storage flow error:      ", f"{100 * mean_relative_error(sim.storage('s1'), opt.storage('s1')):.3f}%")

fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
axes[0].plot(replay.times_hours, replay.junction("3") / 1e6, label="simulation (60 s)")
axes[0].plot(optimal.times_hours, optimal.junction("3") / 1e6, "o", ms=3, label="optimizer (1 h)")
axes[0].set(xlabel="hour", ylabel="pressure (MPa)", title="Junction 3")
axes[0].legend()
axes[1].plot(replay.times_hours, replay.storage("s1"), label="simulation")
axes[1].plot(optimal.times_hours, optimal.storage("s1"), "o", ms=3, label="optimizer")
axes[1].set(xlabel="hour", ylabel="kg/s", title="Storage flow")
fig.tight_layout()
plt.show()
