# %% [markdown]
# # Behavioural neuron from a lifetime table
#
# Between switching events the magnet has no memory, so a two-state Markov
# chain with the simulated mean lifetimes reproduces the telegraph signal.
# Here a small (V1, V2) lifetime table drives the chain through a step
# stimulus and the output is compared with full LLG runs at one node.

# %%
import matplotlib

matplotlib.use("Agg")
import math
import time
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from me_neuron.characterization import BasisAngles, transformed_axes, transformed_sweep
from me_neuron.config import default_config
from me_neuron.neuron import Drive, build_lut, generate_spike_train, validate_against_llg

FIG = Path(__file__).with_name("figures")
FIG.mkdir(exist_ok=True)

cfg = default_config()
# angles close to what calibration finds over the default window
angles = BasisAngles(math.radians(-35.0), math.radians(-53.0))
v1, v2 = transformed_axes(angles, cfg.sweep.window, 3, 3)
grid = transformed_sweep(v1, v2, angles, cfg.device, cfg.sim.replace(seed=31), min_dwells=300,
                         theta_on=cfg.analysis.theta_on, window=cfg.sweep.window)
lut = build_lut(grid)

# %%
# rest, then "tau_AP short / tau_P long", then the reverse
drive = Drive([0.0, 2e-6, 4e-6], [0.0, v1[-1], v1[0]], [0.0, v2[0], v2[-1]])
t0 = time.perf_counter()
train = generate_spike_train(lut, drive, 6e-6, seed=1)
print(f"{train.spike_times.size} spikes in 6 us of simulated time, {time.perf_counter() - t0:.3f} s wall")
for lo, hi in ((0, 2e-6), (2e-6, 4e-6), (4e-6, 6e-6)):
    n = np.count_nonzero((train.spike_times >= lo) & (train.spike_times < hi))
    print(f"[{lo * 1e6:.0f}, {hi * 1e6:.0f}) us: {n / (hi - lo) / 1e6:.1f} spikes/us")

# %%
report = validate_against_llg([grid.cells[1][1].bias], cfg.device, cfg.sim.replace(seed=32), lut,
                              n_dwells=300, seed=3)
print(report.text())

# %%
fig, ax = plt.subplots(figsize=(8, 3))
t = np.append(train.transition_times, train.duration)
ax.step(t[:-1] * 1e6, train.transition_states, where="post", lw=0.4)
ax.set_xlim(1.8, 2.4)
ax.set_xlabel("t (us)")
ax.set_ylabel("state")
fig.tight_layout()
fig.savefig(FIG / "markov_neuron.png", dpi=120)
