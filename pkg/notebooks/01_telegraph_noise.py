# %% [markdown]
# # Telegraph noise of a low-barrier magnet
#
# The free layer has a 2 kT in-plane barrier, so at room temperature it
# hops between the parallel (P, mz = +1) and antiparallel (AP, mz = -1)
# wells every couple of nanoseconds. This script runs one stochastic LLG
# trajectory at zero bias, labels it with a Schmitt trigger and checks that
# the dwell times are exponential.

# %%
import matplotlib

matplotlib.use("Agg")
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
from scipy import stats

from me_neuron.config import default_config
from me_neuron.integrator import run_trajectory
from me_neuron.magnet import BiasPoint, barrier_height
from me_neuron.telegraph import detect_states, dwell_times, estimate_lifetimes, firing_rate

FIG = Path(__file__).with_name("figures")
FIG.mkdir(exist_ok=True)

cfg = default_config()
params = cfg.device
print(f"barrier {barrier_height(params):.2f} kT, damping {params.damping_alpha}")

# %% [markdown]
# 400 ns at 0.1 ps steps, keeping every 10th sample (1 ps resolution).

# %%
sim = cfg.sim.replace(t_max=4e-7, record_stride=10, seed=7)
traj = run_trajectory(sim, BiasPoint(0.0, 0.0), params)
labels = detect_states(traj, theta_on=cfg.analysis.theta_on)
dwells = dwell_times(labels, traj.dt_effective)
est_p, est_ap = estimate_lifetimes(dwells)
for e in (est_p, est_ap):
    print(f"{e.state.name}: {e.mean * 1e9:.2f} +- {e.stderr * 1e9:.2f} ns from {e.count} dwells, "
          f"KS p = {e.ks_pvalue:.2f}")
print(f"duty fraction {firing_rate(est_p.mean, est_ap.mean):.3f}")

# %%
fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6))
sel = traj.times < 5e-8
ax1.plot(traj.times[sel] * 1e9, traj.mz[sel], lw=0.5)
ax1.plot(traj.times[sel] * 1e9, labels[sel] * 0.95, lw=1.0)
ax1.set_xlabel("t (ns)")
ax1.set_ylabel("mz")

all_d = np.array([d.duration for d in dwells])
x = np.sort(all_d)
ax2.step(x * 1e9, 1 - np.arange(x.size) / x.size, where="post", label="dwells")
ax2.plot(x * 1e9, stats.expon.sf(x, scale=all_d.mean()), label="exponential")
ax2.set_yscale("log")
ax2.set_xlabel("dwell (ns)")
ax2.set_ylabel("survival")
ax2.legend()
fig.tight_layout()
fig.savefig(FIG / "telegraph.png", dpi=120)
