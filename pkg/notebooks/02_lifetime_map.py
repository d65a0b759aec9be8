# %% [markdown]
# # Lifetime map over the two control voltages
#
# The ME voltage tilts the energy landscape (it favours P for V_ME > 0) and
# the MTJ bias injects spin-transfer torque whose strength depends on the
# junction conductance, which is higher in P than in AP. Sweeping both
# gives two lifetime surfaces whose log contours are close to, but not
# exactly, perpendicular to each other.

# %%
import matplotlib

matplotlib.use("Agg")
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from me_neuron.characterization import independence_ratios, k_factors, sweep_grid
from me_neuron.config import default_config
from me_neuron.telegraph import StateLabel, firing_rate

FIG = Path(__file__).with_name("figures")
FIG.mkdir(exist_ok=True)

cfg = default_config()
axis = np.linspace(-0.4, 0.4, 5)
grid = sweep_grid(axis, axis, cfg.device, cfg.sim.replace(seed=11), min_dwells=100,
                  theta_on=cfg.analysis.theta_on, progress=lambda d, n, c: print(f"\r{d}/{n}", end=""))
print()
tau_p, tau_ap = grid.means(StateLabel.P), grid.means(StateLabel.AP)
print("log10 tau_AP (rows V_ME, columns V_I):\n", np.round(np.log10(tau_ap), 2))
print("log10 tau_P:\n", np.round(np.log10(tau_p), 2))

# %% [markdown]
# Local sensitivities at the centre node, and the four independence ratios
# (self-dominance of each knob, then the cross-state ratios).

# %%
k = k_factors(grid, (0.0, 0.0))
print(k)
print("ratios", np.round(independence_ratios(k).values, 2))

# %%
A, B = np.meshgrid(axis, axis, indexing="ij")
fig, axes = plt.subplots(1, 3, figsize=(13, 4))
for ax, z, title in zip(axes, (np.log10(tau_ap), np.log10(tau_p), firing_rate(tau_p, tau_ap)),
                        ("log10 tau_AP", "log10 tau_P", "duty fraction")):
    cs = ax.contourf(A, B, z, levels=12)
    fig.colorbar(cs, ax=ax)
    ax.set_title(title)
    ax.set_xlabel("V_ME (V)")
    ax.set_ylabel("V_I (V)")
fig.tight_layout()
fig.savefig(FIG / "lifetime_map.png", dpi=120)
