# %% [markdown]
# # Control strengths along a HOT-CACAO+ run
#
# HOT-CACAO+ mixes three kinds of control: per-spin X and Y fields and the
# pair terms. The X control first grows from its starting value, then all
# three decay, Y fastest.

# %%
import numpy as np

from feedbackopt import harness as H
from feedbackopt.problem import generate_random_ksat

formula = generate_random_ksat(60, 3, 252, seed=1)
series = H.dynamics_series("hot-cacao-plus", formula, T=16.0, dt=1e-3, init_seed=0,
                           points=20)

print(f"{'t':>7s} {'E/N':>8s} {'|bX|':>8s} {'|bY|':>8s} {'|bpair|':>8s}")
for row in zip(*(series[k] for k in ("t", "energy_density", "norm_beta_x",
                                     "norm_beta_y", "norm_beta_pair"))):
    print("{:7.3f} {:8.4f} {:8.3f} {:8.3f} {:8.3f}".format(*row))

# %%
k = int(np.argmax(series["norm_beta_x"]))
print(f"X control peaks at t = {series['t'][k]:.2f}")
