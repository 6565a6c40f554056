# %% [markdown]
# # One 2-SAT instance, every algorithm
#
# Twelve variables, fourteen clauses. Each algorithm runs from its default
# start (all spins along +X, or the uniform superposition for the two
# quantum ones) and we read off the operation time at which the energy
# stops falling faster than 1e-2 per unit time.

# %%
import numpy as np

from feedbackopt import harness as H
from feedbackopt.problem import brute_force_ground, generate_random_ksat

formula = generate_random_ksat(12, 2, 14, seed=3)
ground, _ = brute_force_ground(formula)
print(f"{formula.n_clauses} clauses, exact ground energy {ground:g}")

# %%
rows = []
for name in H.ALGORITHMS:
    dt = 1e-2 if H.is_quantum(name) else 1e-3
    traj = H.simulate(name, formula, 60.0, dt)
    t, e, censored = H.converged_point(traj, H.CONVERGENCE)
    rows.append((name, t, e, traj.final_energy, censored))

print(f"{'algorithm':16s} {'t_conv':>8s} {'E(t_conv)':>10s} {'E(60)':>9s}")
for name, t, e, ef, c in rows:
    flag = " (censored)" if c else ""
    print(f"{name:16s} {t:8.2f} {e:10.4f} {ef:9.4f}{flag}")

# %% [markdown]
# The classical CACAO family settles within a few time units. CC-FALQON
# keeps creeping down long after its rate has dropped below threshold.

# %%
best = min(rows, key=lambda r: r[3])
print("lowest energy at T=60:", best[0], np.round(best[3], 4))
