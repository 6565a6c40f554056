# %% [markdown]
# # Quantum feedback against its classical counterpart
#
# For a handful of small instances we pair FALQON with CC-FALQON and
# iFALQON with CC-iFALQON, stop each run by the convergence rule, and count
# which side reached the lower energy density.

# %%
from feedbackopt import harness as H

family = H.make_family(n=10, k=2, m=12, count=5, seed=40)
rows = H.compare_family(family, T_max=60.0, quantum_T_max=40.0)

for r in rows:
    print(f"inst {r['instance']}  {r['quantum']:8s} {r['quantum_density']:.4f}"
          f"  vs  {r['classical']:10s} {r['classical_density']:.4f}")

# %%
for pair, s in H.summarize_compare(rows).items():
    print(pair, s)
