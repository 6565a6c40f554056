# %% [markdown]
# # Energy density against system size
#
# A small version of the size sweep: random 3-SAT at clause ratio 4.2,
# fixed operation time, a few instances per size. The experiment writes
# its records, aggregates and plot-ready series under `size_sweep/`.

# %%
from feedbackopt import harness as H

cfg = H.ExperimentConfig.from_dict({
    "problem": {"n": 50, "k": 3, "alpha": 4.2, "count": 3, "seed": 0},
    "algorithms": [{"name": "cacao", "init": "random"},
                   {"name": "hot-cacao", "init": "random"},
                   {"name": "hot-cacao-plus", "init": "random"}],
    "sweep": {"axis": "n", "values": [50, 100, 200]},
    "T": 8.0,
})
records, aggs = H.run_experiment(cfg, "size_sweep")

# %%
for a in sorted(aggs, key=lambda r: (r["algorithm"], r["n"])):
    print(f"{a['algorithm']:15s} N={a['n']:4d}  E/N = {a['mean_energy_density']:.4f}"
          f" +- {a['std_energy_density']:.4f}")
