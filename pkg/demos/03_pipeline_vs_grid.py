# %% [markdown]
# # Select, sample, evaluate, and compare with a grid search
#
# The full procedure fits beta once, runs one SGHMC chain at T = 1/beta*, and
# scores both predictive densities: SM-PD (the untempered model averaged over
# the tempered posterior) and TM-PD (the tempered model averaged over it).
# The grid baseline runs one chain per beta instead.  This is a reduced
# version of the teacher-network workload used by the acceptance suite
# (same as `tempsel run --config demos/teacher_mlp.json`).

# %%
import json
from dataclasses import replace
from pathlib import Path

from tempsel.harness import pipeline
from tempsel.harness.config import load_config

cfg = load_config(Path(__file__).with_name("teacher_mlp.json"))
cfg = replace(cfg.with_overrides(grid=[0.1, 0.3, 1.0, 3.0]), repetitions=2)
report = pipeline.run_pipeline(cfg)

# %%
agg = report.aggregate
print("beta* (mean, se):", agg["beta_star"]["mean"], agg["beta_star"]["se"])
print("test metrics at beta*:", json.dumps(agg["test"], indent=1))
print("energy R-hat across repetitions: rank-normalized", agg["rhat_energy"], "raw", agg["rhat_energy_raw"])

# %%
print(" beta   TM-PD LPD   SM-PD LPD      MSE")
for row in report.grid["rows"]:
    t = row["test"]
    print(f"{row['beta']:5g}  {t['lpd_tm']['mean']:9.4f}  {t['lpd_sm']['mean']:9.4f}  {t['mse']['mean']:8.4f}")
print("grid picks (validation):", report.grid["selected_beta"])

# %% [markdown]
# Cost: the selected-temperature run needs one sampler run, the grid needs one
# per temperature.

# %%
run = sum(t["select"] + t["sample"] + t["evaluate"] for t in report.timings["repetitions"])
grid = sum(g["total"] for g in report.timings["grid"])
print(f"run {run:.1f}s   grid {grid:.1f}s   ratio {run / grid:.2f}")
