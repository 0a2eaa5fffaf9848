"""One-off calibration runs for the acceptance scenarios (not shipped)."""
import sys
import time

import numpy as np

from irsec.experiments import ExperimentSpec, run_experiment

t_start = time.time()


def show(title, summary, cols=("mean_sum_rate", "se_sum_rate")):
    print(f"== {title} ({time.time()-t_start:.0f}s)")
    for rec in summary:
        extras = " ".join(f"{c.split('mean_')[-1]}={rec[c]:.4f}" for c in cols)
        print(f"  {rec['scheme']:10s} x={rec['sweep_value']:>5} n={rec['trials']} "
              f"fail={rec['failures']} {extras} outage={rec['outage_fraction']}")
    sys.stdout.flush()


# A7 dominance
spec = ExperimentSpec(scenario="sumrate_vs_power", sweep=(10.0, 20.0, 30.0), trials=50,
                      seed=1007, schemes=("proposed", "baseline1", "baseline2"),
                      leakage_samples=50)
rows, summary = run_experiment(spec, workers=2)
show("A7 sumrate_vs_power 50 trials", summary)

# A8 tau sweep
spec = ExperimentSpec(scenario="secrecy_vs_tau", sweep=(0.5, 1.0, 2.0, 4.0), trials=50,
                      seed=1008, schemes=("proposed",), leakage_samples=50)
rows, summary = run_experiment(spec, workers=2)
show("A8 secrecy_vs_tau", summary,
     cols=("mean_sum_rate", "mean_an_power_fraction", "se_an_power_fraction", "mean_secrecy_rate"))

# A9 outage at 0 dB target (= 2^tau - 1 for tau = 1), J=2, 100 trials
spec = ExperimentSpec(scenario="outage", sweep=(0.0,), trials=100, seed=1009,
                      schemes=("proposed", "nonrobust"), leakage_samples=20,
                      config_overrides={"j_eves": 2})
rows, summary = run_experiment(spec, workers=2)
show("A9 outage @0dB J=2", summary)

# A10 multi-IRS split, reduced trials first
spec = ExperimentSpec(scenario="multi_irs_split", sweep=tuple(range(1, 10)), trials=30,
                      seed=1010, schemes=("proposed",), leakage_samples=20,
                      config_overrides={"irs_sizes": [10], "irs_distances": [10.0, 10.0]})
rows, summary = run_experiment(spec, workers=2)
show("A10 multi_irs_split 30 trials", summary)
print(f"total {time.time()-t_start:.0f}s")
