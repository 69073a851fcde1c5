"""Regenerate the Dickey-Fuller critical-value table frozen in
macrodml.preprocess._ADF_CRIT_ROWS.

Each row comes from 200,000 simulated driftless Gaussian random walks; the
infinity row is approximated at n = 5000. Paste the printed block over the
constant in preprocess.py when regenerating.
"""

import time

from macrodml.synth import df_critical_values

ROWS = [(50, 50), (100, 100), (250, 250), (500, 500), ("math.inf", 5000)]
REPS = 200_000
SEED = 20_240_901

if __name__ == "__main__":
    print("_ADF_CRIT_ROWS: dict[float, dict[str, float]] = {")
    for label, n in ROWS:
        t0 = time.time()
        crit = df_critical_values(n, reps=REPS, seed=SEED + n)
        vals = ", ".join(f'"{lvl}": {crit[lvl]:.3f}' for lvl in ("1%", "5%", "10%"))
        print(f"    {label}: {{{vals}}},   # {time.time() - t0:.1f}s")
    print("}")
