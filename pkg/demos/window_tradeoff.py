"""Why the measurement window matters.

Simulates the default closed-loop site once per seed, then replays each trace
with measurement-based balancing at several window sizes.  Short windows see
bursty, noisy load; long windows act on stale load.  The error is lowest in
between.

    python demos/window_tradeoff.py [n_seeds]
"""

import sys

import numpy as np

from dnsite.experiments import replay_medians, seeds
from dnsite.simulator import Scenario, run

WINDOWS = [0.1, 0.5, 1, 5, 10, 15, 30, 60]


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    sc = Scenario(policy="measurement_based", window=10.0)
    rows = np.array([replay_medians(run(sc.replace(seed=s)), WINDOWS) for s in seeds(n)])
    print(f"median imbalance over {n} seeds")
    for w, eps in zip(WINDOWS, np.median(rows, axis=0)):
        print(f"  W = {w:>5g} s   eps = {eps:.3f}  " + "#" * int(eps * 200))


if __name__ == "__main__":
    main()
