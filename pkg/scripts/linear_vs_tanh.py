"""Clipped-linear against tanh policies under trading costs, over many seeds.

    python scripts/linear_vs_tanh.py --seeds 20 --gamma 0.9 --delta 0.001
"""

import argparse
import statistics

import numpy as np

from cvartrader.learner import LearnerConfig, run_online
from cvartrader.synth import generate

TREND = {"drift": 0.0006, "vol": 0.002, "switch_prob": 0.002}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--steps", type=int, default=10000)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--delta", type=float, default=0.001)
    a = ap.parse_args()
    wealth = {}
    for act in ("linear", "tanh"):
        wealth[act] = []
        for s in range(a.seeds):
            rep = run_online(generate("trend", a.steps, s, **TREND),
                             LearnerConfig(gamma=a.gamma, delta=a.delta, seed=s, activation=act))
            wealth[act].append(rep.terminal_wealth)
        w = wealth[act]
        print(f"{act:>7}: median wealth {statistics.median(w):.5f}  mean {np.mean(w):.5f}  "
              f"min {min(w):.5f}  max {max(w):.5f}")
    diff = np.subtract(wealth["linear"], wealth["tanh"])
    print(f"linear ahead in {int(np.sum(diff > 0))} of {a.seeds} seeds; median gap {np.median(diff):+.2e}")


if __name__ == "__main__":
    main()
