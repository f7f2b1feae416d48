"""Median downside variance, drawdown and wealth across risk levels.

Each seed draws its own regime-switching series; every gamma sees the same
series for a given seed. Frictionless by default.

    python scripts/gamma_sweep.py --seeds 20 --steps 10000
"""

import argparse
import statistics
from dataclasses import dataclass

from cvartrader.learner import LearnerConfig, run_online
from cvartrader.synth import generate


@dataclass
class SweepSetup:
    model: str = "regime-switch"
    steps: int = 10000
    seeds: int = 20
    gammas: tuple = (0.0, 0.5, 0.9, 0.95, 0.99)
    delta: float = 0.0


def sweep(setup: SweepSetup) -> dict:
    out = {}
    for g in setup.gammas:
        reps = [run_online(generate(setup.model, setup.steps, s), LearnerConfig(gamma=g, delta=setup.delta, seed=s))
                for s in range(setup.seeds)]
        out[g] = {
            "downside_variance": statistics.median(r.downside_variance for r in reps),
            "mdd": statistics.median(r.mdd for r in reps),
            "terminal_wealth": statistics.median(r.terminal_wealth for r in reps),
        }
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--steps", type=int, default=10000)
    ap.add_argument("--delta", type=float, default=0.0)
    ap.add_argument("--gammas", default="0,0.5,0.9,0.95,0.99")
    a = ap.parse_args()
    setup = SweepSetup(steps=a.steps, seeds=a.seeds, delta=a.delta,
                       gammas=tuple(float(g) for g in a.gammas.split(",")))
    print(f"{'gamma':>6} {'downside var':>13} {'mdd':>8} {'wealth':>8}")
    for g, m in sweep(setup).items():
        print(f"{g:>6} {m['downside_variance']:>13.3e} {m['mdd']:>8.4f} {m['terminal_wealth']:>8.4f}")


if __name__ == "__main__":
    main()
