"""Equity curves at gamma = 0.9 for several cost rates on one trending series.

    python scripts/cost_curves.py --out cost_curves.svg
"""

import argparse
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from cvartrader.learner import LearnerConfig, run_online  # noqa: E402
from cvartrader.synth import generate  # noqa: E402


@dataclass
class CostSetup:
    steps: int = 10000
    seed: int = 0
    gamma: float = 0.9
    deltas: tuple = (0.0005, 0.001, 0.0015)
    trend: tuple = (("drift", 0.0006), ("vol", 0.002), ("switch_prob", 0.002))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--out", default="cost_curves.svg")
    a = ap.parse_args()
    setup = CostSetup(steps=a.steps, seed=a.seed, gamma=a.gamma)
    series = generate("trend", setup.steps, setup.seed, **dict(setup.trend))
    fig, ax = plt.subplots(figsize=(8, 4))
    for d in (0.0,) + setup.deltas:
        rep = run_online(series, LearnerConfig(gamma=setup.gamma, delta=d, seed=setup.seed))
        ax.plot(rep.equity, lw=1, label=f"delta={d:g}")
        print(f"delta={d:<7g} wealth={rep.terminal_wealth:.4f} mdd={rep.mdd:.4f} "
              f"cost={rep.metrics_dict()['total_cost']:.4f}")
    ax.plot(rep.baseline_equity, lw=1, color="grey", label="buy and hold")
    ax.set_xlabel("step")
    ax.set_ylabel("wealth")
    ax.legend()
    fig.tight_layout()
    fig.savefig(a.out, metadata={"Date": None})
    print(f"wrote {a.out}")


if __name__ == "__main__":
    main()
