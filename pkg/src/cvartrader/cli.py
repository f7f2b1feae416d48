"""Command-line entry point: ``run``, ``sweep`` and ``synth`` subcommands.

Exit codes: 0 success, 1 data or run failure, 2 usage error.
Settings resolve as command-line flags, then ``--config`` file, then defaults.
The config file is flat ``key = value`` text whose keys are flag names
without the leading dashes (``inner-iters = 10``, ``long-only = true``).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from pathlib import Path

from .errors import CVaRTraderError, ParameterError
from .learner import LearnerConfig, run_online
from .market_data import load_prices
from .metrics import BacktestReport
from .synth import MODELS, generate, model_params

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# flag name -> (LearnerConfig field, parser)
LEARNER_FLAGS = {
    "gamma": ("gamma", float),
    "delta": ("delta", float),
    "alpha": ("alpha", float),
    "lambda": ("lam", float),
    "window": ("window_n", int),
    "lags": ("lags_n", int),
    "inner-iters": ("inner_iters", int),
    "activation": ("activation", str),
    "filter-span": ("filter_span", int),
    "seed": ("seed", int),
    "long-only": ("long_only", None),
    "mu0": ("barrier_mu0", float),
    "init-scale": ("init_scale", float),
    "gain": ("gain", float),
}

SUMMARY_COLUMNS = ("gamma", "delta", "seed", "total_return", "mdd", "downside_variance")


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def read_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` file into learner keyword arguments."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in LEARNER_FLAGS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        name, conv = LEARNER_FLAGS[key]
        try:
            out[name] = _bool(value) if conv is None else conv(value)
        except ValueError:
            raise UsageError(f"{path}:{n}: bad value {value!r} for {key}") from None
    return out


def learner_config(args: argparse.Namespace, **overrides) -> LearnerConfig:
    values = read_config_file(args.config) if args.config else {}
    for flag, (name, _) in LEARNER_FLAGS.items():
        v = getattr(args, flag.replace("-", "_"), None)
        if v is not None:
            values[name] = v
    values.update(overrides)
    try:
        return LearnerConfig(**values)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def _add_learner_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("learner")
    g.add_argument("--gamma", type=float, help="CVaR level in [0, 1)")
    g.add_argument("--delta", type=float, help="cost per unit of position change")
    g.add_argument("--alpha", type=float, help="learning rate in (0, 1)")
    g.add_argument("--lambda", type=float, help="weight of the parameter-norm penalty")
    g.add_argument("--window", type=int, help="N; the risk window holds N + 2 rewards")
    g.add_argument("--lags", type=int, help="number of filtered-return lags n")
    g.add_argument("--inner-iters", type=int, help="subgradient steps per market step")
    g.add_argument("--activation", choices=("linear", "tanh", "sigmoid"))
    g.add_argument("--filter-span", type=int, help="EMA span of the return filter")
    g.add_argument("--seed", type=int)
    g.add_argument("--long-only", action="store_const", const=True, default=None)
    g.add_argument("--mu0", type=float, help="initial barrier weight")
    g.add_argument("--init-scale", type=float, help="std of the random initial weights (0: zeros)")
    g.add_argument("--gain", type=float, help="pre-activation gain")
    p.add_argument("--config", help="flat key = value file with learner settings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvartrader", description="Online CVaR-sensitive trading backtests.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="single online backtest over a price file")
    run.add_argument("--data", required=True, help="CSV of timestamp,price")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--plot", action="store_true", help="also write equity.svg")
    _add_learner_flags(run)

    sweep = sub.add_parser("sweep", help="grid of runs over gamma, delta and seed")
    src = sweep.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV of timestamp,price shared by every cell")
    src.add_argument("--model", choices=MODELS, help="synthetic generator; each seed draws its own series")
    sweep.add_argument("--steps", type=int, default=5000, help="series length with --model")
    sweep.add_argument("--gammas", required=True, help="comma-separated list")
    sweep.add_argument("--deltas", default="0", help="comma-separated list")
    sweep.add_argument("--seeds", default="0", help="comma-separated list")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--out", default="sweep_out")
    _add_learner_flags(sweep)

    synth = sub.add_parser("synth", help="write a seeded synthetic price series")
    synth.add_argument("--model", required=True, choices=MODELS)
    synth.add_argument("--steps", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", help="CSV path (default: <model>_<seed>.csv)")
    return parser


# ---------------------------------------------------------------- artifacts

def _ts(value) -> str:
    return value.isoformat() if isinstance(value, datetime) else str(value)


def _num(value: float) -> str:
    return repr(float(value))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def write_run_artifacts(report: BacktestReport, out: Path, plot: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    ts = report.timestamps
    _write_csv(out / "equity_curve.csv",
               ("step", "timestamp", "price", "equity", "equity_additive", "baseline_equity"),
               ((t, _ts(ts[t]), _num(report.prices[t]), _num(report.equity[t]),
                 _num(report.equity_additive[t]), _num(report.baseline_equity[t]))
                for t in range(len(ts))))
    prev = 0.0
    rows = []
    for t in range(len(ts)):
        pos = float(report.positions[t])
        rows.append((t, _ts(ts[t]), _num(pos), _num(pos - prev), _num(report.varthetas[t]),
                     _num(report.costs[t]), _num(report.rewards_realized[t]), _num(report.rewards_aux[t])))
        prev = pos
    _write_csv(out / "trades.csv",
               ("step", "timestamp", "position", "trade", "vartheta", "cost", "reward_realized", "reward_aux"),
               rows)
    _write_csv(out / "risk_trace.csv", ("step", "timestamp", "var", "cvar", "gamma", "sample_count"),
               ((t, _ts(ts[t]), _num(e.var), _num(e.cvar), _num(e.gamma), e.sample_count)
                for t, e in report.risk_trace))
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report.metrics_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if plot:
        _plot_equity(report, out / "equity.svg")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "cvartrader"
    import matplotlib.pyplot as plt

    return plt


def _plot_equity(report: BacktestReport, path: Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    steps = range(len(report.equity))
    ax.plot(steps, report.equity, label="strategy", lw=1)
    ax.plot(steps, report.baseline_equity, label="buy and hold", lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("wealth")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_sweep(rows: list[dict], out: Path) -> None:
    plt = _pyplot()
    deltas = sorted({r["delta"] for r in rows})
    for metric in SUMMARY_COLUMNS[3:]:
        fig, ax = plt.subplots(figsize=(6, 4))
        for d in deltas:
            gammas = sorted({r["gamma"] for r in rows if r["delta"] == d})
            med = [statistics.median(r[metric] for r in rows if r["delta"] == d and r["gamma"] == g)
                   for g in gammas]
            ax.plot(gammas, med, marker="o", label=f"delta={d:g}")
        ax.set_xlabel("gamma")
        ax.set_ylabel(f"median {metric}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"sweep_{metric}.svg", format="svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------- commands

def _load(path: str):
    if not os.path.exists(path):
        raise FileNotFoundError(f"data file not found: {path}")
    return load_prices(path)


def cmd_run(args) -> int:
    cfg = learner_config(args)
    prices = _load(args.data)
    report = run_online(prices, cfg)
    write_run_artifacts(report, Path(args.out), plot=args.plot)
    m = report.metrics_dict()
    print(f"total_return={m['total_return']:.6f} mdd={m['mdd']:.6f} "
          f"downside_variance={m['downside_variance']:.3e} -> {args.out}")
    return EXIT_OK


def _parse_list(text: str, conv, name: str) -> list:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise UsageError(f"--{name} needs at least one value")
    try:
        return [conv(s) for s in items]
    except ValueError:
        raise UsageError(f"--{name}: cannot parse {text!r}") from None


def _cell_name(gamma, delta, seed) -> str:
    return f"gamma{gamma!r}_delta{delta!r}_seed{seed}"


def _run_cell(job: dict) -> dict:
    """One sweep cell; returns a summary row or an error record."""
    cfg = job["config"]
    row = {"gamma": cfg.gamma, "delta": cfg.delta, "seed": cfg.seed}
    try:
        if job["data"] is not None:
            prices = load_prices(job["data"])
        else:
            prices = generate(job["model"], job["steps"], cfg.seed)
        report = run_online(prices, cfg)
        write_run_artifacts(report, Path(job["dir"]))
    except (CVaRTraderError, OSError, ArithmeticError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(total_return=report.total_return, mdd=report.mdd, downside_variance=report.downside_variance)
    return row


def cmd_sweep(args) -> int:
    gammas = _parse_list(args.gammas, float, "gammas")
    deltas = _parse_list(args.deltas, float, "deltas")
    seeds = _parse_list(args.seeds, int, "seeds")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.model and args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if args.data and not os.path.exists(args.data):
        raise FileNotFoundError(f"data file not found: {args.data}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for g in gammas:
        for d in deltas:
            for s in seeds:
                cfg = learner_config(args, gamma=g, delta=d, seed=s)
                jobs.append({"config": cfg, "data": args.data, "model": args.model, "steps": args.steps,
                             "dir": str(out / _cell_name(g, d, s))})
    if args.jobs == 1:
        results = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    ok = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    _write_csv(out / "sweep_summary.csv", SUMMARY_COLUMNS,
               ((repr(r["gamma"]), repr(r["delta"]), r["seed"], _num(r["total_return"]), _num(r["mdd"]),
                 _num(r["downside_variance"])) for r in ok))
    if failed:
        _write_csv(out / "sweep_failures.csv", ("gamma", "delta", "seed", "error"),
                   ((repr(r["gamma"]), repr(r["delta"]), r["seed"], r["error"]) for r in failed))
    if args.model:
        with open(out / "sweep_data.json", "w", encoding="utf-8") as fh:
            json.dump({"steps": args.steps, "seeds": seeds, **model_params(args.model)}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if ok:
        _plot_sweep(ok, out)
    print(f"{len(ok)} of {len(results)} cells succeeded -> {out}")
    if failed:
        print(f"{len(failed)} cells failed; see {out / 'sweep_failures.csv'}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    series = generate(args.model, args.steps, args.seed)
    path = Path(args.out or f"{args.model}_{args.seed}.csv")
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, ("timestamp", "price"), ((t, _num(p)) for t, p in zip(series.timestamps, series.prices)))
    meta = {"steps": args.steps, "seed": args.seed, "start_price": 100.0, **model_params(args.model)}
    with open(path.with_suffix(path.suffix + ".meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.steps} prices to {path}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cvartrader: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"cvartrader: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (CVaRTraderError, OSError, ArithmeticError) as exc:
        print(f"cvartrader: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
