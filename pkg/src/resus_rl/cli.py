"""Command-line front end.

Subcommands::

    resus-rl train    --config C --seed S --out DIR
    resus-rl evaluate --qtable Q --config C --noise on|off --out DIR
    resus-rl compare  --config C --seed S --out DIR
    resus-rl sweep    --config C --seeds K --out DIR

Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime fault.
``RESUS_RL_OUT_DIR`` sets the default output root when ``--out`` is omitted.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import RunManifest, read_qtable, write_qtable, write_report_json, write_trace_csv
from .config import Experiment, parse_config
from .errors import ConfigError, ResusError
from .harness import PIDController, RLController, evaluate_many, train
from .metrics import compare
from .plotting import render_svg
from .tuning import tune_grid

log = logging.getLogger("resus_rl")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# Published reference values for the nominal scenario; reported next to ours, never asserted.
REFERENCE_TABLE = {
    "RL": {"mdpe": 0.37, "mdape": 0.37, "rmse": 0.50},
    "PID": {"mdpe": 1.75, "mdape": 1.87, "rmse": 0.53},
}
DOSE_AGREEMENT_THRESHOLD = 0.70


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resus-rl", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{train,evaluate,compare,sweep}", parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", type=Path, default=None, help="TOML config (defaults if omitted)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")

    sp = sub.add_parser("train", help="train the Q-learning agent")
    common(sp)

    sp = sub.add_parser("evaluate", help="evaluate a saved Q-table")
    common(sp)
    sp.add_argument("--qtable", type=Path, required=True)
    sp.add_argument("--noise", choices=("on", "off"), default="off")

    sp = sub.add_parser("compare", help="train RL, tune PID, evaluate both with and without noise")
    common(sp)
    sp.add_argument("--workers", type=int, default=None)

    sp = sub.add_parser("sweep", help="independent train+evaluate runs over consecutive seeds")
    common(sp)
    sp.add_argument("--seeds", type=int, required=True, help="number of runs")
    sp.add_argument("--workers", type=int, default=None)
    return p


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get("RESUS_RL_OUT_DIR", "runs")) / args.command


def _load(args) -> Experiment:
    exp = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", key="seed")
        exp.scenario = replace(exp.scenario, seed=args.seed)
    workers = getattr(args, "workers", None)
    if workers is not None:
        if workers < 1:
            raise ConfigError("--workers must be >= 1", key="workers")
        exp.workers = workers
    return exp


def _train(exp: Experiment):
    return train(exp.training, exp.scenario)


def _train_metadata(exp: Experiment) -> dict:
    return {
        "episodes": exp.training.episodes,
        "seed": exp.scenario.seed,
        "init_bv_range": list(exp.training.init_bv_range),
        "max_steps_per_episode": exp.training.max_steps_per_episode,
        "bv_target": exp.scenario.bv_target,
    }


def cmd_train(args) -> int:
    exp = _load(args)
    out = _out_dir(args)
    manifest = RunManifest(out, "train", exp.snapshot(), exp.scenario.seed, ["qtable.csv", "qtable.json"])
    manifest.write()
    q = _train(exp)
    write_qtable(q, out / "qtable.csv", exp.training.learning, _train_metadata(exp))
    manifest.finish()
    print(f"greedy policy (state 1..18 -> action index): {q.greedy_policy()}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    exp = _load(args)
    out = _out_dir(args)
    noisy = args.noise == "on"
    tag = "noise" if noisy else "nonoise"
    files = [f"rl_{tag}.csv", f"metrics_rl_{tag}.json", f"rl_{tag}.svg"]
    manifest = RunManifest(out, "evaluate", exp.snapshot(), exp.scenario.seed, files)
    manifest.data["qtable"] = args.qtable.as_posix()
    try:
        q, _ = read_qtable(args.qtable)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load Q-table {args.qtable}: {exc}", key="qtable") from exc
    manifest.write()
    scenario = exp.scenario_with_noise(noisy)
    [(trace, report)] = evaluate_many([(RLController(q), scenario)])
    write_trace_csv(trace, out / files[0])
    write_report_json(report, out / files[1])
    render_svg([trace], out / files[2], bv_target=scenario.bv_target)
    manifest.finish()
    print(f"MDPE {report.mdpe:.2f}%  MDAPE {report.mdape:.2f}%  RMSE {report.rmse:.3f} L")
    return EXIT_OK


def run_comparison(exp: Experiment, out: Path) -> dict:
    """Train RL, tune PID, evaluate both with and without noise; write every artifact to ``out``."""
    files = [
        "qtable.csv",
        "qtable.json",
        "pid_tuning.json",
        "rl_nonoise.csv",
        "rl_noise.csv",
        "pid_nonoise.csv",
        "pid_noise.csv",
        "comparison.json",
        "fig_nonoise.svg",
        "fig_noise.svg",
    ]
    manifest = RunManifest(out, "compare", exp.snapshot(), exp.scenario.seed, files)
    manifest.write()

    q = _train(exp)
    write_qtable(q, out / "qtable.csv", exp.training.learning, _train_metadata(exp))

    if exp.pid_gains is not None:
        gains, tuning = exp.pid_gains, {"selected": exp.pid_gains.as_dict(), "source": "config"}
    else:
        result = tune_grid(exp.scenario, exp.pid_grid, workers=exp.workers)
        gains, tuning = result.best, result.as_dict()
    write_report_json(tuning, out / "pid_tuning.json")

    clean, noisy = exp.scenario_with_noise(False), exp.scenario_with_noise(True)
    jobs = [
        (RLController(q), clean),
        (RLController(q), noisy),
        (PIDController(gains), clean),
        (PIDController(gains), noisy),
    ]
    (rl_c, rl_c_rep), (rl_n, rl_n_rep), (pid_c, pid_c_rep), (pid_n, pid_n_rep) = evaluate_many(jobs, exp.workers)

    for trace, name in ((rl_c, "rl_nonoise"), (rl_n, "rl_noise"), (pid_c, "pid_nonoise"), (pid_n, "pid_noise")):
        write_trace_csv(trace, out / f"{name}.csv")
    render_svg([rl_c, pid_c], out / "fig_nonoise.svg", clean.bv_target, "Without measurement error")
    render_svg([rl_n, pid_n], out / "fig_noise.svg", noisy.bv_target, "With measurement error")

    cmp_clean = compare(rl_c_rep, pid_c_rep)
    cmp_noisy = compare(rl_n_rep, pid_n_rep, dose_traces=(rl_n.doses, rl_c.doses))
    summary = {
        "seed": exp.scenario.seed,
        "pid_gains": gains.as_dict(),
        "nonoise": cmp_clean.as_dict(),
        "noise": cmp_noisy.as_dict(),
        "reports": {
            "rl_nonoise": rl_c_rep.as_dict(),
            "rl_noise": rl_n_rep.as_dict(),
            "pid_nonoise": pid_c_rep.as_dict(),
            "pid_noise": pid_n_rep.as_dict(),
        },
        "reference_values": REFERENCE_TABLE,
        "dose_agreement": {
            "value": cmp_noisy.dose_agreement,
            "threshold": DOSE_AGREEMENT_THRESHOLD,
            "note": "derived robustness proxy: share of control steps with identical RL dose with and without noise",
        },
        "greedy_policy": q.greedy_policy(),
    }
    write_report_json(summary, out / "comparison.json")
    manifest.finish()

    print("Without measurement error\n" + cmp_clean.format_table())
    print("\nWith measurement error\n" + cmp_noisy.format_table())
    return summary


def cmd_compare(args) -> int:
    exp = _load(args)
    run_comparison(exp, _out_dir(args))
    return EXIT_OK


def _sweep_run(exp: Experiment, gains) -> dict:
    q = _train(exp)
    jobs = [(RLController(q), exp.scenario_with_noise(n)) for n in (False, True)]
    jobs += [(PIDController(gains), exp.scenario_with_noise(n)) for n in (False, True)]
    results = evaluate_many(jobs)
    labels = ("rl_nonoise", "rl_noise", "pid_nonoise", "pid_noise")
    row = {"seed": exp.scenario.seed, "unvisited_states": q.unvisited_states()}
    for label, (_, rep) in zip(labels, results):
        row[label] = rep.as_dict(include_series=False)
    row["dose_agreement"] = float(np.mean(results[0][0].doses == results[1][0].doses))
    return row


def cmd_sweep(args) -> int:
    exp = _load(args)
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1", key="seeds")
    out = _out_dir(args)
    manifest = RunManifest(out, "sweep", exp.snapshot(), exp.scenario.seed, ["sweep_summary.json"])
    manifest.write()
    if exp.pid_gains is not None:
        gains = exp.pid_gains
    else:
        gains = tune_grid(exp.scenario, exp.pid_grid, workers=exp.workers).best

    base = exp.scenario.seed
    runs = [replace(exp, scenario=replace(exp.scenario, seed=base + i)) for i in range(args.seeds)]
    if exp.workers > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            rows = list(pool.map(_sweep_run, runs, [gains] * len(runs)))
    else:
        rows = [_sweep_run(r, gains) for r in runs]

    aggregate = {}
    for label in ("rl_nonoise", "rl_noise", "pid_nonoise", "pid_noise"):
        aggregate[label] = {}
        for metric in ("mdpe", "mdape", "rmse"):
            vals = np.array([row[label][metric] for row in rows])
            aggregate[label][metric] = {
                "mean": float(vals.mean()),
                "std": float(vals.std()),
                "min": float(vals.min()),
                "max": float(vals.max()),
            }
    agreement = np.array([row["dose_agreement"] for row in rows])
    aggregate["dose_agreement"] = {"mean": float(agreement.mean()), "min": float(agreement.min())}
    write_report_json(
        {"pid_gains": gains.as_dict(), "seeds": [base + i for i in range(args.seeds)], "runs": rows, "aggregate": aggregate},
        out / "sweep_summary.json",
    )
    manifest.finish()
    for label in ("rl_nonoise", "rl_noise", "pid_nonoise", "pid_noise"):
        a = aggregate[label]
        print(f"{label:<12} MDPE {a['mdpe']['mean']:6.2f}  MDAPE {a['mdape']['mean']:6.2f}  RMSE {a['rmse']['mean']:.3f}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResusError, OSError) as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
