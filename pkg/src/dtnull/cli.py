"""Command-line driver: ``dtnull <subcommand> --config cfg.yaml [--seed n] [--out dir] [--threads n]``.

Exit status is 0 on success, 2 for an invalid configuration, 3 when a real
measurement budget is violated and 1 for anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .beamforming import (Combiner, beam_gain_pattern, compute_powers, exhaustive_search, matched_beam,
                          null_depth_db, phase_set)
from .channel import Scenario, generate_scenario, load_scenario, save_scenario
from .config import ExperimentConfig, load_config
from .environment import NoiseModel, RealEnvironment
from .errors import BudgetError, DTNullError, InvalidConfigError, InvalidInputError
from .orchestrator import run_assisted, run_baseline_real, to_db, write_header, write_summary
from .twin import DigitalTwin, PowerDataset, TwinConfig, evaluate_nmse, sample_datasets

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


# -- helpers ------------------------------------------------------------------

def _path(out: str, name: str, seed: int) -> str:
    return os.path.join(out, f"{name}_seed{seed}")


def _dump_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_plain)
        f.write("\n")


def _plain(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def scenario_for(cfg: ExperimentConfig, seed: int) -> Scenario:
    ex = cfg.experiment
    if ex.scenario_path:
        return load_scenario(ex.scenario_path)
    return generate_scenario(cfg.scenario, seed if ex.scenario_seed is None else ex.scenario_seed)


def _noise(cfg: ExperimentConfig, seed: int) -> Optional[NoiseModel]:
    db = cfg.experiment.measurement_noise_db
    return NoiseModel(db, seed) if db > 0 else None


def _datasets(cfg, scenario, seed, n, stream):
    env = RealEnvironment(scenario, _noise(cfg, seed + stream))
    rng = np.random.default_rng([seed, stream])
    return sample_datasets(env, n, phase_set(scenario.phase_bits), rng, scenario.digest())


def _best_beam(out: str, seed: int) -> Optional[Combiner]:
    for name in ("assisted_summary", "real_summary"):
        p = _path(out, name, seed) + ".json"
        if os.path.exists(p):
            with open(p, encoding="utf-8") as f:
                return Combiner(json.load(f)["best_phases"])
    return None


# -- subcommands --------------------------------------------------------------

def cmd_gen_scenario(cfg, seed, out):
    sc = scenario_for(cfg, seed)
    path = _path(out, "scenario", seed) + ".json"
    save_scenario(sc, path)
    return [path]


def cmd_collect(cfg, seed, out):
    sc = scenario_for(cfg, seed)
    d_in, d_s = _datasets(cfg, sc, seed, cfg.experiment.collect_size, 0)
    paths = [_path(out, "d_in", seed) + ".csv", _path(out, "d_s", seed) + ".csv"]
    d_in.save(paths[0])
    d_s.save(paths[1])
    return paths


def _load_or_collect(cfg, sc, seed, out):
    p_in, p_s = _path(out, "d_in", seed) + ".csv", _path(out, "d_s", seed) + ".csv"
    if os.path.exists(p_in) and os.path.exists(p_s):
        d_in, d_s = PowerDataset.load(p_in), PowerDataset.load(p_s)
        if d_in.scenario_hash and d_in.scenario_hash != sc.digest():
            raise InvalidInputError(f"{p_in} was collected on a different scenario")
        return d_in, d_s
    return _datasets(cfg, sc, seed, cfg.experiment.collect_size, 0)


def cmd_train_twin(cfg, seed, out):
    sc = scenario_for(cfg, seed)
    d_in, d_s = _load_or_collect(cfg, sc, seed, out)
    twin = DigitalTwin.build(cfg.twin, sc.num_antennas, sc.num_interferers, seed)
    twin.train(d_in, d_s, cfg.twin, seed)
    t_in, t_s = _datasets(cfg, sc, seed, cfg.experiment.test_size, 1)
    nmse_in, nmse_s = twin.nmse(t_in, t_s)
    ckpt = _path(out, "twin", seed) + ".json"
    twin.save(ckpt)
    report = _path(out, "twin_nmse", seed) + ".json"
    _dump_json(report, {**cfg.provenance(seed), "architecture": cfg.twin.architecture,
                        "train_size": len(d_in), "test_size": len(t_in), "nmse_in": nmse_in, "nmse_s": nmse_s})
    return [ckpt, report]


def twin_sweep_rows(cfg: ExperimentConfig, seed: int):
    """``(architecture, n, nmse_in, nmse_s)`` for every sweep cell; nested subsets of one draw."""
    sc = scenario_for(cfg, seed)
    sizes = sorted(cfg.experiment.sweep_sizes)
    d_in, d_s = _datasets(cfg, sc, seed, sizes[-1], 0)
    t_in, t_s = _datasets(cfg, sc, seed, cfg.experiment.test_size, 1)
    rows = []
    for arch in cfg.experiment.sweep_architectures:
        tcfg = TwinConfig(**{**cfg.twin.to_dict(), "architecture": arch,
                             "learning_rate": None, "milestones": None})
        for n in sizes:
            twin = DigitalTwin.build(tcfg, sc.num_antennas, sc.num_interferers, seed)
            idx = slice(0, n)
            twin.train(d_in.subset(idx), d_s.subset(idx), tcfg, seed)
            rows.append((arch, n) + twin.nmse(t_in, t_s))
    return rows


def cmd_twin_sweep(cfg, seed, out):
    path = _path(out, "twin_sweep", seed) + ".csv"
    rows = twin_sweep_rows(cfg, seed)
    with open(path, "w", newline="", encoding="utf-8") as f:
        write_header(f, cfg.provenance(seed))
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["architecture", "n_samples", "nmse_in", "nmse_s"])
        for arch, n, a, b in rows:
            w.writerow([arch, n, repr(a), repr(b)])
    return [path]


def _oracle_sinr(sc: Scenario) -> Optional[float]:
    try:
        return exhaustive_search(sc)[1].sinr
    except BudgetError:
        return None


def cmd_train_real(cfg, seed, out):
    sc = scenario_for(cfg, seed)
    res = run_baseline_real(sc, cfg.agent, cfg.experiment.iterations, seed, _noise(cfg, seed))
    trace = _path(out, "real_trace", seed) + ".csv"
    summary = _path(out, "real_summary", seed) + ".json"
    res.trace.write_csv(trace, cfg.provenance(seed))
    write_summary(summary, res, cfg.provenance(seed), _oracle_sinr(sc))
    return [trace, summary]


def cmd_train_assisted(cfg, seed, out):
    sc = scenario_for(cfg, seed)
    res = run_assisted(sc, cfg.agent, cfg.twin, cfg.policy, seed, _noise(cfg, seed))
    trace = _path(out, "assisted_trace", seed) + ".csv"
    summary = _path(out, "assisted_summary", seed) + ".json"
    res.trace.write_csv(trace, cfg.provenance(seed))
    write_summary(summary, res, cfg.provenance(seed), _oracle_sinr(sc))
    return [trace, summary]


def cmd_oracle(cfg, seed, out):
    sc = scenario_for(cfg, seed)
    comb, rep = exhaustive_search(sc)
    mb = compute_powers(matched_beam(sc), sc)
    path = _path(out, "oracle", seed) + ".json"
    _dump_json(path, {**cfg.provenance(seed), "sinr": rep.sinr, "sinr_db": rep.sinr_db, "rate": rep.rate,
                      "phases": comb.phases, "indices": phase_set(sc.phase_bits).index_of(comb.phases),
                      "matched_sinr": mb.sinr, "matched_sinr_db": mb.sinr_db})
    return [path]


def cmd_evaluate(cfg, seed, out):
    """Noise-free powers of every stored best beam against the hidden scenario."""
    sc = scenario_for(cfg, seed)
    oracle = _oracle_sinr(sc)
    result = {**cfg.provenance(seed), "oracle_sinr_db": None if oracle is None else to_db(oracle),
              "matched_sinr_db": compute_powers(matched_beam(sc), sc).sinr_db}
    found = False
    for mode in ("real", "assisted"):
        p = _path(out, f"{mode}_summary", seed) + ".json"
        if not os.path.exists(p):
            continue
        found = True
        with open(p, encoding="utf-8") as f:
            comb = Combiner(json.load(f)["best_phases"])
        rep = compute_powers(comb, sc)
        entry = {"sinr": rep.sinr, "sinr_db": rep.sinr_db, "null_depth_db": null_depth_db(comb, sc).tolist()}
        if oracle is not None:
            entry["oracle_gap_db"] = rep.sinr_db - to_db(oracle)
        result[mode] = entry
    if not found:
        raise InvalidInputError(f"no run summaries for seed {seed} in {out}; run train-real or train-assisted first")
    path = _path(out, "evaluation", seed) + ".json"
    _dump_json(path, result)
    return [path]


def cmd_pattern(cfg, seed, out):
    """Gain pattern of the stored best beam (the oracle beam if no run exists yet)."""
    sc = scenario_for(cfg, seed)
    comb = _best_beam(out, seed) or exhaustive_search(sc)[0]
    grid = np.linspace(-math.pi / 2, math.pi / 2, cfg.experiment.pattern_points)
    gain = beam_gain_pattern(comb, sc.geometry, grid)
    path = _path(out, "pattern", seed) + ".csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        write_header(f, cfg.provenance(seed))
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["azimuth_deg", "gain_db"])
        with np.errstate(divide="ignore"):
            for a, g in zip(np.degrees(grid), 10 * np.log10(gain)):
                w.writerow([repr(float(a)), repr(float(g))])
    return [path]


COMMANDS = {
    "gen-scenario": cmd_gen_scenario,
    "collect": cmd_collect,
    "train-twin": cmd_train_twin,
    "twin-sweep": cmd_twin_sweep,
    "train-real": cmd_train_real,
    "train-assisted": cmd_train_assisted,
    "evaluate": cmd_evaluate,
    "oracle": cmd_oracle,
    "pattern": cmd_pattern,
}

HELP = {
    "gen-scenario": "draw the scenario and save it as JSON",
    "collect": "measure random codebook beams into D_in / D_s",
    "train-twin": "fit both twin predictors and report held-out NMSE",
    "twin-sweep": "held-out NMSE over sample sizes and architectures",
    "train-real": "baseline agent learning on the real environment only",
    "train-assisted": "agent learning with the twin in the loop",
    "evaluate": "noise-free SINR, oracle gap and null depth of stored beams",
    "oracle": "exhaustive codebook optimum",
    "pattern": "beam gain versus azimuth",
}


# -- aggregation --------------------------------------------------------------

def read_trace(path, column: str = "sinr_db") -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or column not in reader.fieldnames:
        raise InvalidInputError(f"{path} has no column {column!r}")
    return np.array([float(r[column]) for r in reader])


def aggregate_seeds(traces: Sequence[np.ndarray]):
    """Per-iteration mean and population standard deviation across traces.

    Shorter traces are right-padded with their last value; the third output
    counts padded entries per iteration.
    """
    if len(traces) == 0:
        raise InvalidInputError("no traces to aggregate")
    traces = [np.asarray(t, dtype=float) for t in traces]
    if any(t.size == 0 for t in traces):
        raise InvalidInputError("cannot aggregate an empty trace")
    n = max(t.size for t in traces)
    stack = np.empty((len(traces), n))
    padded = np.zeros(n, dtype=int)
    for i, t in enumerate(traces):
        stack[i, :t.size] = t
        stack[i, t.size:] = t[-1]
        padded[t.size:] += 1
    return stack.mean(axis=0), stack.std(axis=0), padded


def cmd_aggregate(files, column, out_path):
    traces = [read_trace(p, column) for p in files]
    mean, std, padded = aggregate_seeds(traces)
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        write_header(f, {"column": column, "traces": len(files), "version": __version__})
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "mean", "std", "padded"])
        for i, (m, s, p) in enumerate(zip(mean, std, padded)):
            w.writerow([i, repr(float(m)), repr(float(s)), int(p)])
    return [out_path]


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtnull", description="Twin-assisted interference-aware beam learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="run one seed instead of the configured list")
        p.add_argument("--out", default=None, help="output directory (overrides config and $DTNULL_OUT)")
        p.add_argument("--threads", type=int, default=1, help="seeds run in parallel worker processes")
    p = sub.add_parser("aggregate", help="per-iteration mean and std over trace CSVs")
    p.add_argument("traces", nargs="+")
    p.add_argument("--column", default="sinr_db")
    p.add_argument("--out", required=True, help="aggregate CSV path")
    return parser


def _run_one(args):
    name, cfg_dict, seed, out = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return COMMANDS[name](cfg, seed, out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "aggregate":
            for p in cmd_aggregate(args.traces, args.column, args.out):
                print(p)
            return EXIT_OK
        if args.threads < 1:
            raise InvalidConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        out = cfg.output_dir(args.out)
        os.makedirs(out, exist_ok=True)
        seeds = [args.seed] if args.seed is not None else list(cfg.experiment.seeds)
        jobs = [(args.command, cfg.to_dict(), s, out) for s in seeds]
        if args.threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.threads) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
        for paths in results:
            for p in paths:
                print(p)
        return EXIT_OK
    except InvalidConfigError as exc:
        print(f"dtnull: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"dtnull: budget violation: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DTNullError, OSError, ValueError) as exc:
        print(f"dtnull: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
