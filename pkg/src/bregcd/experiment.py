"""Sweep configuration, execution and CSV trace files."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .problems import Family, load_instance, make_instance, synth_instance
from .solvers import BetaSchedule, Solver, SolverConfig, SolverTrace, TraceRecord, run_solver

OUTPUT_ENV = "BREGCD_OUTPUT_DIR"
DEFAULT_OUTPUT = "bregcd-out"
CSV_HEADER = ("epoch", "iterations", "objective", "stationarity", "elapsed_s", "diverged")


class ConfigError(ValueError):
    """A malformed or unknown configuration value; carries the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ExperimentConfig:
    problem: str = "poisson"
    m: int = 200
    n: int = 200
    seeds: list = field(default_factory=lambda: list(range(1, 11)))
    solvers: list = field(default_factory=lambda: ["rbcd", "arbcd", "bpg", "abpg"])
    gammas: list = field(default_factory=lambda: [2.0])
    epochs: int = 100
    output_dir: str = ""
    instance: str | None = None
    beta_schedule: str = "closed"
    domain: str = "residual"
    timing: bool = True
    figures: bool = True

    def validate(self) -> "ExperimentConfig":
        try:
            self.problem = Family.parse(self.problem).value
        except ValueError as exc:
            raise ConfigError("problem", str(exc)) from None
        if not self.solvers:
            raise ConfigError("solvers", "at least one solver is required")
        try:
            self.solvers = [Solver.parse(s).value for s in self.solvers]
        except ValueError as exc:
            raise ConfigError("solvers", str(exc)) from None
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if not self.gammas or any(not g > 0 for g in self.gammas):
            raise ConfigError("gammas", "gamma values must be positive")
        for key in ("m", "n", "epochs"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be at least 1")
        try:
            self.beta_schedule = BetaSchedule.parse(self.beta_schedule).value
        except ValueError as exc:
            raise ConfigError("beta_schedule", str(exc)) from None
        if self.domain not in ("residual", "orthant"):
            raise ConfigError("domain", "must be 'residual' or 'orthant'")
        if not self.output_dir:
            self.output_dir = os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# -- value parsing ----------------------------------------------------------------------------


def parse_seeds(value) -> list[int]:
    """'1..10' -> 1..10 inclusive; '1,4,7' and mixes like '1..3,9' also work."""
    if isinstance(value, int):
        return [value]
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out.extend(parse_seeds(v))
        return out
    out = []
    for part in str(value).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return out


def _parse_list(value, conv) -> list:
    if isinstance(value, (list, tuple)):
        return [conv(v) for v in value]
    return [conv(v) for v in str(value).split(",") if v.strip()]


_CONVERTERS = {
    "problem": str,
    "m": int,
    "n": int,
    "seeds": parse_seeds,
    "solvers": lambda v: _parse_list(v, lambda s: str(s).strip()),
    "gammas": lambda v: _parse_list(v, float),
    "epochs": int,
    "output_dir": str,
    "instance": lambda v: None if v is None else str(v),
    "beta_schedule": str,
    "domain": str,
    "timing": bool,
    "figures": bool,
}

# config-file spellings that mirror the command-line flags
_ALIASES = {"solver": "solvers", "gamma": "gammas", "seed": "seeds", "M": "m", "N": "n"}


def parse_config(overrides: dict | None = None, path=None) -> ExperimentConfig:
    """Merge a JSON config file with flag values; flags win, unknown keys are rejected."""
    values: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path} must hold a JSON object")
        values.update(_normalise(data))
    values.update(_normalise({k: v for k, v in (overrides or {}).items() if v is not None}))
    return ExperimentConfig(**values).validate()


def _normalise(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        name = _ALIASES.get(key, key).replace("-", "_")
        if name not in _CONVERTERS:
            raise ConfigError(key, "unknown configuration key")
        try:
            out[name] = _CONVERTERS[name](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"bad value {value!r} ({exc})") from None
    return out


# -- trace files -------------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace_csv(trace: SolverTrace, path, timing: bool = True) -> None:
    """One row per epoch; floats at 17 significant digits so reading back is lossless."""
    try:
        with open(os.fspath(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in trace.records:
                w.writerow([
                    r.epoch, r.iterations, _fmt(r.objective), _fmt(r.stationarity),
                    _fmt(r.elapsed_s if timing else 0.0), int(r.diverged),
                ])
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc


def read_trace_csv(path) -> SolverTrace:
    with open(os.fspath(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    records = [
        TraceRecord(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]), bool(int(r[5])))
        for r in rows[1:]
    ]
    return SolverTrace(records=records, seed=None, config={})


# -- sweeps ------------------------------------------------------------------------------------


@dataclass
class RunResult:
    solver: str
    gamma: float | None
    seed: int
    path: str
    trace: SolverTrace


def run_label(problem: str, solver: str, gamma, seed: int) -> str:
    g = "" if gamma is None else f"_g{gamma:g}"
    return f"{problem}_{solver}{g}_s{seed}"


def build_instance(config: ExperimentConfig, seed: int):
    if config.instance:
        A, b = load_instance(config.instance)
        return make_instance(config.problem, A, b)
    return synth_instance(config.problem, config.m, config.n, seed)


def run_experiment(config: ExperimentConfig, log=None) -> tuple[list[RunResult], list[dict]]:
    """Run every (solver, gamma, seed) combination and write its CSV.

    Non-accelerated solvers ignore gamma and run once per seed.  A diverged
    run is written with its flag and never stops the sweep.
    """
    config.validate()
    os.makedirs(config.output_dir, exist_ok=True)
    with open(os.path.join(config.output_dir, "config.json"), "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    results = []
    instances = {}
    for solver_name in config.solvers:
        solver = Solver.parse(solver_name)
        gammas = config.gammas if solver.accelerated else [None]
        for gamma in gammas:
            for seed in config.seeds:
                if seed not in instances:
                    instances[seed] = build_instance(config, seed)
                p = instances[seed]
                sc = SolverConfig(
                    solver=solver, gamma=2.0 if gamma is None else gamma, epochs=config.epochs,
                    seed=seed, beta_schedule=config.beta_schedule, domain=config.domain,
                )
                trace = run_solver(p, sc)
                path = os.path.join(config.output_dir, run_label(config.problem, solver.value, gamma, seed) + ".csv")
                write_trace_csv(trace, path, timing=config.timing)
                results.append(RunResult(solver.value, gamma, seed, path, trace))
                if log:
                    state = "diverged" if trace.diverged else f"final {trace.final_objective:.6g}"
                    log(f"{os.path.basename(path)}: {state}")
    summary = summarize(results)
    write_summary(summary, os.path.join(config.output_dir, "summary.csv"))
    return results, summary


def summarize(results: list[RunResult]) -> list[dict]:
    groups: dict = {}
    for r in results:
        groups.setdefault((r.solver, r.gamma), []).append(r)
    rows = []
    for (solver, gamma), runs in groups.items():
        finals = [r.trace.final_objective for r in runs if not r.trace.diverged]
        rows.append({
            "solver": solver,
            "gamma": "" if gamma is None else format(gamma, "g"),
            "runs": len(runs),
            "diverged": sum(r.trace.diverged for r in runs),
            "median_final_objective": float(np.median(finals)) if finals else math.nan,
        })
    return rows


def write_summary(rows: list[dict], path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "gamma", "runs", "diverged", "median_final_objective"])
        for r in rows:
            w.writerow([r["solver"], r["gamma"], r["runs"], r["diverged"], _fmt(r["median_final_objective"])])
