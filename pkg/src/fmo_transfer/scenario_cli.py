"""Plain-text scenario files in, CSV out.

A scenario file is a list of ``key = value`` lines; ``#`` starts a comment.
Rates not mentioned default to zero. Example::

    scenario = simulate
    theory = meanfield
    n0 = 100
    sink = 0.32
    gamma_diss.* = 0.0005
    gamma_deph.2 = 24
    nl_deph.1.7 = 0.74

Usage: ``fmo-transfer CONFIG [--out DIR] [--step X] [--quiet]``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, FMOError
from .lindblad_oracle import simulate_oracle
from .model import (
    N_SITES,
    DecoherenceSpec,
    RunConfig,
    Theory,
    fmo_angular,
    parse_rate_key,
    validate_rates,
    with_rate,
)
from .optimizer import DEFAULT_MAX_EVALS, DEFAULT_STARTS, optimize_dephasing, simulate, sweep

log = logging.getLogger(__name__)

SCENARIOS = ("simulate", "sweep", "optimize", "oracle", "validate")

_SCALAR_KEYS = {
    "scenario", "theory", "n0", "horizon", "step", "sample_interval", "output",
    "sweep.parameter", "sweep.values", "sweep.start", "sweep.stop", "sweep.step", "sweep.couple_nonlocal",
    "optimize.starts", "optimize.seed", "optimize.max_evals", "optimize.local_diss",
    "oracle.coupling", "oracle.max_n0",
}


@dataclass
class SweepSpec:
    parameter: str
    values: list
    couple_nonlocal: bool = False


@dataclass
class ScenarioConfig:
    scenario: str = "simulate"
    run: RunConfig = field(default_factory=RunConfig)
    rates: DecoherenceSpec = field(default_factory=DecoherenceSpec)
    sweep: SweepSpec | None = None
    starts: int = DEFAULT_STARTS
    seed: int = 0
    max_evals: int = DEFAULT_MAX_EVALS
    local_diss: float = 0.0005
    coupling: str = "ordered"
    max_n0: int = 2
    output: str = "run"


def _number(text, line, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", line) from None
    if kind is float and not np.isfinite(value):
        raise ConfigError(f"value must be finite, got {text!r}", line)
    return value


def _boolean(text, line):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}", line)


def parse_config(text: str) -> ScenarioConfig:
    """Parse a scenario file; every error names its 1-based line."""
    seen = {}
    scalars = {}
    rate_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        if key in _SCALAR_KEYS:
            scalars[key] = (value, lineno)
            continue
        try:
            parse_rate_key(key)
        except DomainError as exc:
            if key.split(".")[0] in ("sink", "gamma_diss", "gamma_deph", "nl_diss", "nl_deph"):
                raise ConfigError(str(exc), lineno) from None
            raise ConfigError(f"unknown key {key!r}", lineno) from None
        rate = _number(value, lineno)
        if rate < 0:
            raise ConfigError(f"rate {key} must be >= 0, got {rate}", lineno)
        rate_lines.append((key, rate))

    cfg = ScenarioConfig()

    def take(key, kind=str, default=None):
        if key not in scalars:
            return default
        value, line = scalars[key]
        if kind is str:
            return value
        if kind is bool:
            return _boolean(value, line)
        return _number(value, line, kind)

    cfg.scenario = take("scenario", default="simulate")
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {cfg.scenario!r}", scalars["scenario"][1])
    default_theory = "oracle" if cfg.scenario == "oracle" else "meanfield"
    theory = take("theory", default=default_theory)
    if theory not in [t.value for t in Theory]:
        raise ConfigError(f"unknown theory {theory!r}", scalars["theory"][1])
    if cfg.scenario == "oracle" and theory != "oracle":
        raise ConfigError("the oracle scenario needs theory = oracle", scalars["theory"][1])

    run_args = dict(theory=theory)
    for key, kind in (("n0", int), ("horizon", float), ("step", float), ("sample_interval", float)):
        value = take(key, kind)
        if value is not None:
            run_args[key] = value
    try:
        cfg.run = RunConfig(**run_args)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None

    rates = DecoherenceSpec()
    for key, value in rate_lines:
        rates = with_rate(rates, key, value)
    cfg.rates = rates

    if cfg.scenario == "sweep":
        parameter = take("sweep.parameter")
        if parameter is None:
            raise ConfigError("sweep scenario needs sweep.parameter")
        if "sweep.values" in scalars:
            text_values, line = scalars["sweep.values"]
            values = [_number(v.strip(), line) for v in text_values.split(",") if v.strip()]
        elif all(k in scalars for k in ("sweep.start", "sweep.stop", "sweep.step")):
            start, stop, step = take("sweep.start", float), take("sweep.stop", float), take("sweep.step", float)
            if step <= 0:
                raise ConfigError("sweep.step must be > 0", scalars["sweep.step"][1])
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 12) for i in range(count)]
        else:
            raise ConfigError("sweep scenario needs sweep.values or sweep.start/stop/step")
        if not values:
            raise ConfigError("sweep has no values")
        if any(v < 0 for v in values):
            raise ConfigError("sweep values must be >= 0")
        cfg.sweep = SweepSpec(parameter, values, take("sweep.couple_nonlocal", bool, False))

    cfg.starts = take("optimize.starts", int, DEFAULT_STARTS)
    cfg.seed = take("optimize.seed", int, 0)
    cfg.max_evals = take("optimize.max_evals", int, DEFAULT_MAX_EVALS)
    cfg.local_diss = take("optimize.local_diss", float, 0.0005)
    cfg.coupling = take("oracle.coupling", default="ordered")
    if cfg.coupling not in ("ordered", "unordered"):
        raise ConfigError(f"oracle.coupling must be ordered or unordered, got {cfg.coupling!r}",
                          scalars["oracle.coupling"][1])
    cfg.max_n0 = take("oracle.max_n0", int, 2)
    cfg.output = take("output", default="run")
    return cfg


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_trajectory_csv(path: Path, traj) -> None:
    """Header ``t_ps,p1..p7,n8,efficiency``; p_j are ratios to N0, n8 is absolute."""
    header = ["t_ps"] + [f"p{j}" for j in range(1, N_SITES + 1)] + ["n8", "efficiency"]
    rows = (
        [t, *pops, n8, n8 / traj.n0]
        for t, pops, n8 in zip(traj.times, traj.populations, traj.sink)
    )
    _write_csv(path, header, rows)


def run_scenario(cfg: ScenarioConfig, out_dir: Path | str = ".", *, echo=print) -> int:
    """Execute one scenario and write its files into ``out_dir``; returns the exit status."""
    out_dir = Path(out_dir)
    h = fmo_angular()
    stem = out_dir / cfg.output
    lines = [f"scenario: {cfg.scenario}", f"theory: {cfg.run.theory.value}", f"n0: {cfg.run.n0}"]

    status = 0

    if cfg.scenario == "validate":
        problems = validate_rates(cfg.rates)
        lines += ["rates: ok"] if not problems else [f"violation: {p}" for p in problems]
        status = 1 if problems else 0

    elif cfg.scenario == "simulate":
        traj = simulate(cfg.run, h, cfg.rates)
        write_trajectory_csv(stem.with_suffix(".csv"), traj)
        lines += [f"efficiency: {_fmt(traj.final_efficiency)}", f"trajectory: {stem.with_suffix('.csv')}"]

    elif cfg.scenario == "oracle":
        result = simulate_oracle(cfg.run, h, cfg.rates, coupling=cfg.coupling, max_n0=cfg.max_n0)
        write_trajectory_csv(stem.with_suffix(".csv"), result.trajectory)
        lines += [
            f"efficiency: {_fmt(result.final_efficiency)}",
            f"factorization_residual: {_fmt(result.residual)}",
            f"residual_time_ps: {_fmt(result.residual_time)}",
            f"trajectory: {stem.with_suffix('.csv')}",
        ]

    elif cfg.scenario == "sweep":
        s = cfg.sweep
        result = sweep(s.parameter, s.values, cfg.rates, cfg.run, h, couple_nonlocal=s.couple_nonlocal)
        _write_csv(stem.with_suffix(".csv"), ["value", "efficiency"], result.rows())
        best_value, best_eff = result.argmax()
        lines += [
            f"parameter: {s.parameter}",
            f"points: {len(s.values)}",
            f"max_efficiency: {_fmt(best_eff)} at {_fmt(best_value)}",
            f"table: {stem.with_suffix('.csv')}",
        ]

    elif cfg.scenario == "optimize":
        result = optimize_dephasing(
            cfg.run, h, cfg.starts, cfg.seed, max_evals=cfg.max_evals, local_diss=cfg.local_diss
        )
        trace_path = stem.parent / (stem.name + "_trace.csv")
        header = ["index"] + [f"gamma_deph.{j}" for j in range(1, N_SITES + 1)] + ["sink", "efficiency"]
        _write_csv(trace_path, header, ([i, *vec, eff] for i, (vec, eff) in enumerate(result.trace)))
        best = result.best_vector
        lines += [f"gamma_deph.{j} = {_fmt(best[j - 1])}" for j in range(1, N_SITES + 1)]
        lines += [
            f"sink = {_fmt(best[N_SITES])}",
            f"gamma_diss.* = {_fmt(cfg.local_diss)}",
            f"best_efficiency: {_fmt(result.best_efficiency)}",
            f"evaluations: {result.evaluations}",
            f"converged: {str(result.converged).lower()}",
            f"trace: {trace_path}",
        ]

    summary = "\n".join(lines)
    stem.parent.mkdir(parents=True, exist_ok=True)
    (stem.parent / (stem.name + "_summary.txt")).write_text(summary + "\n")
    echo(summary)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fmo-transfer", description=__doc__.splitlines()[0])
    parser.add_argument("config", type=Path, help="scenario file (key = value lines)")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    parser.add_argument("--step", type=float, help="override the integrator step in ps")
    parser.add_argument("--quiet", action="store_true", help="do not echo the summary")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")

    try:
        cfg = parse_config(args.config.read_text())
        if args.step is not None:
            cfg.run = cfg.run.with_(step=args.step)
        return run_scenario(cfg, args.out, echo=(lambda s: None) if args.quiet else print)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FMOError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
