"""Efficiency objective, multi-start simplex search over dephasing rates, and sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, NumericalError
from .integrator import Trajectory
from .lindblad_oracle import simulate_oracle
from .meanfield import simulate_meanfield
from .model import (
    N_SITES,
    NANOSECOND_DISSIPATION,
    DecoherenceSpec,
    RunConfig,
    SiteNetwork,
    Theory,
    with_rate,
)
from .semiclassical import simulate_semiclassical

log = logging.getLogger(__name__)

#: (gamma_1..gamma_7, Gamma_8)
N_FREE = N_SITES + 1
DEFAULT_STARTS = 5
DEFAULT_MAX_EVALS = 2000
#: n0 above which sweeps shrink the step to keep n0 * step constant (sink stiffness grows with n0).
REFERENCE_N0 = 100


def simulate(config: RunConfig, h: SiteNetwork, rates: DecoherenceSpec, *, guard: bool = True) -> Trajectory:
    """Dispatch on ``config.theory``."""
    if config.theory is Theory.SEMICLASSICAL:
        return simulate_semiclassical(config, h, rates, guard=guard)
    if config.theory is Theory.MEANFIELD:
        return simulate_meanfield(config, h, rates, guard=guard)
    return simulate_oracle(config, h, rates, guard=guard).trajectory


def unpack_rates(rates, local_diss: float = NANOSECOND_DISSIPATION) -> DecoherenceSpec:
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (N_FREE,):
        raise DomainError(f"expected {N_FREE} rates (gamma_1..gamma_7, sink), got shape {rates.shape}")
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise DomainError(f"rates must be finite and >= 0, got {rates}")
    return DecoherenceSpec.local(gamma_deph=rates[:N_SITES], gamma_diss=local_diss, sink=rates[N_SITES])


def objective(
    rates,
    config: RunConfig,
    h: SiteNetwork,
    *,
    local_diss: float = NANOSECOND_DISSIPATION,
    guard: bool = False,
) -> float:
    """Transfer efficiency at the horizon for (gamma_1..gamma_7, Gamma_8), local dissipation pinned.

    Deterministic: identical inputs give bit-identical output. Only the final
    state is sampled, and the step-halving guard is off by default.
    """
    run = config.with_(sample_interval=config.horizon)
    return simulate(run, h, unpack_rates(rates, local_diss), guard=guard).final_efficiency


@dataclass
class StartResult:
    start: np.ndarray
    best_rates: np.ndarray
    best_efficiency: float
    evaluations: int
    converged: bool


@dataclass
class OptimizationResult:
    best_rates: DecoherenceSpec
    best_efficiency: float
    evaluations: int
    trace: list = field(default_factory=list)  # (rates vector, efficiency), improving steps only
    converged: bool = True
    starts: list = field(default_factory=list)

    @property
    def best_vector(self) -> np.ndarray:
        return np.append(self.best_rates.gamma_deph, self.best_rates.sink)


class _BudgetExhausted(Exception):
    pass


def start_points(starts: int, seed: int) -> list[np.ndarray]:
    """Log-spaced dephasing scales from 10^-0.5 to 10^1.5 ps^-1, jittered per site by a seeded RNG."""
    rng = np.random.default_rng(seed)
    scales = np.logspace(-0.5, 1.5, starts) if starts > 1 else np.array([10**0.5])
    points = []
    for scale in scales:
        deph = scale * np.exp(rng.normal(0.0, 0.5, N_SITES))
        sink = math.exp(rng.normal(0.0, 0.5))
        points.append(np.append(deph, sink))
    return points


def _initial_simplex(start: np.ndarray) -> np.ndarray:
    # Each vertex bumps one rate by 30% (at least 0.1 ps^-1), mapped to x = sqrt(rate).
    x0 = np.sqrt(start)
    simplex = [x0]
    for i in range(start.size):
        bumped = start.copy()
        bumped[i] += max(0.3 * start[i], 0.1)
        simplex.append(np.sqrt(bumped))
    return np.array(simplex)


def optimize_dephasing(
    config: RunConfig,
    h: SiteNetwork,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    *,
    max_evals: int = DEFAULT_MAX_EVALS,
    local_diss: float = NANOSECOND_DISSIPATION,
    xatol: float = 1e-2,
    fatol: float = 1e-5,
) -> OptimizationResult:
    """Maximise efficiency over (gamma_1..gamma_7, Gamma_8) with Nelder-Mead on rates = x**2.

    Every start gets at most ``max_evals`` objective calls. Evaluations that
    diverge count as infeasible. Starts run in index order and the best result
    is the first maximum, so the outcome depends only on ``seed``.
    """
    if starts < 1:
        raise DomainError(f"starts must be >= 1, got {starts}")
    best_eff = -math.inf
    best_vec = None
    trace = []
    total = 0
    per_start = []

    for k, start in enumerate(start_points(starts, seed)):
        calls = 0
        local_best = (-math.inf, start)

        def negative_efficiency(x):
            nonlocal calls, total, best_eff, best_vec, local_best
            if calls >= max_evals:
                raise _BudgetExhausted
            calls += 1
            total += 1
            rates = np.square(x)
            try:
                eff = objective(rates, config, h, local_diss=local_diss)
            except NumericalError:
                return math.inf
            if eff > local_best[0]:
                local_best = (eff, rates)
            if eff > best_eff:
                best_eff, best_vec = eff, rates
                trace.append((rates.copy(), eff))
            return -eff

        try:
            res = minimize(
                negative_efficiency,
                np.sqrt(start),
                method="Nelder-Mead",
                options=dict(
                    initial_simplex=_initial_simplex(start),
                    maxfev=max_evals,
                    xatol=xatol,
                    fatol=fatol,
                    adaptive=True,
                ),
            )
            converged = bool(res.success)
        except _BudgetExhausted:
            converged = False
        per_start.append(StartResult(start, local_best[1], local_best[0], calls, converged))
        log.info("start %d: efficiency %.6f after %d evaluations", k, local_best[0], calls)

    return OptimizationResult(
        best_rates=unpack_rates(best_vec, local_diss),
        best_efficiency=best_eff,
        evaluations=total,
        trace=trace,
        converged=all(s.converged for s in per_start),
        starts=per_start,
    )


SWEEP_PARAMETERS = ("sink", "n0", "uniform_local_diss", "uniform_nl_diss")


@dataclass
class SweepResult:
    parameter: str
    values: np.ndarray
    efficiencies: np.ndarray

    def rows(self):
        return list(zip(self.values.tolist(), self.efficiencies.tolist()))

    def argmax(self):
        i = int(np.argmax(self.efficiencies))
        return float(self.values[i]), float(self.efficiencies[i])


def _uniform_nonlocal(value: float) -> np.ndarray:
    m = np.full((N_SITES, N_SITES), float(value))
    np.fill_diagonal(m, 0.0)
    return m


def step_for_n0(config: RunConfig, n0: int) -> float:
    """Keep n0 * step fixed beyond :data:`REFERENCE_N0`."""
    return config.step * min(1.0, REFERENCE_N0 / n0)


def sweep_point(parameter: str, value: float, base_rates: DecoherenceSpec, config: RunConfig,
                *, couple_nonlocal: bool = False):
    """The (rates, config) pair for one sweep value, everything else held at base."""
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"sweep values must be finite and >= 0, got {value}")
    rates, run = base_rates, config
    if parameter == "sink":
        rates = base_rates.replace(sink=value)
    elif parameter == "n0":
        if value != int(value) or value < 1:
            raise DomainError(f"n0 sweep values must be positive integers, got {value}")
        run = config.with_(n0=int(value), step=step_for_n0(config, int(value)))
    elif parameter == "uniform_local_diss":
        rates = base_rates.replace(gamma_diss=np.full(N_SITES, float(value)))
        if couple_nonlocal:
            rates = rates.replace(nl_diss=_uniform_nonlocal(value))
    elif parameter == "uniform_nl_diss":
        rates = base_rates.replace(nl_diss=_uniform_nonlocal(value))
    else:
        try:
            rates = with_rate(base_rates, parameter, value, symmetric=True)
        except DomainError:
            raise DomainError(
                f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS} or a rate key"
            ) from None
    return rates, run


def sweep(
    parameter: str,
    values,
    base_rates: DecoherenceSpec,
    config: RunConfig,
    h: SiteNetwork,
    theory: Theory | str | None = None,
    *,
    couple_nonlocal: bool = False,
    guard: bool = True,
) -> SweepResult:
    """One simulation per value; rows come back in input order.

    ``couple_nonlocal`` with ``uniform_local_diss`` sets Gamma_ij = Gamma alongside
    Gamma_j = Gamma. Named non-local rate keys are set symmetrically.
    """
    if theory is not None:
        config = config.with_(theory=theory)
    values = np.asarray(list(values), dtype=float)
    effs = np.empty(values.size)
    for i, value in enumerate(values):
        rates, run = sweep_point(parameter, float(value), base_rates, config, couple_nonlocal=couple_nonlocal)
        effs[i] = simulate(run.with_(sample_interval=run.horizon), h, rates, guard=guard).final_efficiency
    return SweepResult(parameter, values, effs)
