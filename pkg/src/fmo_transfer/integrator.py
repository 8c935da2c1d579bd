"""Fixed-step classical RK4 with a step-doubling convergence guard.

Two loops share the same update formula:

* a plain Python loop for arbitrary callables ``f(t, y)`` (used by the
  density-matrix oracle, whose cost is dominated by matrix products), and
* a numba-compiled loop for compiled in-place right-hand sides
  ``f(t, y, params, out)``
  (semi-classical and mean-field closures, where per-step Python overhead
  would dominate).

States are flat numpy arrays; callers reshape on the way in and out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .errors import DomainError, NumericalError, StepSizeError

#: Allowed disagreement of the final sink population between step and step/2, per excitation.
GUARD_TOLERANCE = 1e-6


@dataclass
class Trajectory:
    times: np.ndarray
    populations: np.ndarray  # (n_samples, n_sites), ratio to n0
    sink: np.ndarray  # absolute reaction-centre population
    n0: int
    final_efficiency: float
    step: float
    aux: dict = field(default_factory=dict)

    @property
    def efficiency(self) -> np.ndarray:
        return self.sink / self.n0


def rk4_step(f: Callable, y: np.ndarray, t: float, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``y' = f(t, y)``."""
    if not h > 0:
        raise DomainError(f"step must be > 0, got {h}")
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite state after RK4 step", time=t + h)
    return out


@numba.njit(cache=True)
def _rk4_loop(f, y0, params, h, n_steps, sample_every):
    n_samples = n_steps // sample_every + 1
    if n_steps % sample_every != 0:
        n_samples += 1
    size = y0.size
    samples = np.empty((n_samples, size), dtype=y0.dtype)
    steps = np.empty(n_samples, dtype=np.int64)
    y = y0.copy()
    tmp = np.empty_like(y)
    k1 = np.empty_like(y)
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    samples[0] = y
    steps[0] = 0
    s = 1
    half = 0.5 * h
    sixth = h / 6.0
    for k in range(n_steps):
        t = k * h
        f(t, y, params, k1)
        for i in range(size):
            tmp[i] = y[i] + half * k1[i]
        f(t + half, tmp, params, k2)
        for i in range(size):
            tmp[i] = y[i] + half * k2[i]
        f(t + half, tmp, params, k3)
        for i in range(size):
            tmp[i] = y[i] + h * k3[i]
        f(t + h, tmp, params, k4)
        for i in range(size):
            y[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        done = k + 1
        if done % sample_every == 0 or done == n_steps:
            for v in y:
                if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                    return samples[:s], steps[:s], done
            samples[s] = y
            steps[s] = done
            s += 1
    return samples, steps, -1


def _python_loop(f, y0, h, n_steps, sample_every):
    samples = [np.array(y0)]
    steps = [0]
    y = np.array(y0)
    for k in range(n_steps):
        y = rk4_step(f, y, k * h, h)
        done = k + 1
        if done % sample_every == 0 or done == n_steps:
            samples.append(y)
            steps.append(done)
    return np.array(samples), np.array(steps)


def _grid(horizon: float, step: float, sample_interval: float):
    if not step > 0:
        raise DomainError(f"step must be > 0, got {step}")
    if not step <= sample_interval <= horizon:
        raise DomainError(
            f"need step <= sample interval <= horizon, got {step}, {sample_interval}, {horizon}"
        )
    n_steps = max(1, round(horizon / step))
    h = horizon / n_steps
    sample_every = max(1, round(sample_interval / h))
    return h, n_steps, sample_every


def run_fixed_step(derivative, y0, horizon, step, sample_interval, params=None):
    """Integrate without the guard; returns ``(times, states, step_used)``.

    With ``params`` given, ``derivative`` must be a numba-compiled
    ``f(t, y, params, out)`` writing dy/dt into ``out`` and the loop runs
    compiled (``params`` may be an array or a tuple of arrays); otherwise it is
    a Python ``f(t, y)`` returning dy/dt.
    """
    h, n_steps, sample_every = _grid(horizon, step, sample_interval)
    y0 = np.ascontiguousarray(y0)
    if params is None:
        states, steps = _python_loop(derivative, y0, h, n_steps, sample_every)
    else:
        if isinstance(params, np.ndarray):
            params = np.ascontiguousarray(params)
        states, steps, failed = _rk4_loop(derivative, y0, params, h, n_steps, sample_every)
        if failed >= 0:
            raise NumericalError("integration diverged (non-finite state)", time=failed * h)
    return steps * h, states, h


def integrate(
    derivative,
    y0,
    horizon: float,
    step: float,
    sample_interval: float = 0.01,
    *,
    observe: Callable,
    n0: int,
    params=None,
    guard: bool = True,
) -> Trajectory:
    """Fixed-step RK4 over ``[0, horizon]`` returning a sampled :class:`Trajectory`.

    ``observe(states)`` maps the stacked sampled states to
    ``(populations, sink, aux)`` with ``populations`` in absolute numbers.

    With ``guard`` on, the run is repeated at ``step / 2`` and the final sink
    populations must agree within ``1e-6 * n0``; otherwise :class:`StepSizeError`.
    """
    times, states, h = run_fixed_step(derivative, y0, horizon, step, sample_interval, params)
    populations, sink, aux = observe(states)
    if guard:
        _, fine, _ = run_fixed_step(derivative, y0, horizon, step / 2, horizon, params)
        _, fine_sink, _ = observe(fine[-1:])
        diff = abs(float(fine_sink[-1]) - float(sink[-1]))
        if not diff <= GUARD_TOLERANCE * n0:
            raise StepSizeError(
                f"final sink population changes by {diff:.3g} when the step is halved "
                f"(allowed {GUARD_TOLERANCE * n0:.3g}); use a smaller step than {step}"
            )
    final = float(sink[-1])
    if not math.isfinite(final):
        raise NumericalError("non-finite sink population", time=float(times[-1]))
    return Trajectory(
        times=times,
        populations=np.asarray(populations) / n0,
        sink=np.asarray(sink, dtype=float),
        n0=n0,
        final_efficiency=final / n0,
        step=h,
        aux=aux,
    )
