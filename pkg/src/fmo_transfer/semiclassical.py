"""Semi-classical amplitude closure, <a_j^dag a_j> ~ |alpha_j|^2.

Equations of motion (sites 1..7, sink population n8):

    d alpha_j/dt = -i(w_j alpha_j + 2 sum_{k!=j} g_jk alpha_k)
                   - (Gamma_j + gamma_j) alpha_j - sum_{k!=j} Gamma_jk alpha_k
                   [- Gamma_8 (n8 + 1) alpha_3   for j = 3]
    d n8/dt      = 2 Gamma_8 |alpha_3|^2 (n8 + 1)

The factor 2 on the hopping term and the absence of non-local dephasing are
kept exactly; local dephasing and dissipation enter identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DomainError
from .integrator import Trajectory, integrate
from .model import (
    N_SITES,
    DecoherenceSpec,
    RunConfig,
    SiteNetwork,
    Theory,
    require_angular,
    require_valid,
    transfer_efficiency,
)

_T = 2  # 0-based index of the trap site (site 3)


@dataclass(frozen=True)
class AmplitudeState:
    alpha: np.ndarray  # 7 complex amplitudes
    sink: float  # n8

    def to_vector(self) -> np.ndarray:
        y = np.zeros(N_SITES + 1, dtype=complex)
        y[:N_SITES] = self.alpha
        y[N_SITES] = self.sink
        return y

    @classmethod
    def from_vector(cls, y) -> AmplitudeState:
        return cls(alpha=np.array(y[:N_SITES], dtype=complex), sink=float(np.real(y[N_SITES])))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.alpha) ** 2


def init_semiclassical(n0: int) -> AmplitudeState:
    """All N0 excitations on site 1, as a real positive amplitude sqrt(N0)."""
    if int(n0) != n0 or n0 < 1:
        raise DomainError(f"n0 must be a positive integer, got {n0}")
    alpha = np.zeros(N_SITES, dtype=complex)
    alpha[0] = math.sqrt(n0)
    return AmplitudeState(alpha=alpha, sink=0.0)


def pack_params(h: SiteNetwork, rates: DecoherenceSpec) -> np.ndarray:
    """Complex parameter vector for the compiled kernel.

    The linear part of the amplitude equations is collected into one matrix
    ``L`` (so that d alpha/dt = L alpha + sink terms), followed by the sink rate.
    """
    m = require_angular(h)
    g = m - np.diag(np.diag(m))
    linear = -1j * (np.diag(np.diag(m)) + 2.0 * g)
    linear -= np.diag(rates.gamma_diss + rates.gamma_deph)
    linear -= rates.nl_diss
    return np.concatenate([linear.ravel(), [rates.sink]]).astype(complex)


@numba.njit(cache=True)
def semiclassical_kernel(t, y, p, out):
    n = 7
    n8 = y[n].real
    sink = p[n * n].real
    for j in range(n):
        acc = 0j
        for k in range(n):
            acc += p[j * n + k] * y[k]
        out[j] = acc
    a3 = y[_T]
    out[_T] -= sink * (n8 + 1.0) * a3
    out[n] = 2.0 * sink * (a3.real * a3.real + a3.imag * a3.imag) * (n8 + 1.0)


def rhs_semiclassical(state: AmplitudeState, h: SiteNetwork, rates: DecoherenceSpec) -> AmplitudeState:
    """Time derivative of ``state``, returned in the same container."""
    d = np.empty(N_SITES + 1, dtype=complex)
    semiclassical_kernel(0.0, state.to_vector(), pack_params(h, rates), d)
    return AmplitudeState(alpha=d[:N_SITES].copy(), sink=float(d[N_SITES].real))


def _observe(states):
    alpha = states[:, :N_SITES]
    return np.abs(alpha) ** 2, states[:, N_SITES].real.copy(), {"alpha": alpha.copy()}


def simulate_semiclassical(
    config: RunConfig,
    h: SiteNetwork,
    rates: DecoherenceSpec,
    *,
    initial: AmplitudeState | None = None,
    guard: bool = True,
) -> Trajectory:
    """Integrate the amplitude closure from N0 excitations on site 1 up to the horizon."""
    if config.theory is not Theory.SEMICLASSICAL:
        raise DomainError(f"config.theory is {config.theory.value}, expected semiclassical")
    require_valid(rates)
    start = initial if initial is not None else init_semiclassical(config.n0)
    traj = integrate(
        semiclassical_kernel,
        start.to_vector(),
        config.horizon,
        config.step,
        config.sample_interval,
        observe=_observe,
        n0=config.n0,
        params=pack_params(h, rates),
        guard=guard,
    )
    traj.final_efficiency = transfer_efficiency(float(traj.sink[-1]), config.n0)
    return traj
