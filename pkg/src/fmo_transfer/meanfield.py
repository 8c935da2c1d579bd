"""Quantum mean-field closure for the second moments n_mn = <a_m^dag a_n>.

The only approximation is <n8 n3> ~ <n8><n3>. Per pair (m, n):

    d n_mn/dt = i(w_m - w_n) n_mn + i sum_j g_jm n_jn - i sum_j g_jn n_mj
                - (Gamma_m + Gamma_n + gamma_m + gamma_n - 2 gamma_mn) n_mn
                - sum_j Gamma_mj n_jn - sum_j Gamma_nj n_mj
                - a Gamma_8 (n88 + 1) n_mn,      a = [m = 3] + [n = 3]
    d n_mm/dt = -i sum_j g_mj n_mj + i sum_j g_mj n_jm - 2 Gamma_m n_mm
                - sum_j Gamma_mj (n_jm + n_mj) - a Gamma_8 (n88 + 1) n_mm
    d n88/dt  = 2 Gamma_8 n_33 (n88 + 1)

Hopping enters with g (no factor 2). The a = 2 drain on n_33 balances the
gain of n88, so total excitation number is conserved when dissipation is off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConsistencyError, DomainError
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

_T = 2
#: Hermiticity drift that aborts a run, relative to n0.
HERMITICITY_LIMIT = 1e-6


@dataclass(frozen=True)
class CorrelationState:
    n: np.ndarray  # 7x7 complex, Hermitian
    sink: float  # n88

    def to_vector(self) -> np.ndarray:
        """Real packing ``[Re n (row-major), Im n, n88]`` used by the integrator."""
        c = np.asarray(self.n, dtype=complex).ravel()
        return np.concatenate([c.real, c.imag, [self.sink]])

    @classmethod
    def from_vector(cls, y) -> CorrelationState:
        return cls(n=_unpack(np.asarray(y)[None, :])[0], sink=float(y[-1]))

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.n)).copy()


def _unpack(states):
    nn = N_SITES * N_SITES
    return (states[:, :nn] + 1j * states[:, nn : 2 * nn]).reshape(-1, N_SITES, N_SITES)


def init_meanfield(n0: int) -> CorrelationState:
    if int(n0) != n0 or n0 < 1:
        raise DomainError(f"n0 must be a positive integer, got {n0}")
    n = np.zeros((N_SITES, N_SITES), dtype=complex)
    n[0, 0] = n0
    return CorrelationState(n=n, sink=0.0)


def pack_params(h: SiteNetwork, rates: DecoherenceSpec) -> np.ndarray:
    """Real parameter vector for the compiled kernel.

    Layout: couplings g (zero diagonal); real and imaginary parts of the
    elementwise coefficient ``i(w_m - w_n) - decay_mn``; the non-local
    dissipation matrix; the sink rate; a flag for non-local dissipation.
    The non-local dissipation sums are ``Gnl @ n + n @ Gnl.T``.
    """
    m = require_angular(h)
    w = np.diag(m)
    g = m - np.diag(w)
    loss = rates.gamma_diss + rates.gamma_deph
    decay = loss[:, None] + loss[None, :] - 2.0 * rates.nl_deph
    np.fill_diagonal(decay, 2.0 * rates.gamma_diss)
    coef = 1j * (w[:, None] - w[None, :]) - decay
    flag = 1.0 if np.any(rates.nl_diss) else 0.0
    return np.concatenate(
        [g.ravel(), coef.real.ravel(), coef.imag.ravel(), rates.nl_diss.ravel(), [rates.sink, flag]]
    )


@numba.njit(cache=True, fastmath=True)
def meanfield_kernel(t, y, p, out):
    # y = [Re n, Im n, n88]; real arithmetic throughout.
    n = 7
    nn = n * n
    sink = p[4 * nn]
    nonlocal_diss = p[4 * nn + 1] != 0.0
    n88 = y[2 * nn]
    drain = sink * (n88 + 1.0)
    for m in range(n):
        for q in range(n):
            hop_re = 0.0
            hop_im = 0.0
            for j in range(n):
                gm = p[j * n + m]
                gq = p[j * n + q]
                hop_re += gm * y[j * n + q] - gq * y[m * n + j]
                hop_im += gm * y[nn + j * n + q] - gq * y[nn + m * n + j]
            x_re = y[m * n + q]
            x_im = y[nn + m * n + q]
            c_re = p[nn + m * n + q]
            c_im = p[2 * nn + m * n + q]
            d_re = -hop_im + c_re * x_re - c_im * x_im
            d_im = hop_re + c_re * x_im + c_im * x_re
            if nonlocal_diss:
                for j in range(n):
                    a = p[3 * nn + m * n + j]
                    b = p[3 * nn + q * n + j]
                    d_re -= a * y[j * n + q] + b * y[m * n + j]
                    d_im -= a * y[nn + j * n + q] + b * y[nn + m * n + j]
            a = (1.0 if m == _T else 0.0) + (1.0 if q == _T else 0.0)
            out[m * n + q] = d_re - a * drain * x_re
            out[nn + m * n + q] = d_im - a * drain * x_im
    out[2 * nn] = 2.0 * sink * y[_T * n + _T] * (n88 + 1.0)


def rhs_meanfield(state: CorrelationState, h: SiteNetwork, rates: DecoherenceSpec) -> CorrelationState:
    y = state.to_vector()
    d = np.empty_like(y)
    meanfield_kernel(0.0, y, pack_params(h, rates), d)
    return CorrelationState.from_vector(d)


def _observe(states):
    c = _unpack(states)
    pops = np.real(np.diagonal(c, axis1=1, axis2=2)).copy()
    drift = np.max(np.abs(c - np.conj(np.transpose(c, (0, 2, 1)))), axis=(1, 2))
    return pops, states[:, -1].copy(), {"hermiticity_drift": drift, "correlations": c}


def simulate_meanfield(
    config: RunConfig,
    h: SiteNetwork,
    rates: DecoherenceSpec,
    *,
    initial: CorrelationState | None = None,
    guard: bool = True,
) -> Trajectory:
    """Integrate the correlation-matrix closure; raises on Hermiticity drift above 1e-6 * N0."""
    if config.theory is not Theory.MEANFIELD:
        raise DomainError(f"config.theory is {config.theory.value}, expected meanfield")
    require_valid(rates)
    start = initial if initial is not None else init_meanfield(config.n0)
    traj = integrate(
        meanfield_kernel,
        start.to_vector(),
        config.horizon,
        config.step,
        config.sample_interval,
        observe=_observe,
        n0=config.n0,
        params=pack_params(h, rates),
        guard=guard,
    )
    drift = traj.aux["hermiticity_drift"]
    worst = int(np.argmax(drift))
    if drift[worst] > HERMITICITY_LIMIT * config.n0:
        raise ConsistencyError(f"correlation matrix lost Hermiticity ({drift[worst]:.3g})", time=float(traj.times[worst]))
    traj.final_efficiency = transfer_efficiency(float(traj.sink[-1]), config.n0)
    return traj
