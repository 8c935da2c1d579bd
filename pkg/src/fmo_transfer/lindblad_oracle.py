"""Exact density-matrix propagation of the full master equation.

The state lives on the 8-mode Fock space truncated to at most ``n0_max``
excitations. No term of the master equation raises the total excitation
number (hopping and the sink transfer conserve it, dissipation lowers it),
so the truncation is exact.

Products that temporarily raise the excitation number, such as
``a_i a_j^dag`` or ``a_8 a_8^dag``, would be clipped by the truncation and are
therefore always built in normal order (``a_j^dag a_i``, ``A^dag A`` with
``A = a_8^dag a_3``), which is the same operator on the full space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConsistencyError, DomainError, NumericalError
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

N_MODES = N_SITES + 1
TRAP, SINK = 2, 7  # 0-based mode indices of site 3 and the reaction centre

#: Largest N0 the oracle accepts unless told otherwise.
DEFAULT_MAX_N0 = 2
TRACE_TOLERANCE = 1e-8
EIGENVALUE_FLOOR = -1e-7


class FockBasis:
    """Occupation-number states of 8 modes with total excitation <= ``n0_max``, in lexicographic order."""

    def __init__(self, n0_max: int):
        if int(n0_max) != n0_max or n0_max < 1:
            raise DomainError(f"n0_max must be a positive integer, got {n0_max}")
        self.n0_max = int(n0_max)
        self.states = [
            s for s in itertools.product(range(self.n0_max + 1), repeat=N_MODES) if sum(s) <= self.n0_max
        ]
        self._index = {s: i for i, s in enumerate(self.states)}

    def __len__(self):
        return len(self.states)

    @property
    def dimension(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self._index[tuple(state)]

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dimension, 8) integer array; number operators are diagonal in this basis."""
        return np.array(self.states, dtype=float)

    @cached_property
    def annihilators(self) -> np.ndarray:
        """(8, dimension, dimension) real matrices of a_k."""
        d = self.dimension
        a = np.zeros((N_MODES, d, d))
        for col, s in enumerate(self.states):
            for k in range(N_MODES):
                if s[k]:
                    lowered = list(s)
                    lowered[k] -= 1
                    a[k, self._index[tuple(lowered)], col] = np.sqrt(s[k])
        return a

    def fock_state(self, occupation) -> np.ndarray:
        rho = np.zeros((self.dimension, self.dimension), dtype=complex)
        i = self.index(occupation)
        rho[i, i] = 1.0
        return rho


def build_fock_basis(n0_max: int) -> FockBasis:
    return FockBasis(n0_max)


def hamiltonian_matrix(h: SiteNetwork, basis: FockBasis, coupling: str = "ordered") -> np.ndarray:
    """Site Hamiltonian on the Fock basis.

    ``coupling="ordered"`` sums g_ij (a_i^dag a_j + a_i a_j^dag) over ordered pairs
    i != j, so every bond counts twice (effective hopping 2 g_ij). ``"unordered"``
    counts each bond once (effective hopping g_ij, the convention of the
    mean-field closure).
    """
    if coupling not in ("ordered", "unordered"):
        raise DomainError(f"coupling must be 'ordered' or 'unordered', got {coupling!r}")
    m = require_angular(h)
    a = basis.annihilators
    occ = basis.occupations
    hm = np.diag(occ[:, :N_SITES] @ np.diag(m))
    scale = 2.0 if coupling == "ordered" else 1.0
    for i in range(N_SITES):
        for j in range(N_SITES):
            if i != j and m[i, j] != 0:
                hm = hm + scale * m[i, j] * (a[i].T @ a[j])
    return hm


class Liouvillian:
    """Matrix-free right-hand side of the master equation for fixed rates."""

    def __init__(self, h: SiteNetwork, rates: DecoherenceSpec, basis: FockBasis, coupling: str = "ordered"):
        self.basis = basis
        a = basis.annihilators
        occ = basis.occupations[:, :N_SITES]
        diss = rates.dissipation_matrix()
        deph = rates.dephasing_matrix()

        # Dissipation: sum_ij G_ij (2 a_i rho a_j^dag - {a_j^dag a_i, rho}).
        k_diss = np.einsum("ij,jab,ibc->ac", diss, a[:N_SITES].transpose(0, 2, 1), a[:N_SITES])
        cols = [j for j in range(N_SITES) if np.any(diss[:, j])]
        self._jump_left = np.array([np.einsum("i,iab->ab", diss[:, j], a[:N_SITES]) for j in cols])
        self._jump_right = np.array([a[j].T for j in cols])

        # Dephasing (local + non-local): number operators are diagonal, so the whole
        # term is an elementwise factor 2 o_a.P.o_b - o_a.P.o_a - o_b.P.o_b.
        q = np.einsum("ai,ij,aj->a", occ, deph, occ)
        factor = 2.0 * occ @ deph @ occ.T - q[:, None] - q[None, :]

        # Sink transfer with jump A = a_8^dag a_3; A^dag A = n_3 (n_8 + 1) is diagonal.
        self._sink = rates.sink
        self._a_sink = a[SINK].T @ a[TRAP]
        s = basis.occupations[:, TRAP] * (basis.occupations[:, SINK] + 1.0)
        factor = factor - rates.sink * (s[:, None] + s[None, :])
        self._factor = factor

        # -i[H, rho] - {K, rho} = -i(H_eff rho - rho H_eff^dag) with H_eff = H - iK.
        self.hamiltonian = hamiltonian_matrix(h, basis, coupling)
        self._h_eff = self.hamiltonian - 1j * k_diss
        self._h_eff_dag = self._h_eff.conj().T

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self._h_eff @ rho - rho @ self._h_eff_dag)
        out += self._factor * rho
        if len(self._jump_left):
            out += 2.0 * np.sum(self._jump_left @ rho @ self._jump_right, axis=0)
        if self._sink:
            out += 2.0 * self._sink * (self._a_sink @ rho @ self._a_sink.T)
        return out

    def superoperator(self) -> sp.csr_matrix:
        """Sparse matrix acting on the row-major flattened density matrix.

        Uses vec(A rho B) = (A kron B^T) vec(rho) for row-major vec.
        """
        d = self.basis.dimension
        eye = sp.identity(d, format="csr")
        s = -1j * (sp.kron(self._h_eff, eye) - sp.kron(eye, self._h_eff_dag.T))
        s = s + sp.diags(self._factor.ravel())
        for left, right in zip(self._jump_left, self._jump_right):
            s = s + 2.0 * sp.kron(left, right.T)
        if self._sink:
            s = s + 2.0 * self._sink * sp.kron(self._a_sink, self._a_sink)
        s = sp.csr_matrix(s, dtype=complex)
        s.eliminate_zeros()
        return s


@numba.njit(cache=True)
def _csr_kernel(t, y, p, out):
    indptr, indices, data = p
    for r in range(out.size):
        acc = 0j
        for k in range(indptr[r], indptr[r + 1]):
            acc += data[k] * y[indices[k]]
        out[r] = acc


def apply_liouvillian(
    rho: np.ndarray, h: SiteNetwork, rates: DecoherenceSpec, basis: FockBasis, coupling: str = "ordered"
) -> np.ndarray:
    """d rho / dt for a single density matrix; build a :class:`Liouvillian` to reuse it."""
    return Liouvillian(h, rates, basis, coupling)(np.asarray(rho, dtype=complex))


@dataclass
class OracleResult:
    trajectory: Trajectory
    residual: float  # max_t |<n8 n3> - <n8><n3>|
    residual_time: float

    @property
    def final_efficiency(self) -> float:
        return self.trajectory.final_efficiency


def sector_indices(basis: FockBasis) -> np.ndarray:
    """Flat (row-major) positions of rho whose bra and ket have equal total excitation.

    Every term of the master equation conserves N_bra - N_ket, so starting from
    a Fock state only these entries are ever nonzero.
    """
    total = basis.occupations.sum(axis=1)
    return np.flatnonzero((total[:, None] == total[None, :]).ravel())


def _observer(basis: FockBasis, keep: np.ndarray):
    occ = basis.occupations
    d = basis.dimension
    n8n3 = occ[:, SINK] * occ[:, TRAP]

    def observe(states):
        full = np.zeros((states.shape[0], d * d), dtype=complex)
        full[:, keep] = states
        rho = full.reshape(-1, d, d)
        diag = np.real(np.diagonal(rho, axis1=1, axis2=2))
        pops = diag @ occ
        correlated = diag @ n8n3
        herm = 0.5 * (rho + np.conj(np.transpose(rho, (0, 2, 1))))
        aux = {
            "trace": np.real(np.trace(rho, axis1=1, axis2=2)),
            "min_eigenvalue": np.linalg.eigvalsh(herm)[:, 0],
            "hermiticity_drift": np.max(np.abs(rho - np.conj(np.transpose(rho, (0, 2, 1)))), axis=(1, 2)),
            "n8n3": correlated,
            "factorization_residual": np.abs(correlated - pops[:, SINK] * pops[:, TRAP]),
        }
        return pops[:, :N_SITES], pops[:, SINK], aux

    return observe


def simulate_oracle(
    config: RunConfig,
    h: SiteNetwork,
    rates: DecoherenceSpec,
    *,
    coupling: str = "ordered",
    max_n0: int = DEFAULT_MAX_N0,
    guard: bool = True,
) -> OracleResult:
    """Propagate the Fock state with N0 excitations on site 1 and report the factorization residual."""
    if config.theory is not Theory.ORACLE:
        raise DomainError(f"config.theory is {config.theory.value}, expected oracle")
    if config.n0 > max_n0:
        raise CapacityError(f"oracle is capped at n0 <= {max_n0}, got {config.n0}")
    require_valid(rates)
    basis = FockBasis(config.n0)
    keep = sector_indices(basis)
    sup = Liouvillian(h, rates, basis, coupling).superoperator()[keep][:, keep].tocsr()
    rho0 = basis.fock_state((config.n0,) + (0,) * (N_MODES - 1))

    traj = integrate(
        _csr_kernel,
        rho0.ravel()[keep],
        config.horizon,
        config.step,
        config.sample_interval,
        observe=_observer(basis, keep),
        n0=config.n0,
        params=(sup.indptr.astype(np.int64), sup.indices.astype(np.int64), sup.data),
        guard=guard,
    )
    aux = traj.aux
    bad = np.flatnonzero(np.abs(aux["trace"] - 1.0) > TRACE_TOLERANCE)
    if bad.size:
        raise ConsistencyError(f"trace drifted to {aux['trace'][bad[0]]:.12g}", time=float(traj.times[bad[0]]))
    bad = np.flatnonzero(aux["min_eigenvalue"] < EIGENVALUE_FLOOR)
    if bad.size:
        raise NumericalError(
            f"density matrix lost positivity (eigenvalue {aux['min_eigenvalue'][bad[0]]:.3g})",
            time=float(traj.times[bad[0]]),
        )
    traj.final_efficiency = transfer_efficiency(float(traj.sink[-1]), config.n0)
    worst = int(np.argmax(aux["factorization_residual"]))
    return OracleResult(traj, float(aux["factorization_residual"][worst]), float(traj.times[worst]))
