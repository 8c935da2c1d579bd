import numpy as np
import pytest

from fmo_transfer.errors import CapacityError, DomainError
from fmo_transfer.lindblad_oracle import (
    FockBasis,
    Liouvillian,
    apply_liouvillian,
    build_fock_basis,
    hamiltonian_matrix,
    sector_indices,
    simulate_oracle,
)
from fmo_transfer.meanfield import simulate_meanfield
from fmo_transfer.model import DecoherenceSpec, RunConfig, SiteNetwork, Unit, optimal_rates

ORACLE = RunConfig(n0=1, theory="oracle")


def _psd_rates(rng, nl_scale=0.05):
    # Diagonally dominant rate matrices keep the non-local channels completely positive.
    nl = rng.uniform(0, nl_scale, (7, 7))
    nl = nl + nl.T
    np.fill_diagonal(nl, 0)
    return DecoherenceSpec(rng.uniform(1, 2, 7), rng.uniform(1, 5, 7), nl, nl, rng.uniform(0, 2))


def _random_density(rng, d):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("n0, dim", [(1, 9), (2, 45)])
def test_dimension(n0, dim):
    assert build_fock_basis(n0).dimension == dim


def test_basis_order_and_vacuum():
    b = FockBasis(2)
    assert b.states == sorted(b.states)
    assert b.index((0,) * 8) == 0
    assert len(set(b.states)) == len(b)


def test_basis_domain():
    with pytest.raises(DomainError):
        FockBasis(0)


def test_annihilator_commutation_on_low_sector():
    b = FockBasis(2)
    a = b.annihilators
    comm = a[0] @ a[0].T - a[0].T @ a[0]
    low = [i for i, s in enumerate(b.states) if sum(s) < 2]
    np.testing.assert_allclose(comm[np.ix_(low, low)], np.eye(len(low)), atol=1e-12)


def test_ordered_coupling_doubles_hopping(h):
    b = FockBasis(1)
    ordered = hamiltonian_matrix(h, b, "ordered")
    unordered = hamiltonian_matrix(h, b, "unordered")
    i, j = b.index((1,) + (0,) * 7), b.index((0, 1) + (0,) * 6)
    assert ordered[i, j] == pytest.approx(2 * h.elements[0, 1])
    assert unordered[i, j] == pytest.approx(h.elements[0, 1])
    with pytest.raises(DomainError):
        hamiltonian_matrix(h, b, "both")


def test_stationary_diagonal_state():
    m = np.diag([3.0, 1, 2, 0, 0, 0, 0])
    b = FockBasis(1)
    d = apply_liouvillian(b.fock_state((1,) + (0,) * 7), SiteNetwork(m, Unit.ANGULAR_PS), DecoherenceSpec(), b)
    assert np.abs(d).max() == 0


def test_sink_rate_example():
    b = FockBasis(1)
    h0 = SiteNetwork(np.zeros((7, 7)), Unit.ANGULAR_PS)
    rho = b.fock_state((0, 0, 1, 0, 0, 0, 0, 0))
    d = apply_liouvillian(rho, h0, DecoherenceSpec(sink=0.9), b)
    n8 = np.real(np.diag(d)) @ b.occupations[:, 7]
    assert n8 == pytest.approx(2 * 0.9)


@pytest.mark.parametrize("n0", [1, 2])
def test_trace_free_derivative(h, n0):
    rng = np.random.default_rng(n0)
    b = FockBasis(n0)
    for _ in range(3):
        d = apply_liouvillian(_random_density(rng, b.dimension), h, _psd_rates(rng), b)
        assert abs(np.trace(d)) < 1e-11


@pytest.mark.parametrize("n0", [1, 2])
def test_superoperator_matches_matrix_free(h, n0):
    rng = np.random.default_rng(10 + n0)
    b = FockBasis(n0)
    liou = Liouvillian(h, _psd_rates(rng), b)
    rho = _random_density(rng, b.dimension)
    np.testing.assert_allclose(liou.superoperator() @ rho.ravel(), liou(rho).ravel(), atol=1e-12)


def test_sector_block_invariant(h):
    # Entries outside the equal-excitation blocks never feed those blocks.
    rng = np.random.default_rng(5)
    b = FockBasis(2)
    sup = Liouvillian(h, _psd_rates(rng), b).superoperator()
    keep = sector_indices(b)
    off = np.setdiff1d(np.arange(b.dimension**2), keep)
    assert sup[keep][:, off].nnz == 0


@pytest.mark.parametrize(
    "rates",
    [
        DecoherenceSpec.local(gamma_deph=np.linspace(0, 5, 7), gamma_diss=np.linspace(0, 1, 7)),
        DecoherenceSpec.local(gamma_deph=5.0).replace(nl_deph=np.full((7, 7), 0.3) - np.eye(7) * 0.3),
        DecoherenceSpec.local(gamma_diss=1.0).replace(nl_diss=np.full((7, 7), 0.02) - np.eye(7) * 0.02),
    ],
    ids=["local", "nl_deph", "nl_diss"],
)
def test_closure_exact_without_sink(h, rates):
    """Without the sink the second-moment equations are exact, so with single-counted hopping the two agree."""
    cfg = RunConfig(n0=1, horizon=1.0, step=0.001, sample_interval=0.1)
    o = simulate_oracle(cfg.with_(theory="oracle"), h, rates, coupling="unordered", guard=False).trajectory
    m = simulate_meanfield(cfg, h, rates, guard=False)
    np.testing.assert_allclose(o.populations, m.populations, atol=1e-10)


def test_capacity(h):
    with pytest.raises(CapacityError):
        simulate_oracle(RunConfig(n0=3, theory="oracle"), h, optimal_rates())


def test_wrong_theory(h):
    with pytest.raises(DomainError):
        simulate_oracle(RunConfig(n0=1), h, optimal_rates())


def test_optimal_run_invariants(h):
    res = simulate_oracle(ORACLE, h, optimal_rates())
    aux = res.trajectory.aux
    assert np.abs(aux["trace"] - 1).max() <= 1e-8
    assert aux["min_eigenvalue"].min() >= -1e-7
    assert aux["hermiticity_drift"].max() <= 1e-12
    # One excitation cannot sit on two sites at once.
    assert np.all(aux["n8n3"] == 0)
    assert res.residual == pytest.approx(np.max(res.trajectory.populations[:, 2] * res.trajectory.efficiency))


def test_number_conserved_without_dissipation(h):
    traj = simulate_oracle(ORACLE, h, DecoherenceSpec.local(gamma_deph=3.0, sink=0.9)).trajectory
    np.testing.assert_allclose(traj.populations.sum(axis=1) + traj.efficiency, 1.0, atol=1e-12)
