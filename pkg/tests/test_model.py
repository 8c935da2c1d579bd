import numpy as np
import pytest

from fmo_transfer.errors import DomainError, UnitError
from fmo_transfer.model import (
    DEFAULT_STEPS,
    N_SITES,
    DecoherenceSpec,
    RunConfig,
    SiteNetwork,
    Theory,
    Unit,
    build_fmo_hamiltonian,
    nonlocal_rates,
    optimal_rates,
    parse_rate_key,
    require_valid,
    to_angular,
    transfer_efficiency,
    validate_rates,
    with_rate,
)


class TestHamiltonian:
    def test_known_entries(self):
        net = build_fmo_hamiltonian()
        assert net.unit is Unit.WAVENUMBER
        assert net.n_sites == 7
        assert net.element(1, 2) == -104.1
        assert net.element(3, 3) == 0.0
        assert net.element(2, 1) == net.element(1, 2)

    def test_diagonal(self):
        np.testing.assert_array_equal(
            build_fmo_hamiltonian().energies, [215, 220.0, 0.0, 125.0, 450.0, 330.0, 280.0]
        )

    def test_symmetric_exactly(self):
        m = build_fmo_hamiltonian().elements
        assert np.array_equal(m, m.T)

    def test_read_only(self):
        with pytest.raises(ValueError):
            build_fmo_hamiltonian().elements[0, 0] = 1.0

    def test_asymmetric_rejected(self):
        m = np.zeros((7, 7))
        m[0, 1] = 1.0
        with pytest.raises(DomainError):
            SiteNetwork(m)


class TestToAngular:
    def test_values(self):
        a = to_angular(build_fmo_hamiltonian())
        assert a.unit is Unit.ANGULAR_PS
        assert a.element(1, 1) == pytest.approx(40.566, abs=1e-3)
        assert a.element(3, 3) == 0.0
        assert a.element(1, 2) == pytest.approx(-19.642, abs=1e-3)

    def test_preserves_symmetry_and_zero_pattern(self):
        w = build_fmo_hamiltonian().elements
        a = to_angular(build_fmo_hamiltonian()).elements
        assert np.array_equal(a, a.T)
        assert np.array_equal(a == 0, w == 0)

    def test_not_idempotent(self):
        with pytest.raises(UnitError):
            to_angular(to_angular(build_fmo_hamiltonian()))


class TestValidateRates:
    def test_zero_with_sink_ok(self):
        assert validate_rates(DecoherenceSpec(sink=0.32)) == []

    def test_symmetric_nonlocal_ok(self):
        assert validate_rates(nonlocal_rates()) == []
        assert validate_rates(optimal_rates()) == []

    def test_asymmetry_named(self):
        nl = np.zeros((7, 7))
        nl[0, 1] = 1.0
        problems = validate_rates(DecoherenceSpec(nl_diss=nl))
        assert len(problems) == 1
        assert "nl_diss[1][2]" in problems[0] and "asymmetric" in problems[0]

    def test_every_violation_listed(self):
        spec = DecoherenceSpec(
            gamma_deph=[-1, 0, 0, 0, 0, -2, 0], nl_deph=np.eye(7) * 0.5, sink=-0.1
        )
        problems = validate_rates(spec)
        assert sum("gamma_deph" in p for p in problems) == 2
        assert sum("diagonal" in p for p in problems) == 7
        assert any(p.startswith("sink") for p in problems)
        with pytest.raises(DomainError):
            require_valid(spec)

    def test_non_finite(self):
        assert validate_rates(DecoherenceSpec(sink=float("nan")))


class TestTransferEfficiency:
    @pytest.mark.parametrize(
        "sink, n0, expected", [(62.5, 100, 0.625), (0.0, 100, 0.0), (91.77, 100, 0.9177)]
    )
    def test_examples(self, sink, n0, expected):
        assert transfer_efficiency(sink, n0) == pytest.approx(expected, abs=1e-15)

    def test_not_clamped(self):
        assert transfer_efficiency(120.0, 100) == pytest.approx(1.2)

    @pytest.mark.parametrize("sink, n0", [(1.0, 0), (-1.0, 10)])
    def test_domain(self, sink, n0):
        with pytest.raises(DomainError):
            transfer_efficiency(sink, n0)


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.n0, cfg.horizon, cfg.theory) == (100, 5.0, Theory.MEANFIELD)
        assert cfg.step == 0.001

    def test_defaulted_step_follows_theory(self):
        cfg = RunConfig().with_(theory="semiclassical")
        assert cfg.step == DEFAULT_STEPS[Theory.SEMICLASSICAL]
        assert RunConfig(step=0.002).with_(theory="oracle").step == 0.002

    @pytest.mark.parametrize(
        "kwargs", [dict(n0=0), dict(n0=1.5), dict(horizon=0), dict(step=-1e-3), dict(step=6.0), dict(sample_interval=1e-5)]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            RunConfig(**kwargs)


class TestRateKeys:
    def test_parse(self):
        assert parse_rate_key("sink") == ("sink", ())
        assert parse_rate_key("gamma_deph.5") == ("gamma_deph", (5,))
        assert parse_rate_key("gamma_diss.*") == ("gamma_diss", (None,))
        assert parse_rate_key("nl_deph.1.7") == ("nl_deph", (1, 7))

    @pytest.mark.parametrize(
        "key", ["gamma_deph.9", "gamma_deph.0", "nl_deph.1", "nl_deph.2.2", "nl_diss.*.1", "foo.1", "gamma_deph"]
    )
    def test_bad(self, key):
        with pytest.raises(DomainError):
            parse_rate_key(key)

    def test_with_rate(self):
        spec = with_rate(DecoherenceSpec(), "gamma_diss.*", 0.0005)
        assert np.all(spec.gamma_diss == 0.0005)
        spec = with_rate(spec, "nl_deph.2.5", 24.0)
        assert spec.nl_deph[1, 4] == 24.0 and spec.nl_deph[4, 1] == 0.0
        spec = with_rate(spec, "nl_deph.2.5", 24.0, symmetric=True)
        assert spec.nl_deph[4, 1] == 24.0

    def test_optimal_rates(self):
        r = optimal_rates()
        np.testing.assert_array_equal(r.gamma_deph, [0.74, 24, 0, 5.2, 50.6, 0, 15])
        assert np.all(r.gamma_diss == 0.0005) and r.sink == 0.32
        assert nonlocal_rates().nl_deph[6, 0] == 0.74

    def test_local_broadcast(self):
        r = DecoherenceSpec.local(0.1, 0.2, 1.0)
        assert r.gamma_deph.shape == (N_SITES,)
        np.testing.assert_array_equal(np.diag(r.dissipation_matrix()), np.full(7, 0.2))
