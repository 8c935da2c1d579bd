"""FMO site Hamiltonian, decoherence rates and the transfer-efficiency functional.

Site indices are 1-based in every public accessor (sites 1..7, the reaction
centre is site 8); the underlying numpy arrays are of course 0-based.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnitError

N_SITES = 7
SINK_SITE = 8
#: Site coupled irreversibly to the reaction centre.
TRAP_SITE = 3

#: 1 ps^-1 = 5.3 cm^-1 with hbar = 1 (rounded value, kept as-is on purpose).
WAVENUMBER_PER_INVERSE_PS = 5.3

#: Offset removed from every site energy; informational, does not enter the dynamics.
ZERO_ENERGY_SHIFT_CM = 12230.0

# Site energies (diagonal) and couplings in cm^-1.
_FMO_CM = (
    (215.0, -104.1, 5.1, -4.3, 4.7, -15.1, -7.8),
    (-104.1, 220.0, 32.6, 7.1, 5.4, 8.3, 0.8),
    (5.1, 32.6, 0.0, -46.8, 1.0, -8.1, 5.1),
    (-4.3, 7.1, -46.8, 125.0, -70.7, -14.7, -61.5),
    (4.7, 5.4, 1.0, -70.7, 450.0, 89.7, -2.5),
    (-15.1, 8.3, -8.1, -14.7, 89.7, 330.0, 32.7),
    (-7.8, 0.8, 5.1, -61.5, -2.5, 32.7, 280.0),
)

#: Local dissipation pinned to a nanosecond exciton lifetime.
NANOSECOND_DISSIPATION = 0.0005


class Unit(str, enum.Enum):
    WAVENUMBER = "wavenumber"
    ANGULAR_PS = "angular_ps"


class Theory(str, enum.Enum):
    SEMICLASSICAL = "semiclassical"
    MEANFIELD = "meanfield"
    ORACLE = "oracle"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SiteNetwork:
    """Real symmetric matrix of site energies (diagonal) and hopping rates."""

    elements: np.ndarray
    unit: Unit = Unit.WAVENUMBER

    def __post_init__(self):
        m = _frozen(self.elements)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"site matrix must be square, got shape {m.shape}")
        if not np.array_equal(m, m.T):
            raise DomainError("site matrix must be symmetric")
        object.__setattr__(self, "elements", m)
        object.__setattr__(self, "unit", Unit(self.unit))

    @property
    def n_sites(self) -> int:
        return self.elements.shape[0]

    @property
    def energies(self) -> np.ndarray:
        return np.diag(self.elements).copy()

    @property
    def couplings(self) -> np.ndarray:
        """Off-diagonal part only (zero diagonal)."""
        g = self.elements.copy()
        np.fill_diagonal(g, 0.0)
        return g

    def element(self, i: int, j: int) -> float:
        """Matrix element with 1-based site indices."""
        return float(self.elements[i - 1, j - 1])


def build_fmo_hamiltonian() -> SiteNetwork:
    """The 7-site FMO matrix in cm^-1, zero of energy shifted by 12230 cm^-1."""
    return SiteNetwork(np.array(_FMO_CM), Unit.WAVENUMBER)


def to_angular(network: SiteNetwork) -> SiteNetwork:
    """Rescale a wavenumber network to ps^-1 by dividing by 5.3.

    Not idempotent: passing an ``angular_ps`` network raises :class:`UnitError`.
    """
    if network.unit is not Unit.WAVENUMBER:
        raise UnitError(f"expected a wavenumber network, got {network.unit.value}")
    return SiteNetwork(network.elements / WAVENUMBER_PER_INVERSE_PS, Unit.ANGULAR_PS)


def fmo_angular() -> SiteNetwork:
    return to_angular(build_fmo_hamiltonian())


def require_angular(network: SiteNetwork) -> np.ndarray:
    if network.unit is not Unit.ANGULAR_PS:
        raise UnitError("dynamics need the network in angular_ps units; call to_angular() first")
    return network.elements


@dataclass(frozen=True)
class DecoherenceSpec:
    """Lindblad rates in ps^-1.

    ``gamma_diss``/``gamma_deph`` are the local rates per site, ``nl_diss``/``nl_deph``
    the cross-site matrices (zero diagonal) and ``sink`` the trapping rate from
    site 3 into the reaction centre.
    """

    gamma_diss: np.ndarray = field(default_factory=lambda: np.zeros(N_SITES))
    gamma_deph: np.ndarray = field(default_factory=lambda: np.zeros(N_SITES))
    nl_diss: np.ndarray = field(default_factory=lambda: np.zeros((N_SITES, N_SITES)))
    nl_deph: np.ndarray = field(default_factory=lambda: np.zeros((N_SITES, N_SITES)))
    sink: float = 0.0

    def __post_init__(self):
        for name in ("gamma_diss", "gamma_deph"):
            a = _frozen(self.__dict__[name])
            if a.shape != (N_SITES,):
                raise DomainError(f"{name} must have {N_SITES} entries, got shape {a.shape}")
            object.__setattr__(self, name, a)
        for name in ("nl_diss", "nl_deph"):
            a = _frozen(self.__dict__[name])
            if a.shape != (N_SITES, N_SITES):
                raise DomainError(f"{name} must be {N_SITES}x{N_SITES}, got shape {a.shape}")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "sink", float(self.sink))

    @classmethod
    def local(cls, gamma_deph=None, gamma_diss=None, sink=0.0) -> DecoherenceSpec:
        """Local-only rates; scalars broadcast to all seven sites."""
        deph = np.broadcast_to(np.asarray(0.0 if gamma_deph is None else gamma_deph, float), (N_SITES,))
        diss = np.broadcast_to(np.asarray(0.0 if gamma_diss is None else gamma_diss, float), (N_SITES,))
        return cls(gamma_diss=diss, gamma_deph=deph, sink=sink)

    def replace(self, **changes) -> DecoherenceSpec:
        fields = dict(
            gamma_diss=self.gamma_diss,
            gamma_deph=self.gamma_deph,
            nl_diss=self.nl_diss,
            nl_deph=self.nl_deph,
            sink=self.sink,
        )
        fields.update(changes)
        return DecoherenceSpec(**fields)

    def dissipation_matrix(self) -> np.ndarray:
        """Full matrix with local rates on the diagonal and non-local rates off it."""
        m = np.array(self.nl_diss)
        np.fill_diagonal(m, self.gamma_diss)
        return m

    def dephasing_matrix(self) -> np.ndarray:
        m = np.array(self.nl_deph)
        np.fill_diagonal(m, self.gamma_deph)
        return m


def validate_rates(spec: DecoherenceSpec) -> list[str]:
    """Return one message per violated invariant; an empty list means the rates are valid.

    Checks entrywise non-negativity, symmetry and zero diagonal of the non-local
    matrices. Positivity of the non-local rate matrix as a whole is not checked.
    """
    problems = []
    for name in ("gamma_diss", "gamma_deph"):
        for j, v in enumerate(getattr(spec, name), start=1):
            if not np.isfinite(v) or v < 0:
                problems.append(f"{name}[{j}] = {v} must be finite and >= 0")
    for name in ("nl_diss", "nl_deph"):
        m = getattr(spec, name)
        for i in range(N_SITES):
            if m[i, i] != 0:
                problems.append(f"{name}[{i + 1}][{i + 1}] = {m[i, i]} must be 0 (diagonal)")
            for j in range(N_SITES):
                v = m[i, j]
                if not np.isfinite(v) or v < 0:
                    problems.append(f"{name}[{i + 1}][{j + 1}] = {v} must be finite and >= 0")
                if j > i and m[i, j] != m[j, i]:
                    problems.append(
                        f"{name}[{i + 1}][{j + 1}] = {m[i, j]} != {name}[{j + 1}][{i + 1}] = {m[j, i]} (asymmetric)"
                    )
    if not np.isfinite(spec.sink) or spec.sink < 0:
        problems.append(f"sink = {spec.sink} must be finite and >= 0")
    return problems


def require_valid(spec: DecoherenceSpec) -> None:
    problems = validate_rates(spec)
    if problems:
        raise DomainError("invalid decoherence rates: " + "; ".join(problems))


def transfer_efficiency(sink_population: float, n0: int) -> float:
    """Reaction-centre population rescaled by the initial excitation number.

    Deliberately not clamped to [0, 1].
    """
    if n0 <= 0:
        raise DomainError(f"n0 must be a positive integer, got {n0}")
    if sink_population < 0:
        raise DomainError(f"sink population must be >= 0, got {sink_population}")
    return sink_population / n0


#: Default RK4 step (ps) per theory. The amplitude closure hops at 2 g and needs a
#: finer step for the step-halving check to hold at 1e-6 per excitation. The
#: oracle's near-pure states need a finer step still for RK4 to keep zero
#: eigenvalues above -1e-7.
DEFAULT_STEPS = {
    Theory.SEMICLASSICAL: 0.0005,
    Theory.MEANFIELD: 0.001,
    Theory.ORACLE: 0.0001,
}


@dataclass(frozen=True)
class RunConfig:
    """Initial excitation count, horizon T (ps), RK4 step (ps) and closure.

    ``step=None`` picks the per-theory default from :data:`DEFAULT_STEPS`.
    """

    n0: int = 100
    horizon: float = 5.0
    step: float | None = None
    theory: Theory = Theory.MEANFIELD
    sample_interval: float = 0.01
    explicit_step: bool = field(default=True, init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise DomainError(f"n0 must be a positive integer, got {self.n0}")
        object.__setattr__(self, "n0", int(self.n0))
        object.__setattr__(self, "theory", Theory(self.theory))
        if self.step is None:
            object.__setattr__(self, "step", DEFAULT_STEPS[self.theory])
            object.__setattr__(self, "explicit_step", False)
        if not self.horizon > 0:
            raise DomainError(f"horizon must be > 0, got {self.horizon}")
        if not self.step > 0:
            raise DomainError(f"step must be > 0, got {self.step}")
        if self.step > self.horizon:
            raise DomainError(f"step {self.step} exceeds horizon {self.horizon}")
        if not self.step <= self.sample_interval <= self.horizon:
            raise DomainError(
                f"sample interval {self.sample_interval} must lie between step {self.step} and horizon {self.horizon}"
            )

    def with_(self, **changes) -> RunConfig:
        """Copy with changes; a defaulted step follows a change of theory."""
        d = dict(n0=self.n0, horizon=self.horizon, step=self.step if self.explicit_step else None,
                 theory=self.theory, sample_interval=self.sample_interval)
        d.update(changes)
        return RunConfig(**d)


def optimal_rates() -> DecoherenceSpec:
    """Dephasing optimum quoted for N0 = 100 with nanosecond dissipation and sink 0.32."""
    return DecoherenceSpec.local(
        gamma_deph=(0.74, 24.0, 0.0, 5.2, 50.6, 0.0, 15.0),
        gamma_diss=NANOSECOND_DISSIPATION,
        sink=0.32,
    )


def nonlocal_rates() -> DecoherenceSpec:
    """The optimum above plus the non-local dephasing pairs (1,7) and (2,5)."""
    nl = np.zeros((N_SITES, N_SITES))
    nl[0, 6] = nl[6, 0] = 0.74
    nl[1, 4] = nl[4, 1] = 24.0
    return optimal_rates().replace(nl_deph=nl)


RATE_FAMILIES = ("gamma_diss", "gamma_deph", "nl_diss", "nl_deph")


def parse_rate_key(key: str):
    """Split ``sink``, ``gamma_deph.5``, ``gamma_diss.*`` or ``nl_deph.1.7`` into (family, indices).

    Indices are 1-based; ``*`` stands for all sites and becomes ``None``.
    """
    if key == "sink":
        return "sink", ()
    family, _, rest = key.partition(".")
    if family not in RATE_FAMILIES or not rest:
        raise DomainError(f"unknown rate key {key!r}")
    parts = rest.split(".")
    want = 1 if family.startswith("gamma") else 2
    if len(parts) != want:
        raise DomainError(f"{family} takes {want} site index(es), got {key!r}")
    indices = []
    for part in parts:
        if part == "*" and want == 1:
            indices.append(None)
            continue
        try:
            i = int(part)
        except ValueError:
            raise DomainError(f"bad site index {part!r} in {key!r}") from None
        if not 1 <= i <= N_SITES:
            raise DomainError(f"site index {i} out of range 1..{N_SITES} in {key!r}")
        indices.append(i)
    if want == 2 and indices[0] == indices[1]:
        raise DomainError(f"non-local rate {key!r} needs two different sites")
    return family, tuple(indices)


def with_rate(spec: DecoherenceSpec, key: str, value: float, *, symmetric: bool = False) -> DecoherenceSpec:
    """Return a copy of ``spec`` with one rate entry (or a ``*`` family) set to ``value``.

    For non-local keys only the named ordered entry is set unless ``symmetric``.
    """
    family, idx = parse_rate_key(key)
    if family == "sink":
        return spec.replace(sink=value)
    a = np.array(getattr(spec, family))
    if len(idx) == 1:
        if idx[0] is None:
            a[:] = value
        else:
            a[idx[0] - 1] = value
    else:
        i, j = idx[0] - 1, idx[1] - 1
        a[i, j] = value
        if symmetric:
            a[j, i] = value
    return spec.replace(**{family: a})
