"""Network data model: buses, Pi-model branches, units, shunts, bounds and
per-unit scaling."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

from triflow.phasorcalc import pinv

PHASE_NAMES = ("a", "b", "c")

PAD_LIMIT_MIN = -math.pi / 6
PAD_LIMIT_MAX = math.pi / 3
# default bus-pair angle-difference bound sits just inside +-pi/2
VAD_EPS = 1e-6
VAD_DEFAULT = math.pi / 2 - VAD_EPS
# relative slack when checking reference magnitudes against [vmin, vmax]
_REF_RTOL = 1e-12


class UnitSystem(str, Enum):
    SI = "SI"
    PER_UNIT = "PER_UNIT"


@dataclass(frozen=True)
class PhaseSet:
    """Ordered, non-empty subset of the phases a, b, c."""

    phases: tuple[str, ...]

    def __post_init__(self):
        ph = tuple(self.phases)
        object.__setattr__(self, "phases", ph)
        if not ph:
            raise ValueError("phase set must not be empty")
        if any(p not in PHASE_NAMES for p in ph):
            raise ValueError(f"unknown phase in {ph!r}; expected a subset of 'abc'")
        if len(set(ph)) != len(ph):
            raise ValueError(f"duplicate phase in {ph!r}")
        if list(ph) != sorted(ph):
            raise ValueError(f"phases must be ordered a<b<c, got {ph!r}")

    @classmethod
    def parse(cls, text: str | PhaseSet | Iterable[str]) -> PhaseSet:
        """Build from ``"abc"``, ``"ca"`` (reordered), ``"a,b"`` or an iterable."""
        if isinstance(text, PhaseSet):
            return text
        if isinstance(text, str):
            items = [c for c in text.lower() if c not in ", "]
        else:
            items = [str(c).lower() for c in text]
        if len(set(items)) != len(items):
            raise ValueError(f"duplicate phase in {text!r}")
        return cls(tuple(sorted(items)))

    def __len__(self) -> int:
        return len(self.phases)

    def __iter__(self):
        return iter(self.phases)

    def __contains__(self, p) -> bool:
        return p in self.phases

    def __str__(self) -> str:
        return "".join(self.phases)

    def index(self, p: str) -> int:
        return self.phases.index(p)

    def issubset(self, other: PhaseSet) -> bool:
        return set(self.phases) <= set(other.phases)

    def positions_in(self, other: PhaseSet) -> list[int]:
        """Indices of these phases inside ``other`` (which must contain them)."""
        return [other.phases.index(p) for p in self.phases]


ABC = PhaseSet(PHASE_NAMES)


def _vec(value, n: int, default: float | None = None) -> np.ndarray:
    if value is None:
        value = default
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    arr.setflags(write=False)
    return arr


def _cvec(value, n: int) -> np.ndarray | None:
    if value is None:
        return None
    arr = np.array(value, dtype=complex)
    if arr.ndim == 0:
        arr = np.full(n, complex(arr))
    arr.setflags(write=False)
    return arr


def _cmat(value, n: int) -> np.ndarray:
    if value is None:
        arr = np.zeros((n, n), dtype=complex)
    else:
        arr = np.array(value, dtype=complex)
        if arr.ndim == 0:
            arr = complex(arr) * np.eye(n, dtype=complex)
    arr.setflags(write=False)
    return arr


def _fields_equal(a, b) -> bool:
    if type(a) is not type(b):
        return NotImplemented
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            if x is None or y is None:
                return False
            if np.shape(x) != np.shape(y) or not np.array_equal(x, y, equal_nan=True):
                return False
        elif x != y:
            return False
    return True


@dataclass(frozen=True, eq=False)
class Bus:
    """A bus; ``vref`` is set exactly for reference buses.

    ``pad_min``/``pad_max`` bound the inter-phase angle spreads (a-b, b-c,
    c-a) relative to 120 degrees and always have three entries.
    """

    id: str
    phases: PhaseSet
    vbase: float = 1.0
    vmin: np.ndarray | None = None
    vmax: np.ndarray | None = None
    pad_min: np.ndarray | None = None
    pad_max: np.ndarray | None = None
    vref: np.ndarray | None = None

    def __post_init__(self):
        ph = PhaseSet.parse(self.phases)
        n = len(ph)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "vbase", float(self.vbase))
        object.__setattr__(self, "vmin", _vec(self.vmin, n, 0.0))
        object.__setattr__(self, "vmax", _vec(self.vmax, n, math.inf))
        object.__setattr__(self, "pad_min", _vec(self.pad_min, 3, PAD_LIMIT_MIN))
        object.__setattr__(self, "pad_max", _vec(self.pad_max, 3, PAD_LIMIT_MAX))
        object.__setattr__(self, "vref", _cvec(self.vref, n))

    @property
    def is_reference(self) -> bool:
        return self.vref is not None

    __eq__ = _fields_equal


@dataclass(frozen=True, eq=False)
class Branch:
    """Pi-model branch. Matrices are sized to the branch's own phase set."""

    id: str
    from_bus: str
    to_bus: str
    phases: PhaseSet
    z_series: np.ndarray
    y_sh_from: np.ndarray | None = None
    y_sh_to: np.ndarray | None = None
    i_rated: np.ndarray | None = None
    s_rated: np.ndarray | None = None
    vad_min: np.ndarray | None = None
    vad_max: np.ndarray | None = None

    def __post_init__(self):
        ph = PhaseSet.parse(self.phases)
        n = len(ph)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "from_bus", str(self.from_bus))
        object.__setattr__(self, "to_bus", str(self.to_bus))
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "z_series", _cmat(self.z_series, n))
        object.__setattr__(self, "y_sh_from", _cmat(self.y_sh_from, n))
        object.__setattr__(self, "y_sh_to", _cmat(self.y_sh_to, n))
        object.__setattr__(self, "i_rated", _vec(self.i_rated, n, math.inf))
        object.__setattr__(self, "s_rated", _vec(self.s_rated, n, math.inf))
        object.__setattr__(self, "vad_min", _vec(self.vad_min, n, -VAD_DEFAULT))
        object.__setattr__(self, "vad_max", _vec(self.vad_max, n, VAD_DEFAULT))

    @property
    def is_zero_impedance(self) -> bool:
        return not np.any(self.z_series)

    def y_shunt(self, side_bus: str) -> np.ndarray:
        """Shunt admittance at the end attached to ``side_bus``."""
        return self.y_sh_from if side_bus == self.from_bus else self.y_sh_to

    def other_end(self, bus_id: str) -> str:
        return self.to_bus if bus_id == self.from_bus else self.from_bus

    __eq__ = _fields_equal


@dataclass(frozen=True, eq=False)
class Unit:
    """Load, generator or storage element. Positive power is consumption."""

    id: str
    bus: str
    phases: PhaseSet
    p_min: np.ndarray | None = None
    p_max: np.ndarray | None = None
    q_min: np.ndarray | None = None
    q_max: np.ndarray | None = None
    i_rated: np.ndarray | None = None
    setpoint_p: np.ndarray | None = None
    setpoint_q: np.ndarray | None = None

    def __post_init__(self):
        ph = PhaseSet.parse(self.phases)
        n = len(ph)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "bus", str(self.bus))
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "p_min", _vec(self.p_min, n, -math.inf))
        object.__setattr__(self, "p_max", _vec(self.p_max, n, math.inf))
        object.__setattr__(self, "q_min", _vec(self.q_min, n, -math.inf))
        object.__setattr__(self, "q_max", _vec(self.q_max, n, math.inf))
        object.__setattr__(self, "i_rated", _vec(self.i_rated, n, math.inf))
        for name in ("setpoint_p", "setpoint_q"):
            v = getattr(self, name)
            object.__setattr__(self, name, None if v is None else _vec(v, n))

    @property
    def has_setpoint(self) -> bool:
        return self.setpoint_p is not None or self.setpoint_q is not None

    @property
    def setpoint_s(self) -> np.ndarray | None:
        if not self.has_setpoint:
            return None
        n = len(self.phases)
        p = self.setpoint_p if self.setpoint_p is not None else np.zeros(n)
        q = self.setpoint_q if self.setpoint_q is not None else np.zeros(n)
        return p + 1j * q

    __eq__ = _fields_equal


@dataclass(frozen=True, eq=False)
class Shunt:
    id: str
    bus: str
    phases: PhaseSet
    y: np.ndarray
    i_rated: np.ndarray | None = None

    def __post_init__(self):
        ph = PhaseSet.parse(self.phases)
        n = len(ph)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "bus", str(self.bus))
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "y", _cmat(self.y, n))
        object.__setattr__(self, "i_rated", _vec(self.i_rated, n, math.inf))

    __eq__ = _fields_equal


def _keyed(items, kind: str) -> Mapping:
    if isinstance(items, Mapping):
        items = list(items.values())
    out: dict = {}
    for it in items:
        if it.id in out:
            raise ValueError(f"duplicate {kind} id {it.id!r}")
        out[it.id] = it
    return MappingProxyType(out)


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable network description.

    Element collections are read-only mappings keyed by id, in insertion
    order. Construction only enforces unique ids; everything else is
    reported by :func:`validate`.
    """

    buses: Mapping[str, Bus]
    branches: Mapping[str, Branch] = field(default_factory=dict)
    units: Mapping[str, Unit] = field(default_factory=dict)
    shunts: Mapping[str, Shunt] = field(default_factory=dict)
    sbase: float = 1.0
    unit_system: UnitSystem = UnitSystem.SI

    def __post_init__(self):
        object.__setattr__(self, "buses", _keyed(self.buses, "bus"))
        object.__setattr__(self, "branches", _keyed(self.branches, "branch"))
        object.__setattr__(self, "units", _keyed(self.units, "unit"))
        object.__setattr__(self, "shunts", _keyed(self.shunts, "shunt"))
        object.__setattr__(self, "sbase", float(self.sbase))
        object.__setattr__(self, "unit_system", UnitSystem(self.unit_system))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        if (self.sbase, self.unit_system) != (other.sbase, other.unit_system):
            return False
        for name in ("buses", "branches", "units", "shunts"):
            a, b = getattr(self, name), getattr(other, name)
            if list(a) != list(b) or any(a[k] != b[k] for k in a):
                return False
        return True

    # connectivity -------------------------------------------------------

    @property
    def reference_buses(self) -> list[str]:
        return [b.id for b in self.buses.values() if b.is_reference]

    def arcs(self) -> list[tuple[str, str, str]]:
        """Directed branch arcs ``(branch, i, j)`` in both directions."""
        out = []
        for br in self.branches.values():
            out.append((br.id, br.from_bus, br.to_bus))
            out.append((br.id, br.to_bus, br.from_bus))
        return out

    def branches_at(self, bus_id: str) -> list[Branch]:
        return [
            br for br in self.branches.values() if bus_id in (br.from_bus, br.to_bus)
        ]

    def units_at(self, bus_id: str) -> list[Unit]:
        return [u for u in self.units.values() if u.bus == bus_id]

    def shunts_at(self, bus_id: str) -> list[Shunt]:
        return [s for s in self.shunts.values() if s.bus == bus_id]

    def graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.buses)
        for br in self.branches.values():
            g.add_edge(br.from_bus, br.to_bus, key=br.id)
        return g

    def is_radial(self) -> bool:
        """True when the branch graph has no cycles (parallel branches count)."""
        g = self.graph()
        return g.number_of_edges() == 0 or nx.is_forest(g)

    def leaf_buses(self) -> list[str]:
        """Buses that terminate at least one branch but send none."""
        senders = {br.from_bus for br in self.branches.values()}
        receivers = {br.to_bus for br in self.branches.values()}
        return [b for b in self.buses if b in receivers and b not in senders]

    # bases ----------------------------------------------------------------

    def zbase(self, bus_id: str) -> float:
        return self.buses[bus_id].vbase ** 2 / self.sbase

    def ibase(self, bus_id: str) -> float:
        return self.sbase / self.buses[bus_id].vbase


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def add(self, path: str, message: str) -> None:
        self.diagnostics.append(Diagnostic(path, message))

    def __iter__(self):
        return iter(self.diagnostics)

    def __len__(self) -> int:
        return len(self.diagnostics)

    def __str__(self) -> str:
        return "\n".join(str(d) for d in self.diagnostics) or "ok"


def _check_vec(rep, path, arr, n):
    if arr.shape != (n,):
        rep.add(path, f"expected {n} entries, got shape {arr.shape}")
        return False
    if np.any(np.isnan(arr)):
        rep.add(path, "contains NaN")
        return False
    return True


def _check_mat(rep, path, arr, n):
    if arr.shape != (n, n):
        rep.add(path, f"expected a {n}x{n} matrix, got shape {arr.shape}")
        return False
    if not np.all(np.isfinite(arr)):
        rep.add(path, "contains non-finite entries")
        return False
    return True


def _check_order(rep, path, lo, hi, lo_name, hi_name):
    if lo.shape == hi.shape and np.any(lo > hi):
        rep.add(path, f"{lo_name} > {hi_name} for some phase")


def validate(network: Network) -> ValidationReport:
    """Collect every violated structural invariant of ``network``."""
    rep = ValidationReport()
    if not (network.sbase > 0 and math.isfinite(network.sbase)):
        rep.add("network.sbase", f"base power must be positive and finite, got {network.sbase}")

    for b in network.buses.values():
        path = f"bus[{b.id}]"
        n = len(b.phases)
        if not (b.vbase > 0 and math.isfinite(b.vbase)):
            rep.add(f"{path}.vbase", f"base voltage must be positive and finite, got {b.vbase}")
        ok_min = _check_vec(rep, f"{path}.vmin", b.vmin, n)
        ok_max = _check_vec(rep, f"{path}.vmax", b.vmax, n)
        if ok_min and np.any(b.vmin < 0):
            rep.add(f"{path}.vmin", "voltage magnitude bound must be >= 0")
        if ok_min and ok_max:
            _check_order(rep, path, b.vmin, b.vmax, "vmin", "vmax")
        for name in ("pad_min", "pad_max"):
            arr = getattr(b, name)
            if not _check_vec(rep, f"{path}.{name}", arr, 3):
                continue
            if np.any(arr < PAD_LIMIT_MIN - 1e-15) or np.any(arr > PAD_LIMIT_MAX + 1e-15):
                rep.add(
                    f"{path}.{name}",
                    f"{name}={arr.tolist()} outside [-pi/6, pi/3]; the tangent reformulation "
                    "of the phase-angle spread requires -pi/6 <= pad_min <= pad_max <= pi/3",
                )
        if b.pad_min.shape == b.pad_max.shape == (3,):
            _check_order(rep, path, b.pad_min, b.pad_max, "pad_min", "pad_max")
        if b.vref is not None:
            if b.vref.shape != (n,):
                rep.add(f"{path}.vref", f"expected {n} entries, got shape {b.vref.shape}")
            elif not np.all(np.isfinite(b.vref)):
                rep.add(f"{path}.vref", "contains non-finite entries")
            elif ok_min and ok_max:
                mag = np.abs(b.vref)
                slack = _REF_RTOL * np.maximum(mag, 1.0)
                if np.any(mag < b.vmin - slack) or np.any(mag > b.vmax + slack):
                    rep.add(f"{path}.vref", "reference magnitude outside [vmin, vmax]")

    if not network.reference_buses:
        rep.add("network", "no reference bus")

    vad_lo, vad_hi = -math.pi / 2, math.pi / 2
    for br in network.branches.values():
        path = f"branch[{br.id}]"
        n = len(br.phases)
        for end in ("from_bus", "to_bus"):
            bid = getattr(br, end)
            if bid not in network.buses:
                rep.add(f"{path}.{end}", f"references missing bus {bid!r}")
            elif not br.phases.issubset(network.buses[bid].phases):
                rep.add(
                    f"{path}.phases",
                    f"phases {br.phases} not a subset of bus {bid!r} phases {network.buses[bid].phases}",
                )
        if br.from_bus == br.to_bus:
            rep.add(path, "branch connects a bus to itself")
        if br.from_bus in network.buses and br.to_bus in network.buses:
            if network.buses[br.from_bus].vbase != network.buses[br.to_bus].vbase:
                rep.add(path, "endpoint buses have different vbase (transformers unsupported)")
        for name in ("z_series", "y_sh_from", "y_sh_to"):
            _check_mat(rep, f"{path}.{name}", getattr(br, name), n)
        for name in ("i_rated", "s_rated"):
            arr = getattr(br, name)
            if _check_vec(rep, f"{path}.{name}", arr, n) and np.any(arr < 0):
                rep.add(f"{path}.{name}", "rating must be >= 0")
        ok_lo = _check_vec(rep, f"{path}.vad_min", br.vad_min, n)
        ok_hi = _check_vec(rep, f"{path}.vad_max", br.vad_max, n)
        if ok_lo and np.any(br.vad_min <= vad_lo):
            rep.add(f"{path}.vad_min", "angle-difference bound must lie in (-pi/2, pi/2)")
        if ok_hi and np.any(br.vad_max >= vad_hi):
            rep.add(f"{path}.vad_max", "angle-difference bound must lie in (-pi/2, pi/2)")
        if ok_lo and ok_hi:
            _check_order(rep, path, br.vad_min, br.vad_max, "vad_min", "vad_max")

    for u in network.units.values():
        path = f"unit[{u.id}]"
        n = len(u.phases)
        if u.bus not in network.buses:
            rep.add(f"{path}.bus", f"references missing bus {u.bus!r}")
        elif not u.phases.issubset(network.buses[u.bus].phases):
            rep.add(f"{path}.phases", f"phases {u.phases} not a subset of bus {u.bus!r} phases")
        oks = {
            name: _check_vec(rep, f"{path}.{name}", getattr(u, name), n)
            for name in ("p_min", "p_max", "q_min", "q_max", "i_rated")
        }
        if oks["p_min"] and oks["p_max"]:
            _check_order(rep, path, u.p_min, u.p_max, "p_min", "p_max")
        if oks["q_min"] and oks["q_max"]:
            _check_order(rep, path, u.q_min, u.q_max, "q_min", "q_max")
        if oks["i_rated"] and np.any(u.i_rated < 0):
            rep.add(f"{path}.i_rated", "rating must be >= 0")
        for name in ("setpoint_p", "setpoint_q"):
            v = getattr(u, name)
            if v is not None and _check_vec(rep, f"{path}.{name}", v, n):
                if not np.all(np.isfinite(v)):
                    rep.add(f"{path}.{name}", "setpoint must be finite")

    for s in network.shunts.values():
        path = f"shunt[{s.id}]"
        n = len(s.phases)
        if s.bus not in network.buses:
            rep.add(f"{path}.bus", f"references missing bus {s.bus!r}")
        elif not s.phases.issubset(network.buses[s.bus].phases):
            rep.add(f"{path}.phases", f"phases {s.phases} not a subset of bus {s.bus!r} phases")
        _check_mat(rep, f"{path}.y", s.y, n)
        if _check_vec(rep, f"{path}.i_rated", s.i_rated, n) and np.any(s.i_rated < 0):
            rep.add(f"{path}.i_rated", "rating must be >= 0")
    return rep


def series_admittance(branch: Branch) -> np.ndarray:
    """Series admittance of a branch: the (pseudo)inverse of ``z_series``."""
    return pinv(branch.z_series)


def _rescale(network: Network, to_pu: bool) -> Network:
    sb = network.sbase
    if not (sb > 0 and math.isfinite(sb)):
        raise ValueError(f"base power must be positive, got {sb}")
    for b in network.buses.values():
        if not (b.vbase > 0 and math.isfinite(b.vbase)):
            raise ValueError(f"bus {b.id!r}: base voltage must be positive, got {b.vbase}")

    def k(x):
        # quantity factor: divide when going to per unit, multiply back
        return (1.0 / x) if to_pu else x

    def sc(arr, f):
        return None if arr is None else arr * f

    buses = []
    for b in network.buses.values():
        fv = k(b.vbase)
        buses.append(dataclasses.replace(
            b, vmin=b.vmin * fv, vmax=b.vmax * fv, vref=sc(b.vref, fv)))
    branches = []
    for br in network.branches.values():
        fz = k(network.zbase(br.from_bus))
        fi = k(network.ibase(br.from_bus))
        fs = k(sb)
        branches.append(dataclasses.replace(
            br, z_series=br.z_series * fz, y_sh_from=br.y_sh_from / fz,
            y_sh_to=br.y_sh_to / fz, i_rated=br.i_rated * fi, s_rated=br.s_rated * fs))
    units = []
    for u in network.units.values():
        fs = k(sb)
        fi = k(network.ibase(u.bus))
        units.append(dataclasses.replace(
            u, p_min=u.p_min * fs, p_max=u.p_max * fs, q_min=u.q_min * fs,
            q_max=u.q_max * fs, i_rated=u.i_rated * fi,
            setpoint_p=sc(u.setpoint_p, fs), setpoint_q=sc(u.setpoint_q, fs)))
    shunts = []
    for s in network.shunts.values():
        fz = k(network.zbase(s.bus))
        fi = k(network.ibase(s.bus))
        shunts.append(dataclasses.replace(s, y=s.y / fz, i_rated=s.i_rated * fi))
    return Network(
        buses, branches, units, shunts, sbase=sb,
        unit_system=UnitSystem.PER_UNIT if to_pu else UnitSystem.SI,
    )


def to_per_unit(network: Network) -> Network:
    """Convert an SI network to per unit using each bus's ``vbase`` and the
    system ``sbase`` (zbase = vbase^2/sbase, ibase = sbase/vbase)."""
    if network.unit_system is not UnitSystem.SI:
        raise ValueError("network is already in per unit")
    return _rescale(network, to_pu=True)


def from_per_unit(network: Network) -> Network:
    if network.unit_system is not UnitSystem.PER_UNIT:
        raise ValueError("network is not in per unit")
    return _rescale(network, to_pu=False)


def as_per_unit(network: Network) -> Network:
    """``network`` in per unit, converting only if needed."""
    if network.unit_system is UnitSystem.PER_UNIT:
        return network
    return to_per_unit(network)
