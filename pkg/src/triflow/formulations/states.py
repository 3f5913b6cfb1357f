"""Variable-space containers for the five formulations and their per-unit
conversion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from triflow.errors import StateShapeError
from triflow.netmodel import Network, UnitSystem
from triflow.phasorcalc import wrap_angle

# keys of directed branch quantities: (branch id, sending bus id)
Arc = tuple[str, str]


def _copy_dict(d):
    return {k: np.array(v, copy=True) for k, v in d.items()}


@dataclass
class IVState:
    """Bus voltages, from->to series currents and unit powers (consumption
    positive)."""

    v: dict[str, np.ndarray]
    i_series: dict[str, np.ndarray]
    unit_s: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> IVState:
        return IVState(_copy_dict(self.v), _copy_dict(self.i_series), _copy_dict(self.unit_s))


@dataclass
class PolarState:
    vm: dict[str, np.ndarray]
    va: dict[str, np.ndarray]
    branch_s: dict[Arc, np.ndarray]
    unit_s: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.va = {k: np.atleast_1d(wrap_angle(v)) for k, v in self.va.items()}

    def copy(self) -> PolarState:
        return PolarState(_copy_dict(self.vm), _copy_dict(self.va),
                          _copy_dict(self.branch_s), _copy_dict(self.unit_s))


@dataclass
class RectState:
    vre: dict[str, np.ndarray]
    vim: dict[str, np.ndarray]
    branch_s: dict[Arc, np.ndarray]
    unit_s: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> RectState:
        return RectState(_copy_dict(self.vre), _copy_dict(self.vim),
                         _copy_dict(self.branch_s), _copy_dict(self.unit_s))


@dataclass
class LiftedState:
    """Lifted products.

    ``w_cross`` is keyed by an ordered bus pair ``(i, j)`` and sized to the
    full phase sets of both buses; the reverse pair is its conjugate
    transpose. ``l_series`` and ``s_series`` are sized to branch phases and
    oriented from->to. ``s_total`` holds the full power-flow matrix of each
    branch end.
    """

    w: dict[str, np.ndarray]
    w_cross: dict[tuple[str, str], np.ndarray]
    l_series: dict[str, np.ndarray]
    s_series: dict[str, np.ndarray]
    s_total: dict[Arc, np.ndarray]
    unit_s: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> LiftedState:
        return LiftedState(_copy_dict(self.w), _copy_dict(self.w_cross),
                           _copy_dict(self.l_series), _copy_dict(self.s_series),
                           _copy_dict(self.s_total), _copy_dict(self.unit_s))

    def cross(self, i: str, j: str) -> np.ndarray:
        """``W_ij`` for either orientation of a stored pair."""
        if (i, j) in self.w_cross:
            return self.w_cross[(i, j)]
        if (j, i) in self.w_cross:
            return self.w_cross[(j, i)].conj().T
        raise KeyError(f"no cross product stored for bus pair ({i}, {j})")


def bus_pairs(net: Network) -> list[tuple[str, str]]:
    """Unique bus pairs joined by branches, oriented as first encountered."""
    seen: dict[frozenset, tuple[str, str]] = {}
    for br in net.branches.values():
        key = frozenset((br.from_bus, br.to_bus))
        if key not in seen:
            seen[key] = (br.from_bus, br.to_bus)
    return list(seen.values())


# shape checks ---------------------------------------------------------------

def _expect(d: dict, key, shape, what: str):
    if key not in d:
        raise StateShapeError(f"{what}: missing entry for {key!r}")
    arr = np.asarray(d[key])
    if arr.shape != shape:
        raise StateShapeError(f"{what}[{key!r}]: expected shape {shape}, got {arr.shape}")


def _check_units(net: Network, unit_s: dict):
    for u in net.units.values():
        _expect(unit_s, u.id, (len(u.phases),), "unit_s")


def _check_arcs(net: Network, branch_s: dict, full: bool):
    for br in net.branches.values():
        n = len(br.phases)
        for side in (br.from_bus, br.to_bus):
            _expect(branch_s, (br.id, side), (n, n) if full else (n,), "branch flow")


def check_iv(net: Network, s: IVState) -> None:
    for b in net.buses.values():
        _expect(s.v, b.id, (len(b.phases),), "v")
    for br in net.branches.values():
        _expect(s.i_series, br.id, (len(br.phases),), "i_series")
    _check_units(net, s.unit_s)


def check_polar(net: Network, s: PolarState) -> None:
    for b in net.buses.values():
        _expect(s.vm, b.id, (len(b.phases),), "vm")
        _expect(s.va, b.id, (len(b.phases),), "va")
    _check_arcs(net, s.branch_s, full=False)
    _check_units(net, s.unit_s)


def check_rect(net: Network, s: RectState) -> None:
    for b in net.buses.values():
        _expect(s.vre, b.id, (len(b.phases),), "vre")
        _expect(s.vim, b.id, (len(b.phases),), "vim")
    _check_arcs(net, s.branch_s, full=False)
    _check_units(net, s.unit_s)


def check_lifted(net: Network, s: LiftedState, cross: bool = True) -> None:
    for b in net.buses.values():
        n = len(b.phases)
        _expect(s.w, b.id, (n, n), "w")
    for i, j in bus_pairs(net) if cross else ():
        shape = (len(net.buses[i].phases), len(net.buses[j].phases))
        if (i, j) in s.w_cross:
            _expect(s.w_cross, (i, j), shape, "w_cross")
        else:
            _expect(s.w_cross, (j, i), shape[::-1], "w_cross")
    for br in net.branches.values():
        n = len(br.phases)
        _expect(s.l_series, br.id, (n, n), "l_series")
        _expect(s.s_series, br.id, (n, n), "s_series")
    _check_arcs(net, s.s_total, full=True)
    _check_units(net, s.unit_s)


# per-unit conversion ----------------------------------------------------------

def _scale_state(net: Network, s, to_pu: bool):
    sb = net.sbase

    def f(x):
        return 1.0 / x if to_pu else x

    def vb(bus):
        return net.buses[bus].vbase

    def ib(branch_id):
        return net.ibase(net.branches[branch_id].from_bus)

    unit_s = {k: np.asarray(v) * f(sb) for k, v in s.unit_s.items()}
    if isinstance(s, IVState):
        return IVState(
            {k: np.asarray(v) * f(vb(k)) for k, v in s.v.items()},
            {k: np.asarray(v) * f(ib(k)) for k, v in s.i_series.items()},
            unit_s,
        )
    if isinstance(s, PolarState):
        return PolarState(
            {k: np.asarray(v) * f(vb(k)) for k, v in s.vm.items()},
            {k: np.array(v, dtype=float) for k, v in s.va.items()},
            {k: np.asarray(v) * f(sb) for k, v in s.branch_s.items()},
            unit_s,
        )
    if isinstance(s, RectState):
        return RectState(
            {k: np.asarray(v) * f(vb(k)) for k, v in s.vre.items()},
            {k: np.asarray(v) * f(vb(k)) for k, v in s.vim.items()},
            {k: np.asarray(v) * f(sb) for k, v in s.branch_s.items()},
            unit_s,
        )
    if isinstance(s, LiftedState):
        return LiftedState(
            {k: np.asarray(v) * f(vb(k) ** 2) for k, v in s.w.items()},
            {k: np.asarray(v) * f(vb(k[0]) * vb(k[1])) for k, v in s.w_cross.items()},
            {k: np.asarray(v) * f(ib(k) ** 2) for k, v in s.l_series.items()},
            {k: np.asarray(v) * f(sb) for k, v in s.s_series.items()},
            {k: np.asarray(v) * f(sb) for k, v in s.s_total.items()},
            unit_s,
        )
    raise TypeError(f"unsupported state type {type(s).__name__}")


def state_to_per_unit(net: Network, s):
    """Express a state given in ``net``'s SI units in per unit."""
    return _scale_state(net, s, to_pu=True)


def state_from_per_unit(net: Network, s):
    return _scale_state(net, s, to_pu=False)


def per_unit_pair(net: Network, s):
    """``(network, state)`` both in per unit; ``s`` is in ``net``'s units."""
    from triflow.netmodel import to_per_unit

    if net.unit_system is UnitSystem.PER_UNIT:
        return net, s
    return to_per_unit(net), state_to_per_unit(net, s)


__all__ = [
    "Arc", "IVState", "PolarState", "RectState", "LiftedState", "bus_pairs",
    "check_iv", "check_polar", "check_rect", "check_lifted",
    "state_to_per_unit", "state_from_per_unit", "per_unit_pair",
]
