"""Conversions between the IV, polar, rectangular and lifted variable spaces.

All conversions are exact and work in the network's own unit system.
"""

from __future__ import annotations

import numpy as np

from triflow.formulations.states import (
    IVState, LiftedState, PolarState, RectState, bus_pairs, check_iv,
)
from triflow.netmodel import Network
from triflow.phasorcalc import outer, wrap_angle


def _copy_units(s):
    return {k: np.array(v, dtype=complex) for k, v in s.unit_s.items()}


def end_currents(net: Network, s: IVState) -> dict[tuple[str, str], np.ndarray]:
    """Total current entering each branch end, keyed by (branch, bus)."""
    out = {}
    for br in net.branches.values():
        pf = br.phases.positions_in(net.buses[br.from_bus].phases)
        pt = br.phases.positions_in(net.buses[br.to_bus].phases)
        i_s = np.asarray(s.i_series[br.id], dtype=complex)
        out[(br.id, br.from_bus)] = i_s + br.y_sh_from @ np.asarray(s.v[br.from_bus])[pf]
        out[(br.id, br.to_bus)] = -i_s + br.y_sh_to @ np.asarray(s.v[br.to_bus])[pt]
    return out


def branch_flows(net: Network, s: IVState, full: bool = False) -> dict[tuple[str, str], np.ndarray]:
    """Power sent into each branch end: the diagonal per phase, or the full
    matrix ``V I^H`` when ``full`` is set."""
    out = {}
    for (br_id, bus), i_tot in end_currents(net, s).items():
        br = net.branches[br_id]
        v = np.asarray(s.v[bus], dtype=complex)[br.phases.positions_in(net.buses[bus].phases)]
        m = outer(v, i_tot)
        out[(br_id, bus)] = m if full else np.diag(m).copy()
    return out


def iv_to_rect(net: Network, s: IVState) -> RectState:
    check_iv(net, s)
    v = {k: np.asarray(x, dtype=complex) for k, x in s.v.items()}
    return RectState(
        {k: x.real.copy() for k, x in v.items()},
        {k: x.imag.copy() for k, x in v.items()},
        branch_flows(net, s),
        _copy_units(s),
    )


def iv_to_polar(net: Network, s: IVState) -> PolarState:
    return polar_from_rect(iv_to_rect(net, s))


def polar_from_rect(s: RectState) -> PolarState:
    vm, va = {}, {}
    for k in s.vre:
        u = np.asarray(s.vre[k], float) + 1j * np.asarray(s.vim[k], float)
        vm[k] = np.abs(u)
        va[k] = np.atleast_1d(wrap_angle(np.angle(u)))
    return PolarState(vm, va, {k: np.array(x, dtype=complex) for k, x in s.branch_s.items()},
                      _copy_units(s))


def rect_from_polar(s: PolarState) -> RectState:
    vre, vim = {}, {}
    for k in s.vm:
        vm = np.asarray(s.vm[k], float)
        va = np.asarray(s.va[k], float)
        vre[k] = vm * np.cos(va)
        vim[k] = vm * np.sin(va)
    return RectState(vre, vim, {k: np.array(x, dtype=complex) for k, x in s.branch_s.items()},
                     _copy_units(s))


def iv_from_rect(net: Network, s: RectState) -> IVState:
    """Voltages from a rectangular state, with series currents recovered
    through Ohm's law (needs a series admittance on every branch)."""
    from triflow.netmodel import series_admittance

    v = {k: np.asarray(s.vre[k], float) + 1j * np.asarray(s.vim[k], float) for k in s.vre}
    i_series = {}
    for br in net.branches.values():
        pf = br.phases.positions_in(net.buses[br.from_bus].phases)
        pt = br.phases.positions_in(net.buses[br.to_bus].phases)
        i_series[br.id] = series_admittance(br) @ (v[br.from_bus][pf] - v[br.to_bus][pt])
    return IVState(v, i_series, _copy_units(s))


def lift(net: Network, s: IVState) -> LiftedState:
    """Exact lift of an IV state into the matrix variable space."""
    check_iv(net, s)
    v = {k: np.asarray(x, dtype=complex) for k, x in s.v.items()}
    w = {k: outer(x, x) for k, x in v.items()}
    w_cross = {(i, j): np.outer(v[i], v[j].conj()) for i, j in bus_pairs(net)}
    l_series, s_series = {}, {}
    for br in net.branches.values():
        i_s = np.asarray(s.i_series[br.id], dtype=complex)
        vf = v[br.from_bus][br.phases.positions_in(net.buses[br.from_bus].phases)]
        l_series[br.id] = outer(i_s, i_s)
        s_series[br.id] = outer(vf, i_s)
    return LiftedState(w, w_cross, l_series, s_series, branch_flows(net, s, full=True),
                       _copy_units(s))
