"""Current-voltage (IV) residuals: Ohm's law per branch, KCL per bus and the
reference phasors."""

from __future__ import annotations

import numpy as np

from triflow.formulations._common import bus_labels, branch_data, phase_ids, unit_current
from triflow.formulations.report import ResidualReport
from triflow.formulations.states import IVState, check_iv, per_unit_pair
from triflow.netmodel import Network


def total_currents(bd, v_f: np.ndarray, v_t: np.ndarray, i_s: np.ndarray):
    """Currents entering the branch at its from and to ends."""
    vf = v_f[bd.pos_f]
    vt = v_t[bd.pos_t]
    return i_s + bd.ysh_f @ vf, -i_s + bd.ysh_t @ vt


def bus_current_mismatch(net: Network, s: IVState, bds=None) -> dict[str, np.ndarray]:
    """Net current leaving every bus per phase (zero where KCL holds)."""
    if bds is None:
        bds = branch_data(net)
    acc = {b.id: np.zeros(len(b.phases), dtype=complex) for b in net.buses.values()}
    for bd in bds:
        i_f, i_t = total_currents(bd, s.v[bd.f], s.v[bd.t], s.i_series[bd.id])
        acc[bd.f][bd.pos_f] += i_f
        acc[bd.t][bd.pos_t] += i_t
    for u in net.units.values():
        pos = u.phases.positions_in(net.buses[u.bus].phases)
        acc[u.bus][pos] += unit_current(u.id, s.unit_s[u.id], s.v[u.bus][pos])
    for sh in net.shunts.values():
        pos = sh.phases.positions_in(net.buses[sh.bus].phases)
        acc[sh.bus][pos] += sh.y @ s.v[sh.bus][pos]
    return acc


def residual_iv(net: Network, s: IVState) -> ResidualReport:
    """Ohm, KCL and reference residual magnitudes in per unit.

    KCL rows are emitted for non-reference buses only; the reference
    phasor fixes the remaining degrees of freedom.
    """
    check_iv(net, s)
    net, s = per_unit_pair(net, s)
    rep = ResidualReport("iv")
    rep.ensure("ohm", "kcl", "ref")
    bds = branch_data(net)
    for bd in bds:
        r = s.v[bd.t][bd.pos_t] - s.v[bd.f][bd.pos_f] + bd.z @ s.i_series[bd.id]
        for cid, val in zip(phase_ids(f"branch[{bd.id}]", bd.phases), r):
            rep.add("ohm", cid, abs(val))
    mism = bus_current_mismatch(net, s, bds)
    for b in net.buses.values():
        labels = bus_labels(net, b.id)
        if b.is_reference:
            for cid, val in zip(labels, s.v[b.id] - b.vref):
                rep.add("ref", cid, abs(val))
        else:
            for cid, val in zip(labels, mism[b.id]):
                rep.add("kcl", cid, abs(val))
    return rep.finalize()
