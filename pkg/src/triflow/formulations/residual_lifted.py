"""Residuals in the lifted (matrix) variable space.

Both evaluators are affine in the lifted variables; the psd, rank and
hermitian groups measure how far the matrices are from exact outer
products.
"""

from __future__ import annotations

import numpy as np

from triflow.formulations._common import (
    bus_labels, branch_data, pair_ids, require_admittance_form,
)
from triflow.formulations.report import ResidualReport
from triflow.formulations.states import LiftedState, bus_pairs, check_lifted, per_unit_pair
from triflow.netmodel import Network
from triflow.phasorcalc import hermitian_defect, outer, psd_residual, rank1_residual


def _H(m):
    return m.conj().T


def _sub(m, rows, cols=None):
    cols = rows if cols is None else cols
    return np.asarray(m, dtype=complex)[np.ix_(rows, cols)]


def _add_matrix(rep, group_re, group_im, prefix, phases, m, im_phases=None):
    for a, b, cid in pair_ids(prefix, phases, im_phases):
        if group_re:
            rep.add(group_re, cid, m[a, b].real)
        if group_im:
            rep.add(group_im, cid, m[a, b].imag)


def _kcl_and_ref(rep, net: Network, s: LiftedState):
    bal = {b.id: np.zeros(len(b.phases), dtype=complex) for b in net.buses.values()}
    for br in net.branches.values():
        for side in (br.from_bus, br.to_bus):
            pos = br.phases.positions_in(net.buses[side].phases)
            bal[side][pos] += np.diag(np.asarray(s.s_total[(br.id, side)], dtype=complex))
    for u in net.units.values():
        pos = u.phases.positions_in(net.buses[u.bus].phases)
        bal[u.bus][pos] += s.unit_s[u.id]
    for sh in net.shunts.values():
        pos = sh.phases.positions_in(net.buses[sh.bus].phases)
        bal[sh.bus][pos] += np.diag(_sub(s.w[sh.bus], pos) @ _H(sh.y))
    for b in net.buses.values():
        if b.is_reference:
            err = np.asarray(s.w[b.id], dtype=complex) - outer(b.vref, b.vref)
            for p, q, cid in pair_ids(f"bus[{b.id}]", b.phases):
                rep.add("ref", cid, abs(err[p, q]))
        else:
            for cid, val in zip(bus_labels(net, b.id), bal[b.id]):
                rep.add("kcl_p", cid, val.real)
                rep.add("kcl_q", cid, val.imag)


def bim_flows(bd, s: LiftedState) -> dict[str, np.ndarray]:
    """Sending-end flow matrices implied by W and the cross products."""
    out = {}
    for here, there, ysh, ph, pt in (
        (bd.f, bd.t, bd.ysh_f, bd.pos_f, bd.pos_t),
        (bd.t, bd.f, bd.ysh_t, bd.pos_t, bd.pos_f),
    ):
        w_h = _sub(s.w[here], ph)
        w_x = _sub(s.cross(here, there), ph, pt)
        out[here] = w_h @ _H(bd.y + ysh) - w_x @ _H(bd.y)
    return out


def residual_bim_lifted(net: Network, s: LiftedState) -> ResidualReport:
    """Lifted bus-injection residuals, with psd/rank of every bus-pair block
    ``[[W_i, W_ij], [W_ij^H, W_j]]``."""
    check_lifted(net, s)
    require_admittance_form(net, "lifted bus-injection")
    net, s = per_unit_pair(net, s)
    rep = ResidualReport("bim_lifted")
    rep.ensure("pf_p", "pf_q", "kcl_p", "kcl_q", "hermitian", "psd", "rank", "ref")
    for bd in branch_data(net):
        for here, calc in bim_flows(bd, s).items():
            r = np.asarray(s.s_total[(bd.id, here)], dtype=complex) - calc
            _add_matrix(rep, "pf_p", "pf_q", f"branch[{bd.id}]@{here}", bd.phases, r)
    _kcl_and_ref(rep, net, s)
    for b in net.buses.values():
        rep.add("hermitian", f"bus[{b.id}]", hermitian_defect(s.w[b.id]))
    for i, j in bus_pairs(net):
        blk = np.block([
            [np.asarray(s.w[i], dtype=complex), s.cross(i, j)],
            [s.cross(j, i), np.asarray(s.w[j], dtype=complex)],
        ])
        cid = f"pair[{i},{j}]"
        rep.add("psd", cid, psd_residual(blk))
        rep.add("rank", cid, rank1_residual(blk))
    return rep.finalize()


def bfm_block(bd, s: LiftedState) -> np.ndarray:
    """``[[W_i, S^s], [S^sH, L]]`` on the branch phases."""
    w_i = _sub(s.w[bd.f], bd.pos_f)
    ss = np.asarray(s.s_series[bd.id], dtype=complex)
    ll = np.asarray(s.l_series[bd.id], dtype=complex)
    return np.block([[w_i, ss], [_H(ss), ll]])


def residual_bfm_lifted(net: Network, s: LiftedState) -> ResidualReport:
    """Lifted branch-flow residuals.

    Groups: ``balance`` (sending plus receiving flow equals losses), lifted
    Ohm's law (real part on and above the diagonal, imaginary part strictly
    above), ``link`` (total flow in terms of series flow, both ends), KCL,
    psd/rank of the per-branch blocks and of W at leaf buses, hermitian
    defects of W and L, and the reference rows. Zero-impedance branches are
    allowed.
    """
    check_lifted(net, s, cross=False)
    net, s = per_unit_pair(net, s)
    rep = ResidualReport("bfm_lifted")
    rep.ensure("balance_p", "balance_q", "ohm_re", "ohm_im", "link_p", "link_q",
               "kcl_p", "kcl_q", "hermitian", "psd", "rank", "ref")
    for bd in branch_data(net):
        w_i = _sub(s.w[bd.f], bd.pos_f)
        w_j = _sub(s.w[bd.t], bd.pos_t)
        ss = np.asarray(s.s_series[bd.id], dtype=complex)
        ll = np.asarray(s.l_series[bd.id], dtype=complex)
        s_f = np.asarray(s.s_total[(bd.id, bd.f)], dtype=complex)
        s_t = np.asarray(s.s_total[(bd.id, bd.t)], dtype=complex)
        z = bd.z
        zl = z @ ll
        pre = f"branch[{bd.id}]"

        bal = s_f + s_t - (w_i @ _H(bd.ysh_f) + zl + w_j @ _H(bd.ysh_t))
        _add_matrix(rep, "balance_p", "balance_q", pre, bd.phases, bal)

        ohm = w_j - (w_i - ss @ _H(z) - z @ _H(ss) + zl @ _H(z))
        for a, b, cid in pair_ids(pre, bd.phases):
            if a <= b:
                rep.add("ohm_re", cid, ohm[a, b].real)
            if a < b:
                rep.add("ohm_im", cid, ohm[a, b].imag)

        link_f = s_f - (ss + w_i @ _H(bd.ysh_f))
        link_t = s_t - (-ss + zl + w_j @ _H(bd.ysh_t))
        _add_matrix(rep, "link_p", "link_q", f"{pre}@{bd.f}", bd.phases, link_f)
        _add_matrix(rep, "link_p", "link_q", f"{pre}@{bd.t}", bd.phases, link_t)

        blk = bfm_block(bd, s)
        rep.add("psd", pre, psd_residual(blk))
        rep.add("rank", pre, rank1_residual(blk))
        rep.add("hermitian", pre, hermitian_defect(ll))
    for leaf in net.leaf_buses():
        rep.add("psd", f"bus[{leaf}]", psd_residual(s.w[leaf]))
        rep.add("rank", f"bus[{leaf}]", rank1_residual(s.w[leaf]))
    for b in net.buses.values():
        rep.add("hermitian", f"bus[{b.id}]", hermitian_defect(s.w[b.id]))
    _kcl_and_ref(rep, net, s)
    return rep.finalize()


def branch_losses(net: Network, s: LiftedState) -> dict[str, dict[str, np.ndarray]]:
    """Per-branch loss matrices in per unit: series ``z L`` and the two
    shunt losses ``W y_sh^H``; their sum balances ``S_ij + S_ji``."""
    check_lifted(net, s, cross=False)
    net, s = per_unit_pair(net, s)
    out = {}
    for bd in branch_data(net):
        out[bd.id] = {
            "series": bd.z @ np.asarray(s.l_series[bd.id], dtype=complex),
            "shunt_from": _sub(s.w[bd.f], bd.pos_f) @ _H(bd.ysh_f),
            "shunt_to": _sub(s.w[bd.t], bd.pos_t) @ _H(bd.ysh_t),
            "flow_sum": np.asarray(s.s_total[(bd.id, bd.f)], dtype=complex)
            + np.asarray(s.s_total[(bd.id, bd.t)], dtype=complex),
        }
    return out
