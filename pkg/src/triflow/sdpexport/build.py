"""Rank-dropped lifted relaxations as conic problems (per unit)."""

from __future__ import annotations

import math

import numpy as np

from triflow.errors import MeshedNetworkError
from triflow.formulations._common import branch_data, require_admittance_form
from triflow.formulations.states import bus_pairs
from triflow.netmodel import Network, as_per_unit
from triflow.sdpexport._builder import Builder, pq
from triflow.sdpexport.problem import Aff, ConicProblem

OBJECTIVES = ("min_total_injection", "min_losses")


def _ent_arc(br_id: str, bus: str) -> str:
    return f"branch[{br_id}]@{bus}"


def build_bfm_sdp(net: Network, objective: str = "min_total_injection") -> ConicProblem:
    """Lifted branch-flow relaxation of a radial network.

    Variables: W per bus, series flow S^s and series-current product L per
    branch, the full power-flow matrix at each branch end, and unit powers.
    Rows, grouped by the family prefix of their names: ref, kcl_p/kcl_q
    (non-reference buses), ohm_re/ohm_im, balance_p/balance_q,
    link_p/link_q (sending end), w_min/w_max, w_entries, pad_min/pad_max,
    vad_min/vad_max, i_total_min/i_total_max/i_total_entries (both ends),
    l_series_implied, s_entries and unit bounds. PSD blocks: one per branch
    ``[[W_i, S^s], [S^sH, L]]`` and one per leaf bus ``W_j``, each in real
    embedded form.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; use one of {', '.join(OBJECTIVES)}")
    if not net.is_radial():
        raise MeshedNetworkError(
            "the branch-flow relaxation is only exact for radial networks; "
            "use the bus-injection export (relaxation 'bim') for meshed networks"
        )
    net = as_per_unit(net)
    bld = Builder(net, "bfm")
    bds = branch_data(net)
    for b in net.buses.values():
        bld.alloc_herm("W", f"bus[{b.id}]", b.phases)
    for bd in bds:
        ph = bd.phases.phases
        bld.alloc_full("Ss", f"branch[{bd.id}]", ph)
        bld.alloc_herm("L", f"branch[{bd.id}]", ph)
    for bd in bds:
        for side in (bd.f, bd.t):
            bld.alloc_full("S", _ent_arc(bd.id, side), bd.phases.phases)
    bld.alloc_units()

    w = {b: bld.herm("W", f"bus[{b}]") for b in net.buses}
    s_arc = {}
    for bd in bds:
        for side in (bd.f, bd.t):
            s_arc[(bd.id, side)] = bld.full("S", _ent_arc(bd.id, side))

    bld.bus_rows(w, s_arc)
    for bd in bds:
        br = bd.br
        ph = br.phases.phases
        ent = f"branch[{bd.id}]"
        ss = bld.full("Ss", ent)
        ll = bld.herm("L", ent)
        w_i = w[bd.f].sub(bd.pos_f)
        w_j = w[bd.t].sub(bd.pos_t)
        z, zh = bd.z, bd.z.conj().T
        zl = z @ ll
        s_f, s_t = s_arc[(bd.id, bd.f)], s_arc[(bd.id, bd.t)]

        ohm = w_j - (w_i - ss @ zh - z @ ss.H + zl @ zh)
        bld.eq_matrix("ohm_re", "ohm_im", ent, ph, ph, ohm, mode="herm")
        bal = s_f + s_t - (w_i @ bd.ysh_f.conj().T + zl + w_j @ bd.ysh_t.conj().T)
        bld.eq_matrix("balance_p", "balance_q", ent, ph, ph, bal)
        link = s_f - (ss + w_i @ bd.ysh_f.conj().T)
        bld.eq_matrix("link_p", "link_q", _ent_arc(bd.id, bd.f), ph, ph, link)

        bld.vad_rows(br, w_i - ss @ zh)

        # total-current products at both ends, affine in W, L and S^s
        y_f, y_t = bd.ysh_f, bd.ysh_t
        t_to = ss - zl
        ends = (
            (bd.f, ll + y_f @ w_i @ y_f.conj().T + y_f @ ss + ss.H @ y_f.conj().T),
            (bd.t, ll + y_t @ w_j @ y_t.conj().T - y_t @ t_to - t_to.H @ y_t.conj().T),
        )
        n = len(ph)
        for side, ltot in ends:
            arc = _ent_arc(bd.id, side)
            for a, p in enumerate(ph):
                i2 = br.i_rated[a] ** 2
                if math.isfinite(i2):
                    e = ltot.entry(a, a).real
                    bld.lower("i_total_min", f"{arc}|{p}", e, 0.0)
                    bld.upper("i_total_max", f"{arc}|{p}", e, i2)
            for a in range(n):
                for c in range(a + 1, n):
                    bound = br.i_rated[a] * br.i_rated[c]
                    e = ltot.entry(a, c)
                    bld.abs_bound("i_total_entries", f"{arc}|{pq(ph, ph, a, c)}.re", e.real, bound)
                    bld.abs_bound("i_total_entries", f"{arc}|{pq(ph, ph, a, c)}.im", e.imag, bound)
            bld.s_entry_rows(br, side, s_arc[(bd.id, side)])

        # implied bound on the series-current product, tightest of both ends
        bound_l = np.full((n, n), np.inf)
        for side, ysh, pos in ((bd.f, y_f, bd.pos_f), (bd.t, y_t, bd.pos_t)):
            vmax = net.buses[side].vmax[pos]
            with np.errstate(invalid="ignore"):
                r = br.i_rated + np.abs(ysh) @ vmax
                cand = np.outer(r, r)
            cand = np.where(np.isnan(cand), np.inf, cand)
            bound_l = np.minimum(bound_l, cand)
        for a in range(n):
            for c in range(a, n):
                e = ll.entry(a, c)
                tag = pq(ph, ph, a, c)
                bld.abs_bound("l_series_implied", f"{ent}|{tag}.re", e.real, bound_l[a, c])
                if c > a:
                    bld.abs_bound("l_series_implied", f"{ent}|{tag}.im", e.imag, bound_l[a, c])
    bld.unit_rows()
    bld.set_objective(objective, s_arc)

    for bd in bds:
        ent = f"branch[{bd.id}]"
        ss = bld.full("Ss", ent)
        blk = Aff.block([[w[bd.f].sub(bd.pos_f), ss], [ss.H, bld.herm("L", ent)]])
        bld.psd(ent, blk)
    for leaf in net.leaf_buses():
        bld.psd(f"bus[{leaf}]", w[leaf])
    return bld.problem()


def build_bim_sdp(net: Network, objective: str = "min_total_injection") -> ConicProblem:
    """Lifted bus-injection relaxation.

    Radial networks get one PSD block per connected bus pair
    ``[[W_i, W_ij], [W_ij^H, W_j]]``. Meshed networks get a single block of
    the full system matrix, with cross products for every bus pair.
    Current limits (second-order-cone rows in this form) are not emitted.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; use one of {', '.join(OBJECTIVES)}")
    require_admittance_form(net, "lifted bus-injection")
    net = as_per_unit(net)
    bld = Builder(net, "bim")
    bds = branch_data(net)
    radial = net.is_radial()
    buses = list(net.buses)
    if radial:
        pairs = bus_pairs(net)
    else:
        pairs = [(buses[a], buses[b]) for a in range(len(buses)) for b in range(a + 1, len(buses))]
    for b in net.buses.values():
        bld.alloc_herm("W", f"bus[{b.id}]", b.phases)
    for i, j in pairs:
        bld.alloc_full("Wx", f"pair[{i},{j}]", net.buses[i].phases.phases, net.buses[j].phases.phases)
    for bd in bds:
        for side in (bd.f, bd.t):
            bld.alloc_full("S", _ent_arc(bd.id, side), bd.phases.phases)
    bld.alloc_units()

    w = {b: bld.herm("W", f"bus[{b}]") for b in net.buses}
    wx = {}
    for i, j in pairs:
        m = bld.full("Wx", f"pair[{i},{j}]")
        wx[(i, j)] = m
        wx[(j, i)] = m.H
    s_arc = {}
    for bd in bds:
        for side in (bd.f, bd.t):
            s_arc[(bd.id, side)] = bld.full("S", _ent_arc(bd.id, side))

    bld.bus_rows(w, s_arc)
    for i, j in pairs:
        bi, bj = net.buses[i], net.buses[j]
        m = wx[(i, j)]
        for a in range(len(bi.phases)):
            for c in range(len(bj.phases)):
                bound = bi.vmax[a] * bj.vmax[c]
                e = m.entry(a, c)
                tag = f"pair[{i},{j}]|{bi.phases.phases[a]}{bj.phases.phases[c]}"
                bld.abs_bound("w_cross_entries", tag + ".re", e.real, bound)
                bld.abs_bound("w_cross_entries", tag + ".im", e.imag, bound)
    for bd in bds:
        br = bd.br
        ph = br.phases.phases
        for here, there, ysh, p_h, p_t in (
            (bd.f, bd.t, bd.ysh_f, bd.pos_f, bd.pos_t),
            (bd.t, bd.f, bd.ysh_t, bd.pos_t, bd.pos_f),
        ):
            flow = w[here].sub(p_h) @ (bd.y + ysh).conj().T - wx[(here, there)].sub(p_h, p_t) @ bd.y.conj().T
            r = s_arc[(bd.id, here)] - flow
            bld.eq_matrix("pf_p", "pf_q", _ent_arc(bd.id, here), ph, ph, r)
            bld.s_entry_rows(br, here, s_arc[(bd.id, here)])
        bld.vad_rows(br, wx[(bd.f, bd.t)].sub(bd.pos_f, bd.pos_t))
    bld.unit_rows()
    bld.set_objective(objective, s_arc)

    if radial:
        for i, j in pairs:
            blk = Aff.block([[w[i], wx[(i, j)]], [wx[(j, i)], w[j]]])
            bld.psd(f"pair[{i},{j}]", blk)
    elif buses:
        rows = [[w[i] if i == j else wx[(i, j)] for j in buses] for i in buses]
        bld.psd("system", Aff.block(rows))
    return bld.problem()
