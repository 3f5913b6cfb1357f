"""Bus-injection residuals in polar and rectangular voltage coordinates.

Branch flows are expressed through the series admittance, so both forms
reject zero-impedance branches.
"""

from __future__ import annotations

import numpy as np

from triflow.formulations._common import (
    bus_labels, branch_data, phase_ids, require_admittance_form,
)
from triflow.formulations.report import ResidualReport
from triflow.formulations.states import PolarState, RectState, check_polar, check_rect, per_unit_pair
from triflow.netmodel import Network
from triflow.phasorcalc import wrap_angle


def _polar_flow(vm_i, va_i, vm_j, va_j, y, ysh):
    """Per-phase (P, Q) sent from end i towards end j."""
    g, b = y.real, y.imag
    gt, bt = g + ysh.real, b + ysh.imag
    d_ii = va_i[:, None] - va_i[None, :]
    d_ij = va_i[:, None] - va_j[None, :]
    m_ii = vm_i[:, None] * vm_i[None, :]
    m_ij = vm_i[:, None] * vm_j[None, :]
    p = (m_ii * (gt * np.cos(d_ii) + bt * np.sin(d_ii))).sum(1) \
        - (m_ij * (g * np.cos(d_ij) + b * np.sin(d_ij))).sum(1)
    q = (m_ii * (gt * np.sin(d_ii) - bt * np.cos(d_ii))).sum(1) \
        - (m_ij * (g * np.sin(d_ij) - b * np.cos(d_ij))).sum(1)
    return p, q


def _polar_shunt(vm, va, ysh):
    g, b = ysh.real, ysh.imag
    d = va[:, None] - va[None, :]
    m = vm[:, None] * vm[None, :]
    return (m * (g * np.cos(d) + b * np.sin(d))).sum(1), (m * (g * np.sin(d) - b * np.cos(d))).sum(1)


def _rect_products(e_i, f_i, e_j, f_j):
    # real and imaginary parts of U_i[p] * conj(U_j[q])
    re = e_i[:, None] * e_j[None, :] + f_i[:, None] * f_j[None, :]
    im = f_i[:, None] * e_j[None, :] - e_i[:, None] * f_j[None, :]
    return re, im


def _rect_flow(e_i, f_i, e_j, f_j, y, ysh):
    g, b = y.real, y.imag
    gt, bt = g + ysh.real, b + ysh.imag
    cii, sii = _rect_products(e_i, f_i, e_i, f_i)
    cij, sij = _rect_products(e_i, f_i, e_j, f_j)
    p = (gt * cii + bt * sii).sum(1) - (g * cij + b * sij).sum(1)
    q = (gt * sii - bt * cii).sum(1) - (g * sij - b * cij).sum(1)
    return p, q


def _rect_shunt(e, f, ysh):
    g, b = ysh.real, ysh.imag
    c, s = _rect_products(e, f, e, f)
    return (g * c + b * s).sum(1), (g * s - b * c).sum(1)


def _assemble(net, s, name, coords, flow, shunt_power, ref_rows) -> ResidualReport:
    rep = ResidualReport(name)
    rep.ensure("pf_p", "pf_q", "kcl_p", "kcl_q", "ref")
    bal = {b.id: np.zeros(len(b.phases), dtype=complex) for b in net.buses.values()}
    for bd in branch_data(net):
        for here, there, ysh, pos_h, pos_t in (
            (bd.f, bd.t, bd.ysh_f, bd.pos_f, bd.pos_t),
            (bd.t, bd.f, bd.ysh_t, bd.pos_t, bd.pos_f),
        ):
            ch, ct = coords(here), coords(there)
            p, q = flow(ch[0][pos_h], ch[1][pos_h], ct[0][pos_t], ct[1][pos_t], bd.y, ysh)
            given = np.asarray(s.branch_s[(bd.id, here)], dtype=complex)
            ids = phase_ids(f"branch[{bd.id}]@{here}", bd.phases)
            for k, cid in enumerate(ids):
                rep.add("pf_p", cid, given[k].real - p[k])
                rep.add("pf_q", cid, given[k].imag - q[k])
            bal[here][pos_h] += given
    for u in net.units.values():
        pos = u.phases.positions_in(net.buses[u.bus].phases)
        bal[u.bus][pos] += s.unit_s[u.id]
    for sh in net.shunts.values():
        pos = sh.phases.positions_in(net.buses[sh.bus].phases)
        c = coords(sh.bus)
        p, q = shunt_power(c[0][pos], c[1][pos], sh.y)
        bal[sh.bus][pos] += p + 1j * q
    for b in net.buses.values():
        labels = bus_labels(net, b.id)
        if b.is_reference:
            for cid, r in zip(labels, ref_rows(b)):
                rep.add("ref", cid, r)
        else:
            for cid, val in zip(labels, bal[b.id]):
                rep.add("kcl_p", cid, val.real)
                rep.add("kcl_q", cid, val.imag)
    return rep.finalize()


def residual_polar(net: Network, s: PolarState) -> ResidualReport:
    """Trigonometric power-flow, power-balance and reference residuals.

    The reference row per phase is the larger of the magnitude error and
    the wrapped angle error.
    """
    check_polar(net, s)
    require_admittance_form(net, "polar")
    net, s = per_unit_pair(net, s)

    def ref_rows(b):
        dm = np.abs(s.vm[b.id] - np.abs(b.vref))
        da = np.abs(wrap_angle(s.va[b.id] - np.angle(b.vref)))
        return np.maximum(dm, da)

    return _assemble(
        net, s, "polar",
        lambda bus: (np.asarray(s.vm[bus], float), np.asarray(s.va[bus], float)),
        _polar_flow, _polar_shunt, ref_rows,
    )


def residual_rect(net: Network, s: RectState) -> ResidualReport:
    check_rect(net, s)
    require_admittance_form(net, "rectangular")
    net, s = per_unit_pair(net, s)

    def ref_rows(b):
        return np.maximum(np.abs(s.vre[b.id] - b.vref.real), np.abs(s.vim[b.id] - b.vref.imag))

    return _assemble(
        net, s, "rect",
        lambda bus: (np.asarray(s.vre[bus], float), np.asarray(s.vim[bus], float)),
        _rect_flow, _rect_shunt, ref_rows,
    )
