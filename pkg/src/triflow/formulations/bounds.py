"""Signed margins for every bound family, natural and lifted forms.

A margin is positive when the bound holds with slack. Bounds stored as
infinite are skipped. Angle-difference and phase-spread bounds come in a
polar, a rectangular (tangent) and a lifted form; the per-form functions
are exposed so they can be compared directly.
"""

from __future__ import annotations

import math

import numpy as np

from triflow.formulations._common import BranchData, branch_data, unit_current
from triflow.formulations.report import FeasibilityReport
from triflow.formulations.states import IVState, LiftedState, bus_pairs, per_unit_pair
from triflow.netmodel import Network
from triflow.phasorcalc import wrap_angle

NOMINAL_SPREAD = 2.0 * math.pi / 3.0
# phase pairs whose spreads are bounded, as positions in an abc bus
SPREAD_PAIRS = ((0, 1), (1, 2), (2, 0))
SPREAD_NAMES = ("ab", "bc", "ca")


# angle-difference bounds across a branch ----------------------------------

def vad_margins_polar(va_i, va_j, lo, hi):
    """``(lower, upper)`` margins of the same-phase angle difference."""
    d = wrap_angle(np.asarray(va_i, float) - np.asarray(va_j, float))
    return np.atleast_1d(d - lo), np.atleast_1d(hi - d)


def _per_angle(mag, bound):
    # factor that turns a product-form margin into sin(angle - bound)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.cos(bound) / mag
    return np.where(mag > 0, k, 1.0)


def vad_margins_rect(e_i, f_i, e_j, f_j, lo, hi, normalized: bool = False):
    """Tangent form on the rectangular products
    ``den = e_i e_j + f_i f_j`` and ``num = f_i e_j - e_i f_j``.

    With ``normalized`` the margins are rescaled to ``sin(d - lo)`` and
    ``sin(hi - d)``, which share the polar margins' angle scale."""
    den = e_i * e_j + f_i * f_j
    num = f_i * e_j - e_i * f_j
    lower, upper = num - np.tan(lo) * den, np.tan(hi) * den - num
    if normalized:
        mag = np.hypot(num, den)
        lower, upper = lower * _per_angle(mag, lo), upper * _per_angle(mag, hi)
    return lower, upper


def vad_margins_lifted(w_ij_diag, lo, hi, normalized: bool = False):
    """Tangent form on the diagonal of the cross product ``W_ij``."""
    w = np.asarray(w_ij_diag, dtype=complex)
    return vad_margins_rect(w.real, w.imag, 1.0, 0.0, lo, hi, normalized)


def vad_margins_bfm(w_i, s_series, z, lo, hi, normalized: bool = False):
    """Tangent form with ``W_ij`` eliminated through ``W_i - S^s z^H``."""
    w_ij = np.asarray(w_i, complex) - np.asarray(s_series, complex) @ np.asarray(z, complex).conj().T
    return vad_margins_lifted(np.diag(w_ij), lo, hi, normalized)


def vad_status(lower, upper, tie: float = 1e-12):
    """Per-phase satisfied flag; margins within ``tie`` of zero count as met.
    Compare forms on normalized margins so the tie band is the same width."""
    return (np.asarray(lower) >= -tie) & (np.asarray(upper) >= -tie)


# phase-spread bounds at three-phase buses -----------------------------------

def pad_margins_polar(va, pad_min, pad_max):
    va = np.asarray(va, float)
    spread = np.array([wrap_angle(va[p] - va[q]) for p, q in SPREAD_PAIRS]) - NOMINAL_SPREAD
    return spread - pad_min, pad_max - spread


def _pad_from_products(x, pad_min, pad_max, normalized=False):
    # x[k] = U_p conj(U_q) for the k-th spread pair; the interval
    # [2pi/3 + pad_min, 2pi/3 + pad_max] lies in [pi/2, pi], so the
    # tangent is replaced by sin/cos to keep the inequality direction.
    lo = NOMINAL_SPREAD + np.asarray(pad_min, float)
    hi = NOMINAL_SPREAD + np.asarray(pad_max, float)
    num, den = x.imag, x.real
    lower = num * np.cos(lo) - den * np.sin(lo)
    upper = den * np.sin(hi) - num * np.cos(hi)
    if normalized:
        mag = np.abs(x)
        scale = np.where(mag > 0, 1.0 / np.where(mag > 0, mag, 1.0), 1.0)
        lower, upper = lower * scale, upper * scale
    return lower, upper


def pad_margins_rect(vre, vim, pad_min, pad_max, normalized: bool = False):
    u = np.asarray(vre, float) + 1j * np.asarray(vim, float)
    x = np.array([u[p] * np.conj(u[q]) for p, q in SPREAD_PAIRS])
    return _pad_from_products(x, pad_min, pad_max, normalized)


def pad_margins_lifted(w, pad_min, pad_max, normalized: bool = False):
    w = np.asarray(w, complex)
    x = np.array([w[p, q] for p, q in SPREAD_PAIRS])
    return _pad_from_products(x, pad_min, pad_max, normalized)


# helpers ----------------------------------------------------------------------

def _add_upper(rep, family, ids, bound, value):
    for cid, b, v in zip(ids, np.ravel(bound), np.ravel(value)):
        if math.isfinite(b):
            rep.add(family, cid, b - v)


def _add_lower(rep, family, ids, bound, value):
    for cid, b, v in zip(ids, np.ravel(bound), np.ravel(value)):
        if math.isfinite(b):
            rep.add(family, cid, v - b)


def _ids(prefix, phases):
    return [f"{prefix}:{p}" for p in phases]


def _entry_margins(rep, family, prefix, phases, m, bound, strict_upper=False):
    """``bound - |Re m|`` and ``bound - |Im m|`` per entry; ``bound`` is a
    matrix, entries with non-finite bounds are skipped."""
    n = m.shape[0]
    for a in range(n):
        for b in range(m.shape[1]):
            if strict_upper and b <= a:
                continue
            bd = bound[a, b]
            if not math.isfinite(bd):
                continue
            cid = f"{prefix}:{phases[0][a]}{phases[1][b]}"
            rep.add(family, cid + ".re", bd - abs(m[a, b].real))
            rep.add(family, cid + ".im", bd - abs(m[a, b].imag))


def _outer_bound(u, v):
    with np.errstate(invalid="ignore"):
        out = np.outer(u, v)
    return np.where(np.isnan(out), np.inf, out)


def _bus_common(rep, net, b, va_or_none, products, w=None):
    """Phase-spread rows for a three-phase bus, in polar, rect or lifted form."""
    if len(b.phases) != 3:
        return
    ids = [f"bus[{b.id}]:{n}" for n in SPREAD_NAMES]
    if w is not None:
        lo, hi = pad_margins_lifted(w, b.pad_min, b.pad_max)
    elif va_or_none is not None:
        lo, hi = pad_margins_polar(va_or_none, b.pad_min, b.pad_max)
    else:
        lo, hi = products
    for cid, m in zip(ids, lo):
        rep.add("pad_min", cid, m)
    for cid, m in zip(ids, hi):
        rep.add("pad_max", cid, m)


def _unit_rows(rep, u, s_u):
    ids = _ids(f"unit[{u.id}]", u.phases)
    _add_lower(rep, "unit_p_min", ids, u.p_min, s_u.real)
    _add_upper(rep, "unit_p_max", ids, u.p_max, s_u.real)
    _add_lower(rep, "unit_q_min", ids, u.q_min, s_u.imag)
    _add_upper(rep, "unit_q_max", ids, u.q_max, s_u.imag)


# natural (IV) space -------------------------------------------------------------

def _margins_iv(net: Network, s: IVState) -> FeasibilityReport:
    rep = FeasibilityReport("iv")
    for b in net.buses.values():
        v = np.asarray(s.v[b.id], complex)
        ids = _ids(f"bus[{b.id}]", b.phases)
        _add_lower(rep, "vm_min", ids, b.vmin, np.abs(v))
        _add_upper(rep, "vm_max", ids, b.vmax, np.abs(v))
        _bus_common(rep, net, b, np.angle(v), None)
    for bd in branch_data(net):
        br = bd.br
        v_f = np.asarray(s.v[bd.f], complex)[bd.pos_f]
        v_t = np.asarray(s.v[bd.t], complex)[bd.pos_t]
        i_s = np.asarray(s.i_series[bd.id], complex)
        ids = _ids(f"branch[{bd.id}]", br.phases)
        lo, hi = vad_margins_polar(np.angle(v_f), np.angle(v_t), br.vad_min, br.vad_max)
        for cid, a, c in zip(ids, lo, hi):
            rep.add("vad_min", cid, a)
            rep.add("vad_max", cid, c)
        ends = (
            (bd.f, bd.pos_f, v_f, i_s + bd.ysh_f @ v_f),
            (bd.t, bd.pos_t, v_t, -i_s + bd.ysh_t @ v_t),
        )
        for side, pos, v, i_tot in ends:
            pre = f"branch[{bd.id}]@{side}"
            sids = _ids(pre, br.phases)
            smat = np.outer(v, i_tot.conj())
            sdiag = np.diag(smat)
            _add_upper(rep, "i_branch", sids, br.i_rated, np.abs(i_tot))
            _add_upper(rep, "i_branch_ws", sids, br.i_rated * np.abs(v), np.abs(sdiag))
            _add_upper(rep, "s_branch", sids, br.s_rated, np.abs(sdiag))
            vmax = net.buses[side].vmax[pos]
            _entry_margins(rep, "s_entries", pre, (br.phases.phases, br.phases.phases),
                           smat, _outer_bound(vmax, br.i_rated))
    for u in net.units.values():
        pos = u.phases.positions_in(net.buses[u.bus].phases)
        s_u = np.asarray(s.unit_s[u.id], complex)
        _unit_rows(rep, u, s_u)
        i_u = unit_current(u.id, s_u, np.asarray(s.v[u.bus], complex)[pos])
        _add_upper(rep, "unit_i", _ids(f"unit[{u.id}]", u.phases), u.i_rated, np.abs(i_u))
    for sh in net.shunts.values():
        pos = sh.phases.positions_in(net.buses[sh.bus].phases)
        i_sh = sh.y @ np.asarray(s.v[sh.bus], complex)[pos]
        _add_upper(rep, "shunt_i", _ids(f"shunt[{sh.id}]", sh.phases), sh.i_rated, np.abs(i_sh))
    return rep.finalize()


# lifted space ----------------------------------------------------------------------

def lifted_total_current(bd: BranchData, s: LiftedState, side: str) -> np.ndarray:
    """Product of the total branch current with itself at one end, as an
    affine function of W, L and S^s (per unit inputs)."""
    ll = np.asarray(s.l_series[bd.id], complex)
    ss = np.asarray(s.s_series[bd.id], complex)
    if side == bd.f:
        y = bd.ysh_f
        w = np.asarray(s.w[bd.f], complex)[np.ix_(bd.pos_f, bd.pos_f)]
        t = ss
        return ll + y @ w @ y.conj().T + y @ t + t.conj().T @ y.conj().T
    y = bd.ysh_t
    w = np.asarray(s.w[bd.t], complex)[np.ix_(bd.pos_t, bd.pos_t)]
    t = ss - bd.z @ ll
    return ll + y @ w @ y.conj().T - y @ t - t.conj().T @ y.conj().T


def _margins_lifted(net: Network, s: LiftedState) -> FeasibilityReport:
    rep = FeasibilityReport("lifted")
    for b in net.buses.values():
        w = np.asarray(s.w[b.id], complex)
        ph = b.phases.phases
        ids = _ids(f"bus[{b.id}]", b.phases)
        d = np.diag(w).real
        _add_lower(rep, "w_min", ids, b.vmin ** 2, d)
        _add_upper(rep, "w_max", ids, b.vmax ** 2, d)
        _entry_margins(rep, "w_entries", f"bus[{b.id}]", (ph, ph), w,
                       _outer_bound(b.vmax, b.vmax), strict_upper=True)
        _bus_common(rep, net, b, None, None, w=w)
    for i, j in bus_pairs(net):
        try:
            w_ij = s.cross(i, j)
        except KeyError:
            continue
        bi, bj = net.buses[i], net.buses[j]
        _entry_margins(rep, "w_cross_entries", f"pair[{i},{j}]",
                       (bi.phases.phases, bj.phases.phases), np.asarray(w_ij, complex),
                       _outer_bound(bi.vmax, bj.vmax))
    for bd in branch_data(net):
        br = bd.br
        ph = br.phases.phases
        ids = _ids(f"branch[{bd.id}]", br.phases)
        w_i = np.asarray(s.w[bd.f], complex)[np.ix_(bd.pos_f, bd.pos_f)]
        ss = np.asarray(s.s_series[bd.id], complex)
        ll = np.asarray(s.l_series[bd.id], complex)
        if (bd.f, bd.t) in s.w_cross or (bd.t, bd.f) in s.w_cross:
            w_ij = s.cross(bd.f, bd.t)[np.ix_(bd.pos_f, bd.pos_t)]
            lo, hi = vad_margins_lifted(np.diag(w_ij), br.vad_min, br.vad_max)
            for cid, a, c in zip(ids, lo, hi):
                rep.add("vad_min", cid, a)
                rep.add("vad_max", cid, c)
        lo, hi = vad_margins_bfm(w_i, ss, bd.z, br.vad_min, br.vad_max)
        for cid, a, c in zip(ids, lo, hi):
            rep.add("vad_bfm_min", cid, a)
            rep.add("vad_bfm_max", cid, c)
        i2 = br.i_rated ** 2
        bound_l = None
        for side, ysh, pos in ((bd.f, bd.ysh_f, bd.pos_f), (bd.t, bd.ysh_t, bd.pos_t)):
            pre = f"branch[{bd.id}]@{side}"
            sids = _ids(pre, br.phases)
            smat = np.asarray(s.s_total[(bd.id, side)], complex)
            sdiag = np.diag(smat)
            w_side = np.asarray(s.w[side], complex)[np.ix_(pos, pos)]
            with np.errstate(invalid="ignore"):
                ws_bound = i2 * np.diag(w_side).real
            _add_upper(rep, "i_branch_ws", sids, ws_bound, np.abs(sdiag) ** 2)
            ltot = lifted_total_current(bd, s, side)
            _add_upper(rep, "i_total_max", sids, i2, np.diag(ltot).real)
            for cid, v in zip(sids, np.diag(ltot).real):
                rep.add("i_total_min", cid, v)
            _entry_margins(rep, "i_total_entries", pre, (ph, ph), ltot,
                           _outer_bound(br.i_rated, br.i_rated), strict_upper=True)
            _add_upper(rep, "s_branch", sids, br.s_rated, np.abs(sdiag))
            vmax = net.buses[side].vmax[pos]
            _entry_margins(rep, "s_entries", pre, (ph, ph), smat, _outer_bound(vmax, br.i_rated))
            # implied bound on the series-current product from this end
            with np.errstate(invalid="ignore"):
                r = br.i_rated + np.abs(ysh) @ vmax
            r = np.where(np.isnan(r), np.inf, r)
            b_side = _outer_bound(r, r)
            bound_l = b_side if bound_l is None else np.minimum(bound_l, b_side)
        _entry_margins(rep, "l_series_implied", f"branch[{bd.id}]", (ph, ph), ll, bound_l)
    for u in net.units.values():
        pos = u.phases.positions_in(net.buses[u.bus].phases)
        s_u = np.asarray(s.unit_s[u.id], complex)
        _unit_rows(rep, u, s_u)
        w_u = np.diag(np.asarray(s.w[u.bus], complex)[np.ix_(pos, pos)]).real
        with np.errstate(invalid="ignore"):
            bound = u.i_rated ** 2 * w_u
        _add_upper(rep, "unit_i", _ids(f"unit[{u.id}]", u.phases), bound, np.abs(s_u) ** 2)
    for sh in net.shunts.values():
        pos = sh.phases.positions_in(net.buses[sh.bus].phases)
        w_s = np.asarray(s.w[sh.bus], complex)[np.ix_(pos, pos)]
        i2sh = np.diag(sh.y @ w_s @ sh.y.conj().T).real
        _add_upper(rep, "shunt_i", _ids(f"shunt[{sh.id}]", sh.phases), sh.i_rated ** 2, i2sh)
    return rep.finalize()


def bounds_margins(net: Network, s) -> FeasibilityReport:
    """Bound margins in per unit; natural forms for an IVState, lifted
    forms for a LiftedState."""
    npu, spu = per_unit_pair(net, s)
    if isinstance(s, IVState):
        return _margins_iv(npu, spu)
    if isinstance(s, LiftedState):
        return _margins_lifted(npu, spu)
    raise TypeError(f"bounds_margins expects IVState or LiftedState, got {type(s).__name__}")
