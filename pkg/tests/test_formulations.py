import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import RADIAL, balanced, load, solved
from triflow.errors import StateShapeError
from triflow.formulations import (
    IVState, bounds_margins, branch_losses, pad_margins_lifted, pad_margins_polar,
    pad_margins_rect, residual_bfm_lifted, residual_bim_lifted, residual_iv, residual_polar,
    residual_rect, state_from_per_unit, state_to_per_unit, vad_margins_bfm, vad_margins_lifted,
    vad_margins_polar, vad_margins_rect, vad_status,
)
from triflow.netmodel import to_per_unit
from triflow.pfsolver import iv_to_polar, iv_to_rect, lift

EVALUATORS = {
    "iv": lambda net, s: residual_iv(net, s),
    "polar": lambda net, s: residual_polar(net, iv_to_polar(net, s)),
    "rect": lambda net, s: residual_rect(net, iv_to_rect(net, s)),
    "bim_lifted": lambda net, s: residual_bim_lifted(net, lift(net, s)),
    "bfm_lifted": lambda net, s: residual_bfm_lifted(net, lift(net, s)),
}


@pytest.mark.parametrize("form", EVALUATORS)
def test_solution_satisfies_every_formulation(fixture_name, form):
    net, s = solved(fixture_name)
    rep = EVALUATORS[form](net, s)
    assert rep.inf_norm() <= 1e-9, rep.norms


@pytest.mark.parametrize("form", EVALUATORS)
def test_perturbation_is_detected(form):
    net, s = solved("case3_unbal")
    bad = s.copy()
    vb = net.buses["3"].vbase
    bad.v["3"] = bad.v["3"] + 1e-3 * vb * np.array([1, 1j, -1])
    assert EVALUATORS[form](net, bad).inf_norm() > 1e-5


def test_reference_mismatch_lands_in_ref_group():
    net, s = solved("case2_bal")
    bad = s.copy()
    bad.v["1"] = bad.v["1"] * 1.01
    assert residual_iv(net, bad).inf_norm("ref") == pytest.approx(0.01, rel=1e-9)
    assert residual_bfm_lifted(net, lift(net, bad)).inf_norm("ref") > 1e-3


def test_rank_group_detects_mixture():
    net, s = solved("case2_bal")
    lifted = lift(net, s)
    lifted.w["2"] = lifted.w["2"] + 100.0 * np.eye(3)
    rep = residual_bfm_lifted(net, lifted)
    assert rep.inf_norm("rank") > 1e-4


def test_state_shape_checked():
    net, s = solved("case2_bal")
    bad = IVState({**s.v, "2": s.v["2"][:2]}, s.i_series, s.unit_s)
    with pytest.raises(StateShapeError):
        residual_iv(net, bad)
    with pytest.raises(StateShapeError):
        residual_iv(net, IVState(s.v, {}, s.unit_s))


def test_residuals_are_unit_free():
    net, s = solved("case3_unbal")
    pnet = to_per_unit(net)
    ps = state_to_per_unit(net, s)
    for form, ev in EVALUATORS.items():
        a, b = ev(net, s).groups, ev(pnet, ps).groups
        assert a.keys() == b.keys()
        for g in a:
            assert a[g].keys() == b[g].keys()
            assert np.allclose(list(a[g].values()), list(b[g].values()), atol=1e-14), (form, g)
    back = state_from_per_unit(pnet, ps)
    for k in s.v:
        assert np.allclose(back.v[k], s.v[k], rtol=1e-14)


@pytest.mark.parametrize("name", RADIAL)
def test_loss_identity_full_matrix(name):
    net, s = solved(name)
    for bid, parts in branch_losses(net, lift(net, s)).items():
        losses = parts["series"] + parts["shunt_from"] + parts["shunt_to"]
        assert np.abs(parts["flow_sum"] - losses).max() <= 1e-12, bid


def test_series_loss_is_positive_real():
    net, s = solved("case3_unbal")
    for parts in branch_losses(net, lift(net, s)).values():
        assert np.trace(parts["series"]).real > 0


# angle bounds ----------------------------------------------------------------------------

angles = st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)
bounds = st.tuples(angles, angles).map(sorted)
TIE = 1e-12


def off_tie_edge(*margins):
    # rounding (~1e-16) can put a margin sitting exactly on the tie edge on
    # either side in different forms
    m = np.abs(np.concatenate([np.atleast_1d(x) for x in margins]))
    return bool(np.all(np.abs(m - TIE) > 1e-14))


@settings(max_examples=300)
@given(st.floats(-math.pi, math.pi), angles, bounds, st.floats(0.8, 1.2), st.floats(0.8, 1.2))
def test_vad_forms_agree(base, delta, lohi, mi, mj):
    lo, hi = lohi
    ui = mi * np.exp(1j * (base + delta))
    uj = mj * np.exp(1j * base)
    polar = vad_margins_polar(np.angle(ui), np.angle(uj), lo, hi)
    assume(off_tie_edge(*polar))
    pol = vad_status(*polar)
    rec = vad_status(*vad_margins_rect(ui.real, ui.imag, uj.real, uj.imag, lo, hi, True))
    lif = vad_status(*vad_margins_lifted(ui * np.conj(uj), lo, hi, True))
    pol, rec, lif = (np.atleast_1d(x)[0] for x in (pol, rec, lif))
    assert pol == rec == lif


@settings(max_examples=300)
@given(st.lists(st.floats(-math.pi / 3 + 1e-3, math.pi / 3 - 1e-3), min_size=3, max_size=3),
       st.floats(-math.pi / 6, math.pi / 3), st.floats(-math.pi / 6, math.pi / 3),
       st.floats(-math.pi, math.pi))
def test_pad_forms_agree(offsets, p, q, rot):
    pad_min, pad_max = np.full(3, min(p, q)), np.full(3, max(p, q))
    u = balanced(1.0, np.degrees(rot)) * np.exp(1j * np.array(offsets) / 2)
    polar = pad_margins_polar(np.angle(u), pad_min, pad_max)
    assume(off_tie_edge(*polar))
    pol = vad_status(*polar)
    rec = vad_status(*pad_margins_rect(u.real, u.imag, pad_min, pad_max, True))
    lif = vad_status(*pad_margins_lifted(np.outer(u, u.conj()), pad_min, pad_max, True))
    assert np.array_equal(pol, rec) and np.array_equal(pol, lif)


def test_vad_bfm_form_matches_cross_product():
    net, s = solved("case3_unbal")
    lifted = lift(net, s)
    br = net.branches["L23"]
    pn, ps = to_per_unit(net), state_to_per_unit(net, lifted)
    z = pn.branches["L23"].z_series
    a = vad_margins_bfm(ps.w["2"], ps.s_series["L23"], z, -0.3, 0.3)
    b = vad_margins_lifted(np.diag(ps.cross("2", "3")), -0.3, 0.3)
    assert np.allclose(a, b, atol=1e-12)
    assert br.phases == net.buses["2"].phases


def test_normalized_margin_is_sine_of_slack():
    w = 2.5 * np.exp(1j * np.array([0.2, -0.4]))
    lo, hi = vad_margins_lifted(w, -0.1, 0.3, normalized=True)
    assert np.allclose(lo, np.sin(np.array([0.2, -0.4]) + 0.1))
    assert np.allclose(hi, np.sin(0.3 - np.array([0.2, -0.4])))
    raw = vad_margins_lifted(w, -0.1, 0.3)
    assert np.allclose(raw[0], lo * 2.5 / np.cos(-0.1))
    assert np.allclose(vad_margins_lifted(np.zeros(1), -0.1, 0.1, True), 0.0)


def test_bound_families_for_solution(fixture_name):
    net, s = solved(fixture_name)
    for rep in (bounds_margins(net, s), bounds_margins(net, lift(net, s))):
        assert not rep.violations(1e-9), rep.violations(1e-9)[:3]


def test_bound_violation_reported():
    net, s = solved("case2_bal")
    bad = s.copy()
    bad.v["2"] = bad.v["2"] * 0.8
    rep = bounds_margins(net, bad)
    cid, val = rep.worst("vm_min")
    assert cid.startswith("bus[2]") and val < 0
    lrep = bounds_margins(net, lift(net, bad))
    assert lrep.worst("w_min")[1] < 0


def test_iv_and_lifted_bounds_share_verdicts():
    net = load("case3_unbal")
    _, s = solved("case3_unbal")
    rng = np.random.default_rng(7)
    for _ in range(20):
        st_ = s.copy()
        for b in net.buses:
            if b != "1":
                st_.v[b] = st_.v[b] * rng.uniform(0.85, 1.1, 3)
        iv, lf = bounds_margins(net, st_), bounds_margins(net, lift(net, st_))
        for fam_iv, fam_l in (("vm_min", "w_min"), ("vm_max", "w_max")):
            a = {k: v >= -1e-12 for k, v in iv.families[fam_iv].items()}
            b = {k: v >= -1e-12 for k, v in lf.families[fam_l].items()}
            assert a == b
