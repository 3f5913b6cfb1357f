import math

import numpy as np
import pytest

from conftest import load, solved
from triflow.feasibility import (
    FORMULATIONS, PROFILES, ToleranceProfile, check_bounds, cross_validate, fmt, get_profile,
)
from triflow.netmodel import Branch, Bus, Network, Unit
from triflow.pfsolver import lift, solve_newton


def test_solved_fixtures_are_consistent(fixture_name):
    net, s = solved(fixture_name)
    rep = cross_validate(net, s)
    assert rep.consistent, rep.failures()
    assert rep.bounds_ok
    assert set(rep.residuals) == set(FORMULATIONS)
    assert all(n <= 1e-9 for n in rep.norms.values())
    assert rep.worst_rank <= 1e-10


def test_perturbed_state_is_inconsistent():
    net, s = solved("case3_unbal")
    bad = s.copy()
    bad.i_series["L23"] = bad.i_series["L23"] * 1.001
    rep = cross_validate(net, bad)
    assert rep.verdict == "inconsistent"
    forms = {f for f, *_ in rep.failures()}
    assert "iv" in forms and "bfm_lifted" in forms


def test_profile_controls_verdict():
    net, s = solved("case2_bal")
    bad = s.copy()
    bad.v["2"] = bad.v["2"] * (1 + 1e-8)
    assert not cross_validate(net, bad, get_profile("strict")).consistent
    assert cross_validate(net, bad, get_profile("loose")).consistent


def test_profiles():
    assert set(PROFILES) == {"default", "strict", "loose"}
    with pytest.raises(ValueError, match="unknown tolerance profile"):
        get_profile("tight")
    with pytest.raises(ValueError):
        ToleranceProfile(eq_tol=-1)
    p = ToleranceProfile()
    assert p.tol_for("rank") == p.rank_tol and p.tol_for("kcl") == p.eq_tol


def test_zero_impedance_marks_admittance_forms_not_applicable():
    b = [Bus("1", "a", vref=[1.0]), Bus("2", "a"), Bus("3", "a")]
    brs = [Branch("L", "1", "2", "a", 0.1 + 0.2j), Branch("sw", "2", "3", "a", 0)]
    net = Network(b, brs, [Unit("u", "3", "a", setpoint_p=0.1, setpoint_q=0.02)], sbase=1.0)
    s, _ = solve_newton(net)
    rep = cross_validate(net, s)
    for form in ("polar", "rect", "bim_lifted"):
        assert rep.residuals[form] is None and "sw" in rep.not_applicable[form]
    assert rep.consistent
    assert any("not-applicable" in ln for ln in rep.to_lines())


def test_report_lines_are_deterministic():
    net, s = solved("case3_unbal")
    a = cross_validate(net, s).to_lines()
    b = cross_validate(net, s.copy()).to_lines()
    assert a == b
    assert a[0] == "verdict = consistent"
    assert "[bounds lifted]" in a


def test_bound_violation_makes_bounds_fail():
    net, s = solved("case2_bal")
    bad = s.copy()
    bad.v["2"] = bad.v["2"] * 0.85
    rep = check_bounds(net, bad)
    assert not rep.feasible(rep.tol)
    assert not check_bounds(net, lift(net, bad)).feasible(1e-9)


def test_fmt_twelve_digits():
    assert fmt(math.pi) == "3.14159265359"
    assert fmt(1e-20) == "1e-20"
    assert fmt(np.float64(2.0)) == "2"


def test_reference_vmin_zero_skips_row():
    net = load("noload")
    s, _ = solve_newton(net)
    rep = check_bounds(net, s)
    assert rep.feasible(1e-9)
