import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import load
from strategies import radial_networks
from triflow.netmodel import (
    ABC, PAD_LIMIT_MAX, VAD_DEFAULT, Branch, Bus, Network, PhaseSet, Shunt, Unit, UnitSystem,
    as_per_unit, from_per_unit, series_admittance, to_per_unit, validate,
)


def two_bus(**bus2):
    b1 = Bus("1", "abc", vbase=230, vmin=200, vmax=260, vref=[230, 230j, -230j])
    b2 = Bus("2", bus2.pop("phases", "abc"), vbase=230, **bus2)
    z = np.eye(3) * (0.3 + 0.6j)
    return Network([b1, b2], [Branch("L1", "1", "2", "abc", z)], sbase=1e4)


def paths(rep):
    return [d.path for d in rep]


# phase sets ---------------------------------------------------------------------

def test_phase_set_parse_orders_and_positions():
    ps = PhaseSet.parse("ca")
    assert str(ps) == "ac"
    assert PhaseSet.parse("a,b") == PhaseSet(("a", "b"))
    assert ps.positions_in(ABC) == [0, 2]
    assert ps.issubset(ABC) and not ABC.issubset(ps)
    assert "c" in ps and len(ps) == 2


@pytest.mark.parametrize("bad", ["", "abd", "aab", ("b", "a")])
def test_phase_set_rejects(bad):
    with pytest.raises(ValueError):
        PhaseSet.parse(bad) if bad != ("b", "a") else PhaseSet(bad)


# elements ---------------------------------------------------------------------------

def test_defaults_broadcast_and_freeze():
    b = Bus("x", "ab")
    assert b.vmin.tolist() == [0.0, 0.0]
    assert np.all(np.isinf(b.vmax))
    assert b.pad_min.shape == (3,) and not b.is_reference
    with pytest.raises(ValueError):
        b.vmin[0] = 1.0
    br = Branch("l", "x", "y", "a", 0.1 + 0.2j)
    assert br.z_series.shape == (1, 1)
    assert br.vad_max[0] == VAD_DEFAULT
    assert br.other_end("x") == "y"
    u = Unit("u", "x", "ab", setpoint_p=[1, 2])
    assert u.setpoint_s.tolist() == [1, 2]
    assert Unit("v", "x", "a").setpoint_s is None


def test_zero_impedance_flag():
    assert Branch("s", "1", "2", "abc", None).is_zero_impedance
    assert not Branch("s", "1", "2", "abc", 0.1).is_zero_impedance


def test_series_admittance_inverts():
    br = load("case3_unbal").branches["L12"]
    assert np.allclose(series_admittance(br) @ br.z_series, np.eye(3), atol=1e-12)


def test_network_equality_and_duplicate_ids():
    assert two_bus() == two_bus()
    assert two_bus() != two_bus(vmax=300)
    b = Bus("1", "abc")
    with pytest.raises(ValueError, match="duplicate bus"):
        Network([b, b])


def test_collections_are_read_only():
    net = two_bus()
    with pytest.raises(TypeError):
        net.buses["3"] = Bus("3", "a")


# topology --------------------------------------------------------------------------

def test_radial_and_meshed_detection():
    assert load("case3_unbal").is_radial()
    assert not load("case3_mesh").is_radial()
    net = two_bus()
    par = Network(net.buses, [*net.branches.values(),
                              Branch("L2", "1", "2", "abc", np.eye(3))], sbase=1e4)
    assert not par.is_radial()
    assert net.leaf_buses() == ["2"]
    assert [a[1:] for a in net.arcs()] == [("1", "2"), ("2", "1")]


# validation --------------------------------------------------------------------------

def test_fixtures_validate(fixture_name):
    rep = validate(load(fixture_name))
    assert rep.ok, str(rep)


def test_validation_collects_every_problem():
    b1 = Bus("1", "ab", vbase=-1, vmin=[5, 5], vmax=[1, 1], vref=[1, 1])
    b2 = Bus("2", "a", pad_min=[-1, 0, 0])
    brs = [Branch("L1", "1", "2", "ab", np.eye(2)), Branch("L2", "1", "9", "a", 1.0),
           Branch("L3", "1", "1", "a", 1.0, vad_max=2.0)]
    units = [Unit("u", "2", "a", p_min=1, p_max=0)]
    shunts = [Shunt("s", "2", "a", 1.0, i_rated=-1)]
    rep = validate(Network([b1, b2], brs, units, shunts, sbase=0))
    got = paths(rep)
    for want in ("network.sbase", "bus[1].vbase", "bus[1]", "bus[2].pad_min",
                 "branch[L1].phases", "branch[L2].to_bus", "branch[L3]",
                 "branch[L3].vad_max", "unit[u]", "shunt[s].i_rated"):
        assert want in got, (want, got)


def test_validation_needs_reference():
    net = Network([Bus("1", "a")])
    assert paths(validate(net)) == ["network"]


def test_pad_diagnostic_names_restriction():
    rep = validate(two_bus(pad_max=[PAD_LIMIT_MAX + 0.1] * 3))
    msg = [d.message for d in rep if d.path == "bus[2].pad_max"]
    assert msg and "[-pi/6, pi/3]" in msg[0]


def test_shape_mismatch_reported():
    net = two_bus()
    bad = dataclasses.replace(net.branches["L1"], z_series=np.eye(2))
    rep = validate(Network(net.buses, [bad], sbase=1e4))
    assert "branch[L1].z_series" in paths(rep)


def test_vref_outside_limits():
    b1 = Bus("1", "a", vmin=1.0, vmax=2.0, vref=[3.0])
    assert "bus[1].vref" in paths(validate(Network([b1])))


# per unit --------------------------------------------------------------------------

def test_per_unit_bases():
    net = load("case3_unbal")
    b = net.buses["1"]
    assert net.zbase("1") == pytest.approx(b.vbase ** 2 / net.sbase)
    assert net.ibase("1") == pytest.approx(net.sbase / b.vbase)
    pu = to_per_unit(net)
    assert pu.unit_system is UnitSystem.PER_UNIT
    assert np.allclose(np.abs(pu.buses["1"].vref), 1.0)
    assert as_per_unit(pu) is pu
    with pytest.raises(ValueError):
        to_per_unit(pu)
    with pytest.raises(ValueError):
        from_per_unit(net)


def _close(a, b):
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray):
            assert np.allclose(x, y, rtol=1e-12, atol=0, equal_nan=True), f.name
        else:
            assert x == y, f.name


@settings(max_examples=40, deadline=None)
@given(radial_networks())
def test_per_unit_round_trip(net):
    back = from_per_unit(to_per_unit(net))
    for name in ("buses", "branches", "units", "shunts"):
        a, b = getattr(net, name), getattr(back, name)
        assert list(a) == list(b)
        for k in a:
            _close(a[k], b[k])


def test_infinite_bounds_survive_scaling():
    pu = to_per_unit(two_bus())
    assert math.isinf(pu.buses["2"].vmax[0])
    assert math.isinf(pu.branches["L1"].i_rated[0])
