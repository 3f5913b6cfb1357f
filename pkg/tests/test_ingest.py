import math
import re

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import DATA, FIXTURES, MALFORMED, fixture_path, load
from strategies import radial_networks
from triflow.ingest import ParseError, parse_dss_subset, parse_native, write_native
from triflow.netmodel import Bus, Network, UnitSystem, to_per_unit

MINIMAL = """format = triflow-net 1
unit_system = SI
sbase = 1000

[bus src]
phases = abc
vref = (230, 0), (-115, -199.18584287042088), (-115, 199.18584287042088)
"""


def errors(exc_info):
    return [d for d in exc_info.value.diagnostics if d.severity == "error"]


# native format ------------------------------------------------------------------------

def test_minimal_document_is_one_bus():
    net = parse_native(MINIMAL)
    assert list(net.buses) == ["src"]
    assert not net.branches and not net.units
    assert net.buses["src"].is_reference


def test_case2_bal_counts():
    net = load("case2_bal")
    assert (len(net.buses), len(net.branches), len(net.units)) == (2, 1, 1)


def test_bytes_and_str_inputs_agree():
    raw = fixture_path("case3_unbal").read_bytes()
    assert parse_native(raw) == parse_native(raw.decode())


def test_matrix_arity_error_names_path():
    text = MINIMAL + """
[bus 2]
phases = abc

[branch L1]
from_bus = src
to_bus = 2
phases = abc
z_series = (1, 0), (0, 0), (0, 0); (0, 0), (1, 0), (0, 0); (0, 0), (1, 0)
"""
    with pytest.raises(ParseError) as ei:
        parse_native(text)
    (d,) = errors(ei)
    assert "branch[L1].z_series" in d.message
    assert d.line == text.split("\n").index(
        next(ln for ln in text.split("\n") if ln.startswith("z_series"))) + 1


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip_fixtures(name):
    net = load(name)
    text = write_native(net)
    assert parse_native(text) == net
    assert write_native(parse_native(text)) == text


def test_one_bus_writer_and_per_unit_tag():
    net = parse_native(MINIMAL)
    text = write_native(net)
    assert len(re.findall(r"^\[bus ", text, re.M)) == 1
    assert not re.search(r"^\[(branch|unit|shunt) ", text, re.M)
    pu = to_per_unit(load("case3_unbal"))
    text = write_native(pu)
    assert "unit_system = PER_UNIT" in text
    back = parse_native(text)
    assert back.unit_system is UnitSystem.PER_UNIT and back == pu


@settings(max_examples=60, deadline=None)
@given(radial_networks())
def test_round_trip_property(net):
    assert parse_native(write_native(net)) == net


@settings(max_examples=30, deadline=None)
@given(radial_networks())
def test_round_trip_property_per_unit(net):
    pu = to_per_unit(net)
    assert parse_native(write_native(pu)) == pu


def test_unbounded_entries_written_as_none():
    net = Network([Bus("1", "a", vref=[1.0]), Bus("2", "ab", vmax=[2.0, math.inf])], sbase=1)
    text = write_native(net)
    assert "vmax = 2.0, none" in text
    assert parse_native(text) == net


@pytest.mark.parametrize("bad, needle", [
    ("sbase = nan", "sbase"), ("sbase = inf", "sbase"), ("colour = red", "colour"),
])
def test_header_rejections(bad, needle):
    text = MINIMAL.replace("sbase = 1000", bad) if bad.startswith("sbase") else \
        MINIMAL.replace("sbase = 1000", "sbase = 1000\n" + bad)
    with pytest.raises(ParseError) as ei:
        parse_native(text)
    assert any(needle in d.message for d in errors(ei))
    assert all(d.line >= 1 for d in ei.value.diagnostics)


# DSS subset --------------------------------------------------------------------------

TWO_LINE = "New Circuit.demo basekv=0.4 pu=1.0 bus1=src\nNew Load.ld bus1=n2 kw=3 kvar=1\n"


def test_dss_circuit_plus_load_hand_translation():
    net = parse_dss_subset(TWO_LINE)
    assert list(net.buses) == ["src", "n2"]
    vb = 400 / math.sqrt(3)
    src = net.buses["src"]
    assert src.vbase == pytest.approx(vb)
    want = vb * np.exp(1j * np.radians([0, -120, 120]))
    assert np.allclose(src.vref, want, rtol=1e-12)
    (u,) = net.units.values()
    assert u.bus == "n2" and str(u.phases) == "abc"
    assert np.allclose(u.setpoint_p, 1000) and np.allclose(u.setpoint_q, 1000 / 3)


def test_dss_transformer_unsupported():
    with pytest.raises(ParseError) as ei:
        parse_dss_subset(TWO_LINE + "New Transformer.t1 buses=[src n2]\n")
    (d,) = errors(ei)
    assert "unsupported element" in d.message and d.line == 3


LINECODE = """New Circuit.c basekv=0.4 bus1=a
New Linecode.lc nphases=3 units=km rmatrix=[0.2 | 0.05 0.2 | 0.05 0.05 0.2] xmatrix=[0.4 | 0.1 0.4 | 0.1 0.1 0.4] cmatrix=[10 | -2 10 | -2 -2 10]
New Line.l1 bus1=a bus2=b linecode=lc length={length} units=km
"""


def test_dss_km_scaling():
    full = parse_dss_subset(LINECODE.format(length=1.0)).branches["l1"]
    half = parse_dss_subset(LINECODE.format(length=0.5)).branches["l1"]
    assert np.allclose(half.z_series, 0.5 * full.z_series, rtol=1e-15)
    assert half.z_series[0, 0] == pytest.approx(0.1 + 0.2j)
    assert half.z_series[1, 0] == pytest.approx(0.025 + 0.05j)


def test_dss_metres_of_km_linecode():
    km = parse_dss_subset(LINECODE.format(length=0.3)).branches["l1"]
    m = parse_dss_subset(LINECODE.format(length=300).replace("units=km\n", "units=m\n"))
    assert np.allclose(m.branches["l1"].z_series, km.z_series, rtol=1e-12)


@pytest.mark.parametrize("freq", [50.0, 60.0])
def test_dss_cmatrix_to_susceptance(freq):
    br = parse_dss_subset(LINECODE.format(length=2.0), frequency=freq).branches["l1"]
    # nF/km * km, half to each end: b = w C / 2
    c_self, c_mut = 10e-9 * 2.0, -2e-9 * 2.0
    w = 2 * math.pi * freq
    assert br.y_sh_from[0, 0] == pytest.approx(1j * w * c_self / 2, rel=1e-12)
    assert br.y_sh_to[2, 1] == pytest.approx(1j * w * c_mut / 2, rel=1e-12)
    assert np.array_equal(br.y_sh_from, br.y_sh_to)


def test_dss_case_insensitive_and_continuation():
    text = ("new circuit.C BaseKV=0.4 BUS1=a\nNEW LINE.l1 bus1=a bus2=b phases=3\n"
            "~ rmatrix=[1 | 0 1 | 0 0 1] xmatrix=[1 | 0 1 | 0 0 1]\n"
            "more length=2 units=none\n")
    net = parse_dss_subset(text)
    assert np.allclose(net.branches["l1"].z_series, (2 + 2j) * np.eye(3))


def test_dss_single_phase_load_on_suffix_conductor():
    net = parse_dss_subset(TWO_LINE.replace("bus1=n2 kw=3", "bus1=n2.3 phases=1 kw=3"))
    u = net.units["ld"]
    assert str(u.phases) == "c" and u.setpoint_p[0] == pytest.approx(3000)


def test_dss_pf_load():
    net = parse_dss_subset(TWO_LINE.replace("kvar=1", "pf=0.8"))
    u = net.units["ld"]
    assert u.setpoint_q[0] == pytest.approx(1000 * 0.75)


def test_dss_delta_load_out_of_scope():
    with pytest.raises(ParseError) as ei:
        parse_dss_subset(TWO_LINE.replace("kvar=1", "kvar=1 conn=delta"))
    assert "out of scope" in errors(ei)[0].message


def test_sample_feeder_converts_to_native():
    net = parse_dss_subset((DATA / "sample_feeder.dss").read_text())
    assert parse_native(write_native(net)) == net
    assert str(net.branches["l3"].phases) == "b"


# robustness ---------------------------------------------------------------------------

def _survives(parser, data):
    try:
        parser(data)
    except ParseError as exc:
        assert exc.diagnostics
        for d in exc.diagnostics:
            assert d.severity in ("error", "warning") and d.line >= 1 and d.message


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.binary(max_size=400))
def test_fuzz_bytes_native(data):
    _survives(parse_native, data)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.binary(max_size=400))
def test_fuzz_bytes_dss(data):
    _survives(parse_dss_subset, data)


def _mutations(text):
    lines = text.split("\n")
    return st.one_of(
        st.integers(0, len(text)).flatmap(
            lambda k: st.text(max_size=8).map(lambda s: text[:k] + s + text[k:])),
        st.integers(0, max(0, len(lines) - 1)).map(
            lambda k: "\n".join(lines[:k] + lines[k + 1:])),
        st.integers(0, len(text)).map(lambda k: text[:k]),
    )


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(FIXTURES).flatmap(lambda n: _mutations(fixture_path(n).read_text())))
def test_fuzz_mutated_native(text):
    _survives(parse_native, text)


@settings(max_examples=200, deadline=None)
@given(_mutations((DATA / "sample_feeder.dss").read_text()))
def test_fuzz_mutated_dss(text):
    _survives(parse_dss_subset, text)


CORPUS = sorted(p.name for p in MALFORMED.iterdir())


def expected_line(path):
    first = path.read_bytes().split(b"\n", 1)[0].decode()
    return int(first.split("expect-line:")[1])


@pytest.mark.parametrize("name", CORPUS)
def test_malformed_corpus(name):
    path = MALFORMED / name
    parser = parse_dss_subset if name.endswith(".dss") else parse_native
    with pytest.raises(ParseError) as ei:
        parser(path.read_bytes())
    errs = errors(ei)
    assert errs, "no error diagnostic"
    assert expected_line(path) in [d.line for d in errs]
