"""Acceptance suite: one test per criterion, each a single pass/fail line
under ``pytest -v``. Tolerances are the contractual ones; do not relax."""

import math
import time

import numpy as np

from conftest import FIXTURES, MALFORMED, RADIAL, fixture_path, load, solved
from triflow.feasibility import cross_validate
from triflow.formulations import (
    IVState, branch_losses, state_to_per_unit, vad_margins_lifted, vad_margins_polar,
    vad_margins_rect, vad_status,
)
from triflow.ingest import ParseError, parse_dss_subset, parse_native
from triflow.netmodel import PAD_LIMIT_MAX, PAD_LIMIT_MIN, Bus, Network, to_per_unit, validate
from triflow.pfsolver import (
    IVSystem, iv_to_polar, iv_to_rect, lift, solve_newton, solve_sweep,
)
from triflow.sdpexport import build_bfm_sdp, evaluate, point_from_lifted, read_sdpa, write_sdpa


def fresh(name):
    return parse_native(fixture_path(name).read_bytes())


def test_criterion_1_newton_matches_sweep_oracle():
    for name in ("case2_bal", "case3_unbal"):
        net = fresh(name)
        t0 = time.perf_counter()
        sn, _ = solve_newton(net)
        t1 = time.perf_counter()
        ss, _ = solve_sweep(net)
        t2 = time.perf_counter()
        assert t1 - t0 < 1.0 and t2 - t1 < 1.0, (name, t1 - t0, t2 - t1)
        pn, ps = state_to_per_unit(net, sn), state_to_per_unit(net, ss)
        for b in net.buses:
            err = np.abs(pn.v[b] - ps.v[b]).max()
            assert err <= 1e-8, (name, b, err)


def test_criterion_2_five_formulations_consistent():
    for name in FIXTURES:
        net, s = solved(name)
        t0 = time.perf_counter()
        rep = cross_validate(net, s)
        assert time.perf_counter() - t0 < 1.0, name
        assert set(rep.norms) == {"iv", "polar", "rect", "bim_lifted", "bfm_lifted"}
        for form, norm in rep.norms.items():
            assert norm is not None and norm <= 1e-6, (name, form, norm)
        assert rep.worst_rank <= 1e-10, (name, rep.worst_rank)


def test_criterion_3_loss_balance():
    for name in FIXTURES:
        net, s = solved(name)
        for br, parts in branch_losses(net, lift(net, s)).items():
            losses = parts["series"] + parts["shunt_from"] + parts["shunt_to"]
            gap = np.abs(np.diag(parts["flow_sum"]) - np.diag(losses)).max()
            assert gap <= 1e-9, (name, br, gap)


def _random_iv_point(system, net, rng):
    v, i = {}, {}
    for b in net.buses.values():
        k = np.array(["abc".index(p) for p in b.phases])
        ang = -2 * np.pi / 3 * k + rng.uniform(-0.3, 0.3, k.size)
        v[b.id] = rng.uniform(0.9, 1.1, k.size) * np.exp(1j * ang)
    for br in net.branches.values():
        n = len(br.phases)
        i[br.id] = 0.5 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return system.pack(v, i)


def test_criterion_4_jacobian_central_difference():
    rng = np.random.default_rng(2024)
    h = 1e-6
    for name in FIXTURES:
        pu = to_per_unit(load(name))
        system = IVSystem(pu)
        for _ in range(10):
            x = _random_iv_point(system, pu, rng)
            jac = system.jacobian(x)
            fd = np.empty_like(jac)
            for k in range(x.size):
                e = np.zeros_like(x)
                e[k] = h
                fd[:, k] = (system.residual(x + e) - system.residual(x - e)) / (2 * h)
            rel = np.abs(jac - fd).max() / max(1.0, np.abs(jac).max())
            assert rel <= 1e-5, (name, rel)


def test_criterion_5_angle_bound_forms_agree():
    """Per branch and phase, polar, rectangular and lifted forms give the same
    satisfied/violated status. Each random state is checked against the
    fixture's own bounds and against a random bound pair, so both outcomes
    occur. Product-form margins are normalized to the angle scale so the
    tie band |margin| < 1e-12 means the same thing in every form."""
    rng = np.random.default_rng(5)
    seen = {True: 0, False: 0}
    for name in FIXTURES:
        net = load(name)
        for _ in range(100):
            v = {}
            for b in net.buses.values():
                k = np.array(["abc".index(p) for p in b.phases])
                # each bus within +-pi/4 of nominal: every same-phase
                # difference stays inside (-pi/2, pi/2)
                ang = -2 * np.pi / 3 * k + rng.uniform(-np.pi / 4, np.pi / 4, k.size)
                v[b.id] = b.vbase * rng.uniform(0.9, 1.1, k.size) * np.exp(1j * ang)
            i = {br: np.zeros(len(net.branches[br].phases), complex) for br in net.branches}
            s = IVState(v, i, {u: np.zeros(len(net.units[u].phases), complex)
                               for u in net.units})
            pol, rec, lif = iv_to_polar(net, s), iv_to_rect(net, s), lift(net, s)
            rand_lo, rand_hi = np.sort(rng.uniform(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3, 2))
            for br in net.branches.values():
                f, t = br.from_bus, br.to_bus
                pf = br.phases.positions_in(net.buses[f].phases)
                pt = br.phases.positions_in(net.buses[t].phases)
                w_ij = np.diag(lif.cross(f, t)[np.ix_(pf, pt)])
                for lo, hi in ((br.vad_min, br.vad_max), (rand_lo, rand_hi)):
                    a = vad_status(*vad_margins_polar(pol.va[f][pf], pol.va[t][pt], lo, hi))
                    b_ = vad_status(*vad_margins_rect(rec.vre[f][pf], rec.vim[f][pf],
                                                      rec.vre[t][pt], rec.vim[t][pt],
                                                      lo, hi, normalized=True))
                    c = vad_status(*vad_margins_lifted(w_ij, lo, hi, normalized=True))
                    a, b_, c = (np.broadcast_to(x, (len(pf),)) for x in (a, b_, c))
                    assert np.array_equal(a, b_) and np.array_equal(a, c), (name, br.id)
                    for flag in a:
                        seen[bool(flag)] += 1
    assert seen[True] > 0 and seen[False] > 0, seen


def test_criterion_6_export_feasibility_transfer():
    for name in RADIAL:
        net, s = solved(name)
        text = write_sdpa(build_bfm_sdp(net))
        f = read_sdpa(text)
        res = evaluate(f, point_from_lifted(net, lift(net, s), f.var_names))
        assert res.max_violation <= 1e-8, (name, res.worst, res.max_violation)


def test_criterion_7_per_unit_invariance():
    for name in FIXTURES:
        net = load(name)
        s_si, _ = solve_newton(net)
        s_pu, _ = solve_newton(to_per_unit(net))
        conv = state_to_per_unit(net, s_si)
        for b in net.buses:
            assert np.abs(conv.v[b] - s_pu.v[b]).max() <= 1e-9, (name, b)
        for br in net.branches:
            assert np.abs(conv.i_series[br] - s_pu.i_series[br]).max() <= 1e-9, (name, br)


def test_criterion_8_parser_robustness():
    rng = np.random.default_rng(8)
    seeds = [fixture_path(n).read_bytes() for n in FIXTURES]
    seeds.append((fixture_path("case2_bal").parent / "sample_feeder.dss").read_bytes())
    inputs = [rng.integers(0, 256, rng.integers(0, 300), dtype=np.uint8).tobytes()
              for _ in range(500)]
    for _ in range(500):
        base = bytearray(seeds[rng.integers(len(seeds))])
        for _ in range(rng.integers(1, 6)):
            base[rng.integers(len(base))] = rng.integers(0, 256)
        inputs.append(bytes(base))
    for data in inputs:
        for parser in (parse_native, parse_dss_subset):
            try:
                parser(data)
            except ParseError as exc:
                assert exc.diagnostics and all(d.line >= 1 for d in exc.diagnostics)
    files = sorted(MALFORMED.iterdir())
    assert len(files) >= 20
    hits = 0
    for path in files:
        raw = path.read_bytes()
        want = int(raw.split(b"\n", 1)[0].decode().split("expect-line:")[1])
        parser = parse_dss_subset if path.suffix == ".dss" else parse_native
        try:
            parser(raw)
        except ParseError as exc:
            lines = [d.line for d in exc.diagnostics if d.severity == "error"]
            hits += want in lines
    assert hits == len(files), f"{hits}/{len(files)} malformed files diagnosed on their line"


def test_criterion_9_pad_restriction_enforced():
    ref = Bus("1", "abc", vref=np.exp(1j * np.radians([0, -120, 120])))
    for bad in ({"pad_min": [PAD_LIMIT_MIN - 0.01] * 3}, {"pad_max": [PAD_LIMIT_MAX + 0.01] * 3}):
        key = next(iter(bad))
        rep = validate(Network([ref, Bus("2", "abc", **bad)], sbase=1.0))
        hits = [d for d in rep if d.path == f"bus[2].{key}"]
        assert hits and key in hits[0].message and "pi/6" in hits[0].message
    text = fixture_path("case3_unbal").read_text().replace(
        "[bus 3]\n", f"[bus 3]\npad_max = {math.pi / 3 + 0.05!r}\n", 1)
    try:
        parse_native(text)
    except ParseError as exc:
        msgs = [d for d in exc.diagnostics if "pad_max" in d.message]
        assert msgs and msgs[0].line > 1
    else:
        raise AssertionError("out-of-range pad bound accepted")
