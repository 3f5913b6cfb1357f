"""Minimal OpenDSS-style script reader.

Understood: ``New Circuit``, ``New Linecode``, ``New Line`` and ``New Load``
(wye only), ``~``/``more`` continuation lines, ``!`` and ``//`` comments.
``Clear``, ``Set``, ``Solve`` and ``Calcvoltagebases`` are accepted and
ignored with a warning. Everything else is an error. Keywords and names are
case-insensitive; names are lower-cased.

All buses share the circuit's base voltage (no transformers). Loads become
units with ``p_min = p_max`` and ``q_min = q_max`` at their setpoint. The
source bus becomes the reference bus; it needs no unit because its
injection is whatever balances the network.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field

import numpy as np

from triflow.ingest.native import ParseDiagnostic, ParseError
from triflow.netmodel import PHASE_NAMES, Branch, Bus, Network, Unit, validate

DEFAULT_FREQUENCY = 50.0
DEFAULT_SBASE = 1e6

# metres per length unit; "none" means the line length is already in code units
LENGTH_UNITS = {"km": 1000.0, "m": 1.0, "cm": 0.01, "ft": 0.3048, "in": 0.0254,
                "kft": 304.8, "mi": 1609.344, "none": None}

_IGNORED = {"clear", "set", "solve", "calcvoltagebases", "calcv"}
_PROPS = {
    "circuit": {"basekv", "pu", "angle", "bus1", "phases"},
    "linecode": {"nphases", "rmatrix", "xmatrix", "cmatrix", "units"},
    "line": {"bus1", "bus2", "linecode", "length", "units", "phases",
             "rmatrix", "xmatrix", "cmatrix"},
    "load": {"bus1", "phases", "kw", "kvar", "pf", "conn", "kv", "model"},
}
_NAME = re.compile(r"^[a-z0-9_\-]+$")


class _Fail(Exception):
    pass


@dataclass
class _Cmd:
    line: int
    tokens: list[str] = field(default_factory=list)


def _strip_comment(line: str) -> str:
    out, quote = [], None
    i = 0
    while i < len(line):
        ch = line[i]
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "!" or line.startswith("//", i):
            break
        out.append(ch)
        i += 1
    return "".join(out)


_CLOSE = {"[": "]", "(": ")", "{": "}", '"': '"', "'": "'"}


def _tokenize(text: str) -> list[str]:
    """Whitespace separated tokens; ``=`` is its own token and bracketed or
    quoted values are kept whole (without the delimiters)."""
    toks, i, n = [], 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace() or ch == ",":
            i += 1
        elif ch == "=":
            toks.append("=")
            i += 1
        elif ch in _CLOSE:
            j = text.find(_CLOSE[ch], i + 1)
            if j < 0:
                raise _Fail(f"unterminated {ch!r}")
            toks.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "=,":
                j += 1
            toks.append(text[i:j])
            i = j
    return toks


def _commands(text: str, err) -> list[_Cmd]:
    cmds: list[_Cmd] = []
    in_block = False
    for no, raw in enumerate(text.split("\n"), start=1):
        line = raw
        if in_block:
            if "*/" not in line:
                continue
            line = line.split("*/", 1)[1]
            in_block = False
        if line.lstrip().startswith("/*"):
            if "*/" not in line:
                in_block = True
            continue
        line = _strip_comment(line).strip()
        if not line:
            continue
        cont = False
        if line.startswith("~"):
            cont, line = True, line[1:]
        elif line.lower().split(None, 1)[0] == "more":
            cont, line = True, line[4:]
        try:
            toks = _tokenize(line)
        except _Fail as exc:
            err(no, str(exc))
            continue
        if cont:
            if not cmds:
                err(no, "continuation line without a preceding command")
                continue
            cmds[-1].tokens.extend(toks)
        else:
            cmds.append(_Cmd(no, toks))
    return cmds


def _props(tokens: list[str]) -> list[tuple[str, str]]:
    out, i = [], 0
    while i < len(tokens):
        if i + 2 < len(tokens) and tokens[i + 1] == "=" and tokens[i] != "=":
            out.append((tokens[i].lower(), tokens[i + 2]))
            i += 3
        else:
            raise _Fail(f"expected key=value, got {tokens[i]!r} (positional properties "
                        "are not supported)")
    return out


def _num(val: str, key: str) -> float:
    try:
        x = float(val)
    except ValueError:
        raise _Fail(f"property {key}: expected a number, got {val!r}") from None
    if not math.isfinite(x):
        raise _Fail(f"property {key}: expected a finite number, got {val!r}")
    return x


def _matrix(val: str, n: int, key: str) -> np.ndarray:
    """Lower-triangular or full symmetric matrix, rows separated by ``|``."""
    rows = [r.replace(",", " ").split() for r in val.split("|")]
    flat = [x for r in rows for x in r]
    nums = [_num(x, key) for x in flat]
    m = np.zeros((n, n))
    if len(rows) == n and all(len(r) == k + 1 for k, r in enumerate(rows)) or \
            (len(rows) == 1 and len(nums) == n * (n + 1) // 2 and n > 1):
        k = 0
        for a in range(n):
            for b in range(a + 1):
                m[a, b] = m[b, a] = nums[k]
                k += 1
        return m
    if len(nums) == n * n and (len(rows) == 1 or all(len(r) == n for r in rows)):
        m = np.array(nums).reshape(n, n)
        return m
    raise _Fail(f"property {key}: cannot read a {n}x{n} matrix from {len(nums)} values")


def _bus_ref(val: str, nph: int, what: str) -> tuple[str, tuple[str, ...]]:
    parts = val.lower().split(".")
    name = parts[0]
    if not _NAME.match(name):
        raise _Fail(f"invalid bus name {val!r}")
    if len(parts) == 1:
        if nph > 3:
            raise _Fail(f"{what}: at most 3 phases supported")
        return name, PHASE_NAMES[:nph]
    nodes = []
    for p in parts[1:]:
        if p not in ("0", "1", "2", "3"):
            raise _Fail(f"{what}: bus node {p!r} not supported (use 1, 2, 3 or 0)")
        if p != "0":
            nodes.append(int(p))
    if len(nodes) != nph:
        raise _Fail(f"{what}: {nph} phase(s) but bus {val!r} names {len(nodes)} conductor(s)")
    if len(set(nodes)) != len(nodes):
        raise _Fail(f"{what}: repeated conductor in {val!r}")
    return name, tuple(PHASE_NAMES[k - 1] for k in sorted(nodes))


def parse_dss_subset(data: str | bytes, frequency: float = DEFAULT_FREQUENCY,
                     sbase: float = DEFAULT_SBASE) -> Network:
    """Read a script in the supported subset; raises :class:`ParseError`.

    ``frequency`` (Hz) converts line capacitance in nF per length unit to
    susceptance, split half and half over the two branch ends.
    """
    if not (frequency > 0 and math.isfinite(frequency)):
        raise ValueError(f"frequency must be positive, got {frequency}")
    diags: list[ParseDiagnostic] = []

    def err(line, msg):
        diags.append(ParseDiagnostic("error", line, msg))

    if isinstance(data, str):
        text = data
    else:
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            line = bytes(data)[: exc.start].count(b"\n") + 1
            raise ParseError([ParseDiagnostic("error", line, "input is not valid UTF-8")]) from None

    circuit = None
    linecodes: dict[str, dict] = {}
    lines: list[tuple[int, str, dict]] = []
    loads: list[tuple[int, str, dict]] = []
    names: set[tuple[str, str]] = set()

    for cmd in _commands(text, err):
        try:
            verb = cmd.tokens[0].lower()
            if verb in _IGNORED:
                diags.append(ParseDiagnostic("warning", cmd.line, f"command {verb!r} ignored"))
                continue
            if verb != "new":
                raise _Fail(f"unsupported command {cmd.tokens[0]!r}; only New is read")
            rest = cmd.tokens[1:]
            if len(rest) >= 3 and rest[0].lower() == "object" and rest[1] == "=":
                target, rest = rest[2], rest[3:]
            elif rest:
                target, rest = rest[0], rest[1:]
            else:
                raise _Fail("New without an element")
            kind, _, name = target.partition(".")
            kind, name = kind.lower(), name.lower()
            if kind not in _PROPS:
                raise _Fail(f"unsupported element {kind!r}; supported: Circuit, Linecode, "
                            "Line, Load")
            if not _NAME.match(name):
                raise _Fail(f"invalid or missing {kind} name {target!r}")
            if (kind, name) in names:
                raise _Fail(f"duplicate {kind} {name!r}")
            names.add((kind, name))
            props = {}
            for key, val in _props(rest):
                if key not in _PROPS[kind]:
                    raise _Fail(f"unsupported property {key!r} for {kind}; supported: "
                                f"{', '.join(sorted(_PROPS[kind]))}")
                props[key] = val
            if kind == "circuit":
                if circuit is not None:
                    raise _Fail("only one Circuit is allowed")
                circuit = (cmd.line, name, props)
            elif kind == "linecode":
                linecodes[name] = _linecode(props, cmd.line)
            elif kind == "line":
                lines.append((cmd.line, name, props))
            else:
                loads.append((cmd.line, name, props))
        except _Fail as exc:
            err(cmd.line, str(exc))
        except IndexError:
            err(cmd.line, "empty command")
    if circuit is None and not any(d.severity == "error" for d in diags):
        err(1, "no New Circuit defined")
    if any(d.severity == "error" for d in diags):
        raise ParseError(diags)

    c_line, c_name, c_props = circuit
    bus_lines: dict[str, int] = {}
    bus_phases: dict[str, set[str]] = {}
    elem_lines: dict[str, int] = {}
    try:
        basekv = _num(c_props.get("basekv", "115"), "basekv")
        pu = _num(c_props.get("pu", "1.0"), "pu")
        angle = _num(c_props.get("angle", "0"), "angle")
        c_nph = int(_num(c_props.get("phases", "3"), "phases"))
        if c_nph not in (1, 2, 3):
            raise _Fail("circuit phases must be 1, 2 or 3")
        if basekv <= 0:
            raise _Fail("basekv must be positive")
        src, src_ph = _bus_ref(c_props.get("bus1", "sourcebus"), c_nph, "circuit")
    except _Fail as exc:
        raise ParseError([ParseDiagnostic("error", c_line, str(exc))]) from None
    vbase = basekv * 1000.0 / math.sqrt(3.0)
    bus_lines[src] = c_line
    bus_phases[src] = set(src_ph)

    branches = []
    for no, name, props in lines:
        try:
            branches.append(_line(name, props, linecodes, frequency))
        except _Fail as exc:
            err(no, f"line {name!r}: {exc}")
            continue
        elem_lines[f"branch[{name}]"] = no
        br = branches[-1]
        for b in (br.from_bus, br.to_bus):
            bus_lines.setdefault(b, no)
            bus_phases.setdefault(b, set()).update(br.phases)
    units = []
    for no, name, props in loads:
        try:
            units.append(_load(name, props))
        except _Fail as exc:
            err(no, f"load {name!r}: {exc}")
            continue
        elem_lines[f"unit[{name}]"] = no
        u = units[-1]
        bus_lines.setdefault(u.bus, no)
        bus_phases.setdefault(u.bus, set()).update(u.phases)
    if any(d.severity == "error" for d in diags):
        raise ParseError(diags)

    shift = {"a": 0.0, "b": -120.0, "c": 120.0}
    buses = []
    for b in bus_lines:
        ph = "".join(p for p in PHASE_NAMES if p in bus_phases[b])
        vref = None
        if b == src:
            vref = [cmath.rect(pu * vbase, math.radians(angle + shift[p])) for p in ph]
        buses.append(Bus(b, ph, vbase=vbase, vref=vref))
    for b, no in bus_lines.items():
        elem_lines[f"bus[{b}]"] = no
    try:
        net = Network(buses, branches, units, sbase=sbase)
    except ValueError as exc:
        raise ParseError([ParseDiagnostic("error", c_line, str(exc))]) from None
    rep = validate(net)
    if not rep.ok:
        raise ParseError([
            ParseDiagnostic("error", elem_lines.get(d.path.split(".", 1)[0], c_line), str(d))
            for d in rep.diagnostics
        ])
    return net


def _linecode(props: dict, line: int) -> dict:
    n = int(_num(props.get("nphases", "3"), "nphases"))
    if n not in (1, 2, 3):
        raise _Fail("nphases must be 1, 2 or 3")
    units = props.get("units", "none").lower()
    if units not in LENGTH_UNITS:
        raise _Fail(f"unknown length unit {units!r}; use one of {', '.join(LENGTH_UNITS)}")
    if "rmatrix" not in props or "xmatrix" not in props:
        raise _Fail("rmatrix and xmatrix are required")
    return {
        "n": n,
        "units": units,
        "r": _matrix(props["rmatrix"], n, "rmatrix"),
        "x": _matrix(props["xmatrix"], n, "xmatrix"),
        "c": _matrix(props["cmatrix"], n, "cmatrix") if "cmatrix" in props else np.zeros((n, n)),
    }


def _line(name: str, props: dict, linecodes: dict, frequency: float) -> Branch:
    nph = int(_num(props.get("phases", "3"), "phases"))
    if nph not in (1, 2, 3):
        raise _Fail("phases must be 1, 2 or 3")
    if "bus1" not in props or "bus2" not in props:
        raise _Fail("bus1 and bus2 are required")
    f, ph_f = _bus_ref(props["bus1"], nph, "bus1")
    t, ph_t = _bus_ref(props["bus2"], nph, "bus2")
    if ph_f != ph_t:
        raise _Fail(f"conductors differ between ends ({''.join(ph_f)} vs {''.join(ph_t)})")
    inline = {k: props[k] for k in ("rmatrix", "xmatrix", "cmatrix") if k in props}
    if "linecode" in props:
        if inline:
            raise _Fail("give either linecode or inline matrices, not both")
        code = linecodes.get(props["linecode"].lower())
        if code is None:
            raise _Fail(f"unknown linecode {props['linecode']!r} (define it before the line)")
    else:
        code = _linecode({"nphases": str(nph), "units": "none", **inline}, 0)
    if code["n"] != nph:
        raise _Fail(f"linecode has {code['n']} phases, line has {nph}")
    length = _num(props.get("length", "1"), "length")
    if length <= 0:
        raise _Fail("length must be positive")
    l_units = props.get("units", code["units"]).lower()
    if l_units not in LENGTH_UNITS:
        raise _Fail(f"unknown length unit {l_units!r}")
    if LENGTH_UNITS[l_units] is None or LENGTH_UNITS[code["units"]] is None:
        k = length
    else:
        k = length * LENGTH_UNITS[l_units] / LENGTH_UNITS[code["units"]]
    z = (code["r"] + 1j * code["x"]) * k
    # capacitance in nF per unit length -> susceptance, half at each end
    ysh = 1j * 2 * math.pi * frequency * code["c"] * 1e-9 * k / 2
    return Branch(name, f, t, "".join(ph_f), z, ysh, ysh.copy())


def _load(name: str, props: dict) -> Unit:
    conn = props.get("conn", "wye").lower()
    if conn in ("delta", "d", "ll"):
        raise _Fail("delta-connected loads are out of scope; only wye loads are supported")
    if conn not in ("wye", "y", "ln"):
        raise _Fail(f"unknown connection {conn!r}")
    model = int(_num(props.get("model", "1"), "model"))
    if model != 1:
        raise _Fail(f"load model {model} not supported; only constant power (model=1)")
    nph = int(_num(props.get("phases", "3"), "phases"))
    if nph not in (1, 2, 3):
        raise _Fail("phases must be 1, 2 or 3")
    if "bus1" not in props:
        raise _Fail("bus1 is required")
    bus, ph = _bus_ref(props["bus1"], nph, "bus1")
    kw = _num(props.get("kw", "10"), "kw")
    if "kvar" in props and "pf" in props:
        raise _Fail("give either kvar or pf, not both")
    if "kvar" in props:
        kvar = _num(props["kvar"], "kvar")
    else:
        pf = _num(props.get("pf", "0.88"), "pf")
        if pf == 0 or abs(pf) > 1:
            raise _Fail(f"pf must lie in [-1, 0) or (0, 1], got {pf}")
        kvar = math.copysign(abs(kw) * math.sqrt(1.0 / pf ** 2 - 1.0), pf)
    p = kw * 1000.0 / nph
    q = kvar * 1000.0 / nph
    return Unit(name, bus, "".join(ph), p_min=p, p_max=p, q_min=q, q_max=q,
                setpoint_p=p, setpoint_q=q)
