"""Native ``.net`` network format.

Line oriented. ``#`` starts a comment. Global ``key = value`` lines come
first, then one ``[kind id]`` section per element, where kind is one of
``bus``, ``branch``, ``unit``, ``shunt``. Vectors are comma separated,
complex numbers are written ``(re, im)`` and matrix rows are separated by
``;``. An unbounded vector entry is written ``none``. Units are fixed per
key (see docs/native_format.md); everything is SI unless
``unit_system = PER_UNIT``.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field

import numpy as np

from triflow.netmodel import Branch, Bus, Network, PhaseSet, Shunt, Unit, UnitSystem, validate

FORMAT_TAG = "triflow-net 1"

_ID = re.compile(r"^[A-Za-z0-9_.\-]+$")
_HEADER = re.compile(r"^\[\s*([A-Za-z_]+)\s+([^\]\s]+)\s*\]$")
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_NUM_RE = re.compile(rf"^{_NUM}$")
_CPLX_RE = re.compile(rf"^\(\s*({_NUM})\s*,\s*({_NUM})\s*\)$")


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str  # "error" or "warning"
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.severity}: {self.message}"


class ParseError(ValueError):
    """Input could not be turned into a valid Network."""

    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics) or "parse error")


class _Fail(Exception):
    pass


# key -> (kind, default for "none" entries); kinds: str, phases, real, vec, cvec, cmat, polar
_GLOBAL_KEYS = {"format": "str", "unit_system": "str", "sbase": "real"}
_SCHEMA = {
    "bus": {
        "phases": ("phases", None),
        "vbase": ("real", None),
        "vmin": ("vec", 0.0),
        "vmax": ("vec", math.inf),
        "pad_min": ("vec", None),
        "pad_max": ("vec", None),
        "vref": ("cvec", None),
        "vref_polar": ("polar", None),
    },
    "branch": {
        "from_bus": ("str", None),
        "to_bus": ("str", None),
        "phases": ("phases", None),
        "z_series": ("cmat", None),
        "y_sh_from": ("cmat", None),
        "y_sh_to": ("cmat", None),
        "i_rated": ("vec", math.inf),
        "s_rated": ("vec", math.inf),
        "vad_min": ("vec", None),
        "vad_max": ("vec", None),
    },
    "unit": {
        "bus": ("str", None),
        "phases": ("phases", None),
        "p_min": ("vec", -math.inf),
        "p_max": ("vec", math.inf),
        "q_min": ("vec", -math.inf),
        "q_max": ("vec", math.inf),
        "i_rated": ("vec", math.inf),
        "setpoint_p": ("vec", None),
        "setpoint_q": ("vec", None),
    },
    "shunt": {
        "bus": ("str", None),
        "phases": ("phases", None),
        "y": ("cmat", None),
        "i_rated": ("vec", math.inf),
    },
}
_REQUIRED = {
    "bus": ("phases",),
    "branch": ("from_bus", "to_bus", "phases", "z_series"),
    "unit": ("bus", "phases"),
    "shunt": ("bus", "phases", "y"),
}
_CLASSES = {"bus": Bus, "branch": Branch, "unit": Unit, "shunt": Shunt}


@dataclass
class _Section:
    kind: str
    id: str
    line: int
    keys: dict[str, tuple[str, int]] = field(default_factory=dict)


def _real(tok: str, path: str, default=None) -> float:
    tok = tok.strip()
    if tok.lower() == "none":
        if default is None:
            raise _Fail(f"{path}: 'none' is not allowed here")
        return default
    if not _NUM_RE.match(tok):
        raise _Fail(f"{path}: expected a finite number, got {tok!r}")
    val = float(tok)
    if not math.isfinite(val):
        raise _Fail(f"{path}: number out of range: {tok!r}")
    return val


def _complex(tok: str, path: str) -> complex:
    tok = tok.strip()
    m = _CPLX_RE.match(tok)
    if m:
        z = complex(float(m.group(1)), float(m.group(2)))
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise _Fail(f"{path}: number out of range: {tok!r}")
        return z
    return complex(_real(tok, path))


def _items(text: str, path: str) -> list[str]:
    """Split on commas outside parentheses."""
    items, cur, depth = [], [], 0
    for ch in text:
        if ch == "(":
            depth += 1
            if depth > 1:
                raise _Fail(f"{path}: nested parentheses in {text.strip()!r}")
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise _Fail(f"{path}: unbalanced parentheses in {text.strip()!r}")
        elif ch == "," and depth == 0:
            items.append("".join(cur).strip())
            cur = []
            continue
        cur.append(ch)
    if depth:
        raise _Fail(f"{path}: unbalanced parentheses in {text.strip()!r}")
    items.append("".join(cur).strip())
    if any(not t for t in items):
        raise _Fail(f"{path}: empty entry in {text.strip()!r}")
    return items


def _vector(text: str, n: int, path: str, default) -> np.ndarray:
    items = _items(text, path)
    if len(items) == 1:
        return np.full(n, _real(items[0], path, default))
    if len(items) != n:
        raise _Fail(f"{path}: expected {n} entries (or one to broadcast), got {len(items)}")
    return np.array([_real(t, path, default) for t in items])


def _cvector(text: str, n: int, path: str) -> np.ndarray:
    items = _items(text, path)
    if len(items) != n:
        raise _Fail(f"{path}: expected {n} complex entries, got {len(items)}")
    return np.array([_complex(t, path) for t in items])


def _polar(text: str, n: int, path: str) -> np.ndarray:
    """``mag@deg`` entries, e.g. ``230@0, 230@-120, 230@120``."""
    items = _items(text, path)
    if len(items) != n:
        raise _Fail(f"{path}: expected {n} entries, got {len(items)}")
    out = []
    for t in items:
        parts = t.split("@")
        if len(parts) != 2:
            raise _Fail(f"{path}: expected magnitude@degrees, got {t!r}")
        out.append(cmath.rect(_real(parts[0], path), math.radians(_real(parts[1], path))))
    return np.array(out)


def _cmatrix(text: str, n: int, path: str) -> np.ndarray:
    rows = text.split(";")
    if len(rows) != n:
        raise _Fail(f"{path}: expected a {n}x{n} matrix with {n} rows, got {len(rows)} rows")
    out = np.zeros((n, n), dtype=complex)
    for a, row in enumerate(rows):
        items = _items(row, f"{path} row {a + 1}")
        if len(items) != n:
            raise _Fail(f"{path}: row {a + 1} has {len(items)} entries, expected {n} "
                        f"({n}x{n} matrix)")
        for b, t in enumerate(items):
            out[a, b] = _complex(t, path)
    return out


def _decode(data) -> tuple[str, list[ParseDiagnostic]]:
    if isinstance(data, str):
        return data, []
    try:
        return bytes(data).decode("utf-8"), []
    except UnicodeDecodeError as exc:
        line = bytes(data)[: exc.start].count(b"\n") + 1
        return "", [ParseDiagnostic("error", line, "input is not valid UTF-8")]


def _lines(text: str):
    """``(lineno, content)`` with comments and blank lines removed."""
    for no, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def parse_native(data: str | bytes) -> Network:
    """Parse a ``.net`` document; raises :class:`ParseError` with line
    numbered diagnostics on any problem."""
    text, diags = _decode(data)
    if diags:
        raise ParseError(diags)
    if "\x00" in text:
        line = text[: text.index("\x00")].count("\n") + 1
        raise ParseError([ParseDiagnostic("error", line, "NUL character in input")])

    globals_: dict[str, tuple[str, int]] = {}
    sections: list[_Section] = []
    seen: set[tuple[str, str]] = set()

    def err(line, msg):
        diags.append(ParseDiagnostic("error", line, msg))

    for no, line in _lines(text):
        if line.startswith("["):
            m = _HEADER.match(line)
            if not m:
                err(no, f"malformed section header {line!r}; expected [kind id]")
                sections.append(_Section("?", "?", no))
                continue
            kind, ident = m.group(1).lower(), m.group(2)
            if kind not in _SCHEMA:
                err(no, f"unknown section kind {kind!r}; expected one of bus, branch, unit, shunt")
            elif not _ID.match(ident):
                err(no, f"invalid id {ident!r}; use letters, digits, '_', '.', '-'")
            elif (kind, ident) in seen:
                err(no, f"duplicate {kind} id {ident!r}")
            seen.add((kind, ident))
            sections.append(_Section(kind, ident, no))
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep:
            err(no, f"expected 'key = value', got {line!r}")
            continue
        if not sections:
            if key not in _GLOBAL_KEYS:
                err(no, f"unknown top-level key {key!r}; allowed: {', '.join(_GLOBAL_KEYS)}")
            elif key in globals_:
                err(no, f"duplicate key {key!r}")
            else:
                globals_[key] = (value.strip(), no)
            continue
        sec = sections[-1]
        if sec.kind not in _SCHEMA:
            continue
        if key not in _SCHEMA[sec.kind]:
            err(no, f"unknown key {key!r} in [{sec.kind} {sec.id}]; allowed: "
                    f"{', '.join(_SCHEMA[sec.kind])}")
        elif key in sec.keys:
            err(no, f"duplicate key {key!r} in [{sec.kind} {sec.id}]")
        else:
            sec.keys[key] = (value, no)
    if diags:
        raise ParseError(diags)

    unit_system = UnitSystem.SI
    sbase = 1.0
    if "format" in globals_:
        val, no = globals_["format"]
        if val != FORMAT_TAG:
            err(no, f"unsupported format {val!r}; expected {FORMAT_TAG!r}")
    if "unit_system" in globals_:
        val, no = globals_["unit_system"]
        try:
            unit_system = UnitSystem(val.upper())
        except ValueError:
            err(no, f"unit_system must be SI or PER_UNIT, got {val!r}")
    if "sbase" in globals_:
        val, no = globals_["sbase"]
        try:
            sbase = _real(val, "sbase")
        except _Fail as exc:
            err(no, str(exc))
    else:
        err(1, "missing top-level key 'sbase'")

    elements: dict[str, list] = {k: [] for k in _SCHEMA}
    for sec in sections:
        obj = _build(sec, err)
        if obj is not None:
            elements[sec.kind].append(obj)
    if diags:
        raise ParseError(diags)

    net = Network(elements["bus"], elements["branch"], elements["unit"], elements["shunt"],
                  sbase=sbase, unit_system=unit_system)
    rep = validate(net)
    if not rep.ok:
        index = _line_index(sections, globals_)
        raise ParseError([
            ParseDiagnostic("error", index(d.path), str(d)) for d in rep.diagnostics
        ])
    return net


def _build(sec: _Section, err):
    schema = _SCHEMA[sec.kind]
    path0 = f"{sec.kind}[{sec.id}]"
    missing = [k for k in _REQUIRED[sec.kind] if k not in sec.keys]
    if missing:
        err(sec.line, f"{path0}: missing required key(s) {', '.join(missing)}")
        return None
    n = 0
    kwargs: dict = {"id": sec.id}
    ok = True
    ph_val, ph_line = sec.keys["phases"]
    try:
        phases = PhaseSet.parse(ph_val.strip())
        n = len(phases)
        kwargs["phases"] = phases
    except ValueError as exc:
        err(ph_line, f"{path0}.phases: {exc}")
        return None
    if sec.kind == "bus" and "vref" in sec.keys and "vref_polar" in sec.keys:
        err(sec.keys["vref_polar"][1], f"{path0}: give vref or vref_polar, not both")
        return None
    for key, (value, line) in sec.keys.items():
        if key == "phases":
            continue
        kind, default = schema[key]
        path = f"{path0}.{key}"
        try:
            if kind == "str":
                v = value.strip()
                if not _ID.match(v):
                    raise _Fail(f"{path}: invalid id {v!r}")
            elif kind == "real":
                v = _real(value, path)
            elif kind == "vec":
                nn = 3 if key.startswith("pad_") else n
                v = _vector(value, nn, path, default)
            elif kind == "cvec":
                v = _cvector(value, n, path)
            elif kind == "polar":
                v = _polar(value, n, path)
                key = "vref"
            else:
                v = _cmatrix(value, n, path)
        except _Fail as exc:
            err(line, str(exc))
            ok = False
            continue
        kwargs[key] = v
    if not ok:
        return None
    try:
        return _CLASSES[sec.kind](**kwargs)
    except (ValueError, TypeError) as exc:
        err(sec.line, f"{path0}: {exc}")
        return None


def _line_index(sections, globals_):
    where = {}
    for sec in sections:
        base = f"{sec.kind}[{sec.id}]"
        where[base] = sec.line
        for key, (_, line) in sec.keys.items():
            where[f"{base}.{'vref' if key == 'vref_polar' else key}"] = line
    for key, (_, line) in globals_.items():
        where[f"network.{key}"] = line

    def index(path: str) -> int:
        if path in where:
            return where[path]
        head = path.split(".", 1)[0]
        return where.get(head, 1)

    return index


# writer -----------------------------------------------------------------------


def _r(x: float, none: float | None = None) -> str:
    """``none`` is the infinite value that the key's ``none`` stands for."""
    x = float(x)
    if not math.isfinite(x):
        if none is not None and x == none:
            return "none"
        raise ValueError(f"cannot write non-finite value {x}")
    return repr(x)


def _c(z: complex) -> str:
    return f"({_r(z.real)}, {_r(z.imag)})"


def _wvec(arr, none: float | None = None) -> str:
    return ", ".join(_r(x, none) for x in arr)


def _wmat(m) -> str:
    return "; ".join(", ".join(_c(z) for z in row) for row in m)


def write_native(net: Network) -> str:
    """Serialize ``net`` so that ``parse_native(write_native(net)) == net``.

    Numbers use the shortest exact repr; infinite bounds are written
    ``none``.
    """
    out = [
        f"format = {FORMAT_TAG}",
        f"unit_system = {net.unit_system.value}",
        f"sbase = {_r(net.sbase)}",
    ]
    for b in net.buses.values():
        out += ["", f"[bus {b.id}]", f"phases = {b.phases}", f"vbase = {_r(b.vbase)}",
                f"vmin = {_wvec(b.vmin)}", f"vmax = {_wvec(b.vmax, math.inf)}",
                f"pad_min = {_wvec(b.pad_min)}", f"pad_max = {_wvec(b.pad_max)}"]
        if b.vref is not None:
            out.append(f"vref = {', '.join(_c(z) for z in b.vref)}")
    for br in net.branches.values():
        out += ["", f"[branch {br.id}]", f"from_bus = {br.from_bus}", f"to_bus = {br.to_bus}",
                f"phases = {br.phases}", f"z_series = {_wmat(br.z_series)}",
                f"y_sh_from = {_wmat(br.y_sh_from)}", f"y_sh_to = {_wmat(br.y_sh_to)}",
                f"i_rated = {_wvec(br.i_rated, math.inf)}", f"s_rated = {_wvec(br.s_rated, math.inf)}",
                f"vad_min = {_wvec(br.vad_min)}", f"vad_max = {_wvec(br.vad_max)}"]
    for u in net.units.values():
        out += ["", f"[unit {u.id}]", f"bus = {u.bus}", f"phases = {u.phases}",
                f"p_min = {_wvec(u.p_min, -math.inf)}", f"p_max = {_wvec(u.p_max, math.inf)}",
                f"q_min = {_wvec(u.q_min, -math.inf)}", f"q_max = {_wvec(u.q_max, math.inf)}",
                f"i_rated = {_wvec(u.i_rated, math.inf)}"]
        if u.setpoint_p is not None:
            out.append(f"setpoint_p = {_wvec(u.setpoint_p)}")
        if u.setpoint_q is not None:
            out.append(f"setpoint_q = {_wvec(u.setpoint_q)}")
    for s in net.shunts.values():
        out += ["", f"[shunt {s.id}]", f"bus = {s.bus}", f"phases = {s.phases}",
                f"y = {_wmat(s.y)}", f"i_rated = {_wvec(s.i_rated, math.inf)}"]
    return "\n".join(out) + "\n"
