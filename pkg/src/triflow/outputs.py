"""Run manifests and the solution / lifted-state / report file formats.

All three share the layout of the ``.net`` format (``key = value`` lines
and ``[kind id]`` sections) and print numbers with 12 significant digits.
The first line of every file is ``# manifest {json}``; the manifest records
the SHA-256 of the rest of the file, so a re-run with the same inputs
produces the same payload bytes and only the timestamp differs.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

import triflow
from triflow.errors import StateShapeError
from triflow.feasibility import fmt
from triflow.formulations import IVState, LiftedState
from triflow.formulations.states import check_iv
from triflow.ingest.native import (
    ParseDiagnostic, ParseError, _Fail, _HEADER, _complex, _items, _lines,
)
from triflow.netmodel import Network
from triflow.pfsolver import SolveTrace, branch_flows, end_currents

SOLUTION_TAG = "triflow-solution 1"
LIFTED_TAG = "triflow-lifted 1"
REPORT_TAG = "triflow-report 1"


def sha256(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def timestamp() -> str:
    """UTC time, or ``SOURCE_DATE_EPOCH`` when set (fully reproducible files)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch and epoch.isdigit() else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    options: dict = field(default_factory=dict)

    def record(self, payload: str) -> dict:
        return {
            "command": self.command,
            "inputs": [{"path": p, "sha256": h} for p, h in self.inputs.items()],
            "options": self.options,
            "versions": {
                "triflow": triflow.__version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "timestamp": timestamp(),
            "payload_sha256": sha256(payload),
        }

    def stamp(self, payload: str, comment: str = "#") -> str:
        """``payload`` with the manifest line in front."""
        rec = json.dumps(self.record(payload), sort_keys=True, separators=(",", ":"))
        return f"{comment} manifest {rec}\n{payload}"


def split_manifest(text: str, comment: str = "#") -> tuple[dict | None, str]:
    prefix = f"{comment} manifest "
    if text.startswith(prefix):
        head, _, rest = text.partition("\n")
        return json.loads(head[len(prefix):]), rest
    return None, text


# number formatting ---------------------------------------------------------------

def _c(z: complex) -> str:
    return f"({fmt(z.real)}, {fmt(z.imag)})"


def _cv(arr) -> str:
    return ", ".join(_c(complex(z)) for z in np.atleast_1d(arr))


def _rv(arr) -> str:
    return ", ".join(fmt(float(x)) for x in np.atleast_1d(arr))


def _cm(m) -> str:
    return "; ".join(_cv(row) for row in np.asarray(m))


# solution files --------------------------------------------------------------------

def write_solution(net: Network, s: IVState, trace: SolveTrace) -> str:
    """Per-bus rectangular and polar voltages, per-branch series and end
    currents and end powers, unit powers and the solver trace. Values are
    in the network's own unit system."""
    out = [
        f"format = {SOLUTION_TAG}",
        f"unit_system = {net.unit_system.value}",
        f"method = {trace.method}",
        f"converged = {'yes' if trace.converged else 'no'}",
        f"reason = {trace.reason}",
        f"iterations = {trace.iterations}",
        f"final_residual = {fmt(trace.final_residual)}",
        f"residuals = {_rv(trace.residuals) if trace.residuals else 'none'}",
    ]
    ends = end_currents(net, s)
    flows = branch_flows(net, s)
    for b in net.buses.values():
        v = np.asarray(s.v[b.id], complex)
        out += ["", f"[bus {b.id}]", f"phases = {b.phases}", f"v = {_cv(v)}",
                f"vm = {_rv(np.abs(v))}", f"va_deg = {_rv(np.degrees(np.angle(v)))}"]
    for br in net.branches.values():
        f, t = br.from_bus, br.to_bus
        out += ["", f"[branch {br.id}]", f"phases = {br.phases}",
                f"i_series = {_cv(s.i_series[br.id])}",
                f"i_from = {_cv(ends[(br.id, f)])}", f"i_to = {_cv(ends[(br.id, t)])}",
                f"s_from = {_cv(flows[(br.id, f)])}", f"s_to = {_cv(flows[(br.id, t)])}"]
    for u in net.units.values():
        out += ["", f"[unit {u.id}]", f"phases = {u.phases}", f"s = {_cv(s.unit_s[u.id])}"]
    return "\n".join(out) + "\n"


def _sections(text: str) -> tuple[dict, list[tuple[str, str, int, dict]]]:
    head: dict[str, tuple[str, int]] = {}
    secs: list[tuple[str, str, int, dict]] = []
    diags = []
    for no, line in _lines(text):
        if line.startswith("["):
            m = _HEADER.match(line)
            if not m:
                diags.append(ParseDiagnostic("error", no, f"malformed section header {line!r}"))
                continue
            secs.append((m.group(1).lower(), m.group(2), no, {}))
            continue
        key, sep, val = line.partition("=")
        if not sep:
            diags.append(ParseDiagnostic("error", no, f"expected 'key = value', got {line!r}"))
            continue
        (secs[-1][3] if secs else head)[key.strip().lower()] = (val.strip(), no)
    if diags:
        raise ParseError(diags)
    return head, secs


def read_solution(net: Network, text: str) -> IVState:
    """Rebuild the IV state from a solution file; checks it against ``net``."""
    _, body = split_manifest(text)
    head, secs = _sections(body)
    diags = []
    if head.get("format", ("", 1))[0] != SOLUTION_TAG:
        raise ParseError([ParseDiagnostic("error", 1, f"not a solution file (expected "
                                                      f"format = {SOLUTION_TAG})")])
    want = {"bus": ("v", "v"), "branch": ("i_series", "i_series"), "unit": ("s", "unit_s")}
    found: dict[str, dict] = {"v": {}, "i_series": {}, "unit_s": {}}
    for kind, ident, no, keys in secs:
        if kind not in want:
            continue
        key, slot = want[kind]
        if key not in keys:
            diags.append(ParseDiagnostic("error", no, f"[{kind} {ident}] has no {key!r}"))
            continue
        val, line = keys[key]
        try:
            found[slot][ident] = np.array([_complex(t, f"{kind}[{ident}].{key}")
                                           for t in _items(val, key)])
        except _Fail as exc:
            diags.append(ParseDiagnostic("error", line, str(exc)))
    if diags:
        raise ParseError(diags)
    s = IVState(found["v"], found["i_series"], found["unit_s"])
    if set(s.unit_s) != set(net.units):
        raise StateShapeError(
            f"solution units {sorted(s.unit_s)} do not match network units {sorted(net.units)}")
    check_iv(net, s)
    return s


# lifted-state files -------------------------------------------------------------------

def angle_table(w: np.ndarray, phases) -> list[tuple[str, float]]:
    """Angles (degrees) of the strictly upper entries of ``W``."""
    ph = tuple(phases)
    return [(ph[a] + ph[b], float(np.degrees(np.angle(w[a, b]))))
            for a in range(len(ph)) for b in range(a + 1, len(ph))]


def write_lifted(net: Network, s: LiftedState, ranks: dict[str, float],
                 psd: dict[str, float]) -> str:
    """Lifted matrices in the network's units with rank and PSD residual
    summaries (computed in per unit) for every block."""
    worst_rank = max(ranks.values(), default=0.0)
    worst_psd = max(psd.values(), default=0.0)
    out = [
        f"format = {LIFTED_TAG}",
        f"unit_system = {net.unit_system.value}",
        f"max_rank_residual = {fmt(worst_rank)}",
        f"max_psd_residual = {fmt(worst_psd)}",
        "",
        "[summary blocks]",
    ]
    out += [f"rank.{name} = {fmt(ranks[name])}" for name in sorted(ranks)]
    out += [f"psd.{name} = {fmt(psd[name])}" for name in sorted(psd)]
    for b in net.buses.values():
        w = np.asarray(s.w[b.id], complex)
        out += ["", f"[bus {b.id}]", f"phases = {b.phases}", f"w = {_cm(w)}"]
        out += [f"angle_{pq} = {fmt(deg)}" for pq, deg in angle_table(w, b.phases)]
    for (i, j), m in s.w_cross.items():
        out += ["", f"[pair {i},{j}]", f"w_cross = {_cm(m)}"]
    for br in net.branches.values():
        out += ["", f"[branch {br.id}]", f"phases = {br.phases}",
                f"l_series = {_cm(s.l_series[br.id])}", f"s_series = {_cm(s.s_series[br.id])}",
                f"s_from = {_cm(s.s_total[(br.id, br.from_bus)])}",
                f"s_to = {_cm(s.s_total[(br.id, br.to_bus)])}"]
    return "\n".join(out) + "\n"


def write_report(lines: list[str]) -> str:
    return "\n".join([f"format = {REPORT_TAG}", *lines]) + "\n"


def read_key_values(text: str) -> tuple[dict, list[tuple[str, str, int, dict]]]:
    """Generic reader for any of the output formats (manifest skipped)."""
    _, body = split_manifest(text)
    head, secs = _sections(body)
    return ({k: v for k, (v, _) in head.items()},
            [(k, i, n, {kk: vv for kk, (vv, _) in d.items()}) for k, i, n, d in secs])


__all__ = [
    "RunManifest", "split_manifest", "sha256", "write_solution", "read_solution",
    "write_lifted", "write_report", "read_key_values", "angle_table",
]
