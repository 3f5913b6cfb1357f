"""SDPA sparse (dat-s) writer and reader.

The written problem is ``min c.x`` subject to
``sum_k F_k x_k - F_0 >= 0`` (positive semidefinite, block diagonal).
PSD blocks come first; all linear rows share one trailing diagonal (LP)
block, equalities as two opposite inequalities. Comment lines start with
``*`` and carry the variable, block and LP-row names.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from triflow.sdpexport.problem import ConicProblem


def _num(x: float) -> str:
    return repr(float(x))


def lp_rows(p: ConicProblem) -> list[tuple[str, tuple[tuple[int, float], ...], float]]:
    """Linear rows as ``a.x + b >= 0``, equalities split in two."""
    out = []
    for r in p.rows:
        if r.kind == "eq":
            out.append((r.name + ":ge", r.coefs, r.const))
            out.append((r.name + ":le", tuple((i, -c) for i, c in r.coefs), -r.const))
        else:
            out.append((r.name, r.coefs, r.const))
    return out


def write_sdpa(p: ConicProblem, objective_name: str = "") -> str:
    lp = lp_rows(p)
    n_psd = len(p.blocks)
    struct = [b.dim for b in p.blocks] + ([-len(lp)] if lp else [])
    lines = [
        f"* triflow conic export, relaxation {p.relaxation}"
        + (f", objective {objective_name}" if objective_name else ""),
        f"* variables {p.n_vars}, psd blocks {n_psd}, lp rows {len(lp)}",
    ]
    lines += [f"* x {k + 1} {name}" for k, name in enumerate(p.var_names)]
    lines += [f"* block {k + 1} {b.name} {b.dim}" for k, b in enumerate(p.blocks)]
    lines += [f"* row {k + 1} {name}" for k, (name, _, _) in enumerate(lp)]
    lines.append(str(p.n_vars))
    lines.append(str(len(struct)))
    lines.append(" ".join(str(d) for d in struct))
    lines.append(" ".join(_num(p.objective.get(k, 0.0)) for k in range(p.n_vars)))

    entries = []
    for bno, blk in enumerate(p.blocks, start=1):
        for r, c, coefs, const in blk.entries:
            if const != 0.0:
                entries.append((0, bno, r + 1, c + 1, -const))
            for i, v in coefs:
                entries.append((i + 1, bno, r + 1, c + 1, v))
    lp_no = n_psd + 1
    for row_no, (_, coefs, const) in enumerate(lp, start=1):
        if const != 0.0:
            entries.append((0, lp_no, row_no, row_no, -const))
        for i, v in coefs:
            entries.append((i + 1, lp_no, row_no, row_no, v))
    entries.sort(key=lambda e: e[:4])
    lines += [f"{m} {b} {i} {j} {_num(v)}" for m, b, i, j, v in entries]
    return "\n".join(lines) + "\n"


def index_map_json(p: ConicProblem, objective_name: str = "") -> str:
    """Sidecar describing every variable, block and LP row by name."""
    doc = {
        "relaxation": p.relaxation,
        "objective": objective_name,
        "variables": p.var_names,
        "blocks": [{"name": b.name, "dim": b.dim} for b in p.blocks],
        "lp_rows": [name for name, _, _ in lp_rows(p)],
        "row_counts": p.row_counts(),
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


@dataclass
class SdpaFile:
    m: int
    block_struct: list[int]
    c: list[float]
    entries: list[tuple[int, int, int, int, float]]
    var_names: list[str] = field(default_factory=list)
    block_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)

    @property
    def n_psd_blocks(self) -> int:
        return sum(1 for d in self.block_struct if d > 0)


_SPLIT = re.compile(r"[\s,{}()]+")


def read_sdpa(text: str) -> SdpaFile:
    """Parse dat-s text (as written by :func:`write_sdpa` or compatible)."""
    names, blocks, rows = {}, {}, {}
    data = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line[0] in "*\"":
            parts = line[1:].split()
            if len(parts) >= 3 and parts[0] == "x":
                names[int(parts[1])] = parts[2]
            elif len(parts) >= 3 and parts[0] == "block":
                blocks[int(parts[1])] = parts[2]
            elif len(parts) >= 3 and parts[0] == "row":
                rows[int(parts[1])] = parts[2]
            continue
        data.append(line)
    if len(data) < 2:
        raise ValueError("SDPA text is missing the m / nBLOCK header")
    m = int(_SPLIT.split(data[0].strip())[0])
    nblock = int(_SPLIT.split(data[1].strip())[0])
    pos = 2
    if nblock > 0:
        struct = [int(t) for t in _SPLIT.split(data[pos].strip()) if t][:nblock]
        pos += 1
    else:
        struct = []
    if m > 0:
        c = [float(t) for t in _SPLIT.split(data[pos].strip()) if t][:m]
        pos += 1
    else:
        c = []
    entries = []
    for line in data[pos:]:
        t = [x for x in _SPLIT.split(line) if x]
        entries.append((int(t[0]), int(t[1]), int(t[2]), int(t[3]), float(t[4])))
    return SdpaFile(
        m, struct, c, entries,
        [names.get(k + 1, f"x{k + 1}") for k in range(m)],
        [blocks.get(k + 1, f"block{k + 1}") for k in range(sum(1 for d in struct if d > 0))],
        [rows[k] for k in sorted(rows)],
    )
