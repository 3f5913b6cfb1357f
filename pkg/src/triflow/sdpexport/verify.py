"""Evaluate an exported SDPA file at a lifted point.

Works from the file text alone: the variable vector is filled by name from
a LiftedState, then every LP row and PSD block of ``sum F_k x_k - F_0`` is
checked. Nothing from the problem builder is reused.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from triflow.formulations.states import LiftedState, per_unit_pair
from triflow.netmodel import Network
from triflow.sdpexport.sdpa import SdpaFile, read_sdpa

_NAME = re.compile(r"^(\w+)\.(re|im|p|q)\|(\w+)\[([^\]]*)\](?:@(.+))?\|([a-c]{1,2})$")


def _phase_pos(phases, tag):
    return [phases.index(t) for t in tag]


def variable_value(net: Network, s: LiftedState, name: str) -> float:
    """Value of one named export variable; ``net`` and ``s`` in per unit."""
    m = _NAME.match(name)
    if not m:
        raise ValueError(f"unrecognised variable name {name!r}")
    sym, part, kind, ent, side, tag = m.groups()
    if sym == "Su":
        u = net.units[ent]
        val = s.unit_s[ent][u.phases.index(tag)]
        return float(val.real if part == "p" else val.imag)
    if sym == "W":
        ph = net.buses[ent].phases.phases
        a, b = _phase_pos(ph, tag)
        val = s.w[ent][a, b]
    elif sym == "Wx":
        i, j = ent.split(",")
        a = net.buses[i].phases.phases.index(tag[0])
        b = net.buses[j].phases.phases.index(tag[1])
        val = s.cross(i, j)[a, b]
    elif sym in ("L", "Ss"):
        ph = net.branches[ent].phases.phases
        a, b = _phase_pos(ph, tag)
        val = (s.l_series if sym == "L" else s.s_series)[ent][a, b]
    elif sym == "S":
        ph = net.branches[ent].phases.phases
        a, b = _phase_pos(ph, tag)
        val = s.s_total[(ent, side)][a, b]
    else:
        raise ValueError(f"unknown symbol in variable name {name!r}")
    return float(val.real if part == "re" else val.imag)


def point_from_lifted(net: Network, s: LiftedState, var_names: list[str]) -> np.ndarray:
    npu, spu = per_unit_pair(net, s)
    return np.array([variable_value(npu, spu, n) for n in var_names])


@dataclass
class VerifyResult:
    max_violation: float
    worst: str
    lp_violations: dict[str, float] = field(default_factory=dict)
    psd_min_eig: dict[str, float] = field(default_factory=dict)
    objective: float = 0.0

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol


def evaluate(f: SdpaFile, x: np.ndarray) -> VerifyResult:
    """Slack matrices ``sum_k F_k x_k - F_0`` at ``x``: smallest eigenvalue
    of each PSD block and the value of each LP row."""
    x = np.asarray(x, dtype=float)
    if x.shape != (f.m,):
        raise ValueError(f"point has {x.size} entries, file declares {f.m} variables")
    mats = [np.zeros((abs(d), abs(d))) if d > 0 else np.zeros(abs(d)) for d in f.block_struct]
    for k, b, i, j, v in f.entries:
        coef = -1.0 if k == 0 else x[k - 1]
        blk = f.block_struct[b - 1]
        if blk > 0:
            mats[b - 1][i - 1, j - 1] += v * coef
            if i != j:
                mats[b - 1][j - 1, i - 1] += v * coef
        else:
            mats[b - 1][i - 1] += v * coef
    worst, where = 0.0, "-"
    lp_viol, eig = {}, {}
    psd_k = 0
    for b, d in enumerate(f.block_struct):
        if d > 0:
            name = f.block_names[psd_k] if psd_k < len(f.block_names) else f"block{b + 1}"
            psd_k += 1
            lam = float(np.linalg.eigvalsh(mats[b])[0]) if d else 0.0
            eig[name] = lam
            if -lam > worst:
                worst, where = -lam, name
        else:
            for r, val in enumerate(mats[b]):
                name = f.row_names[r] if r < len(f.row_names) else f"row{r + 1}"
                if val < 0:
                    lp_viol[name] = -float(val)
                if -val > worst:
                    worst, where = -float(val), name
    obj = float(np.dot(f.c, x)) if f.m else 0.0
    return VerifyResult(worst, where, lp_viol, eig, obj)


def verify_lifted(text: str, net: Network, s: LiftedState) -> VerifyResult:
    f = read_sdpa(text)
    return evaluate(f, point_from_lifted(net, s, f.var_names))
