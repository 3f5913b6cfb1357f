"""Shared variable allocation and row builders for the conic exports."""

from __future__ import annotations

import math

import numpy as np

from triflow.formulations.bounds import NOMINAL_SPREAD, SPREAD_NAMES, SPREAD_PAIRS
from triflow.netmodel import Network
from triflow.sdpexport.problem import Aff, ConicProblem, LinearRow, PSDBlock, VarTable, real_embedding_aff, split


def pq(phases_r, phases_c, a, b) -> str:
    return f"{phases_r[a]}{phases_c[b]}"


class Builder:
    def __init__(self, net: Network, relaxation: str):
        self.net = net
        self.vt = VarTable()
        self.rows: list[LinearRow] = []
        self.blocks: list[PSDBlock] = []
        self.objective: dict[int, float] = {}
        self.relaxation = relaxation
        self._herm: dict[tuple[str, str], tuple[str, ...]] = {}
        self._full: dict[tuple[str, str], tuple[tuple[str, ...], tuple[str, ...]]] = {}
        self._units: list = []

    # allocation -----------------------------------------------------------

    def alloc_herm(self, symbol: str, entity: str, phases) -> None:
        """One real scalar per entry on/above the diagonal and one
        imaginary scalar per entry strictly above it."""
        ph = tuple(phases)
        n = len(ph)
        for a in range(n):
            for b in range(a, n):
                self.vt.add(f"{symbol}.re|{entity}|{pq(ph, ph, a, b)}")
        for a in range(n):
            for b in range(a + 1, n):
                self.vt.add(f"{symbol}.im|{entity}|{pq(ph, ph, a, b)}")
        self._herm[(symbol, entity)] = ph

    def alloc_full(self, symbol: str, entity: str, rows, cols=None) -> None:
        pr = tuple(rows)
        pc = pr if cols is None else tuple(cols)
        for part in ("re", "im"):
            for a in range(len(pr)):
                for b in range(len(pc)):
                    self.vt.add(f"{symbol}.{part}|{entity}|{pq(pr, pc, a, b)}")
        self._full[(symbol, entity)] = (pr, pc)

    def alloc_units(self) -> None:
        for u in self.net.units.values():
            for part in ("p", "q"):
                for p in u.phases:
                    self.vt.add(f"Su.{part}|unit[{u.id}]|{p}")
            self._units.append(u)

    @property
    def nv(self) -> int:
        return len(self.vt.names)

    # expressions ------------------------------------------------------------

    def herm(self, symbol: str, entity: str) -> Aff:
        ph = self._herm[(symbol, entity)]
        n = len(ph)
        m = Aff.zeros(self.nv, n, n)
        idx = self.vt.index
        for a in range(n):
            for b in range(a, n):
                k = idx[f"{symbol}.re|{entity}|{pq(ph, ph, a, b)}"] + 1
                m.t[k, a, b] += 1
                if a != b:
                    m.t[k, b, a] += 1
        for a in range(n):
            for b in range(a + 1, n):
                k = idx[f"{symbol}.im|{entity}|{pq(ph, ph, a, b)}"] + 1
                m.t[k, a, b] += 1j
                m.t[k, b, a] -= 1j
        return m

    def full(self, symbol: str, entity: str) -> Aff:
        pr, pc = self._full[(symbol, entity)]
        m = Aff.zeros(self.nv, len(pr), len(pc))
        idx = self.vt.index
        for a in range(len(pr)):
            for b in range(len(pc)):
                m.t[idx[f"{symbol}.re|{entity}|{pq(pr, pc, a, b)}"] + 1, a, b] += 1
                m.t[idx[f"{symbol}.im|{entity}|{pq(pr, pc, a, b)}"] + 1, a, b] += 1j
        return m

    def unit_s(self, u) -> Aff:
        n = len(u.phases)
        m = Aff.zeros(self.nv, n, 1)
        idx = self.vt.index
        for a, p in enumerate(u.phases):
            m.t[idx[f"Su.p|unit[{u.id}]|{p}"] + 1, a, 0] += 1
            m.t[idx[f"Su.q|unit[{u.id}]|{p}"] + 1, a, 0] += 1j
        return m

    def unit_var(self, u, part: str, p: str) -> int:
        return self.vt.index[f"Su.{part}|unit[{u.id}]|{p}"]

    # rows -----------------------------------------------------------------------

    def row(self, name: str, kind: str, vec: np.ndarray) -> None:
        coefs, const = split(vec)
        self.rows.append(LinearRow(name, kind, coefs, const))

    def eq_matrix(self, family_re, family_im, entity, phases_r, phases_c, m: Aff,
                  mode: str = "full") -> None:
        """Equality rows for the real and imaginary parts of ``m == 0``.

        ``mode`` ``"full"`` uses every entry; ``"herm"`` uses the real part
        on and above the diagonal and the imaginary part strictly above.
        """
        nr, nc = m.shape
        for a in range(nr):
            for b in range(nc):
                if mode == "herm" and b < a:
                    continue
                e = m.entry(a, b)
                tag = pq(phases_r, phases_c, a, b)
                if family_re:
                    self.row(f"{family_re}|{entity}|{tag}", "eq", e.real)
                if family_im and (mode != "herm" or a < b):
                    self.row(f"{family_im}|{entity}|{tag}", "eq", e.imag)

    def abs_bound(self, family, name, vec: np.ndarray, bound: float) -> None:
        """``-bound <= vec.x <= bound`` for a finite bound."""
        if not math.isfinite(bound):
            return
        lo = vec.copy()
        lo[0] += bound
        hi = -vec
        hi[0] += bound
        self.row(f"{family}|{name}:lo", "ge", lo)
        self.row(f"{family}|{name}:hi", "ge", hi)

    def upper(self, family, name, vec: np.ndarray, bound: float) -> None:
        if math.isfinite(bound):
            r = -vec
            r[0] += bound
            self.row(f"{family}|{name}", "ge", r)

    def lower(self, family, name, vec: np.ndarray, bound: float) -> None:
        if math.isfinite(bound):
            r = vec.copy()
            r[0] -= bound
            self.row(f"{family}|{name}", "ge", r)

    def psd(self, name: str, m: Aff) -> None:
        emb = real_embedding_aff(m)
        dim = emb.shape[0]
        entries = []
        for r in range(dim):
            for c in range(r, dim):
                coefs, const = split(emb.entry(r, c).real)
                if coefs or const != 0.0:
                    entries.append((r, c, coefs, const))
        self.blocks.append(PSDBlock(name, dim, tuple(entries)))

    # shared row families ---------------------------------------------------------

    def bus_rows(self, w: dict[str, Aff], s_arc: dict[tuple[str, str], Aff]) -> None:
        """Reference, KCL, voltage, W-entry and phase-spread rows. A reference
        bus gets only its ref rows: they fix W outright, so bounds on it
        would be implied (or, if violated, belong to input validation)."""
        net = self.net
        for b in net.buses.values():
            ph = b.phases.phases
            ent = f"bus[{b.id}]"
            wb = w[b.id]
            n = len(ph)
            if b.is_reference:
                target = np.outer(b.vref, b.vref.conj())
                self.eq_matrix("ref_re", "ref_im", ent, ph, ph, wb - target, mode="herm")
                continue
            bal = Aff.zeros(self.nv, n, 1)
            for (br_id, side), s in s_arc.items():
                if side != b.id:
                    continue
                pos = net.branches[br_id].phases.positions_in(b.phases)
                d = np.zeros((n, len(pos)))
                d[pos, range(len(pos))] = 1
                bal = bal + d @ _diag_col(s)
            for u in net.units_at(b.id):
                pos = u.phases.positions_in(b.phases)
                d = np.zeros((n, len(pos)))
                d[pos, range(len(pos))] = 1
                bal = bal + d @ self.unit_s(u)
            for sh in net.shunts_at(b.id):
                pos = sh.phases.positions_in(b.phases)
                d = np.zeros((n, len(pos)))
                d[pos, range(len(pos))] = 1
                bal = bal + d @ _diag_col(wb.sub(pos) @ sh.y.conj().T)
            for a, p in enumerate(ph):
                e = bal.entry(a, 0)
                self.row(f"kcl_p|{ent}|{p}", "eq", e.real)
                self.row(f"kcl_q|{ent}|{p}", "eq", e.imag)
            for a, p in enumerate(ph):
                e = wb.entry(a, a).real
                if b.vmin[a] > 0:
                    self.lower("w_min", f"{ent}|{p}", e, b.vmin[a] ** 2)
                self.upper("w_max", f"{ent}|{p}", e, b.vmax[a] ** 2)
            for a in range(n):
                for c in range(a + 1, n):
                    bound = b.vmax[a] * b.vmax[c]
                    e = wb.entry(a, c)
                    self.abs_bound("w_entries", f"{ent}|{pq(ph, ph, a, c)}.re", e.real, bound)
                    self.abs_bound("w_entries", f"{ent}|{pq(ph, ph, a, c)}.im", e.imag, bound)
            if n == 3:
                for k, (p, q) in enumerate(SPREAD_PAIRS):
                    x = wb.entry(p, q)
                    lo = NOMINAL_SPREAD + b.pad_min[k]
                    hi = NOMINAL_SPREAD + b.pad_max[k]
                    self.row(f"pad_min|{ent}|{SPREAD_NAMES[k]}", "ge",
                             x.imag * math.cos(lo) - x.real * math.sin(lo))
                    self.row(f"pad_max|{ent}|{SPREAD_NAMES[k]}", "ge",
                             x.real * math.sin(hi) - x.imag * math.cos(hi))

    def vad_rows(self, br, w_ij: Aff) -> None:
        ph = br.phases.phases
        for a, p in enumerate(ph):
            x = w_ij.entry(a, a)
            ent = f"branch[{br.id}]|{p}"
            self.row(f"vad_min|{ent}", "ge", x.imag - math.tan(br.vad_min[a]) * x.real)
            self.row(f"vad_max|{ent}", "ge", math.tan(br.vad_max[a]) * x.real - x.imag)

    def s_entry_rows(self, br, side: str, s: Aff) -> None:
        ph = br.phases.phases
        vmax = self.net.buses[side].vmax[br.phases.positions_in(self.net.buses[side].phases)]
        n = len(ph)
        for a in range(n):
            for c in range(n):
                bound = vmax[a] * br.i_rated[c]
                if not math.isfinite(bound):
                    continue
                e = s.entry(a, c)
                name = f"branch[{br.id}]@{side}|{pq(ph, ph, a, c)}"
                self.abs_bound("s_entries", name + ".p", e.real, bound)
                self.abs_bound("s_entries", name + ".q", e.imag, bound)

    def unit_rows(self) -> None:
        for u in self.net.units.values():
            for a, p in enumerate(u.phases):
                for part, lo, hi in (("p", u.p_min[a], u.p_max[a]), ("q", u.q_min[a], u.q_max[a])):
                    vec = np.zeros(self.nv + 1)
                    vec[1 + self.unit_var(u, part, p)] = 1.0
                    self.lower(f"unit_{part}_min", f"unit[{u.id}]|{p}", vec, lo)
                    self.upper(f"unit_{part}_max", f"unit[{u.id}]|{p}", vec, hi)

    def set_objective(self, objective: str, s_arc: dict[tuple[str, str], Aff]) -> None:
        net = self.net
        acc = np.zeros(self.nv + 1)
        if objective == "min_total_injection":
            for (br_id, side), s in s_arc.items():
                if net.buses[side].is_reference:
                    for a in range(s.shape[0]):
                        acc += s.entry(a, a).real
        elif objective == "min_losses":
            for s in s_arc.values():
                for a in range(s.shape[0]):
                    acc += s.entry(a, a).real
        else:
            raise ValueError(f"unknown objective {objective!r}; use min_total_injection or min_losses")
        coefs, _ = split(acc)
        self.objective = dict(coefs)

    def problem(self) -> ConicProblem:
        return ConicProblem(list(self.vt.names), self.rows, self.blocks, self.objective,
                            self.relaxation).pruned()


def _diag_col(m: Aff) -> Aff:
    """Diagonal of a square affine matrix as a column."""
    n = m.shape[0]
    t = np.zeros((m.t.shape[0], n, 1), dtype=complex)
    for a in range(n):
        t[:, a, 0] = m.t[:, a, a]
    return Aff(t)
