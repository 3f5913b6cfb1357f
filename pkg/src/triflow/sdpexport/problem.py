"""Conic problem container and affine matrix expressions.

A problem has a vector ``x`` of free real scalars, linear rows
(``a.x + b == 0`` or ``a.x + b >= 0``), PSD blocks whose entries are affine
in ``x``, and a linear objective to minimise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# coefficients below this magnitude are dropped when rows are extracted
COEF_EPS = 0.0


@dataclass(frozen=True)
class LinearRow:
    name: str
    kind: str  # "eq" or "ge"
    coefs: tuple[tuple[int, float], ...]
    const: float

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.coefs)


@dataclass(frozen=True)
class PSDBlock:
    """Real symmetric block; ``entries`` holds the upper triangle as
    ``(row, col, coefs, const)``."""

    name: str
    dim: int
    entries: tuple[tuple[int, int, tuple[tuple[int, float], ...], float], ...]

    def matrix(self, x: np.ndarray) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for r, c, coefs, const in self.entries:
            val = const + sum(k * x[i] for i, k in coefs)
            m[r, c] = val
            m[c, r] = val
        return m


@dataclass
class ConicProblem:
    var_names: list[str] = field(default_factory=list)
    rows: list[LinearRow] = field(default_factory=list)
    blocks: list[PSDBlock] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    relaxation: str = "bfm"

    @property
    def index(self) -> dict[str, int]:
        return {n: k for k, n in enumerate(self.var_names)}

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def row_counts(self) -> dict[str, int]:
        """Rows per family (the text before the first ``|`` of the name)."""
        out: dict[str, int] = {}
        for r in self.rows:
            fam = r.name.split("|", 1)[0]
            out[fam] = out.get(fam, 0) + 1
        return out

    def nnz(self) -> int:
        """Number of matrix coefficients a writer emits: one per constant or
        variable coefficient of every block entry and LP row, with equality
        rows counted twice."""
        n = 0
        for b in self.blocks:
            for _, _, coefs, const in b.entries:
                n += len(coefs) + (const != 0.0)
        for r in self.rows:
            k = len(r.coefs) + (r.const != 0.0)
            n += 2 * k if r.kind == "eq" else k
        return n

    def pruned(self) -> ConicProblem:
        """Copy without variables that no row, block or objective uses."""
        used = sorted(self.used_indices())
        remap = {old: new for new, old in enumerate(used)}

        def re(coefs):
            return tuple((remap[i], c) for i, c in coefs)

        rows = [LinearRow(r.name, r.kind, re(r.coefs), r.const) for r in self.rows]
        blocks = [
            PSDBlock(b.name, b.dim, tuple((r, c, re(k), v) for r, c, k, v in b.entries))
            for b in self.blocks
        ]
        return ConicProblem(
            [self.var_names[i] for i in used], rows, blocks,
            {remap[i]: c for i, c in self.objective.items()}, self.relaxation,
        )

    def used_indices(self) -> set[int]:
        used = set(self.objective)
        for r in self.rows:
            used.update(i for i, _ in r.coefs)
        for b in self.blocks:
            for _, _, coefs, _ in b.entries:
                used.update(i for i, _ in coefs)
        return used


class VarTable:
    def __init__(self):
        self.names: list[str] = []
        self.index: dict[str, int] = {}

    def add(self, name: str) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable {name}")
        self.index[name] = len(self.names)
        self.names.append(name)
        return self.index[name]


class Aff:
    """Complex matrix whose entries are affine in the real vector ``x``.

    Stored as a tensor ``t`` of shape ``(1 + n_vars, rows, cols)``; slice 0
    is the constant term. Because ``x`` is real, conjugation acts on the
    coefficients directly.
    """

    __slots__ = ("t",)
    # make numpy defer to __rmatmul__ for ``ndarray @ Aff``
    __array_ufunc__ = None

    def __init__(self, t: np.ndarray):
        self.t = t

    @classmethod
    def zeros(cls, nv: int, r: int, c: int) -> Aff:
        return cls(np.zeros((nv + 1, r, c), dtype=complex))

    @classmethod
    def const(cls, nv: int, m) -> Aff:
        m = np.atleast_2d(np.asarray(m, dtype=complex))
        t = np.zeros((nv + 1,) + m.shape, dtype=complex)
        t[0] = m
        return cls(t)

    @property
    def shape(self):
        return self.t.shape[1:]

    def __add__(self, o):
        return Aff(self.t + (o.t if isinstance(o, Aff) else _const_like(self, o)))

    def __sub__(self, o):
        return Aff(self.t - (o.t if isinstance(o, Aff) else _const_like(self, o)))

    def __neg__(self):
        return Aff(-self.t)

    def __rmul__(self, k):
        return Aff(k * self.t)

    def __matmul__(self, m):
        return Aff(self.t @ np.asarray(m, dtype=complex))

    def __rmatmul__(self, m):
        return Aff(np.asarray(m, dtype=complex) @ self.t)

    @property
    def H(self) -> Aff:
        return Aff(self.t.conj().transpose(0, 2, 1))

    def sub(self, rows, cols=None) -> Aff:
        cols = rows if cols is None else cols
        return Aff(self.t[:, rows][:, :, cols])

    def entry(self, a: int, b: int) -> np.ndarray:
        """Complex coefficient vector ``[const, x_0, x_1, ...]`` of one entry."""
        return self.t[:, a, b]

    @staticmethod
    def block(rows) -> Aff:
        return Aff(np.concatenate([np.concatenate([m.t for m in r], axis=2) for r in rows], axis=1))


def _const_like(a: Aff, m) -> np.ndarray:
    t = np.zeros_like(a.t)
    t[0] = m
    return t


def split(vec: np.ndarray) -> tuple[tuple[tuple[int, float], ...], float]:
    """Real coefficient vector ``[const, x...]`` -> sparse coefs and constant."""
    vec = np.asarray(vec, dtype=float)
    nz = np.nonzero(np.abs(vec[1:]) > COEF_EPS)[0]
    return tuple((int(i), float(vec[1 + i])) for i in nz), float(vec[0])


def real_embedding_aff(m: Aff) -> Aff:
    """``[[Re m, Im m], [-Im m, Re m]]`` applied entry-wise to the
    coefficients of a Hermitian affine matrix."""
    re = Aff(m.t.real.astype(complex))
    im = Aff(m.t.imag.astype(complex))
    return Aff.block([[re, im], [-im, re]])
