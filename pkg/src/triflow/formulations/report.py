"""Residual and bound-margin reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# margins at or above -MARGIN_TIE count as satisfied
MARGIN_TIE = 1e-12


@dataclass
class ResidualReport:
    """Named residual groups of one formulation, all in per unit.

    Each group maps constraint ids to a residual value. Complex residuals
    (IV form) are stored as magnitudes; all others are signed reals.
    """

    formulation: str
    groups: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, group: str, cid: str, value: float) -> None:
        self.groups.setdefault(group, {})[cid] = float(value)

    def ensure(self, *groups: str) -> None:
        for g in groups:
            self.groups.setdefault(g, {})

    def finalize(self) -> ResidualReport:
        self.groups = {
            g: dict(sorted(entries.items())) for g, entries in sorted(self.groups.items())
        }
        return self

    def inf_norm(self, group: str | None = None) -> float:
        """Largest absolute residual of one group, or of all groups when
        ``group`` is None. NaN propagates."""
        if group is None:
            vals = [self.inf_norm(g) for g in self.groups]
        else:
            vals = [abs(v) for v in self.groups[group].values()]
        if not vals:
            return 0.0
        if any(math.isnan(v) for v in vals):
            return math.nan
        return max(vals)

    @property
    def norms(self) -> dict[str, float]:
        return {g: self.inf_norm(g) for g in self.groups}

    def worst(self, group: str) -> tuple[str, float] | None:
        entries = self.groups[group]
        if not entries:
            return None
        cid = max(entries, key=lambda k: abs(entries[k]))
        return cid, entries[cid]

    def __getitem__(self, group: str) -> dict[str, float]:
        return self.groups[group]

    def __contains__(self, group: str) -> bool:
        return group in self.groups


@dataclass(frozen=True)
class Margin:
    family: str
    cid: str
    value: float

    @property
    def satisfied(self) -> bool:
        return self.value >= -MARGIN_TIE


@dataclass
class FeasibilityReport:
    """Signed bound margins (positive = slack) grouped by bound family."""

    space: str
    families: dict[str, dict[str, float]] = field(default_factory=dict)
    tol: float | None = None

    def add(self, family: str, cid: str, value: float) -> None:
        self.families.setdefault(family, {})[cid] = float(value)

    def finalize(self) -> FeasibilityReport:
        self.families = {
            f: dict(sorted(entries.items())) for f, entries in sorted(self.families.items())
        }
        return self

    def margins(self, family: str | None = None) -> list[Margin]:
        fams = [family] if family is not None else list(self.families)
        return [Margin(f, k, v) for f in fams for k, v in self.families.get(f, {}).items()]

    def worst(self, family: str) -> tuple[str, float] | None:
        entries = self.families.get(family, {})
        if not entries:
            return None
        cid = min(entries, key=entries.__getitem__)
        return cid, entries[cid]

    @property
    def worst_by_family(self) -> dict[str, tuple[str, float]]:
        out = {}
        for f in self.families:
            w = self.worst(f)
            if w is not None:
                out[f] = w
        return out

    def worst_margin(self) -> float:
        vals = [v for entries in self.families.values() for v in entries.values()]
        return min(vals) if vals else math.inf

    def violations(self, tol: float = MARGIN_TIE) -> list[Margin]:
        return [m for m in self.margins() if not m.value >= -tol]

    def feasible(self, tol: float | None = None) -> bool:
        if tol is None:
            tol = self.tol if self.tol is not None else MARGIN_TIE
        return not self.violations(tol)

    def __getitem__(self, family: str) -> dict[str, float]:
        return self.families[family]

    def __contains__(self, family: str) -> bool:
        return family in self.families
