"""Cross-formulation consistency verdicts and bound checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from triflow.errors import ZeroImpedanceError
from triflow.formulations import (
    FeasibilityReport, IVState, LiftedState, ResidualReport, bounds_margins,
    residual_bfm_lifted, residual_bim_lifted, residual_iv, residual_polar, residual_rect,
)
from triflow.netmodel import Network
from triflow.pfsolver import iv_to_polar, iv_to_rect, lift


@dataclass(frozen=True)
class ToleranceProfile:
    eq_tol: float = 1e-8
    rank_tol: float = 1e-8
    psd_tol: float = 1e-10
    bound_tol: float = 1e-9

    def __post_init__(self):
        for name in ("eq_tol", "rank_tol", "psd_tol", "bound_tol"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    def tol_for(self, group: str) -> float:
        if group == "rank":
            return self.rank_tol
        if group == "psd":
            return self.psd_tol
        return self.eq_tol


PROFILES = {
    "default": ToleranceProfile(),
    "strict": ToleranceProfile(1e-10, 1e-10, 1e-12, 1e-12),
    "loose": ToleranceProfile(1e-6, 1e-6, 1e-8, 1e-6),
}


def get_profile(name: str) -> ToleranceProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(
            f"unknown tolerance profile {name!r}; choose one of {', '.join(sorted(PROFILES))}"
        ) from None


FORMULATIONS = ("iv", "polar", "rect", "bim_lifted", "bfm_lifted")
# formulations that need a series admittance on every branch
ADMITTANCE_FORMS = ("polar", "rect", "bim_lifted")


def fmt(x: float) -> str:
    """12 significant digits, the precision used in every report."""
    return f"{x:.12g}"


@dataclass
class ConsistencyReport:
    profile: ToleranceProfile
    residuals: dict[str, ResidualReport | None]
    bounds: dict[str, FeasibilityReport] = field(default_factory=dict)
    not_applicable: dict[str, str] = field(default_factory=dict)

    @property
    def norms(self) -> dict[str, float | None]:
        return {f: (r.inf_norm() if r is not None else None) for f, r in self.residuals.items()}

    def _lifted_max(self, group: str) -> float:
        vals = [r.inf_norm(group) for r in self.residuals.values()
                if r is not None and group in r]
        return max(vals) if vals else 0.0

    @property
    def worst_rank(self) -> float:
        return self._lifted_max("rank")

    @property
    def worst_psd(self) -> float:
        return self._lifted_max("psd")

    def failures(self) -> list[tuple[str, str, float, float]]:
        """``(formulation, group, norm, tol)`` for every group above its tolerance."""
        out = []
        for form, rep in self.residuals.items():
            if rep is None:
                continue
            for group in rep.groups:
                norm = rep.inf_norm(group)
                tol = self.profile.tol_for(group)
                if not norm <= tol:
                    out.append((form, group, norm, tol))
        return out

    @property
    def consistent(self) -> bool:
        return not self.failures()

    @property
    def verdict(self) -> str:
        return "consistent" if self.consistent else "inconsistent"

    @property
    def bounds_ok(self) -> bool:
        return all(r.feasible(self.profile.bound_tol) for r in self.bounds.values())

    def to_lines(self) -> list[str]:
        """Deterministic line-oriented serialization."""
        p = self.profile
        lines = [
            f"verdict = {self.verdict}",
            f"profile = {fmt(p.eq_tol)} {fmt(p.rank_tol)} {fmt(p.psd_tol)} {fmt(p.bound_tol)}",
            f"worst_rank = {fmt(self.worst_rank)}",
            f"worst_psd = {fmt(self.worst_psd)}",
        ]
        for form in FORMULATIONS:
            if form not in self.residuals:
                continue
            rep = self.residuals[form]
            if rep is None:
                lines.append(f"[residual {form}]")
                lines.append(f"status = not-applicable ({self.not_applicable.get(form, '')})")
                continue
            lines.append(f"[residual {form}]")
            lines.append(f"inf_norm = {fmt(rep.inf_norm())}")
            for group in rep.groups:
                norm = rep.inf_norm(group)
                tol = p.tol_for(group)
                worst = rep.worst(group)
                where = worst[0] if worst else "-"
                status = "ok" if norm <= tol else "FAIL"
                lines.append(f"{group} = {fmt(norm)} tol {fmt(tol)} {status} at {where}")
        for space, rep in self.bounds.items():
            lines += bound_lines(rep, p.bound_tol, header=f"[bounds {space}]")
        return lines


def bound_lines(rep: FeasibilityReport, tol: float, header: str) -> list[str]:
    lines = [header, f"feasible = {'yes' if rep.feasible(tol) else 'no'}"]
    for fam, (cid, val) in rep.worst_by_family.items():
        status = "ok" if val >= -tol else "VIOLATED"
        lines.append(f"{fam} = {fmt(val)} {status} at {cid}")
    return lines


def _has_zero_impedance(net: Network) -> str | None:
    for br in net.branches.values():
        if br.is_zero_impedance:
            return br.id
    return None


def cross_validate(net: Network, s: IVState, prof: ToleranceProfile | None = None) -> ConsistencyReport:
    """Evaluate ``s`` in all five formulations and both bound spaces."""
    prof = prof or ToleranceProfile()
    lifted = lift(net, s)
    zero_br = _has_zero_impedance(net)
    residuals: dict[str, ResidualReport | None] = {"iv": residual_iv(net, s)}
    na = {}
    evaluators = {
        "polar": lambda: residual_polar(net, iv_to_polar(net, s)),
        "rect": lambda: residual_rect(net, iv_to_rect(net, s)),
        "bim_lifted": lambda: residual_bim_lifted(net, lifted),
    }
    for form in ADMITTANCE_FORMS:
        if zero_br is not None:
            residuals[form] = None
            na[form] = f"zero-impedance branch {zero_br}"
            continue
        try:
            residuals[form] = evaluators[form]()
        except ZeroImpedanceError as exc:
            residuals[form] = None
            na[form] = str(exc)
    residuals["bfm_lifted"] = residual_bfm_lifted(net, lifted)
    bounds = {"iv": bounds_margins(net, s), "lifted": bounds_margins(net, lifted)}
    for rep in bounds.values():
        rep.tol = prof.bound_tol
    return ConsistencyReport(prof, residuals, bounds, na)


def check_bounds(net: Network, s: IVState | LiftedState,
                 prof: ToleranceProfile | None = None) -> FeasibilityReport:
    """Bound margins with the profile's ``bound_tol`` attached as verdict
    threshold (see :meth:`FeasibilityReport.feasible`)."""
    prof = prof or ToleranceProfile()
    rep = bounds_margins(net, s)
    rep.tol = prof.bound_tol
    return rep
