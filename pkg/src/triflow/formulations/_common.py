"""Per-unit branch data and index helpers shared by the evaluators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from triflow.errors import SingularVoltageError, ZeroImpedanceError
from triflow.netmodel import Branch, Network, series_admittance

# per-unit voltage magnitude below which unit-current recovery is singular
V_SINGULAR = 1e-9


@dataclass(frozen=True)
class BranchData:
    """Branch matrices in per unit plus phase positions inside each end bus."""

    br: Branch
    z: np.ndarray
    y: np.ndarray
    ysh_f: np.ndarray
    ysh_t: np.ndarray
    pos_f: list[int]
    pos_t: list[int]

    @property
    def id(self) -> str:
        return self.br.id

    @property
    def f(self) -> str:
        return self.br.from_bus

    @property
    def t(self) -> str:
        return self.br.to_bus

    @property
    def phases(self):
        return self.br.phases

    def side(self, bus: str):
        """``(y_shunt, positions)`` at the end attached to ``bus``."""
        if bus == self.f:
            return self.ysh_f, self.pos_f
        return self.ysh_t, self.pos_t


def branch_data(net: Network) -> list[BranchData]:
    out = []
    for br in net.branches.values():
        out.append(BranchData(
            br, br.z_series, series_admittance(br), br.y_sh_from, br.y_sh_to,
            br.phases.positions_in(net.buses[br.from_bus].phases),
            br.phases.positions_in(net.buses[br.to_bus].phases),
        ))
    return out


def require_admittance_form(net: Network, formulation: str) -> None:
    for br in net.branches.values():
        if br.is_zero_impedance:
            raise ZeroImpedanceError(
                f"branch {br.id!r} has zero series impedance; the {formulation} "
                "formulation needs a series admittance"
            )


def phase_ids(prefix: str, phases) -> list[str]:
    return [f"{prefix}:{p}" for p in phases]


def pair_ids(prefix: str, phases_r, phases_c=None):
    """``(row, col, id)`` for every entry of a phase-indexed matrix."""
    phases_c = phases_r if phases_c is None else phases_c
    for a, p in enumerate(phases_r):
        for b, q in enumerate(phases_c):
            yield a, b, f"{prefix}:{p}{q}"


def unit_current(unit_id: str, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``conj(S / V)`` element-wise, guarding against vanishing voltage."""
    s = np.asarray(s, dtype=complex)
    v = np.asarray(v, dtype=complex)
    bad = (np.abs(v) < V_SINGULAR) & (s != 0)
    if np.any(bad):
        raise SingularVoltageError(
            f"unit {unit_id!r}: voltage magnitude below {V_SINGULAR} pu with nonzero power"
        )
    out = np.zeros_like(s)
    ok = s != 0
    out[ok] = np.conj(s[ok] / v[ok])
    return out


def bus_labels(net: Network, bus_id: str) -> list[str]:
    return phase_ids(f"bus[{bus_id}]", net.buses[bus_id].phases)
