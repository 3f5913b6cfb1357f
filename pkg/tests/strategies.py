"""Hypothesis strategies for random, lightly loaded radial networks."""

from __future__ import annotations

import math

import numpy as np
from hypothesis import strategies as st

from triflow.netmodel import Branch, Bus, Network, Shunt, Unit, UnitSystem

SUBSETS = ("abc", "ab", "ac", "bc", "a", "b", "c")


def _balanced(mag, phases):
    ang = {"a": 0.0, "b": -2 * math.pi / 3, "c": 2 * math.pi / 3}
    return [mag * complex(math.cos(ang[p]), math.sin(ang[p])) for p in phases]


@st.composite
def impedance(draw, n: int, zbase: float):
    r = draw(st.floats(0.002, 0.05)) * zbase
    x = draw(st.floats(0.002, 0.05)) * zbase
    m = draw(st.floats(0.0, 0.4))
    z = np.full((n, n), m * complex(r, x), dtype=complex)
    np.fill_diagonal(z, complex(r, x))
    return z


@st.composite
def radial_networks(draw, max_buses: int = 5, vbase: float = 230.0, sbase: float = 1e4,
                    load_pu: float = 0.05, with_shunts: bool = True):
    """Tree rooted at bus "1" (abc, reference). Children carry a subset of
    their parent's phases. Loads are small enough for Newton to converge."""
    n = draw(st.integers(2, max_buses))
    zbase = vbase ** 2 / sbase
    ref_mag = draw(st.floats(0.98, 1.04)) * vbase
    buses = [Bus("1", "abc", vbase=vbase, vmin=0.5 * vbase, vmax=1.5 * vbase,
                 vref=_balanced(ref_mag, "abc"))]
    phases = {"1": "abc"}
    branches, units, shunts = [], [], []
    for k in range(2, n + 1):
        parent = str(draw(st.integers(1, k - 1)))
        choices = [s for s in SUBSETS if set(s) <= set(phases[parent])]
        ph = draw(st.sampled_from(choices))
        bid = str(k)
        phases[bid] = ph
        buses.append(Bus(bid, ph, vbase=vbase, vmin=0.5 * vbase, vmax=1.5 * vbase))
        m = len(ph)
        z = draw(impedance(m, zbase))
        ysh = None
        if with_shunts and draw(st.booleans()):
            ysh = 1j * draw(st.floats(1e-4, 1e-2)) / zbase * np.eye(m)
        branches.append(Branch(f"L{k}", parent, bid, ph, z, y_sh_from=ysh, y_sh_to=ysh))
        if draw(st.booleans()):
            p = [draw(st.floats(-load_pu, load_pu)) * sbase for _ in ph]
            q = [draw(st.floats(-load_pu, load_pu)) * sbase for _ in ph]
            units.append(Unit(f"u{k}", bid, ph, p_min=p, p_max=p, q_min=q, q_max=q,
                              setpoint_p=p, setpoint_q=q))
        if with_shunts and draw(st.booleans()):
            shunts.append(Shunt(f"sh{k}", bid, ph, 1j * draw(st.floats(1e-3, 2e-2)) / zbase
                                * np.eye(m)))
    return Network(buses, branches, units, shunts, sbase=sbase, unit_system=UnitSystem.SI)
