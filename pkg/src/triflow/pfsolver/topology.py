"""Reachability of bus phases from reference buses."""

from __future__ import annotations

import networkx as nx
import numpy as np

from triflow.errors import IsolatedBusError
from triflow.netmodel import Network


def phase_graph(net: Network) -> nx.Graph:
    """Graph on (bus, phase) nodes joined by branch conductors."""
    g = nx.Graph()
    for b in net.buses.values():
        g.add_nodes_from((b.id, p) for p in b.phases)
    for br in net.branches.values():
        g.add_edges_from(((br.from_bus, p), (br.to_bus, p)) for p in br.phases)
    return g


def check_reachable(net: Network) -> None:
    """Raise if any bus phase has no conductor path to a reference bus."""
    g = phase_graph(net)
    seeds = [(b, p) for b in net.reference_buses for p in net.buses[b].phases]
    reached = set()
    for comp in nx.connected_components(g):
        if any(s in comp for s in seeds):
            reached |= comp
    for b in net.buses.values():
        for p in b.phases:
            if (b.id, p) not in reached:
                raise IsolatedBusError(
                    f"bus {b.id!r} phase {p} has no path to a reference bus"
                )


def flat_voltages(net: Network) -> dict[str, np.ndarray]:
    """Every bus gets the reference phasor of its nearest reference bus,
    matched by phase name; buses without a path keep 1 at 0/-120/+120
    degrees."""
    nominal = {p: np.exp(-2j * np.pi / 3 * k) for k, p in enumerate("abc")}
    out = {}
    refs = net.reference_buses
    if refs:
        _, paths = nx.multi_source_dijkstra(net.graph(), set(refs))
    else:
        paths = {}
    for b in net.buses.values():
        if b.id in paths:
            ref = net.buses[paths[b.id][0]]
            vals = []
            mag = float(np.mean(np.abs(ref.vref)))
            for p in b.phases:
                vals.append(ref.vref[ref.phases.index(p)] if p in ref.phases else mag * nominal[p])
            out[b.id] = np.array(vals, dtype=complex)
        else:
            out[b.id] = np.array([nominal[p] for p in b.phases], dtype=complex)
    return out
