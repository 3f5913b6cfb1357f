"""Backward/forward sweep for radial networks.

Independent of the Newton solver: no Jacobian, no linear solves. Each
sweep accumulates currents from the leaves towards the root, then updates
voltages from the root outwards.
"""

from __future__ import annotations

import networkx as nx
import numpy as np

from triflow.errors import MeshedNetworkError, NonConvergenceError
from triflow.formulations._common import branch_data
from triflow.formulations.residual_iv import residual_iv
from triflow.formulations.states import IVState, state_from_per_unit
from triflow.netmodel import Network, UnitSystem, as_per_unit
from triflow.pfsolver.newton import balance_free_units, pin_references, setpoint_units
from triflow.pfsolver.options import SolveOptions, SolveTrace
from triflow.pfsolver.topology import check_reachable, flat_voltages


def _tree_order(net: Network):
    """``(order, parent_branch)``: buses root-first per component, and the
    branch linking each non-root bus to its parent."""
    g = net.graph()
    order, parent = [], {}
    for comp in nx.connected_components(g):
        roots = [b for b in net.buses if b in comp and net.buses[b].is_reference]
        if len(roots) != 1:
            raise ValueError(
                f"sweep needs exactly one reference bus per connected component, "
                f"found {len(roots)} in component containing {sorted(comp)[0]!r}"
            )
        for _, child, key in nx.edge_bfs(g, roots[0]):
            parent[child] = key
        order += [roots[0]] + [v for _, v in nx.bfs_edges(g, roots[0])]
    return order, parent


def solve_sweep(net: Network, opts: SolveOptions | None = None) -> tuple[IVState, SolveTrace]:
    """Solve a radial network by backward/forward sweeps from a flat start."""
    opts = opts or SolveOptions()
    if not net.is_radial():
        raise MeshedNetworkError("backward/forward sweep requires a radial network")
    if not net.reference_buses:
        raise ValueError("network has no reference bus")
    check_reachable(net)
    pu = as_per_unit(net)
    fixed, _ = setpoint_units(pu)
    bds = {bd.id: bd for bd in branch_data(pu)}
    order, parent = _tree_order(pu)

    loads = {b: np.zeros(len(pu.buses[b].phases), dtype=complex) for b in pu.buses}
    for u in fixed:
        pos = u.phases.positions_in(pu.buses[u.bus].phases)
        loads[u.bus][pos] += u.setpoint_s

    v = flat_voltages(pu)
    i_down = {}  # series current from parent towards child, per branch
    trace = SolveTrace("sweep")

    def state():
        i_series = {}
        for br, bd in bds.items():
            child_is_to = parent.get(bd.t) == br
            i_series[br] = i_down[br] if child_is_to else -i_down[br]
        return IVState(dict(v), i_series, balance_free_units(pu, v, i_series))

    while True:
        # backward: current leaving each bus into everything below it
        out = {}
        for bus in reversed(order):
            b = pu.buses[bus]
            vb = v[bus]
            acc = np.zeros(len(b.phases), dtype=complex)
            nz = loads[bus] != 0
            acc[nz] += np.conj(loads[bus][nz] / vb[nz])
            for sh in pu.shunts_at(bus):
                pos = sh.phases.positions_in(b.phases)
                acc[pos] += sh.y @ vb[pos]
            acc += out.get(bus, 0)
            if bus in parent:
                bd = bds[parent[bus]]
                ysh_c, pos_c = bd.side(bus)
                up = bd.f if bus == bd.t else bd.t
                ysh_p, pos_p = bd.side(up)
                i_s = acc[pos_c] + ysh_c @ vb[pos_c]
                i_down[bd.id] = i_s
                contrib = np.zeros(len(pu.buses[up].phases), dtype=complex)
                contrib[pos_p] = i_s + ysh_p @ v[up][pos_p]
                out[up] = out.get(up, 0) + contrib
        # forward: voltage drop from the root outwards
        for bus in order:
            if bus not in parent:
                continue
            bd = bds[parent[bus]]
            up = bd.f if bus == bd.t else bd.t
            _, pos_c = bd.side(bus)
            _, pos_p = bd.side(up)
            new = v[bus].copy()
            new[pos_c] = v[up][pos_p] - bd.z @ i_down[bd.id]
            v[bus] = new
        st = state()
        norm = residual_iv(pu, st).inf_norm()
        trace.residuals.append(norm)
        if norm <= opts.tol:
            trace.reason = "converged"
            break
        if not np.isfinite(norm):
            trace.reason = "diverged"
            break
        if trace.iterations >= opts.max_iter:
            trace.reason = "max_iter"
            break

    if net.unit_system is UnitSystem.PER_UNIT:
        result = st
    else:
        result = pin_references(net, state_from_per_unit(net, st))
    if not trace.converged:
        raise NonConvergenceError(
            f"sweep stopped ({trace.reason}) after {trace.iterations} sweeps with "
            f"residual {norm:.3e} > tol {opts.tol:.3e}",
            trace=trace, state=result,
        )
    return result, trace
