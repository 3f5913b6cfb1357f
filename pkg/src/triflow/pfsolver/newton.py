"""Newton-Raphson on the rectangular current-voltage system.

Unknowns are the real and imaginary parts of every non-reference bus
voltage and every branch series current; rows are Ohm's law per branch
phase and KCL per non-reference bus phase. Everything is linear except the
constant-power unit currents, so the Jacobian is a fixed matrix plus 2x2
diagonal blocks.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from triflow.errors import NonConvergenceError, SingularJacobianError
from triflow.formulations._common import branch_data
from triflow.formulations.residual_iv import bus_current_mismatch
from triflow.formulations.states import IVState, state_from_per_unit, state_to_per_unit
from triflow.netmodel import Network, UnitSystem, as_per_unit
from triflow.pfsolver.options import SolveOptions, SolveTrace
from triflow.pfsolver.topology import check_reachable, flat_voltages

# smallest voltage magnitude (pu) used as a divisor for unit currents
V_CLAMP = 1e-6


def _embed(a: np.ndarray) -> np.ndarray:
    """Real form of a complex matrix acting on interleaved (re, im) pairs."""
    n, m = a.shape
    out = np.empty((2 * n, 2 * m))
    out[0::2, 0::2] = a.real
    out[0::2, 1::2] = -a.imag
    out[1::2, 0::2] = a.imag
    out[1::2, 1::2] = a.real
    return out


def setpoint_units(net: Network):
    """Units with fixed powers, and the free (balancing) units.

    Free units are only meaningful at reference buses.
    """
    fixed, free = [], []
    for u in net.units.values():
        if u.has_setpoint:
            fixed.append(u)
        elif net.buses[u.bus].is_reference:
            free.append(u)
        else:
            raise ValueError(
                f"unit {u.id!r} has no setpoint; only units at reference buses may be "
                "left free in power-flow mode"
            )
    return fixed, free


class IVSystem:
    """The real residual map ``F(x) = A x + c + g(x)`` of a per-unit network."""

    def __init__(self, net: Network):
        if net.unit_system is not UnitSystem.PER_UNIT:
            raise ValueError("IVSystem expects a per-unit network")
        self.net = net
        self.bds = branch_data(net)
        names = []
        self.vslot: dict[str, np.ndarray] = {}
        k = 0
        for b in net.buses.values():
            if b.is_reference:
                continue
            self.vslot[b.id] = np.arange(k, k + len(b.phases))
            names += [f"bus[{b.id}]:{p}" for p in b.phases]
            k += len(b.phases)
        self.islot: dict[str, np.ndarray] = {}
        for bd in self.bds:
            self.islot[bd.id] = np.arange(k, k + len(bd.phases))
            names += [f"branch[{bd.id}]:{p}" for p in bd.phases]
            k += len(bd.phases)
        self.n = k
        self.names = [f"{part}({name})" for name in names for part in ("re", "im")]

        a = np.zeros((k, k), dtype=complex)
        c = np.zeros(k, dtype=complex)

        def put(row, bus, pos, coef):
            # coef @ V_bus[pos] added to ``row``; reference voltages are constants
            b = net.buses[bus]
            if b.is_reference:
                c[row] += coef @ b.vref[pos]
            else:
                a[np.ix_(row, self.vslot[bus][pos])] += coef

        for bd in self.bds:
            m = len(bd.phases)
            eye = np.eye(m)
            r = self.islot[bd.id]
            put(r, bd.t, bd.pos_t, eye)
            put(r, bd.f, bd.pos_f, -eye)
            a[np.ix_(r, r)] += bd.z
            for bus, pos, ysh, sign in ((bd.f, bd.pos_f, bd.ysh_f, 1.0), (bd.t, bd.pos_t, bd.ysh_t, -1.0)):
                if net.buses[bus].is_reference:
                    continue
                rows = self.vslot[bus][pos]
                a[np.ix_(rows, r)] += sign * eye
                put(rows, bus, pos, ysh)
        for sh in net.shunts.values():
            if net.buses[sh.bus].is_reference:
                continue
            pos = sh.phases.positions_in(net.buses[sh.bus].phases)
            put(self.vslot[sh.bus][pos], sh.bus, pos, sh.y)

        self.s_load = np.zeros(k, dtype=complex)
        fixed, _ = setpoint_units(net)
        for u in fixed:
            if net.buses[u.bus].is_reference:
                continue
            pos = u.phases.positions_in(net.buses[u.bus].phases)
            self.s_load[self.vslot[u.bus][pos]] += u.setpoint_s
        self.a_real = _embed(a)
        self.c_real = np.column_stack([c.real, c.imag]).ravel()
        self.loaded = np.nonzero(self.s_load)[0]
        self.clamped = False

    # state <-> vector ------------------------------------------------------

    def pack(self, v: dict, i_series: dict) -> np.ndarray:
        z = np.zeros(self.n, dtype=complex)
        for bus, sl in self.vslot.items():
            z[sl] = v[bus]
        for br, sl in self.islot.items():
            z[sl] = i_series[br]
        return np.column_stack([z.real, z.imag]).ravel()

    def unpack(self, x: np.ndarray):
        z = x[0::2] + 1j * x[1::2]
        v = {}
        for b in self.net.buses.values():
            v[b.id] = np.array(b.vref, dtype=complex) if b.is_reference else z[self.vslot[b.id]].copy()
        i_series = {br: z[sl].copy() for br, sl in self.islot.items()}
        return v, i_series

    # residual and Jacobian -----------------------------------------------

    def _unit_terms(self, x):
        k = self.loaded
        e, f = x[2 * k], x[2 * k + 1]
        p, q = self.s_load[k].real, self.s_load[k].imag
        d = e * e + f * f
        small = d < V_CLAMP ** 2
        self.clamped = bool(np.any(small))
        d = np.where(small, V_CLAMP ** 2, d)
        return k, e, f, p, q, d

    def residual(self, x: np.ndarray) -> np.ndarray:
        out = self.a_real @ x + self.c_real
        k, e, f, p, q, d = self._unit_terms(x)
        out[2 * k] += (p * e + q * f) / d
        out[2 * k + 1] += (p * f - q * e) / d
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        jac = self.a_real.copy()
        k, e, f, p, q, d = self._unit_terms(x)
        d2 = d * d
        dir_de = (p * (f * f - e * e) - 2 * q * e * f) / d2
        dir_df = (q * (e * e - f * f) - 2 * p * e * f) / d2
        jac[2 * k, 2 * k] += dir_de
        jac[2 * k, 2 * k + 1] += dir_df
        jac[2 * k + 1, 2 * k] += dir_df
        jac[2 * k + 1, 2 * k + 1] -= dir_de
        return jac

    @staticmethod
    def norm(fx: np.ndarray) -> float:
        if fx.size == 0:
            return 0.0
        return float(np.max(np.hypot(fx[0::2], fx[1::2])))


def balance_free_units(net: Network, v: dict, i_series: dict) -> dict[str, np.ndarray]:
    """Unit powers: setpoints, plus the balancing power for free units at
    reference buses (the first free unit per bus takes all of it)."""
    fixed, free = setpoint_units(net)
    unit_s = {u.id: np.array(u.setpoint_s, dtype=complex) for u in fixed}
    for u in free:
        unit_s[u.id] = np.zeros(len(u.phases), dtype=complex)
    if free:
        mism = bus_current_mismatch(net, IVState(v, i_series, unit_s))
        done = set()
        for u in free:
            if u.bus in done:
                continue
            done.add(u.bus)
            pos = u.phases.positions_in(net.buses[u.bus].phases)
            unit_s[u.id] = v[u.bus][pos] * np.conj(-mism[u.bus][pos])
    return {u: unit_s[u] for u in net.units}


def pin_references(net: Network, s: IVState) -> IVState:
    """Copy ``vref`` into reference buses so unit conversion rounding never
    shows there."""
    for b in net.reference_buses:
        s.v[b] = np.array(net.buses[b].vref, dtype=complex)
    return s


def _lu_or_raise(jac: np.ndarray, names: list[str]):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(jac, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = max(1.0, float(np.max(np.abs(jac)))) if jac.size else 1.0
    bad = np.nonzero(~(diag > 1e-13 * scale))[0]
    if bad.size:
        k = int(bad[0])
        raise SingularJacobianError(
            f"singular Jacobian: zero pivot at column {k} ({names[k]})", pivot=(k, names[k])
        )
    return lu, piv


def solve_newton(net: Network, opts: SolveOptions | None = None,
                 init: IVState | None = None) -> tuple[IVState, SolveTrace]:
    """Solve power flow with fixed unit setpoints.

    Returns the state in ``net``'s own unit system. Raises
    :class:`NonConvergenceError` (carrying the trace and last iterate) when
    ``opts.tol`` is not reached within ``opts.max_iter`` residual
    evaluations.
    """
    opts = opts or SolveOptions()
    if not net.reference_buses:
        raise ValueError("network has no reference bus")
    check_reachable(net)
    pu = as_per_unit(net)
    system = IVSystem(pu)
    trace = SolveTrace("newton")

    if opts.flat_start or init is None:
        v0 = flat_voltages(pu)
        i0 = {br: np.zeros(len(pu.branches[br].phases), dtype=complex) for br in pu.branches}
    else:
        init_pu = init if net.unit_system is UnitSystem.PER_UNIT else state_to_per_unit(net, init)
        v0, i0 = init_pu.v, init_pu.i_series
    x = system.pack(v0, i0)

    fx = system.residual(x)
    norm = system.norm(fx)
    trace.residuals.append(norm)
    while True:
        if system.clamped:
            trace.clamped.append(trace.iterations - 1)
        if norm <= opts.tol:
            trace.reason = "converged"
            break
        if not np.isfinite(norm):
            trace.reason = "diverged"
            break
        if trace.iterations >= opts.max_iter:
            trace.reason = "max_iter"
            break
        lu, piv = _lu_or_raise(system.jacobian(x), system.names)
        dx = scipy.linalg.lu_solve((lu, piv), -fx, check_finite=False)
        alpha = opts.damping
        for attempt in range(5):
            x_new = x + alpha * dx
            f_new = system.residual(x_new)
            n_new = system.norm(f_new)
            if n_new < norm or attempt == 4:
                break
            alpha *= 0.5
        x, fx, norm = x_new, f_new, n_new
        trace.step_scales.append(alpha)
        trace.residuals.append(norm)

    v, i_series = system.unpack(x)
    state = IVState(v, i_series, balance_free_units(pu, v, i_series))
    if net.unit_system is UnitSystem.SI:
        state = pin_references(net, state_from_per_unit(net, state))
    if not trace.converged:
        raise NonConvergenceError(
            f"Newton stopped ({trace.reason}) after {trace.iterations} iterates with "
            f"residual {norm:.3e} > tol {opts.tol:.3e}",
            trace=trace, state=state,
        )
    return state, trace
