"""Switched conservation-law dynamics with irreversible link saturation.

Between saturation events the densities follow a smooth vector field and are
integrated with :func:`scipy.integrate.solve_ivp` (Radau by default: the
routing feedback becomes very stiff as links approach ``rho_max``). A link
whose density crosses ``rho_max * (1 - snap_tol)`` is snapped to ``rho_max``
and deactivated for the rest of the run.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (
    DensityOutOfRange,
    HorizonNonpositive,
    NoEquilibrium,
    NonConvergence,
    StepSizeUnderflow,
    WindowExceedsHorizon,
)
from .network import FlowFunction, Topology
from .routing import RoutingPolicy, _softmax, log_residual


class Classification(str, enum.Enum):
    TRANSFERRING = "Transferring"
    NOT_TRANSFERRING = "NotTransferring"
    UNDECIDED = "Undecided"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SimOptions:
    horizon: float = 200.0
    method: str = "Radau"
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    snap_tol: float = 1e-7  # relative to rho_max
    fallback_snap_tol: float = 1e-5  # used only when the step size underflows
    rel_tol: float = 0.02
    window: float = 0.5  # fraction of the horizon used for classification
    sample_dt: float | None = None

    def with_horizon(self, horizon):
        return replace(self, horizon=horizon)


@dataclass
class NetworkState:
    t: float
    rho: np.ndarray
    xi: np.ndarray
    chi: np.ndarray
    lam: np.ndarray
    f: np.ndarray


@dataclass(frozen=True)
class SaturationEvent:
    t: float
    link: str
    gap: float = 0.0  # rho_max - rho at the moment of snapping


class _Field:
    """Precomputed index structure for evaluating the switched vector field."""

    def __init__(self, topology: Topology, policy: RoutingPolicy, lambda0: float, flows=None):
        self.topology = topology
        self.policy = policy
        self.lambda0 = float(lambda0)
        self.flows = tuple(flows) if flows is not None else topology.flows
        self.rho_max = topology.rho_max
        self.tail = np.array([l.tail for l in topology.links])
        self.head = np.array([l.head for l in topology.links])
        self.nodes = topology.node_count
        self.outs = [np.asarray(topology.out_links[v], dtype=int) for v in range(topology.n)]
        self.ins = [np.asarray(topology.in_links[v], dtype=int) for v in range(self.nodes)]
        self._vector_flows = all(type(fl) is FlowFunction for fl in self.flows)
        if self._vector_flows:
            self._fmax = np.array([fl.f_max for fl in self.flows])
            self._alpha = np.array([fl.alpha for fl in self.flows])
            self._linear = np.array([fl.shape == "linear" for fl in self.flows])

    def flow_values(self, gap):
        """Left-branch flows from gaps ``rho_max - rho``; ``f_max`` for nonpositive gaps."""
        if not self._vector_flows:
            return np.array([fl.smooth(m - g) for fl, m, g in zip(self.flows, self.rho_max, gap)])
        below = gap > 0
        safe = np.where(below, gap, 1.0)
        rho = self.rho_max - gap
        lin = self._fmax * rho / self.rho_max
        rat = -self._fmax * np.expm1(-self._alpha * rho / safe)
        return np.where(below, np.where(self._linear, lin, rat), self._fmax)

    def _route(self, out, gap, active):
        # logits built from the gap keep full relative precision near saturation
        g = gap[out]
        safe = np.where(g > 0, g, 1.0)
        lh = np.where(g > 0, -self.policy.eta * (self.rho_max[out] - g) / safe, -np.inf)
        logits = np.where(active, self.policy.log_weights[out] + lh, -np.inf)
        return _softmax(logits)

    def evaluate_gap(self, gap, xi):
        """Return ``(drho, inflow, outflow, lam, chi, f)`` with the state given as gaps."""
        f = np.where(xi, self.flow_values(gap), 0.0)
        chi = np.ones(self.nodes, dtype=bool)
        lam = np.zeros(self.nodes)
        lam[0] = self.lambda0
        inflow = np.zeros_like(gap)
        for v in range(1, self.nodes):
            lam[v] = f[self.ins[v]].sum()
        for v, out in enumerate(self.outs):
            act = xi[out]
            chi[v] = act.any()
            if chi[v] and lam[v] != 0.0:
                inflow[out] = lam[v] * self._route(out, gap, act)
        outflow = np.where(chi[self.head], f, 0.0)
        return inflow - outflow, inflow, outflow, lam, chi, f

    def evaluate(self, rho, xi):
        return self.evaluate_gap(self.rho_max - np.asarray(rho, dtype=float), xi)


def rhs(topology: Topology, flows, policy: RoutingPolicy, state: NetworkState, lambda0: float):
    """Density derivative of every link at ``state``."""
    field_ = _Field(topology, policy, lambda0, flows)
    return field_.evaluate(np.asarray(state.rho, dtype=float), np.asarray(state.xi, dtype=bool))[0]


def make_state(topology, policy, rho, lambda0, xi=None, flows=None, t=0.0) -> NetworkState:
    rho = np.asarray(rho, dtype=float)
    if xi is None:
        xi = rho < topology.rho_max
    xi = np.asarray(xi, dtype=bool)
    _, _, _, lam, chi, f = _Field(topology, policy, lambda0, flows).evaluate(rho, xi)
    return NetworkState(t, rho, xi, chi, lam, f)


@dataclass
class Trajectory:
    link_ids: list
    node_count: int
    lambda0: float
    t: np.ndarray
    rho: np.ndarray
    f: np.ndarray
    xi: np.ndarray
    chi: np.ndarray
    lam: np.ndarray
    cum_inflow: np.ndarray
    cum_outflow: np.ndarray
    cum_lambda_n: np.ndarray
    events: list = field(default_factory=list)
    snap_mass: np.ndarray | None = None

    @property
    def lambda_n(self) -> np.ndarray:
        return self.lam[:, -1]

    @property
    def avg_lambda_n(self) -> np.ndarray:
        t = self.t - self.t[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = self.cum_lambda_n / t
        return np.where(t > 0, avg, self.lambda_n)

    @property
    def horizon(self) -> float:
        return float(self.t[-1] - self.t[0])

    def window_average(self, start: float, stop: float | None = None) -> float:
        """Time average of the destination arrival rate over ``[start, stop]``."""
        stop = self.t[-1] if stop is None else stop
        c0, c1 = np.interp([start, stop], self.t, self.cum_lambda_n)
        return float((c1 - c0) / (stop - start))

    def mass_balance_residual(self, include_snaps: bool = True) -> np.ndarray:
        """``|rho(T) - rho(0) - int(inflow - outflow)|`` per link.

        Snapping a link onto ``rho_max`` adds its last tiny gap as mass; with
        ``include_snaps`` that recorded jump is accounted for, so the residual
        measures integration error alone.
        """
        net = self.cum_inflow[-1] - self.cum_outflow[-1]
        if include_snaps and self.snap_mass is not None:
            net = net + self.snap_mass
        return np.abs(self.rho[-1] - self.rho[0] - net)

    def state(self, i: int) -> NetworkState:
        return NetworkState(self.t[i], self.rho[i], self.xi[i], self.chi[i], self.lam[i], self.f[i])

    def saturated_links(self) -> list:
        return [e.link for e in self.events]

    def to_csv(self, target=None, digits: int = 12):
        """Write the trajectory CSV; returns the text when ``target`` is None."""
        buf = io.StringIO() if target is None else None
        fh = buf if buf is not None else open(target, "w", newline="")
        try:
            fmt = f"{{:.{digits}g}}".format
            w = csv.writer(fh, lineterminator="\n")
            ids = self.link_ids
            w.writerow(
                ["t"]
                + [f"rho_{i}" for i in ids]
                + [f"f_{i}" for i in ids]
                + [f"xi_{i}" for i in ids]
                + [f"chi_{v}" for v in range(self.node_count)]
                + ["lambda_n", "avg_lambda_n"]
            )
            avg = self.avg_lambda_n
            for k in range(len(self.t)):
                w.writerow(
                    [fmt(self.t[k])]
                    + [fmt(x) for x in self.rho[k]]
                    + [fmt(x) for x in self.f[k]]
                    + [int(x) for x in self.xi[k]]
                    + [int(x) for x in self.chi[k]]
                    + [fmt(self.lambda_n[k]), fmt(avg[k])]
                )
            for ev in self.events:
                fh.write(f"# event t={fmt(ev.t)} link={ev.link} saturated\n")
        finally:
            if buf is None:
                fh.close()
        return buf.getvalue() if buf is not None else None


def _threshold_event(e, level):
    def event(t, y, *args):
        return y[e] - level

    event.terminal = True
    event.direction = -1
    return event


def simulate(
    topology: Topology,
    policy: RoutingPolicy,
    rho0,
    lambda0: float,
    options: SimOptions | None = None,
    flows=None,
    xi0=None,
) -> Trajectory:
    """Integrate the switched dynamics from ``rho0`` over ``[0, options.horizon]``.

    The integrated state is the gap ``rho_max - rho`` per link (so that tiny
    gaps keep full relative precision), followed by the running integrals of
    each link's inflow and outflow and of the destination arrival rate.
    """
    opts = options or SimOptions()
    if not opts.horizon > 0:
        raise HorizonNonpositive(f"horizon must be positive, got {opts.horizon}")
    fld = _Field(topology, policy, lambda0, flows)
    E = len(topology.links)
    rho_max = fld.rho_max
    rho = np.asarray(rho0, dtype=float).copy()
    if rho.shape != (E,) or np.any(rho < 0) or np.any(rho > rho_max):
        raise DensityOutOfRange("initial densities must lie in [0, rho_max]")
    xi = (rho < rho_max) if xi0 is None else np.asarray(xi0, dtype=bool).copy()
    gap = np.where(xi, rho_max - rho, 0.0)
    snap_level = rho_max * opts.snap_tol

    def fun(t, y, xi):
        drho, inflow, outflow, lam, _, _ = fld.evaluate_gap(y[:E], xi)
        return np.concatenate([-drho, inflow, outflow, lam[-1:]])

    # only the gap columns feed back into the vector field
    sparsity = np.zeros((3 * E + 1, 3 * E + 1), dtype=bool)
    sparsity[:, :E] = True
    atol = np.concatenate([np.full(E, opts.atol * 1e-2), np.full(2 * E + 1, opts.atol)])
    jac_kw = {"jac_sparsity": sparsity} if opts.method in ("Radau", "BDF") else {}

    t = 0.0
    y = np.concatenate([gap, np.zeros(2 * E + 1)])
    times, states, flags, events = [], [], [], []
    snapped = np.zeros(E)

    def saturate(e):
        xi[e] = False
        snapped[e] += y[e]
        events.append(SaturationEvent(t, topology.links[e].id, float(y[e])))
        y[e] = 0.0

    while True:
        active = np.flatnonzero(xi)
        evs = [_threshold_event(e, snap_level[e]) for e in active]
        xi_seg = xi.copy()
        kwargs = dict(method=opts.method, rtol=opts.rtol, atol=atol, max_step=opts.max_step)
        if opts.sample_dt:
            grid = np.arange(t, opts.horizon, opts.sample_dt)
            kwargs["t_eval"] = np.append(grid, opts.horizon)
        sol = solve_ivp(
            fun, (t, opts.horizon), y, events=evs or None, args=(xi_seg,), **kwargs, **jac_kw
        )
        seg_t, seg_y = sol.t, sol.y.T
        if sol.status == -1:
            # the field is extremely stiff right before saturation; accept the
            # snap at a looser level for links that are demonstrably filling
            y_last = seg_y[-1]
            drho = fld.evaluate_gap(y_last[:E], xi)[0]
            near = xi & (y_last[:E] <= rho_max * opts.fallback_snap_tol) & (drho > 0)
            if not near.any():
                raise StepSizeUnderflow(f"t={seg_t[-1]:.6g}: {sol.message}")
            t_hit = float(seg_t[-1])
            y_hit = y_last
            fired = list(np.flatnonzero(near))
        elif sol.status != 1:
            times.append(seg_t)
            states.append(seg_y)
            flags.append(np.repeat(xi_seg[None, :], len(seg_t), axis=0))
            break
        else:
            t_hit = min(te[0] for te in sol.t_events if len(te))
            y_hit = next(
                ye[0] for te, ye in zip(sol.t_events, sol.y_events) if len(te) and te[0] == t_hit
            )
            fired = [active[k] for k, te in enumerate(sol.t_events) if len(te) and te[0] == t_hit]
        keep = seg_t < t_hit
        times.append(seg_t[keep])
        states.append(seg_y[keep])
        flags.append(np.repeat(xi_seg[None, :], keep.sum(), axis=0))
        t, y = float(t_hit), y_hit.copy()
        for e in fired:
            saturate(e)
        # links already at the threshold and still filling saturate with the rest
        while True:
            drho = fld.evaluate_gap(y[:E], xi)[0]
            more = np.flatnonzero(xi & (y[:E] <= snap_level) & (drho > 0))
            if not len(more):
                break
            for e in more:
                saturate(e)
        if t >= opts.horizon:
            times.append(np.array([t]))
            states.append(y[None, :])
            flags.append(xi[None, :].copy())
            break

    t_all = np.concatenate(times)
    y_all = np.concatenate(states)
    xi_all = np.concatenate(flags)
    gap_all = y_all[:, :E]
    n_s = len(t_all)
    f_all = np.empty((n_s, E))
    chi_all = np.empty((n_s, topology.node_count), dtype=bool)
    lam_all = np.empty((n_s, topology.node_count))
    for k in range(n_s):
        _, _, _, lam_all[k], chi_all[k], f_all[k] = fld.evaluate_gap(gap_all[k], xi_all[k])
    return Trajectory(
        link_ids=topology.link_ids,
        node_count=topology.node_count,
        lambda0=float(lambda0),
        t=t_all,
        rho=np.clip(rho_max - gap_all, 0.0, rho_max),
        f=f_all,
        xi=xi_all,
        chi=chi_all,
        lam=lam_all,
        cum_inflow=y_all[:, E : 2 * E],
        cum_outflow=y_all[:, 2 * E : 3 * E],
        cum_lambda_n=y_all[:, -1],
        events=events,
        snap_mass=snapped,
    )


def classify_transferring(
    trajectory: Trajectory, lambda0: float, rel_tol: float = 0.02, window: float | None = None
) -> Classification:
    """Apply the transferring dichotomy to the average arrival rate over the final window.

    ``window`` is a duration; by default the last half of the trajectory.
    """
    span = trajectory.horizon
    window = 0.5 * span if window is None else window
    if window > span * (1 + 1e-12) or not window > 0:
        raise WindowExceedsHorizon(f"window {window} does not fit in horizon {span}")
    end = trajectory.t[-1]
    avg = trajectory.window_average(end - window, end)
    if abs(avg - lambda0) <= rel_tol * lambda0:
        return Classification.TRANSFERRING
    if avg <= rel_tol * lambda0:
        return Classification.NOT_TRANSFERRING
    return Classification.UNDECIDED


def classify_with_options(trajectory: Trajectory, lambda0: float, options: SimOptions):
    return classify_transferring(
        trajectory, lambda0, options.rel_tol, options.window * trajectory.horizon
    )


def _node_split_bracket(fld: _Field, out, lam_v):
    """Exact equilibrium at one node for the exponential-residual family.

    At equilibrium ``mu_e(x_e) / (w_e h_e(x_e))`` takes a common value ``k``
    across the node's links; each ratio is increasing in ``x_e``, so the
    densities are monotone in ``k`` and a scalar root in ``log k`` fixes them.
    """
    pol = fld.policy
    flows = [fld.flows[e] for e in out]
    rmax = fld.rho_max[out]
    lw = pol.log_weights[out]

    def log_ratio(i, x):
        mu = flows[i].smooth(x)
        if mu <= 0:
            return -1e300
        return math.log(mu) - lw[i] - float(log_residual(x, rmax[i], pol.eta))

    def density(i, logk):
        lo, hi = 0.0, rmax[i]
        g = lambda x: log_ratio(i, x) - logk  # noqa: E731
        top = hi * (1 - 1e-15)
        if g(top) <= 0:
            return top
        return brentq(g, lo, top, xtol=1e-16 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)

    def total(logk):
        return sum(flows[i].smooth(density(i, logk)) for i in range(len(out))) - lam_v

    a, b = -1.0, 1.0
    while total(a) > 0:
        a *= 2
        if a < -1e6:
            raise NonConvergence("could not bracket the node equilibrium")
    while total(b) < 0:
        b *= 2
        if b > 1e6:
            raise NoEquilibrium("node inflow cannot be absorbed below capacity")
    logk = brentq(total, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.array([density(i, logk) for i in range(len(out))])


def _node_split_fixed_point(fld: _Field, out, lam_v, damping, tol, max_iter):
    flows = [fld.flows[e] for e in out]
    fmax = np.array([fl.f_max for fl in flows])
    x = np.array([fl.inverse(min(lam_v / len(out), 0.5 * fm)) for fl, fm in zip(flows, fmax)])
    prev = math.inf
    for _ in range(max_iter):
        target = lam_v * fld.policy._route(out, x)
        clipped = target >= fmax
        target = np.minimum(target, fmax * (1 - 1e-12))
        new = np.array([fl.inverse(v) for fl, v in zip(flows, target)])
        res = np.max(np.abs(new - x))
        if res <= tol:
            if clipped.any():
                raise NoEquilibrium("fixed-point iteration left the state space")
            return new
        if res > prev:
            damping *= 0.5
        prev = res
        x = x + damping * (new - x)
    raise NonConvergence(f"no convergence after {max_iter} iterations")


def solve_equilibrium(
    topology: Topology,
    policy: RoutingPolicy,
    lambda0: float,
    flows=None,
    *,
    method: str = "bracket",
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Equilibrium densities, solved node by node in topological order.

    ``method="bracket"`` uses the exact scalar reduction available for the
    exponential-residual family; ``method="fixed-point"`` iterates
    ``rho <- mu^{-1}(lambda_v G(rho))`` with damping that halves whenever the
    residual grows.
    """
    fld = _Field(topology, policy, lambda0, flows)
    rho = np.zeros(len(topology.links))
    f = np.zeros(len(topology.links))
    lam = np.zeros(topology.node_count)
    lam[0] = lambda0
    for v in range(topology.n):
        out = fld.outs[v]
        if v > 0:
            lam[v] = f[fld.ins[v]].sum()
        cap = sum(fld.flows[e].f_max for e in out)
        if lam[v] >= cap:
            raise NoEquilibrium(f"node {v}: inflow {lam[v]} >= outgoing capacity {cap}")
        if lam[v] == 0:
            continue
        if method == "bracket":
            x = _node_split_bracket(fld, out, lam[v])
        elif method == "fixed-point":
            x = _node_split_fixed_point(fld, out, lam[v], damping, tol, max_iter)
        else:
            raise ValueError(f"unknown method {method!r}")
        rho[out] = x
        f[out] = [fld.flows[e].smooth(xe) for e, xe in zip(out, x)]
    resid = np.max(np.abs(fld.evaluate(rho, rho < fld.rho_max)[0]))
    if resid > 1e-8:
        raise NonConvergence(f"equilibrium residual {resid:.3g} exceeds 1e-8")
    return rho
