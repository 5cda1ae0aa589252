"""Locally responsive distributed routing policies and numerical axiom checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DensityOutOfRange,
    EmptyOrFullSubset,
    FlowAtCapacity,
    FlowNotBalanced,
    RoutingError,
    UnknownNode,
)
from .network import CAPACITY_TOL, Topology


def log_residual(rho, rho_max, eta):
    """``log h(rho) = -eta * rho / (rho_max - rho)``, and ``-inf`` at or above ``rho_max``."""
    rho = np.asarray(rho, dtype=float)
    gap = rho_max - rho
    safe = np.where(gap > 0, gap, 1.0)
    return np.where(gap > 0, -eta * rho / safe, -np.inf)


def _softmax(logits):
    """Normalise along the last axis; rows that are entirely ``-inf`` map to zeros."""
    top = np.max(logits, axis=-1, keepdims=True)
    dead = ~np.isfinite(top)
    p = np.exp(logits - np.where(dead, 0.0, top))
    total = p.sum(axis=-1, keepdims=True)
    return np.where(dead, 0.0, p / np.where(dead, 1.0, total))


@dataclass(frozen=True)
class RoutingPolicy:
    """Exponential-residual routing ``G_e = w_e h_e / sum_j w_j h_j``.

    Weights are held as logarithms because calibrated weights can span many
    orders of magnitude near saturation.
    """

    topology: Topology = field(repr=False)
    log_weights: np.ndarray
    eta: float = 1.0
    family: str = "exp-residual"

    def __post_init__(self):
        if self.family != "exp-residual":
            raise RoutingError(f"unknown routing family {self.family!r}")
        if not self.eta > 0:
            raise RoutingError("eta must be strictly positive")
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (len(self.topology.links),) or not np.all(np.isfinite(lw)):
            raise RoutingError("need one finite log-weight per link")
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_weights(cls, topology, weights, eta=1.0):
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(topology.links),):
            raise RoutingError("need one weight per link")
        if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            bad = [topology.links[i].id for i in np.flatnonzero(~(w > 0) | ~np.isfinite(w))]
            raise RoutingError(f"routing weights must be positive and finite (links {bad})")
        return cls(topology, np.log(w), eta)

    @classmethod
    def uniform(cls, topology, eta=1.0):
        return cls(topology, np.zeros(len(topology.links)), eta)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def _out(self, node):
        if node not in self.topology.out_links or node == self.topology.n:
            raise UnknownNode(node)
        return np.asarray(self.topology.out_links[node], dtype=int)

    def route(self, node: int, rho_v, active=None):
        """Split of node ``node``'s inflow over its outgoing links.

        ``rho_v`` may carry leading batch axes. Coordinates at ``rho_max`` get
        exactly 0; if every coordinate is saturated the zero vector is returned.
        """
        out = self._out(node)
        rho_v = np.asarray(rho_v, dtype=float)
        rho_max = self.topology.rho_max[out]
        if rho_v.shape[-1:] != out.shape:
            raise ValueError(f"node {node} has {len(out)} outgoing links")
        if np.any(rho_v < 0) or np.any(rho_v > rho_max):
            raise DensityOutOfRange(f"densities at node {node} outside [0, rho_max]")
        return self._route(out, rho_v, active)

    def _route(self, out, rho_v, active=None):
        logits = self.log_weights[out] + log_residual(rho_v, self.topology.rho_max[out], self.eta)
        if active is not None:
            logits = np.where(active, logits, -np.inf)
        return _softmax(logits)

    def restricted(self, node: int, subset, x_subset):
        """The limit map on a proper subset ``J`` of the outgoing links."""
        out = self._out(node)
        idx = [self.topology.link_index(j) for j in subset]
        if not idx or len(set(idx)) != len(idx) or not set(idx) < set(out.tolist()):
            raise EmptyOrFullSubset(f"J must be a nonempty proper subset of node {node}'s links")
        idx = np.asarray(idx)
        x = np.asarray(x_subset, dtype=float)
        rho_max = self.topology.rho_max[idx]
        if np.any(x < 0) or np.any(x >= rho_max):
            raise DensityOutOfRange("restricted densities must lie in [0, rho_max)")
        return self._route(idx, x)


def restricted_policy(policy: RoutingPolicy, node: int, subset, x_subset):
    return policy.restricted(node, subset, x_subset)


def calibrate_weights(topology: Topology, target_flow, lambda0: float, eta: float = 1.0):
    """Weights whose equilibrium split reproduces ``target_flow`` exactly.

    At ``rho = mu^{-1}(f)`` each node must route ``f_e / lambda_v``, so
    ``w_e`` is proportional to ``(f_e / lambda_v) / h_e(rho_e)``.
    """
    f = np.asarray(target_flow, dtype=float)
    if f.shape != (len(topology.links),):
        raise ValueError("need one target flow per link")
    check_balance(topology, f, lambda0)
    f_max = topology.f_max
    at_cap = [l.id for l, fe, fm in zip(topology.links, f, f_max) if not 0 < fe < fm]
    if at_cap:
        raise FlowAtCapacity(f"target flows must lie strictly inside (0, f_max) on {at_cap}")
    rho = np.array([l.flow.inverse(fe) for l, fe in zip(topology.links, f)])
    logw = np.empty_like(f)
    for v in range(topology.n):
        out = list(topology.out_links[v])
        lam_v = f[out].sum()
        lw = np.log(f[out] / lam_v) - log_residual(rho[out], topology.rho_max[out], eta)
        logw[out] = lw - lw.max()
    return RoutingPolicy(topology, logw, eta)


def check_balance(topology: Topology, f, lambda0: float, tol: float = CAPACITY_TOL):
    """Raise :class:`FlowNotBalanced` unless ``f`` conserves mass at every node."""
    f = np.asarray(f, dtype=float)
    out0 = f[list(topology.out_links[0])].sum()
    if abs(out0 - lambda0) > tol:
        raise FlowNotBalanced(f"origin sends {out0}, inflow is {lambda0}")
    for v in range(1, topology.n):
        fin = f[list(topology.in_links[v])].sum()
        fout = f[list(topology.out_links[v])].sum()
        if abs(fin - fout) > tol:
            raise FlowNotBalanced(f"node {v}: inflow {fin} != outflow {fout}")


@dataclass
class AxiomCheckReport:
    node: int
    simplex_violations: list = field(default_factory=list)
    limit_violations: list = field(default_factory=list)
    cooperativity_violations: list = field(default_factory=list)
    samples: int = 0

    @property
    def passed(self) -> bool:
        return not (self.simplex_violations or self.limit_violations or self.cooperativity_violations)

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"node {self.node}: {status} ({self.samples} samples; simplex "
            f"{len(self.simplex_violations)}, limit {len(self.limit_violations)}, "
            f"cooperativity {len(self.cooperativity_violations)} violations)"
        )


def _as_batched(fn):
    def call(rho):
        try:
            out = np.asarray(fn(rho), dtype=float)
            if out.shape == rho.shape:
                return out
        except (ValueError, TypeError, IndexError):
            pass
        return np.array([np.asarray(fn(r), dtype=float) for r in rho])

    return call


def check_axioms(
    policy,
    node: int = 0,
    sample_count: int = 1000,
    tolerance: float = 1e-6,
    *,
    rho_max=None,
    seed: int = 0,
    simplex_tol: float = 1e-12,
    limit_tol: float = 1e-6,
    fd_step: float = 1e-6,
) -> AxiomCheckReport:
    """Statistically test the simplex property and axioms (a) and (b).

    ``policy`` is either a :class:`RoutingPolicy` (``node`` selects the node)
    or any callable mapping a density vector to a split, in which case
    ``rho_max`` must be given. Violations are collected, never raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    if isinstance(policy, RoutingPolicy):
        out = list(policy.topology.out_links[node])
        rho_max = policy.topology.rho_max[out]
        fn = lambda r: policy.route(node, r)  # noqa: E731
    else:
        if rho_max is None:
            raise ValueError("rho_max is required for a bare callable")
        rho_max = np.asarray(rho_max, dtype=float)
        fn = _as_batched(policy)
    k = len(rho_max)
    rng = np.random.default_rng(seed)
    report = AxiomCheckReport(node=node, samples=sample_count)

    # simplex on the open box
    occ = rng.uniform(0.0, 1.0, size=(sample_count, k)) * (1 - 1e-9)
    pts = occ * rho_max
    g = fn(pts)
    err = np.maximum(np.abs(g.sum(axis=1) - 1.0), np.maximum(-g.min(axis=1), 0.0))
    for i in np.flatnonzero(err > simplex_tol):
        report.simplex_violations.append((tuple(pts[i]), float(err[i])))

    if k >= 2:
        # axiom (a): saturate one coordinate, others at most half full
        base = rng.uniform(0.0, 0.5, size=(sample_count, k)) * rho_max
        levels = [1 - 10.0**-p for p in range(2, 7)]
        for e in range(k):
            seq = []
            for lev in levels:
                x = base.copy()
                x[:, e] = lev * rho_max[e]
                seq.append(fn(x)[:, e])
            x = base.copy()
            x[:, e] = (1 - 1e-8) * rho_max[e]
            final = fn(x)[:, e]
            seq = np.array(seq)
            rise = np.max(np.diff(seq, axis=0), axis=0)
            bad = (final > limit_tol) | (rise > tolerance)
            for i in np.flatnonzero(bad):
                report.limit_violations.append(
                    ((*base[i, :e], rho_max[e], *base[i, e + 1 :]), float(max(final[i], rise[i])))
                )

        # axiom (b): cross-derivatives are nonnegative
        h = fd_step * rho_max
        lo = h / rho_max
        occ = rng.uniform(lo.max(), 0.99, size=(sample_count, k))
        pts = occ * rho_max
        for e in range(k):
            up = pts.copy()
            dn = pts.copy()
            up[:, e] += h[e]
            dn[:, e] -= h[e]
            deriv = (fn(up) - fn(dn)) / (2 * h[e])
            for j in range(k):
                if j == e:
                    continue
                for i in np.flatnonzero(deriv[:, j] < -tolerance):
                    report.cooperativity_violations.append(
                        ((tuple(pts[i]), j, e), float(-deriv[i, j]))
                    )
    return report
