"""Residual capacities, the backward budget recursion and its sandwich bounds.

For a non-destination node ``v`` the recursion asks for the cheapest reduction
``x`` of the outgoing maximum flows that leaves less than ``lambda_v`` of
capacity, where reducing a link ``e`` costs ``min(x_e, d_head(e))``: either pay
for the reduction directly or make the head node fail. ``d`` of the
destination is ``+inf``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation, FlowExceedsCapacity, InfeasibleBudget, NotTreeLike
from .network import CAPACITY_TOL, CutReport, Topology, is_tree_like, min_cut_capacity
from .routing import check_balance

BOUND_TOL = 1e-9
MAX_ENUM_DEGREE = 12


@dataclass(frozen=True)
class EquilibriumFlow:
    flows: np.ndarray
    lambda0: float

    @classmethod
    def from_flows(cls, topology: Topology, flows, lambda0: float):
        f = np.asarray(flows, dtype=float)
        if f.shape != (len(topology.links),):
            raise ValueError("need one equilibrium flow per link")
        if np.any(f < -CAPACITY_TOL):
            raise ValueError("equilibrium flows must be nonnegative")
        over = [l.id for l, fe in zip(topology.links, f) if fe > l.f_max + CAPACITY_TOL]
        if over:
            raise FlowExceedsCapacity(f"flow above f_max on {over}")
        check_balance(topology, f, lambda0)
        return cls(f, float(lambda0))

    def node_throughput(self, topology: Topology, v: int) -> float:
        return float(self.flows[list(topology.out_links[v])].sum())


def residual_capacity(topology: Topology, eq: EquilibriumFlow):
    """``R_v = sum over outgoing links of (f_max - f)`` and their minimum."""
    f_max = topology.f_max
    if np.any(eq.flows > f_max + CAPACITY_TOL):
        raise FlowExceedsCapacity("equilibrium flow exceeds f_max")
    r_v = {}
    for v in range(topology.n):
        out = list(topology.out_links[v])
        r_v[v] = float(np.sum(f_max[out] - eq.flows[out]))
    return r_v, min(r_v.values())


def _cost(x, d):
    return float(sum(min(xe, de) for xe, de in zip(x, d)))


def minimize_cv(f_max, d_children, lam: float):
    """Minimise ``sum_e min(x_e, d_e)`` over ``0 <= x <= f_max, sum(f_max - x) <= lam``.

    The objective is concave, so the minimum sits at a vertex of
    ``{0 <= x <= f_max, sum x = B}`` with ``B = sum f_max - lam``: every
    coordinate at a bound except at most one. All such vertices are
    enumerated; ties go to the lexicographically smallest ``x``.
    """
    f_max = np.asarray(f_max, dtype=float)
    d = [math.inf if di is None else float(di) for di in d_children]
    k = len(f_max)
    if len(d) != k:
        raise ValueError("f_max and d_children must have the same length")
    if k > MAX_ENUM_DEGREE:
        raise ValueError(f"vertex enumeration supports out-degree <= {MAX_ENUM_DEGREE}")
    budget = float(f_max.sum() - lam)
    if budget <= 0:
        return 0.0, np.zeros(k)
    if budget > f_max.sum() + CAPACITY_TOL:
        raise InfeasibleBudget(f"budget {budget} exceeds total capacity")

    best_val, best_x = math.inf, None

    def consider(x):
        nonlocal best_val, best_x
        val = _cost(x, d)
        if val < best_val - 1e-12 or (
            val <= best_val + 1e-12 and tuple(x) < tuple(best_x)
        ):
            best_val, best_x = min(val, best_val), x

    for mask in range(1 << k):
        full = [(mask >> i) & 1 for i in range(k)]
        used = float(sum(f_max[i] for i in range(k) if full[i]))
        rest = budget - used
        base = np.where(np.array(full, dtype=bool), f_max, 0.0)
        if abs(rest) <= CAPACITY_TOL:
            consider(base)
            continue
        if rest < 0:
            continue
        for i in range(k):
            if not full[i] and rest <= f_max[i] + CAPACITY_TOL:
                x = base.copy()
                x[i] = min(rest, f_max[i])
                consider(x)
    return best_val, best_x


def compute_d(topology: Topology, eq: EquilibriumFlow, flows=None):
    """Run the budget recursion from the deepest layer back to the origin.

    Returns ``(d, d0, x_star)`` where ``d`` maps every node (destination
    included, as ``inf``) to its budget and ``x_star`` maps each
    non-destination node to the minimising reduction over its outgoing links.
    """
    if not is_tree_like(topology):
        raise NotTreeLike("the budget recursion needs a tree-like topology")
    f_max = np.array([fl.f_max for fl in flows]) if flows is not None else topology.f_max
    d = {topology.n: math.inf}
    x_star = {}
    for layer in reversed(topology.layers):
        for v in layer:
            out = list(topology.out_links[v])
            children = [d[topology.links[e].head] for e in out]
            d[v], x_star[v] = minimize_cv(f_max[out], children, eq.node_throughput(topology, v))
    return d, d[0], x_star


def attack_profile(topology: Topology, d, x_star) -> np.ndarray:
    """Per-link reductions realising the origin's minimiser.

    A link is reduced directly when its reduction is cheaper than failing its
    head node; otherwise the head node's own minimiser is followed.
    """
    delta = np.zeros(len(topology.links))

    def walk(v):
        for e, xe in zip(topology.out_links[v], x_star[v]):
            if xe <= 0:
                continue
            head = topology.links[e].head
            if xe <= d[head]:
                delta[e] = xe
            else:
                walk(head)

    walk(0)
    return delta


@dataclass
class ResilienceReport:
    link_ids: list
    lambda0: float
    R_v: dict
    R: float
    C: float
    cut: CutReport
    d_v: dict | None = None
    d0: float | None = None
    x_star: dict | None = None
    notes: list = field(default_factory=list)

    @property
    def tree_like(self) -> bool:
        return self.d0 is not None

    @property
    def R_le_d0(self):
        return None if self.d0 is None else self.R <= self.d0 + BOUND_TOL

    @property
    def d0_le_C_minus_lambda0(self):
        return None if self.d0 is None else self.d0 <= self.C - self.lambda0 + BOUND_TOL

    def to_dict(self):
        def num(x):
            return None if x is None else ("inf" if math.isinf(x) else float(f"{x:.12g}"))

        return {
            "R_v": {str(v): num(r) for v, r in self.R_v.items()},
            "R": num(self.R),
            "C": num(self.C),
            "cut_witness": {
                "nodes": sorted(self.cut.cut_node_set),
                "links": list(self.cut.crossing_links),
                "capacity": num(self.cut.capacity),
            },
            "d_v": None if self.d_v is None else {str(v): num(x) for v, x in self.d_v.items()},
            "d_0": num(self.d0),
            "x_star": None
            if self.x_star is None
            else {str(v): [num(x) for x in xs] for v, xs in self.x_star.items()},
            "bounds": {
                "R_le_d0": self.R_le_d0,
                "d0_le_C_minus_lambda0": self.d0_le_C_minus_lambda0,
            },
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        g = "{:.12g}".format
        rows = [("quantity", "value")]
        for v, r in self.R_v.items():
            rows.append((f"R_{v}", g(r)))
        rows.append(("R", g(self.R)))
        rows.append(("C", g(self.C)))
        rows.append(("C - lambda0", g(self.C - self.lambda0)))
        rows.append(("cut", "{" + ",".join(map(str, sorted(self.cut.cut_node_set))) + "}"))
        if self.d_v is not None:
            for v, x in sorted(self.d_v.items()):
                rows.append((f"d_{v}", "inf" if math.isinf(x) else g(x)))
            rows.append(("R <= d_0", "OK" if self.R_le_d0 else "VIOLATED"))
            rows.append(("d_0 <= C - lambda0", "OK" if self.d0_le_C_minus_lambda0 else "VIOLATED"))
        width = max(len(a) for a, _ in rows)
        lines = [f"{a:<{width}}  {b}" for a, b in rows]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def bounds_report(topology: Topology, eq: EquilibriumFlow, flows=None, *, partial_ok=False):
    """Assemble ``R``, ``C`` and ``d_0`` and check ``R <= d_0 <= C - lambda0``.

    With ``partial_ok`` a non-tree-like topology yields a report without the
    budget recursion instead of raising.
    """
    top = topology if flows is None else topology.with_flows(flows)
    r_v, r = residual_capacity(top, eq)
    c, cut = min_cut_capacity(top)
    report = ResilienceReport(top.link_ids, eq.lambda0, r_v, r, c, cut)
    try:
        d, d0, xs = compute_d(top, eq)
    except NotTreeLike:
        if not partial_ok:
            raise
        report.notes.append("NotTreeLike: topology is not tree-like, d_0 not computed")
        return report
    report.d_v, report.d0, report.x_star = d, d0, xs
    if not report.R_le_d0 or not report.d0_le_C_minus_lambda0:
        raise BoundViolation(f"expected {r} <= {d0} <= {c - eq.lambda0}")
    return report
