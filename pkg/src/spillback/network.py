"""Topology, flow functions and structural queries for capacitated flow networks.

Nodes are the integers ``0..n`` with ``0`` the origin and ``n`` the destination,
and every link must satisfy ``tail < head``. Links are referred to by their
position in :attr:`Topology.links` internally and by their string id in reports.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import (
    CycleDetected,
    DanglingLink,
    DensityOutOfRange,
    LabelingError,
    MultipleDestinations,
    MultipleOrigins,
    TopologyError,
    UnreachableNode,
)

CAPACITY_TOL = 1e-9

SHAPES = ("linear", "rational-exponential")


@dataclass(frozen=True)
class FlowFunction:
    """Density-to-flow map of a single link.

    ``linear``: ``f_max * rho / rho_max``.
    ``rational-exponential``: ``f_max * (1 - exp(-alpha * rho / (rho_max - rho)))``.

    Both are strictly increasing on ``[0, rho_max)`` with left limit ``f_max``
    and drop to 0 at ``rho_max``.
    """

    f_max: float
    rho_max: float
    shape: str = "linear"
    alpha: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown flow shape {self.shape!r}")
        if not (self.f_max > 0 and self.rho_max > 0):
            raise ValueError("f_max and rho_max must be strictly positive")
        if self.shape == "rational-exponential" and not self.alpha > 0:
            raise ValueError("alpha must be strictly positive")

    def smooth(self, rho):
        """Left branch of the flow function, continued by ``f_max`` above ``rho_max``.

        The integrator uses this on unsaturated links so that the vector field
        stays continuous across tiny overshoots of ``rho_max``.
        """
        rho = np.asarray(rho, dtype=float)
        below = rho < self.rho_max
        if self.shape == "linear":
            val = self.f_max * rho / self.rho_max
        else:
            gap = np.where(below, self.rho_max - rho, 1.0)
            val = -self.f_max * np.expm1(-self.alpha * rho / gap)
        out = np.where(below, val, self.f_max)
        return out if out.ndim else float(out)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(rho > self.rho_max):
            raise DensityOutOfRange(f"density outside [0, {self.rho_max}]")
        out = np.where(rho < self.rho_max, self.smooth(rho), 0.0)
        return out if out.ndim else float(out)

    def inverse(self, flow):
        """Density on ``[0, rho_max)`` carrying ``flow``; requires ``0 <= flow < f_max``."""
        flow = np.asarray(flow, dtype=float)
        if np.any(flow < 0) or np.any(flow >= self.f_max):
            raise ValueError(f"flow outside [0, {self.f_max})")
        if self.shape == "linear":
            out = self.rho_max * flow / self.f_max
        else:
            u = -np.log1p(-flow / self.f_max) / self.alpha
            out = self.rho_max * u / (1.0 + u)
        return out if out.ndim else float(out)

    def scaled(self, s: float) -> FlowFunction:
        """``s * mu`` stays inside the same family with ``f_max`` scaled by ``s``."""
        return FlowFunction(self.f_max * s, self.rho_max, self.shape, self.alpha)


@dataclass(frozen=True)
class ClippedFlow:
    """``max(mu - offset, 0)``: an admissible non-scaling reduction of ``base``."""

    base: FlowFunction
    offset: float

    def __post_init__(self):
        if not 0 <= self.offset < self.base.f_max:
            raise ValueError("offset must lie in [0, f_max)")

    @property
    def f_max(self) -> float:
        return self.base.f_max - self.offset

    @property
    def rho_max(self) -> float:
        return self.base.rho_max

    def smooth(self, rho):
        out = np.maximum(np.asarray(self.base.smooth(rho)) - self.offset, 0.0)
        return out if out.ndim else float(out)

    def __call__(self, rho):
        out = np.maximum(np.asarray(self.base(rho)) - self.offset, 0.0)
        out = np.where(np.asarray(rho) < self.rho_max, out, 0.0)
        return out if out.ndim else float(out)

    def inverse(self, flow):
        flow = np.asarray(flow, dtype=float)
        if np.any(flow <= 0) or np.any(flow >= self.f_max):
            raise ValueError(f"flow outside (0, {self.f_max})")
        return self.base.inverse(flow + self.offset)


def eval_flow(flow, rho):
    """Evaluate a flow function, rejecting densities outside ``[0, rho_max]``."""
    return flow(rho)


@dataclass(frozen=True)
class LinkDef:
    id: str
    tail: int
    head: int
    flow: FlowFunction

    @property
    def rho_max(self) -> float:
        return self.flow.rho_max

    @property
    def f_max(self) -> float:
        return self.flow.f_max


@dataclass(frozen=True)
class CutReport:
    cut_node_set: frozenset
    crossing_links: tuple
    capacity: float


@dataclass(frozen=True)
class Topology:
    node_count: int
    links: tuple
    out_links: dict = field(repr=False)
    in_links: dict = field(repr=False)
    layers: tuple = field(repr=False)

    @property
    def n(self) -> int:
        """Destination node id."""
        return self.node_count - 1

    @property
    def j_star(self) -> int:
        return len(self.layers) - 1

    @property
    def link_ids(self) -> list:
        return [link.id for link in self.links]

    @property
    def flows(self) -> tuple:
        return tuple(link.flow for link in self.links)

    @property
    def f_max(self) -> np.ndarray:
        return np.array([link.f_max for link in self.links])

    @property
    def rho_max(self) -> np.ndarray:
        return np.array([link.rho_max for link in self.links])

    def link_index(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.links):
                raise KeyError(key)
            return int(key)
        for i, link in enumerate(self.links):
            if link.id == key:
                return i
        raise KeyError(key)

    def with_flows(self, flows) -> Topology:
        """Same graph with the per-link flow functions replaced."""
        links = tuple(
            LinkDef(l.id, l.tail, l.head, f) for l, f in zip(self.links, flows, strict=True)
        )
        return Topology(self.node_count, links, self.out_links, self.in_links, self.layers)


def validate_topology(node_count: int, links) -> Topology:
    """Check the structural assumptions and build a :class:`Topology`.

    ``links`` is a sequence of :class:`LinkDef`. Checks run in the order
    dangling endpoints, cycles, origin/destination uniqueness, reachability,
    then the ``tail < head`` labeling.
    """
    links = tuple(links)
    if not links:
        raise TopologyError("a network needs at least one link")
    if isinstance(node_count, bool) or not isinstance(node_count, (int, np.integer)):
        raise TopologyError("node count must be an integer")
    node_count = int(node_count)
    if node_count < 2:
        raise TopologyError("a network needs at least two nodes")
    ids = [link.id for link in links]
    if len(set(ids)) != len(ids):
        raise TopologyError("duplicate link ids")

    for link in links:
        for end in (link.tail, link.head):
            if isinstance(end, bool) or not isinstance(end, (int, np.integer)):
                raise DanglingLink(f"link {link.id}: node ids must be integers")
            if not 0 <= end < node_count:
                raise DanglingLink(f"link {link.id}: endpoint {end} outside 0..{node_count - 1}")

    g = nx.MultiDiGraph()
    g.add_nodes_from(range(node_count))
    g.add_edges_from((link.tail, link.head) for link in links)
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise CycleDetected(f"cycle through nodes {[u for u, *_ in cycle]}")

    n = node_count - 1
    sources = sorted(v for v in g if g.in_degree(v) == 0)
    sinks = sorted(v for v in g if g.out_degree(v) == 0)
    if sources != [0]:
        raise MultipleOrigins(f"nodes without incoming links must be exactly [0], got {sources}")
    if sinks != [n]:
        raise MultipleDestinations(f"nodes without outgoing links must be exactly [{n}], got {sinks}")

    on_path = nx.descendants(g, 0) | {0}
    on_path &= nx.ancestors(g, n) | {n}
    missing = sorted(set(range(node_count)) - on_path)
    if missing:
        raise UnreachableNode(f"nodes {missing} are not on an origin-destination path")

    for link in links:
        if not link.tail < link.head:
            raise LabelingError(f"link {link.id}: tail {link.tail} must be below head {link.head}")

    out_links = {v: [] for v in range(node_count)}
    in_links = {v: [] for v in range(node_count)}
    for i, link in enumerate(links):
        out_links[link.tail].append(i)
        in_links[link.head].append(i)
    out_links = {v: tuple(es) for v, es in out_links.items()}
    in_links = {v: tuple(es) for v, es in in_links.items()}

    dist = {0: 0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for e in out_links[v]:
            w = links[e].head
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    j_star = max(d for v, d in dist.items() if v != n)
    layers = tuple(
        tuple(sorted(v for v, d in dist.items() if d == j and v != n)) for j in range(j_star + 1)
    )
    return Topology(node_count, links, out_links, in_links, layers)


def is_tree_like(topology: Topology) -> bool:
    """True iff every non-destination node is reached from the origin by exactly one path."""
    paths = [0] * topology.node_count
    paths[0] = 1
    for v in range(topology.node_count):
        for e in topology.out_links[v]:
            paths[topology.links[e].head] += paths[v]
    return all(p == 1 for p in paths[: topology.n])


def cut_capacity(topology: Topology, cut) -> float:
    cut = set(cut)
    return sum(l.f_max for l in topology.links if l.tail in cut and l.head not in cut)


def min_cut_capacity(topology: Topology) -> tuple[float, CutReport]:
    """Minimum origin-destination cut capacity with ``f_max`` as link capacities."""
    g = nx.DiGraph()
    g.add_nodes_from(range(topology.node_count))
    for link in topology.links:
        if g.has_edge(link.tail, link.head):
            g[link.tail][link.head]["capacity"] += link.f_max
        else:
            g.add_edge(link.tail, link.head, capacity=link.f_max)
    _, (source_side, _) = nx.minimum_cut(g, 0, topology.n)
    crossing = tuple(
        l.id for l in topology.links if l.tail in source_side and l.head not in source_side
    )
    capacity = cut_capacity(topology, source_side)
    return capacity, CutReport(frozenset(source_side), crossing, capacity)


def enumerate_cuts(topology: Topology):
    """Yield ``(node_set, capacity)`` for every origin-destination cut. Exponential."""
    inner = range(1, topology.n)
    for r in range(len(inner) + 1):
        for extra in itertools.combinations(inner, r):
            cut = frozenset((0, *extra))
            yield cut, cut_capacity(topology, cut)


def is_close_capacity(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=CAPACITY_TOL)
