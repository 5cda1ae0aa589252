"""Seeded random networks for property and acceptance tests."""

import numpy as np

from spillback.network import FlowFunction, LinkDef, validate_topology
from spillback.routing import calibrate_weights


def random_dag(rng, max_nodes=5, shapes=("linear", "rational-exponential")):
    """Small random DAG with labeled nodes, a random equilibrium flow and calibrated routing.

    Returns ``(topology, policy, target_flow, lambda0)``.
    """
    node_count = int(rng.integers(2, max_nodes + 1))
    n = node_count - 1
    edges = []
    # a spine guarantees reachability; extra links go forward only
    for v in range(n):
        edges.append((v, int(rng.integers(v + 1, n + 1))))
    for v in range(1, n):
        if not any(h == v for _, h in edges):
            edges.append((int(rng.integers(0, v)), v))
    for _ in range(int(rng.integers(0, 3))):
        a = int(rng.integers(0, n))
        edges.append((a, int(rng.integers(a + 1, n + 1))))
    edges.sort()
    lambda0 = float(rng.uniform(0.5, 3.0))
    f = _random_flow(rng, node_count, edges, lambda0)
    links = []
    for i, ((t, h), fe) in enumerate(zip(edges, f)):
        shape = str(rng.choice(shapes))
        f_max = fe / rng.uniform(0.3, 0.8)
        alpha = float(rng.uniform(0.5, 2.0))
        links.append(LinkDef(f"e{i + 1}", t, h, FlowFunction(float(f_max), float(rng.uniform(0.5, 2.0)), shape, alpha)))
    top = validate_topology(node_count, links)
    policy = calibrate_weights(top, f, lambda0, eta=float(rng.uniform(0.5, 2.0)))
    return top, policy, f, lambda0


def _random_flow(rng, node_count, edges, lambda0):
    lam = np.zeros(node_count)
    lam[0] = lambda0
    f = np.zeros(len(edges))
    for v in range(node_count - 1):
        out = [i for i, (t, _) in enumerate(edges) if t == v]
        share = rng.dirichlet(np.full(len(out), 2.0))
        share = 0.1 / len(out) + 0.9 * share  # keep every link strictly used
        f[out] = lam[v] * share
        for i in out:
            lam[edges[i][1]] += f[i]
    return f


def random_tree(rng, max_layers=4, max_degree=3):
    """Random tree-like network: every non-destination node has one path from the origin.

    Returns ``(topology, target_flow, lambda0)``.
    """
    parents = {0: None}
    depth = {0: 0}
    frontier = [0]
    children = {0: []}
    nxt = 1
    while frontier:
        v = frontier.pop(0)
        if depth[v] + 1 >= max_layers:
            continue
        for _ in range(int(rng.integers(0, max_degree))):
            parents[nxt], depth[nxt], children[nxt] = v, depth[v] + 1, []
            children[v].append(nxt)
            frontier.append(nxt)
            nxt += 1
    n = nxt
    edges = []
    for v in range(n):
        for c in children[v]:
            edges.append((v, c))
        room = max_degree - len(children[v])
        k = int(rng.integers(1 if not children[v] else 0, room + 1)) if room > 0 else 0
        edges.extend([(v, n)] * k)
    edges.sort()
    lambda0 = float(rng.uniform(0.5, 3.0))
    f = _random_flow(rng, n + 1, edges, lambda0)
    links = [
        LinkDef(f"e{i + 1}", t, h, FlowFunction(float(fe / rng.uniform(0.2, 0.9)), 1.0))
        for i, ((t, h), fe) in enumerate(zip(edges, f))
    ]
    return validate_topology(n + 1, links), f, lambda0
