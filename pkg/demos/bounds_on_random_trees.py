"""The budget recursion against brute force on random tree-like networks.

For each instance the per-node budget is recomputed by exhaustive vertex
enumeration and the sandwich R <= d_0 <= C - lambda_0 is printed.
"""

import itertools
import math

import numpy as np

from spillback import EquilibriumFlow, FlowFunction, LinkDef, bounds_report, validate_topology


def random_tree(rng, depth=3):
    edges, frontier, nxt = [], [0], 1
    for _ in range(depth - 1):
        new = []
        for v in frontier:
            for _ in range(int(rng.integers(1 if v == 0 else 0, 3))):
                edges.append((v, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    leaves = {v for v in range(nxt)} - {t for t, _ in edges}
    for v in sorted(leaves):
        edges += [(v, nxt)] * int(rng.integers(1, 3))
    lam = np.zeros(nxt + 1)
    lam[0] = 1.0
    f = np.zeros(len(edges))
    for v in range(nxt):
        out = [i for i, (t, _) in enumerate(edges) if t == v]
        f[out] = lam[v] * rng.dirichlet(np.ones(len(out)))
        for i in out:
            lam[edges[i][1]] += f[i]
    links = [LinkDef(f"e{i}", t, h, FlowFunction(fe * rng.uniform(1.2, 4.0) + 1e-3, 1.0)) for i, ((t, h), fe) in enumerate(zip(edges, f))]
    return validate_topology(nxt + 1, links), f


def brute_force(f_max, d, lam):
    budget = sum(f_max) - lam
    best = math.inf
    for pick in itertools.product(range(3), repeat=len(f_max)):
        if pick.count(2) > 1:
            continue
        x = [fm if p == 1 else 0.0 for p, fm in zip(pick, f_max)]
        if 2 in pick:
            j = pick.index(2)
            x[j] = budget - sum(x)
            if not 0 <= x[j] <= f_max[j]:
                continue
        elif abs(sum(x) - budget) > 1e-12:
            continue
        best = min(best, sum(min(a, b) for a, b in zip(x, d)))
    return max(best, 0.0) if budget > 0 else 0.0


rng = np.random.default_rng(1)
for k in range(8):
    top, f = random_tree(rng)
    rep = bounds_report(top, EquilibriumFlow.from_flows(top, f, 1.0))
    d = {top.n: math.inf}
    for v in range(top.n - 1, -1, -1):
        out = top.out_links[v]
        d[v] = brute_force([top.links[e].f_max for e in out], [d[top.links[e].head] for e in out], f[list(out)].sum())
    print(f"tree {k}: {len(top.links):2d} links  R={rep.R:.4f}  d0={rep.d0:.4f} (brute force {d[0]:.4f})  C-l0={rep.C - 1:.4f}")
