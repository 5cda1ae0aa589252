"""One check per acceptance criterion, each printing a PASS/FAIL line."""

import time
from dataclasses import replace

import numpy as np

from netgen import random_dag, random_tree
from oracles import cut_oracle, grid_min_cv, recursion_oracle, vertex_min_cv
from spillback.dynamics import Classification, SimOptions, classify_with_options, simulate, solve_equilibrium
from spillback.perturbation import SweepSpec, bisect_ray, make_scaling_perturbation, sample_sphere, simulate_perturbed
from spillback.resilience import EquilibriumFlow, bounds_report, compute_d
from spillback.routing import check_axioms
from spillback.specfile import load_spec

RUNS = []  # every trajectory simulated here, for the conservation criterion


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")
    assert ok, detail


def tracked(traj):
    RUNS.append(traj)
    return traj


def irreversible(traj):
    return bool(np.all(np.diff(traj.xi.astype(int), axis=0) <= 0))


def test_criterion_1_figure1_statics(capsys):
    t0 = time.perf_counter()
    spec = load_spec("figure1")
    eq = EquilibriumFlow.from_flows(spec.topology, spec.target_flow, spec.lambda0)
    rep = bounds_report(spec.topology, eq)
    elapsed = time.perf_counter() - t0
    top = spec.topology
    cut_ref = cut_oracle(top.node_count, [(l.tail, l.head) for l in top.links], top.f_max)
    d_grid = recursion_oracle(top, spec.target_flow, grid_min_cv)[0]
    ok = (
        rep.R == 0.5
        and abs(rep.C - 4.5) <= 1e-9
        and abs(rep.d0 - 1.5) <= 1e-9
        and abs(cut_ref - rep.C) <= 1e-9
        and abs(d_grid - rep.d0) <= 1e-9
        and rep.R < rep.d0 < rep.C - rep.lambda0
        and elapsed < 1.0
    )
    verdict(capsys, 1, "Figure 1 statics", ok,
            f"R={rep.R:.12g} C={rep.C:.12g} d0={rep.d0:.12g} cut oracle={cut_ref:.12g} "
            f"grid d0={d_grid:.12g} runtime={elapsed:.3f}s")


def test_criterion_2_figure1_dynamics(capsys):
    spec = load_spec("figure1")
    rho0 = solve_equilibrium(spec.topology, spec.policy, spec.lambda0)
    pert = make_scaling_perturbation(spec.topology, [1, 1, 0.6, 0.6])
    opts = SimOptions()
    t0 = time.perf_counter()
    traj, cls = simulate_perturbed(spec.topology, pert, spec.policy, rho0, spec.lambda0, opts)
    elapsed = time.perf_counter() - t0
    tracked(traj)
    end = traj.t[-1]
    avg = traj.window_average(end - opts.window * traj.horizon, end)
    ok = (
        set(traj.saturated_links()) == {"e3", "e4"}
        and not traj.chi[-1, 1]
        and cls is Classification.TRANSFERRING
        and abs(avg - 2.0) <= 0.02 * 2.0
        and abs(pert.magnitude - 0.6) <= 1e-12
        and elapsed < 10.0
    )
    verdict(capsys, 2, "magnitude-0.6 scaling keeps Figure 1 transferring", ok,
            f"events={traj.saturated_links()} chi_1={int(traj.chi[-1, 1])} class={cls.value} "
            f"avg={avg:.6g} runtime={elapsed:.2f}s")


def test_criterion_3_magnitude_sphere(capsys):
    spec = load_spec("figure1")
    rho0 = solve_equilibrium(spec.topology, spec.policy, spec.lambda0)
    t0 = time.perf_counter()
    classes, mags = [], []
    for s in sample_sphere(spec.topology, 0.6, 24, seed=2024):
        pert = make_scaling_perturbation(spec.topology, s)
        traj, cls = simulate_perturbed(spec.topology, pert, spec.policy, rho0, spec.lambda0)
        tracked(traj)
        classes.append(cls)
        mags.append(pert.magnitude)
    elapsed = time.perf_counter() - t0
    ok = (
        len(classes) >= 20
        and all(c is Classification.TRANSFERRING for c in classes)
        and max(abs(m - 0.6) for m in mags) <= 1e-12
        and elapsed < 180
    )
    verdict(capsys, 3, "magnitude-0.6 sphere all transferring", ok,
            f"{sum(c is Classification.TRANSFERRING for c in classes)}/{len(classes)} transferring, "
            f"runtime={elapsed:.1f}s")


def test_criterion_4_dichotomy(capsys):
    rng = np.random.default_rng(7)
    opts = SimOptions().with_horizon(2 * SimOptions().horizon)
    counts = {c: 0 for c in Classification}
    worst = 0.0
    for _ in range(55):
        top, pol, _, l0 = random_dag(rng)
        rho0 = solve_equilibrium(top, pol, l0)
        pert = make_scaling_perturbation(top, rng.uniform(0.1, 1.0, len(top.links)))
        traj = tracked(simulate(top, pol, rho0, l0, opts, flows=pert.perturbed))
        cls = classify_with_options(traj, l0, opts)
        counts[cls] += 1
        end = traj.t[-1]
        avg = traj.window_average(end - opts.window * traj.horizon, end)
        worst = max(worst, min(abs(avg - l0), abs(avg)) / l0)
    ok = counts[Classification.UNDECIDED] == 0 and worst <= 0.02 and sum(counts.values()) >= 50
    verdict(capsys, 4, "transferring/not-transferring dichotomy", ok,
            f"{counts[Classification.TRANSFERRING]} transferring, "
            f"{counts[Classification.NOT_TRANSFERRING]} not, {counts[Classification.UNDECIDED]} undecided; "
            f"worst relative distance {worst:.3g}")


def test_criterion_5_dp_oracles(capsys):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    grid_err = vertex_err = 0.0
    bounds_ok = True
    for _ in range(110):
        top, f, l0 = random_tree(rng, max_layers=4, max_degree=3)
        eq = EquilibriumFlow.from_flows(top, f, l0)
        d, _, _ = compute_d(top, eq)
        grid = recursion_oracle(top, f, grid_min_cv)
        exact = recursion_oracle(top, f, vertex_min_cv)
        for v in range(top.n):
            grid_err = max(grid_err, abs(d[v] - grid[v]))
            vertex_err = max(vertex_err, abs(d[v] - exact[v]))
        rep = bounds_report(top, eq)
        bounds_ok &= bool(rep.R_le_d0 and rep.d0_le_C_minus_lambda0)
    elapsed = time.perf_counter() - t0
    ok = grid_err <= 1e-3 and vertex_err <= 1e-9 and bounds_ok and elapsed < 120
    verdict(capsys, 5, "budget recursion equals brute-force oracles", ok,
            f"110 trees, max grid error {grid_err:.3g}, max vertex error {vertex_err:.3g}, "
            f"bounds {'hold' if bounds_ok else 'violated'}, runtime={elapsed:.1f}s")


def test_criterion_6_single_link(capsys):
    spec = load_spec("single-link")
    top = spec.topology
    eq = EquilibriumFlow.from_flows(top, spec.target_flow, spec.lambda0)
    rep = bounds_report(top, eq)
    f_max = top.f_max[0]
    rho0 = solve_equilibrium(top, spec.policy, spec.lambda0)
    ray = bisect_ray(top, spec.policy, rho0, spec.lambda0, {"e1": 1e-9}, SweepSpec())
    for s in ray.samples:
        pert = make_scaling_perturbation(top, s.scales)
        tracked(simulate(top, spec.policy, rho0, spec.lambda0, flows=pert.perturbed))
    target = f_max - spec.lambda0
    ok = rep.R == rep.d0 == rep.C - rep.lambda0 == target and abs(ray.threshold - target) <= 0.01
    verdict(capsys, 6, "single-link identities and sweep threshold", ok,
            f"R={rep.R:.12g} d0={rep.d0:.12g} C-l0={rep.C - rep.lambda0:.12g} "
            f"threshold={ray.threshold:.6g}")


def test_criterion_7_conservation(capsys):
    spec = load_spec("figure1")
    rho0 = solve_equilibrium(spec.topology, spec.policy, spec.lambda0)
    worst_step = 0.0
    for scales in ([1, 1, 0.6, 0.6], [0.3] * 4, [0.25, 0.25, 1, 1]):
        pert = make_scaling_perturbation(spec.topology, scales)
        opts = SimOptions(horizon=60, sample_dt=0.5)
        a = tracked(simulate(spec.topology, spec.policy, rho0, 2.0, opts, flows=pert.perturbed))
        b = tracked(simulate(spec.topology, spec.policy, rho0, 2.0,
                             replace(opts, rtol=opts.rtol / 100, atol=opts.atol / 100), flows=pert.perturbed))
        ka = np.isclose(a.t * 2, np.round(a.t * 2), atol=1e-9, rtol=0)
        kb = np.isclose(b.t * 2, np.round(b.t * 2), atol=1e-9, rtol=0)
        assert np.array_equal(a.t[ka], b.t[kb])
        worst_step = max(worst_step, float(np.abs(a.rho[ka] - b.rho[kb]).max()))
    worst_mass = max(float(tr.mass_balance_residual().max()) for tr in RUNS)
    all_irrev = all(irreversible(tr) for tr in RUNS)
    ok = worst_mass <= 1e-6 and all_irrev and worst_step <= 1e-6
    verdict(capsys, 7, "conservation, irreversibility and step-halving", ok,
            f"{len(RUNS)} runs, max mass residual {worst_mass:.3g}, "
            f"irreversible {'yes' if all_irrev else 'NO'}, step-halving gap {worst_step:.3g}")


def test_criterion_8_routing_axioms(capsys):
    spec = load_spec("figure1")
    reports = [check_axioms(spec.policy, v, 10_000, seed=100 + v) for v in range(spec.topology.n)]
    diamond = load_spec("diamond")
    reports += [check_axioms(diamond.policy, v, 10_000, seed=200 + v) for v in range(diamond.topology.n)]

    def constant(r):
        return np.full(np.shape(r), 0.5)

    def anti(r):
        r = np.asarray(r)
        g1 = (1 + r[..., 0] - r[..., 1]) / 2
        return np.stack([g1, 1 - g1], axis=-1)

    const_rep = check_axioms(constant, rho_max=[1.0, 1.0], sample_count=10_000)
    anti_rep = check_axioms(anti, rho_max=[1.0, 1.0], sample_count=10_000)
    ok = (
        all(r.passed for r in reports)
        and bool(const_rep.limit_violations)
        and bool(anti_rep.cooperativity_violations)
    )
    verdict(capsys, 8, "routing axiom suite", ok,
            f"default family {sum(r.passed for r in reports)}/{len(reports)} nodes pass; constant policy "
            f"{len(const_rep.limit_violations)} limit violations; anti-cooperative policy "
            f"{len(anti_rep.cooperativity_violations)} cooperativity violations")
