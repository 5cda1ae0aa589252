import numpy as np
import pytest

from spillback.dynamics import Classification, SimOptions, simulate
from spillback.errors import BudgetExceeded, NotAdmissible, ScaleOutOfRange
from spillback.network import FlowFunction
from spillback.perturbation import (
    SweepSpec,
    bisect_ray,
    check_admissible,
    empirical_margin_sweep,
    gap_supremum,
    grid_scales,
    make_clipped_perturbation,
    make_scaling_perturbation,
    perturbation_magnitude,
    profile_ray,
    ray_monotonicity_violations,
    sample_sphere,
    simulate_perturbed,
)


def test_figure1_scaling(fig1):
    p = make_scaling_perturbation(fig1.topology, {"e3": 0.6, "e4": 0.6})
    assert p.delta == pytest.approx([0, 0, 0.3, 0.3])
    assert p.magnitude == pytest.approx(0.6, abs=1e-12)
    assert p.f_max[2] + p.f_max[3] == pytest.approx(0.9)
    assert perturbation_magnitude(fig1.topology.flows, p.perturbed) == pytest.approx(0.6, abs=1e-12)


def test_identity_and_single_link():
    fl = [FlowFunction(4.0, 1.0)]
    assert make_scaling_perturbation(fl, [1.0]).magnitude == 0.0
    assert make_scaling_perturbation(fl, [0.5]).magnitude == pytest.approx(2.0)
    assert perturbation_magnitude(fl, fl) == 0.0


@pytest.mark.parametrize("s", [0.0, -0.1, 1.2])
def test_scale_range(fig1, s):
    with pytest.raises(ScaleOutOfRange):
        make_scaling_perturbation(fig1.topology, {"e1": s})


def test_clipped_perturbation(fig1):
    p = make_clipped_perturbation(fig1.topology, {"e2": 0.2})
    assert p.magnitude == pytest.approx(0.2)
    sup, err = gap_supremum(fig1.topology.flows[1], p.perturbed[1])
    assert sup == pytest.approx(0.2, abs=1e-9) and err >= 0
    assert perturbation_magnitude(fig1.topology.flows, p.perturbed) == pytest.approx(0.2, abs=1e-9)


def test_not_admissible():
    base = FlowFunction(1.0, 1.0)
    with pytest.raises(NotAdmissible):
        gap_supremum(base, FlowFunction(1.2, 1.0))


def test_scalings_are_admissible(fig1, rng):
    for _ in range(10):
        p = make_scaling_perturbation(fig1.topology, rng.uniform(0.05, 1.0, 4))
        check_admissible(p)


def test_zero_perturbation_reproduces_unperturbed_run(fig1, fig1_rho0):
    opts = SimOptions(horizon=20)
    p = make_scaling_perturbation(fig1.topology, [1, 1, 1, 1])
    a, cls = simulate_perturbed(fig1.topology, p, fig1.policy, fig1_rho0, 2.0, opts)
    b = simulate(fig1.topology, fig1.policy, fig1_rho0, 2.0, opts)
    assert cls is Classification.TRANSFERRING and not a.events
    assert np.array_equal(a.t, b.t) and np.array_equal(a.rho, b.rho)


def test_grid_subsampling_is_seeded(fig1):
    spec = SweepSpec(max_samples=50, seed=3)
    a, _ = grid_scales(fig1.topology, spec)
    b, _ = grid_scales(fig1.topology, spec)
    assert len(a) <= 50 and all(np.array_equal(x, y) for x, y in zip(a, b))
    with pytest.raises(BudgetExceeded):
        grid_scales(fig1.topology, SweepSpec(max_samples=50, subsample=False))
    full, desc = grid_scales(fig1.topology, SweepSpec(links=("e3", "e4")))
    assert len(full) == 100 and "100 points" in desc


def test_single_link_ray_threshold(single):
    rho0 = np.array([0.4])
    ray = bisect_ray(single.topology, single.policy, rho0, 2.0, {"e1": 1e-9}, SweepSpec())
    assert abs(ray.threshold - 3.0) <= 0.01
    assert not ray_monotonicity_violations(ray)


def test_profile_ray_keeps_direction(fig1):
    ray = profile_ray(fig1.topology, [1, 0, 0, 0.5])
    red = {k: (1 - v) * fig1.topology.links[fig1.topology.link_index(k)].f_max for k, v in ray.items()}
    assert red["e4"] / red["e1"] == pytest.approx(0.5)
    assert min(ray.values()) > 0


def test_sphere_samples_have_exact_magnitude(fig1):
    for s in sample_sphere(fig1.topology, 0.6, 25, seed=9):
        assert make_scaling_perturbation(fig1.topology, s).magnitude == pytest.approx(0.6, abs=1e-12)


def test_small_sweep_is_consistent_with_r(fig1, fig1_rho0):
    spec = SweepSpec(links=("e3", "e4"), scale_grid=(1.0, 0.6, 0.2), options=SimOptions(horizon=60))
    res = empirical_margin_sweep(fig1.topology, fig1.policy, fig1_rho0, 2.0, spec)
    assert len(res.samples) == 9
    for s in res.samples:
        if s.magnitude < 0.5:
            assert s.classification is Classification.TRANSFERRING
    text = res.to_csv()
    assert text.splitlines()[0] == "magnitude,s_e1,s_e2,s_e3,s_e4,classification,events"
    assert text == res.to_csv()


def test_figure1_sweep_bracket(fig1, fig1_rho0):
    from spillback.resilience import EquilibriumFlow, attack_profile, bounds_report

    top = fig1.topology
    rep = bounds_report(top, EquilibriumFlow.from_flows(top, fig1.target_flow, 2.0))
    ray = profile_ray(top, attack_profile(top, rep.d_v, rep.x_star))
    spec = SweepSpec(max_samples=20, seed=1, rays=(ray,))
    res = empirical_margin_sweep(top, fig1.policy, fig1_rho0, 2.0, spec, rep)
    lo, hi = res.bracket
    assert hi <= 1.6 and lo >= 0.6
    assert res.reference_line() == "R=0.5 d0=1.5 C-l0=2.5"
    assert not res.undecided()
    assert all(s.magnitude >= rep.R for s in res._all() if s.classification is Classification.NOT_TRANSFERRING)
    assert not ray_monotonicity_violations(res.rays[0])
