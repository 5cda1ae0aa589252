"""Bracket the smallest disturbance that stops the two-route network from delivering.

A seeded sample of per-link scalings gives a coarse picture; bisection along
the attack profile suggested by the budget recursion sharpens the upper end.
"""

from spillback import EquilibriumFlow, SweepSpec, attack_profile, bounds_report, load_spec, solve_equilibrium
from spillback.perturbation import empirical_margin_sweep, profile_ray

spec = load_spec("figure1")
top = spec.topology
rho0 = solve_equilibrium(top, spec.policy, spec.lambda0)
report = bounds_report(top, EquilibriumFlow.from_flows(top, spec.target_flow, spec.lambda0))

attack = attack_profile(top, report.d_v, report.x_star)
ray = profile_ray(top, attack)
print("attack profile:", dict(zip(top.link_ids, attack.tolist())))
print("ray end scales:", {k: round(v, 6) for k, v in ray.items()})

sweep = SweepSpec(max_samples=60, seed=0, rays=(ray,))
result = empirical_margin_sweep(top, spec.policy, rho0, spec.lambda0, sweep, report)

print(result.grid_description)
lo, hi = result.bracket
print(f"largest magnitude still transferring: {lo:.4f}")
print(f"smallest magnitude found breaking it: {hi:.4f}")
print(result.reference_line())
for s in sorted(result.samples, key=lambda s: s.magnitude)[::10]:
    print(f"  |delta|={s.magnitude:6.3f}  scales={s.scales}  {s.classification.value}")
