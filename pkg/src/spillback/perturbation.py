"""Admissible flow-function reductions, their magnitude, and empirical margin sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Classification, SimOptions, classify_with_options, simulate
from .errors import BudgetExceeded, NotAdmissible, ScaleOutOfRange
from .network import ClippedFlow, FlowFunction, Topology

ADMISSIBLE_TOL = 1e-12
DEFAULT_GRID = tuple(round(1.0 - 0.1 * k, 10) for k in range(10))  # 1.0, 0.9, ..., 0.1


@dataclass(frozen=True)
class Perturbation:
    base: tuple
    perturbed: tuple
    delta: np.ndarray
    scales: np.ndarray | None = None

    @property
    def magnitude(self) -> float:
        return float(np.sum(self.delta))

    @property
    def f_max(self) -> np.ndarray:
        return np.array([fl.f_max for fl in self.perturbed])


def _scales_vector(topology_or_flows, scales):
    flows = _flows(topology_or_flows)
    if isinstance(scales, dict):
        if not isinstance(topology_or_flows, Topology):
            raise TypeError("scales given by link id need a Topology")
        s = np.ones(len(flows))
        for key, val in scales.items():
            s[topology_or_flows.link_index(key)] = val
    else:
        s = np.asarray(scales, dtype=float)
    if s.shape != (len(flows),):
        raise ValueError("need one scale per link")
    return flows, s


def _flows(topology_or_flows):
    if isinstance(topology_or_flows, Topology):
        return topology_or_flows.flows
    return tuple(topology_or_flows)


def make_scaling_perturbation(topology_or_flows, scales) -> Perturbation:
    """Scale every flow function by ``s_e`` in ``(0, 1]``.

    ``delta_e = (1 - s_e) f_max_e``: the gap ``(1 - s) mu`` is increasing,
    so its supremum is the left limit at ``rho_max``.
    """
    flows, s = _scales_vector(topology_or_flows, scales)
    if np.any(~(s > 0)) or np.any(s > 1):
        raise ScaleOutOfRange(f"scales must lie in (0, 1], got {s.tolist()}")
    perturbed = tuple(fl if si == 1 else fl.scaled(si) for fl, si in zip(flows, s))
    delta = np.array([(1 - si) * fl.f_max for fl, si in zip(flows, s)])
    return Perturbation(tuple(flows), perturbed, delta, s)


def make_clipped_perturbation(topology_or_flows, offsets) -> Perturbation:
    """Lower each flow function by a constant ``c_e``, clipped at zero; ``delta_e = c_e``."""
    flows = _flows(topology_or_flows)
    if isinstance(offsets, dict):
        c = np.zeros(len(flows))
        for key, val in offsets.items():
            c[topology_or_flows.link_index(key)] = val
    else:
        c = np.asarray(offsets, dtype=float)
    if c.shape != (len(flows),):
        raise ValueError("need one offset per link")
    perturbed = tuple(fl if ci == 0 else ClippedFlow(fl, float(ci)) for fl, ci in zip(flows, c))
    return Perturbation(tuple(flows), perturbed, c.copy())


def gap_supremum(base, perturbed, grid: int = 10_000):
    """Grid estimate of ``sup (mu - mu_tilde)`` on ``[0, rho_max]`` plus an error bound.

    The left limit at ``rho_max`` is included. The bound is half a grid cell
    times the largest observed slope of the gap. Raises :class:`NotAdmissible`
    if the perturbed function exceeds the base anywhere on the grid.
    """
    rho = np.linspace(0.0, base.rho_max, grid + 1)[:-1]
    mu, mu_t = np.asarray(base.smooth(rho)), np.asarray(perturbed.smooth(rho))
    gap = mu - mu_t
    if np.any(gap < -ADMISSIBLE_TOL) or base.f_max < perturbed.f_max - ADMISSIBLE_TOL:
        raise NotAdmissible("perturbed flow exceeds the nominal flow")
    if np.any(np.diff(mu_t) < -ADMISSIBLE_TOL):
        raise NotAdmissible("perturbed flow is not monotone")
    limit = base.f_max - perturbed.f_max
    step = rho[1] - rho[0] if len(rho) > 1 else base.rho_max
    slope = np.max(np.abs(np.diff(gap))) / step if len(rho) > 1 else 0.0
    return max(float(gap.max()), limit), 0.5 * slope * step


def perturbation_magnitude(base_flows, perturbed_flows, grid: int = 10_000) -> float:
    """``sum_e sup (mu_e - mu_tilde_e)``; exact for scalings, grid-estimated otherwise."""
    total = 0.0
    for b, p in zip(base_flows, perturbed_flows, strict=True):
        if p is b:
            continue
        if (
            isinstance(p, FlowFunction)
            and isinstance(b, FlowFunction)
            and (p.shape, p.alpha, p.rho_max) == (b.shape, b.alpha, b.rho_max)
        ):
            if p.f_max > b.f_max + ADMISSIBLE_TOL:
                raise NotAdmissible("scaled flow exceeds the nominal flow")
            total += b.f_max - p.f_max
        else:
            total += gap_supremum(b, p, grid)[0]
    return total


def check_admissible(perturbation: Perturbation, grid: int = 2_000) -> None:
    for b, p in zip(perturbation.base, perturbation.perturbed):
        if p is not b:
            gap_supremum(b, p, grid)
            rho = np.linspace(0.0, b.rho_max, grid + 1)[:-1]
            vals = np.asarray(p.smooth(rho))
            pos = vals[1:] > 0
            if np.any(np.diff(vals)[pos] <= 0):
                raise NotAdmissible("perturbed flow is not strictly increasing where positive")


def simulate_perturbed(
    topology: Topology,
    perturbation: Perturbation,
    policy,
    rho0,
    lambda0: float,
    options: SimOptions | None = None,
):
    """Run the dynamics with the perturbed flow functions; routing is unchanged."""
    opts = options or SimOptions()
    traj = simulate(topology, policy, rho0, lambda0, opts, flows=perturbation.perturbed)
    return traj, classify_with_options(traj, lambda0, opts)


def run_with_extension(topology, perturbation, policy, rho0, lambda0, options, extensions=2):
    """Classify, doubling the horizon while the outcome is undecided."""
    opts = options
    for _ in range(extensions + 1):
        traj, cls = simulate_perturbed(topology, perturbation, policy, rho0, lambda0, opts)
        if cls is not Classification.UNDECIDED:
            break
        opts = opts.with_horizon(2 * opts.horizon)
    return traj, cls


@dataclass
class SweepSpec:
    scale_grid: tuple = DEFAULT_GRID
    links: tuple | None = None  # link ids to perturb; default all
    max_combinations: int = 100_000
    max_samples: int | None = None  # seeded subsample size; None keeps the full grid
    subsample: bool = True
    seed: int = 0
    rays: tuple = ()  # each a dict link id -> end scale
    bisection_tol: float = 0.005  # on the magnitude
    extensions: int = 2
    options: SimOptions = field(default_factory=SimOptions)
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> SweepSpec:
        data = dict(data)
        if "options" in data:
            data["options"] = SimOptions(**data["options"])
        for key in ("scale_grid", "links", "rays"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class SweepSample:
    magnitude: float
    scales: tuple
    classification: Classification
    events: tuple


@dataclass
class RayResult:
    end_scales: dict
    threshold: float | None  # smallest magnitude found not transferring
    lower: float  # largest magnitude found transferring
    samples: list = field(default_factory=list)


@dataclass
class SweepResult:
    link_ids: list
    samples: list
    rays: list
    R: float | None = None
    d0: float | None = None
    C_minus_lambda0: float | None = None
    grid_description: str = ""

    def _all(self):
        yield from self.samples
        for ray in self.rays:
            yield from ray.samples

    @property
    def max_transferring(self):
        vals = [s.magnitude for s in self._all() if s.classification is Classification.TRANSFERRING]
        return max(vals) if vals else None

    @property
    def min_not_transferring(self):
        vals = [
            s.magnitude for s in self._all() if s.classification is Classification.NOT_TRANSFERRING
        ]
        return min(vals) if vals else None

    @property
    def bracket(self):
        return self.max_transferring, self.min_not_transferring

    def undecided(self):
        return [s for s in self._all() if s.classification is Classification.UNDECIDED]

    def to_csv(self, target=None):
        buf = io.StringIO() if target is None else None
        fh = buf if buf is not None else open(target, "w", newline="")
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["magnitude", *[f"s_{i}" for i in self.link_ids], "classification", "events"])
            for s in sorted(self._all(), key=lambda s: (s.magnitude, s.scales)):
                w.writerow(
                    [f"{s.magnitude:.12g}", *[f"{x:.12g}" for x in s.scales], s.classification.value,
                     ";".join(s.events)]
                )
        finally:
            if buf is None:
                fh.close()
        return buf.getvalue() if buf is not None else None

    def to_dict(self):
        def num(x):
            return None if x is None else float(f"{x:.12g}")

        return {
            "grid": self.grid_description,
            "samples": len(self.samples),
            "bracket": {
                "max_transferring_magnitude": num(self.max_transferring),
                "min_not_transferring_magnitude": num(self.min_not_transferring),
                "empirical": True,
            },
            "rays": [
                {"end_scales": r.end_scales, "threshold": num(r.threshold), "lower": num(r.lower)}
                for r in self.rays
            ],
            "reference": {"R": num(self.R), "d0": num(self.d0), "C_minus_lambda0": num(self.C_minus_lambda0)},
            "undecided": len(self.undecided()),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def reference_line(self) -> str:
        g = "{:.12g}".format
        parts = []
        for name, val in (("R", self.R), ("d0", self.d0), ("C-l0", self.C_minus_lambda0)):
            if val is not None:
                parts.append(f"{name}={g(val)}")
        return " ".join(parts)


def _run_sample(args):
    topology, policy, rho0, lambda0, scales, options, extensions = args
    pert = make_scaling_perturbation(topology, scales)
    traj, cls = run_with_extension(topology, pert, policy, rho0, lambda0, options, extensions)
    return SweepSample(pert.magnitude, tuple(float(s) for s in scales), cls, tuple(traj.saturated_links()))


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def grid_scales(topology: Topology, spec: SweepSpec):
    """Scale vectors of the sweep grid, subsampled with a seeded RNG when too many."""
    ids = spec.links if spec.links is not None else tuple(topology.link_ids)
    idx = [topology.link_index(i) for i in ids]
    grid = sorted(set(float(g) for g in spec.scale_grid), reverse=True)
    total = len(grid) ** len(idx)
    cap = spec.max_combinations if spec.max_samples is None else min(spec.max_samples, spec.max_combinations)
    if total > cap:
        if not spec.subsample:
            raise BudgetExceeded(f"{total} grid points exceed the cap of {cap}")
        rng = np.random.default_rng(spec.seed)
        picks = rng.integers(0, len(grid), size=(cap, len(idx)))
        combos = sorted({tuple(grid[k] for k in row) for row in picks}, reverse=True)
    else:
        combos = list(itertools.product(grid, repeat=len(idx)))
    out = []
    for combo in combos:
        s = np.ones(len(topology.links))
        s[idx] = combo
        out.append(s)
    return out, f"{len(grid)} levels on {len(idx)} links ({total} points, {len(combos)} run)"


def bisect_ray(topology, policy, rho0, lambda0, end_scales: dict, spec: SweepSpec) -> RayResult:
    """Locate the transferring/not-transferring switch along ``s(t) = 1 - t (1 - s_end)``."""
    end = np.ones(len(topology.links))
    for key, val in end_scales.items():
        end[topology.link_index(key)] = max(float(val), 1e-9)

    def at(t):
        s = 1.0 - t * (1.0 - end)
        return _run_sample((topology, policy, rho0, lambda0, s, spec.options, spec.extensions))

    lo_s, hi_s = at(0.0), at(1.0)
    samples = [lo_s, hi_s]
    if hi_s.classification is Classification.TRANSFERRING:
        return RayResult(dict(end_scales), None, hi_s.magnitude, samples)
    if lo_s.classification is not Classification.TRANSFERRING:
        return RayResult(dict(end_scales), lo_s.magnitude, 0.0, samples)
    lo, hi = 0.0, 1.0
    lo_mag, hi_mag = lo_s.magnitude, hi_s.magnitude
    while hi_mag - lo_mag > spec.bisection_tol:
        mid = 0.5 * (lo + hi)
        smp = at(mid)
        samples.append(smp)
        if smp.classification is Classification.TRANSFERRING:
            lo, lo_mag = mid, smp.magnitude
        else:
            hi, hi_mag = mid, smp.magnitude
    return RayResult(dict(end_scales), hi_mag, lo_mag, samples)


def empirical_margin_sweep(topology, policy, rho0, lambda0, spec: SweepSpec | None = None,
                           report=None) -> SweepResult:
    """Simulate a grid of scaling perturbations plus ray bisections from ``rho0``.

    The bracket reported is empirical: the largest magnitude seen to keep the
    network transferring and the smallest seen to break it.
    """
    spec = spec or SweepSpec()
    scales, desc = grid_scales(topology, spec)
    jobs = [(topology, policy, rho0, lambda0, s, spec.options, spec.extensions) for s in scales]
    samples = _map(_run_sample, jobs, spec.workers)
    samples.sort(key=lambda s: (s.magnitude, s.scales))
    rays = [bisect_ray(topology, policy, rho0, lambda0, r, spec) for r in spec.rays]
    result = SweepResult(topology.link_ids, samples, rays, grid_description=desc)
    if report is not None:
        result.R, result.d0 = report.R, report.d0
        result.C_minus_lambda0 = report.C - report.lambda0
    return result


def profile_ray(topology: Topology, delta, stretch: float = 2.0, headroom: float = 0.98) -> dict:
    """End scales of the ray through a per-link reduction profile, stretched past it.

    The stretch is capped so that no link loses more than ``headroom`` of its
    capacity, keeping the ray on the direction of ``delta``.
    """
    f_max = topology.f_max
    delta = np.asarray(delta, dtype=float)
    pos = delta > 0
    if not np.any(pos):
        return {}
    stretch = min(stretch, headroom * float(np.min(f_max[pos] / delta[pos])))
    return {
        link.id: float(1.0 - stretch * de / fm)
        for link, de, fm in zip(topology.links, delta, f_max)
        if de > 0
    }


def ray_monotonicity_violations(ray: RayResult):
    """Samples along a ray that transfer at a larger magnitude than a failing one."""
    ordered = sorted(ray.samples, key=lambda s: s.magnitude)
    bad, failed = [], False
    for s in ordered:
        if s.classification is Classification.NOT_TRANSFERRING:
            failed = True
        elif failed and s.classification is Classification.TRANSFERRING:
            bad.append(s)
    return bad


def sample_sphere(topology: Topology, magnitude: float, count: int, seed: int = 0, links=None):
    """Seeded scale vectors whose scaling magnitude is exactly ``magnitude``.

    The reduction is split across links by a Dirichlet draw and rejected if
    any link would lose its whole capacity.
    """
    rng = np.random.default_rng(seed)
    ids = links if links is not None else topology.link_ids
    idx = [topology.link_index(i) for i in ids]
    f_max = topology.f_max[idx]
    out = []
    while len(out) < count:
        share = rng.dirichlet(np.ones(len(idx)))
        delta = magnitude * share
        if np.any(delta >= f_max):
            continue
        s = np.ones(len(topology.links))
        s[idx] = 1.0 - delta / f_max
        out.append(s)
    return out
