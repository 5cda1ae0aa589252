"""Reading network specification files (JSON) into validated objects."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SpecParseError
from .network import SHAPES, FlowFunction, LinkDef, Topology, validate_topology
from .routing import RoutingPolicy, calibrate_weights

BUNDLED = ("figure1.json", "single-link.json", "diamond.json")


@dataclass
class NetworkSpec:
    topology: Topology
    lambda0: float
    policy: RoutingPolicy
    target_flow: np.ndarray | None = None  # present when routing was calibrated
    source: str = ""


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("spillback") / "data" / name))


def resolve(path) -> Path:
    """Return ``path`` if it exists, otherwise the bundled spec of that name."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.suffix else p.name + ".json"
    candidate = bundled_path(name)
    if candidate.exists():
        return candidate
    raise SpecParseError(f"{path}: no such file (bundled specs: {', '.join(BUNDLED)})")


def _number(value, where, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecParseError(f"{where}: expected a number, got {value!r}")
    if positive and not value > 0:
        raise SpecParseError(f"{where}: must be strictly positive, got {value!r}")
    if nonneg and value < 0:
        raise SpecParseError(f"{where}: must be nonnegative, got {value!r}")
    return float(value)


def _require(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise SpecParseError(f"{where}: missing field {key!r}")
    return obj[key]


def parse_spec(data: dict, source: str = "<spec>") -> NetworkSpec:
    if not isinstance(data, dict):
        raise SpecParseError(f"{source}: top level must be an object")
    nodes = _require(data, "nodes", source)
    if isinstance(nodes, bool) or not isinstance(nodes, int):
        raise SpecParseError(f"{source}: nodes: expected an integer, got {nodes!r}")
    lambda0 = _number(_require(data, "lambda0", source), f"{source}: lambda0", nonneg=True)
    raw_links = _require(data, "links", source)
    if not isinstance(raw_links, list) or not raw_links:
        raise SpecParseError(f"{source}: links: expected a nonempty list")
    links = []
    for i, raw in enumerate(raw_links):
        where = f"{source}: links[{i}]"
        lid = _require(raw, "id", where)
        if not isinstance(lid, str):
            raise SpecParseError(f"{where}.id: expected a string")
        tail, head = _require(raw, "from", where), _require(raw, "to", where)
        for name, end in (("from", tail), ("to", head)):
            if isinstance(end, bool) or not isinstance(end, int):
                raise SpecParseError(f"{where}.{name}: expected an integer node id, got {end!r}")
        rho_max = _number(_require(raw, "rho_max", where), f"{where}.rho_max", positive=True)
        flow = _require(raw, "flow", where)
        shape = flow.get("shape", "linear") if isinstance(flow, dict) else None
        if shape not in SHAPES:
            raise SpecParseError(f"{where}.flow.shape: expected one of {SHAPES}, got {shape!r}")
        f_max = _number(_require(flow, "f_max", f"{where}.flow"), f"{where}.flow.f_max", positive=True)
        alpha = _number(flow.get("alpha", 1.0), f"{where}.flow.alpha", positive=True)
        links.append(LinkDef(lid, tail, head, FlowFunction(f_max, rho_max, shape, alpha)))
    topology = validate_topology(nodes, links)

    routing = data.get("routing", {})
    if not isinstance(routing, dict):
        raise SpecParseError(f"{source}: routing: expected an object")
    family = routing.get("family", "exp-residual")
    if family != "exp-residual":
        raise SpecParseError(f"{source}: routing.family: unsupported family {family!r}")
    eta = _number(routing.get("eta", 1.0), f"{source}: routing.eta", positive=True)
    target = None
    if "weights" in routing and "calibrate_to" in routing:
        raise SpecParseError(f"{source}: routing: give either weights or calibrate_to, not both")
    if "calibrate_to" in routing:
        target = _per_link(topology, routing["calibrate_to"], f"{source}: routing.calibrate_to")
        policy = calibrate_weights(topology, target, lambda0, eta)
    elif "weights" in routing:
        w = _per_link(topology, routing["weights"], f"{source}: routing.weights", default=1.0)
        bad = [lid for lid, wi in zip(topology.link_ids, w) if not wi > 0]
        if bad:
            raise SpecParseError(f"{source}: routing.weights: must be positive on {bad}")
        policy = RoutingPolicy.from_weights(topology, w, eta)
    else:
        policy = RoutingPolicy.uniform(topology, eta)
    return NetworkSpec(topology, lambda0, policy, target, source)


def _per_link(topology, mapping, where, default=None):
    if not isinstance(mapping, dict):
        raise SpecParseError(f"{where}: expected an object keyed by link id")
    unknown = set(mapping) - set(topology.link_ids)
    if unknown:
        raise SpecParseError(f"{where}: unknown link ids {sorted(unknown)}")
    out = []
    for lid in topology.link_ids:
        if lid in mapping:
            out.append(_number(mapping[lid], f"{where}.{lid}"))
        elif default is None:
            raise SpecParseError(f"{where}: missing link {lid!r}")
        else:
            out.append(default)
    return np.array(out)


def load_spec(path) -> NetworkSpec:
    p = resolve(path)
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_spec(data, str(p))


def load_density_file(path, topology: Topology) -> np.ndarray:
    """Initial densities from ``{"rho": {link_id: value}}``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecParseError(f"{path}: {exc}") from None
    return _per_link(topology, _require(data, "rho", str(path)), f"{path}: rho")


def parse_assignments(items, what="scale") -> dict:
    """``["e3=0.6", "e4=0.6"]`` -> ``{"e3": 0.6, "e4": 0.6}``."""
    out = {}
    for item in items or ():
        for part in item.split(","):
            if not part:
                continue
            key, sep, val = part.partition("=")
            if not sep:
                raise SpecParseError(f"--{what} expects link=value, got {part!r}")
            try:
                out[key.strip()] = float(val)
            except ValueError:
                raise SpecParseError(f"--{what} {part!r}: not a number") from None
    return out
