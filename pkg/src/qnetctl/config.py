"""Experiment configuration: loading, validation, and serialization.

A configuration is one JSON document (schema in ``data/config.schema.json``).
``null`` for ``coherence_time`` or ``cutoff_age`` means infinite, and a
node's ``memory`` of ``null`` means unlimited.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .fidelity import FidelityError, FidelityParams
from .netsim import Commodity, Edge, Network, Node, Topology, validate_commodities, validate_topology
from .policies import Policy, make_policy

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised with every problem found in a configuration, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    topology: Topology
    commodities: tuple[Commodity, ...]
    fidelity: FidelityParams
    policy: str
    seed: int
    horizon: int
    policy_params: dict = field(default_factory=dict)
    max_path_hops: int = 6
    name: str = ""
    output: dict = field(default_factory=dict)

    def network(self) -> Network:
        return Network(self.topology, self.commodities, self.fidelity, self.max_path_hops)

    def make_policy(self) -> Policy:
        return make_policy(self.policy, **self.policy_params)


def _schema() -> dict:
    return json.loads(resources.files("qnetctl.data").joinpath("config.schema.json").read_text())


def bundled_path(name: str) -> Path:
    """Path of a configuration shipped with the package, e.g. ``"line2.json"``."""
    path = resources.files("qnetctl.data").joinpath(name)
    if not path.is_file():
        raise FileNotFoundError(name)
    return Path(str(path))


def bundled_names() -> list[str]:
    return sorted(
        p.name
        for p in resources.files("qnetctl.data").iterdir()
        if p.name.endswith(".json") and p.name != "config.schema.json"
    )


def resolve_path(name: str | Path) -> Path:
    """A local file if it exists, otherwise a bundled configuration of that name."""
    path = Path(name)
    if path.is_file():
        return path
    try:
        return bundled_path(str(name))
    except FileNotFoundError:
        raise ConfigError([f"{name}: no such file or bundled configuration"]) from None


def _inf(value):
    return math.inf if value is None else value


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a decoded document and build the configuration.

    Schema and semantic problems are collected together; semantic checks
    still run when the schema check fails, as far as the structure allows.
    """
    errors = []
    for err in sorted(jsonschema.Draft202012Validator(_schema()).iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        errors.append(f"{where}: {err.message}")
    schema_ok = not errors
    try:
        cfg = _build(doc, errors)
    except (KeyError, TypeError, AttributeError, ValueError):
        if schema_ok:
            raise
        cfg = None
    if errors:
        raise ConfigError(errors)
    return cfg


def _build(doc: dict, errors: list[str]) -> ExperimentConfig:
    fid = doc["fidelity"]
    default_F0 = fid.get("F0", 1.0)
    try:
        params = FidelityParams(
            coherence_time=_inf(fid.get("coherence_time")),
            cutoff_age=_inf(fid.get("cutoff_age")),
            F0=default_F0,
            min_service_fidelity=fid.get("min_service_fidelity"),
        )
    except FidelityError as exc:
        errors.append(f"fidelity: {exc}")
        params = None

    topo = doc["topology"]
    nodes = tuple(Node(n["id"], n.get("role", "client"), n.get("memory")) for n in topo["nodes"])
    edges = tuple(Edge(e["u"], e["v"], e["p_gen"], e.get("F0", default_F0)) for e in topo["edges"])
    topo_errors = validate_topology(nodes, edges)
    errors += [f"topology: {msg}" for msg in topo_errors]
    topology = None if topo_errors else Topology(nodes, edges)

    commodities = tuple(Commodity(c["id"], c["src"], c["dst"], c["rate"]) for c in doc["commodities"])
    if not commodities:
        errors.append("commodities: at least one commodity is required")
    errors += [f"commodities: {msg}" for msg in validate_commodities(nodes, commodities)]

    policy = doc["policy"]
    cfg = ExperimentConfig(
        topology=topology,
        commodities=commodities,
        fidelity=params,
        policy=policy["name"],
        policy_params=dict(policy.get("params", {})),
        seed=doc["seed"],
        horizon=doc["horizon"],
        max_path_hops=doc.get("max_path_hops", 6),
        name=doc.get("name", ""),
        output=dict(doc.get("output", {})),
    )
    try:
        cfg.make_policy()
    except (TypeError, ValueError) as exc:
        errors.append(f"policy: {exc}")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = resolve_path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return parse_config(doc)


def _none_if_inf(value):
    return None if value == math.inf else value


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "max_path_hops": cfg.max_path_hops,
        "topology": {
            "nodes": [{"id": n.id, "role": n.role, "memory": n.memory} for n in cfg.topology.nodes],
            "edges": [{"u": e.u, "v": e.v, "p_gen": e.p_gen, "F0": e.F0} for e in cfg.topology.edges],
        },
        "commodities": [
            {"id": c.id, "src": c.src, "dst": c.dst, "rate": c.rate} for c in cfg.commodities
        ],
        "fidelity": {
            "coherence_time": _none_if_inf(cfg.fidelity.coherence_time),
            "cutoff_age": _none_if_inf(cfg.fidelity.cutoff_age),
            "F0": cfg.fidelity.F0,
            "min_service_fidelity": cfg.fidelity.min_service_fidelity,
        },
        "policy": {"name": cfg.policy, "params": dict(cfg.policy_params)},
        "output": dict(cfg.output),
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"
