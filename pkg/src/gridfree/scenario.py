"""JSON scenario files: schema, loading, validation and writing.

Node indices are 1-based in files and 0-based in memory. Per-unit
quantities throughout, frequencies in Hz. Loads are negative ``p_u``
injections. Passive (zero-injection) nodes are listed in
``passive_nodes`` and carry ``null`` in ``capacities``; only ``reduce``
accepts such files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .control import ClosedLoopSystem, Scheme, SchemeConfig, system_matrix
from .errors import ValidationError
from .network import (
    AdmittancePartition,
    CommGraph,
    DerFleet,
    ElectricalNetwork,
    build_comm_laplacian,
    build_susceptance_laplacian,
    edges_from_laplacian,
    kron_reduce,
    laplacian,
)
from .simulation import DEFAULT_CONV_DT, DEFAULT_CONV_XI, Disturbance, Scenario

_POS = {"type": "number", "exclusiveMinimum": 0}
_IDX = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["nodes", "electrical_lines", "comm_links", "capacities", "control"],
    "additionalProperties": False,
    "properties": {
        "nodes": {"type": "integer", "minimum": 1, "description": "node count"},
        "electrical_lines": {
            "type": "array",
            "description": "line susceptances b in p.u.",
            "items": {"type": "object", "required": ["i", "j", "b"], "additionalProperties": False,
                      "properties": {"i": _IDX, "j": _IDX, "b": _POS}},
        },
        "rx_angle": {"type": ["number", "null"], "description": "uniform arctan(R/X) in rad"},
        "comm_links": {
            "type": "array",
            "items": {"type": "object", "required": ["i", "j", "w"], "additionalProperties": False,
                      "properties": {"i": _IDX, "j": _IDX, "w": _POS}},
        },
        "capacities": {
            "type": "array",
            "description": "available DER capacity per node in p.u.; null at passive nodes",
            "items": {"anyOf": [_POS, {"type": "null"}]},
        },
        "passive_nodes": {"type": "array", "items": _IDX, "uniqueItems": True},
        "control": {
            "type": "object",
            "required": ["scheme"],
            "additionalProperties": False,
            "properties": {
                "scheme": {"type": "string"},
                "h": {"type": "number", "description": "consensus gain"},
                "omega0_hz": {"type": "number", "exclusiveMinimum": 0},
                "filter_tau": {"type": ["number", "null"], "description": "filter time constant in s"},
            },
        },
        "simulation": {
            "type": "object",
            "required": ["horizon", "dt"],
            "additionalProperties": False,
            "properties": {
                "p_net0": {"type": "array", "items": {"type": "number"}},
                "p_u0": {"type": "array", "items": {"type": "number"},
                         "description": "initial uncontrollable injections; loads negative"},
                "disturbances": {
                    "type": "array",
                    "items": {"type": "object", "required": ["t", "node", "delta"],
                              "additionalProperties": False,
                              "properties": {"t": {"type": "number"}, "node": _IDX,
                                             "delta": {"type": "number"}}},
                },
                "horizon": _POS,
                "dt": _POS,
                "conv_dt": _POS,
                "conv_xi": _POS,
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _path(err) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _field_error(where: str, exc: Exception) -> ValidationError:
    return ValidationError(f"{where}: {exc}")


@dataclass(eq=False)
class ScenarioFile:
    """Parsed scenario with 0-based indices."""

    n_nodes: int
    lines: list
    comm_links: list
    capacities: list  # None at passive nodes
    control: dict
    rx_angle: float | None = None
    passive_nodes: tuple = ()
    simulation: dict | None = None
    raw: dict = field(default_factory=dict)

    # ---- views -------------------------------------------------------
    @property
    def active_nodes(self) -> list[int]:
        return [k for k in range(self.n_nodes) if k not in self.passive_nodes]

    def require_active(self, command: str = "this command") -> None:
        if self.passive_nodes:
            raise ValidationError(
                f"passive_nodes: {command} needs a file without passive nodes; run reduce first"
            )

    def network(self) -> ElectricalNetwork:
        try:
            return ElectricalNetwork(self.n_nodes, self.lines, self.rx_angle)
        except ValidationError as exc:
            raise _field_error("electrical_lines", exc) from None

    def comm_graph(self) -> CommGraph:
        try:
            return CommGraph(self.n_nodes, self.comm_links)
        except ValidationError as exc:
            raise _field_error("comm_links", exc) from None

    def fleet(self) -> DerFleet:
        try:
            return DerFleet(np.array(self.capacities, dtype=float))
        except ValidationError as exc:
            raise _field_error("capacities", exc) from None

    def scheme_config(self, scheme=None) -> SchemeConfig:
        c = self.control
        try:
            return SchemeConfig(
                scheme=Scheme.parse(scheme if scheme is not None else c["scheme"]),
                h=c.get("h", 1.0),
                filter_tau=c.get("filter_tau"),
                rx_angle=self.rx_angle,
            )
        except ValidationError as exc:
            msg = str(exc)
            key = "h" if "gain" in msg else "filter_tau" if "filter_tau" in msg else \
                "scheme" if "scheme" in msg else None
            where = f"control.{key}" if key else ("rx_angle" if "rx_angle" in msg else "control")
            raise _field_error(where, exc) from None

    @property
    def omega0(self) -> float:
        return 2 * math.pi * float(self.control.get("omega0_hz", 60.0))

    def closed_loop(self, scheme=None) -> ClosedLoopSystem:
        self.require_active()
        B = build_susceptance_laplacian(self.network())
        L = build_comm_laplacian(self.comm_graph())
        return system_matrix(B, L, self.fleet().D_p, self.scheme_config(scheme))

    def scenario(self, scheme=None) -> Scenario:
        if self.simulation is None:
            raise ValidationError("simulation: section missing")
        sim = self.simulation
        system = self.closed_loop(scheme)
        dist = [Disturbance(float(d["t"]), int(d["node"]) - 1, float(d["delta"]))
                for d in sim.get("disturbances", [])]
        try:
            return Scenario(
                system=system,
                horizon=float(sim["horizon"]),
                dt=float(sim["dt"]),
                disturbances=tuple(dist),
                p_u0=sim.get("p_u0"),
                p_net0=sim.get("p_net0"),
                omega0=self.omega0,
                conv_dt=float(sim.get("conv_dt", DEFAULT_CONV_DT)),
                conv_xi=float(sim.get("conv_xi", DEFAULT_CONV_XI)),
            )
        except ValidationError as exc:
            raise _field_error("simulation", exc) from None


def parse_scenario(doc: dict) -> ScenarioFile:
    """Schema-check ``doc`` and run the semantic checks."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ValidationError(f"{_path(err)}: {err.message}")
    n = doc["nodes"]

    def edges(key, wkey):
        out = []
        for k, e in enumerate(doc[key]):
            if e["i"] > n or e["j"] > n:
                raise ValidationError(f"{key}[{k}]: node index exceeds nodes={n}")
            out.append((e["i"] - 1, e["j"] - 1, float(e[wkey])))
        return out

    lines = edges("electrical_lines", "b")
    links = edges("comm_links", "w")
    caps = doc["capacities"]
    if len(caps) != n:
        raise ValidationError(f"capacities: expected {n} entries, got {len(caps)}")
    passive = []
    for k, p in enumerate(doc.get("passive_nodes", [])):
        if p > n:
            raise ValidationError(f"passive_nodes[{k}]: node index exceeds nodes={n}")
        passive.append(p - 1)
    passive = tuple(sorted(passive))
    for k in range(n):
        if k in passive and caps[k] is not None:
            raise ValidationError(f"capacities[{k}]: passive node {k + 1} must not list a DER capacity")
        if k not in passive and caps[k] is None:
            raise ValidationError(f"capacities[{k}]: missing capacity for active node {k + 1}")
    if len(passive) >= n:
        raise ValidationError("passive_nodes: at least one node must be active")
    for k, (i, j, _) in enumerate(links):
        if i in passive or j in passive:
            raise ValidationError(f"comm_links[{k}]: passive node cannot carry a comm link")

    sf = ScenarioFile(
        n_nodes=n,
        lines=lines,
        comm_links=links,
        capacities=list(caps),
        control=dict(doc["control"]),
        rx_angle=doc.get("rx_angle"),
        passive_nodes=passive,
        simulation=None if doc.get("simulation") is None else dict(doc["simulation"]),
        raw=doc,
    )
    sf.network()
    try:
        Scheme.parse(sf.control["scheme"])
    except ValidationError as exc:
        raise _field_error("control.scheme", exc) from None
    sf.scheme_config()
    active = sf.active_nodes
    remap = {a: k for k, a in enumerate(active)}
    sub = [(remap[i], remap[j], w) for i, j, w in links]
    try:
        CommGraph(len(active), sub)
    except ValidationError as exc:
        raise _field_error("comm_links", exc) from None
    if sf.simulation is not None:
        _check_simulation(sf)
    return sf


def _check_simulation(sf: ScenarioFile):
    sim = sf.simulation
    n = sf.n_nodes
    for key in ("p_net0", "p_u0"):
        if key in sim and len(sim[key]) != n:
            raise ValidationError(f"simulation.{key}: expected {n} entries, got {len(sim[key])}")
    if "p_net0" in sim and abs(sum(sim["p_net0"])) >= 1e-12:
        raise ValidationError("simulation.p_net0: entries must sum to zero")
    horizon = sim["horizon"]
    dt = sim["dt"]
    conv_dt = sim.get("conv_dt", DEFAULT_CONV_DT)
    if not (dt < conv_dt < horizon):
        raise ValidationError("simulation.dt: need 0 < dt < conv_dt < horizon")
    lag = conv_dt / dt
    if abs(lag - round(lag)) > 1e-9 * lag:
        raise ValidationError("simulation.conv_dt: must be an integer multiple of dt")
    prev = -math.inf
    for k, d in enumerate(sim.get("disturbances", [])):
        where = f"simulation.disturbances[{k}]"
        if d["node"] > n:
            raise ValidationError(f"{where}.node: index exceeds nodes={n}")
        if not (0 <= d["t"] <= horizon):
            raise ValidationError(f"{where}.t: outside [0, horizon]")
        if d["t"] <= prev:
            raise ValidationError(f"{where}.t: disturbance times must be strictly increasing")
        prev = d["t"]


def load_scenario(path) -> ScenarioFile:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_scenario(doc)


def scenario_document(n_nodes, lines, comm_links, capacities, scheme="O_NAPC", h=1.0,
                      omega0_hz=60.0, filter_tau=None, rx_angle=None, simulation=None,
                      passive_nodes=()) -> dict:
    """Build a file document from 0-based edge lists."""
    doc = {
        "nodes": int(n_nodes),
        "electrical_lines": [{"i": int(i) + 1, "j": int(j) + 1, "b": float(b)} for i, j, b in lines],
        "comm_links": [{"i": int(i) + 1, "j": int(j) + 1, "w": float(w)} for i, j, w in comm_links],
        "capacities": [None if c is None else float(c) for c in capacities],
        "control": {"scheme": Scheme.parse(scheme).value, "h": float(h), "omega0_hz": float(omega0_hz)},
    }
    if filter_tau is not None:
        doc["control"]["filter_tau"] = float(filter_tau)
    if rx_angle is not None:
        doc["rx_angle"] = float(rx_angle)
    if passive_nodes:
        doc["passive_nodes"] = [int(p) + 1 for p in passive_nodes]
    if simulation is not None:
        doc["simulation"] = simulation
    return doc


def scenario_from_matrices(B, L_W, D_p, **kwargs) -> dict:
    """File document for Laplacians ``B``, ``L_W`` and ``D_p`` (matrix or diagonal)."""
    D = np.asarray(D_p, dtype=float)
    caps = 1.0 / (np.diag(D) if D.ndim == 2 else D)
    n = caps.size
    return scenario_document(n, edges_from_laplacian(B), edges_from_laplacian(L_W), caps.tolist(), **kwargs)


def reduce_document(sf: ScenarioFile) -> dict:
    """Kron-reduce the passive nodes out of a parsed scenario."""
    passive = set(sf.passive_nodes)
    active = sf.active_nodes
    remap = {a: k for k, a in enumerate(active)}
    sim = None
    if sf.simulation is not None:
        sim = json.loads(json.dumps(sf.simulation))
        for k, d in enumerate(sim.get("disturbances", [])):
            if d["node"] - 1 in passive:
                raise ValidationError(f"simulation.disturbances[{k}].node: passive node cannot be disturbed")
            d["node"] = remap[d["node"] - 1] + 1
        for key in ("p_net0", "p_u0"):
            if key in sim:
                vals = sim[key]
                for p in passive:
                    if vals[p] != 0:
                        raise ValidationError(f"simulation.{key}[{p}]: passive node must have zero injection")
                sim[key] = [vals[a] for a in active]
    lines = sf.lines
    if passive:
        Y = laplacian(sf.n_nodes, sf.lines)
        Y_eq = kron_reduce(AdmittancePartition(Y, tuple(active)))
        lines = [(i, j, b) for i, j, b in edges_from_laplacian(Y_eq)]
    else:
        lines = [(i, j, b) for i, j, b in lines]
    links = [(remap[i], remap[j], w) for i, j, w in sf.comm_links]
    control = dict(sf.control)
    doc = {
        "nodes": len(active),
        "electrical_lines": [{"i": i + 1, "j": j + 1, "b": b} for i, j, b in lines],
        "comm_links": [{"i": i + 1, "j": j + 1, "w": w} for i, j, w in links],
        "capacities": [sf.capacities[a] for a in active],
        "control": control,
    }
    if sf.rx_angle is not None:
        doc["rx_angle"] = sf.rx_angle
    if sim is not None:
        doc["simulation"] = sim
    parse_scenario(doc)
    return doc


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


__all__ = [
    "SCHEMA",
    "ScenarioFile",
    "dump_document",
    "load_scenario",
    "parse_scenario",
    "reduce_document",
    "scenario_document",
    "scenario_from_matrices",
]
