"""Movement grammars: directed graphs of points of interest.

A grammar file is JSON::

    {
      "nodes": [
        {"id": "S", "label": "Start", "start": true,
         "trigger": {"type": "gate", "lat1": 47.0, "lon1": 15.0,
                     "lat2": 47.0001, "lon2": 15.0, "direction": "any"}},
        {"id": "SS", "label": "Start shooting",
         "trigger": {"type": "edge", "channel": "speed",
                     "threshold": 1.0, "direction": "falling"}},
        ...
      ],
      "edges": [{"from": "S", "to": "UE", "max_ms": 60000}, ...]
    }

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional

from .errors import GrammarError, TriggerError
from .timeseries import GeoPoint
from .triggers import EdgeTriggerSpec, GateTriggerSpec, PeakTriggerSpec, TriggerSpec


@dataclass(frozen=True)
class NodeSpec:
    id: str
    label: str = ""
    is_start: bool = False
    is_finish: bool = False


@dataclass(frozen=True)
class EdgeSpec:
    source: str
    target: str
    min_ms: Optional[int] = None
    max_ms: Optional[int] = None

    def __post_init__(self):
        for name in ("min_ms", "max_ms"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
                raise GrammarError(f"edge {self.source}->{self.target}: {name} must be a non-negative integer")
        if self.min_ms is not None and self.max_ms is not None and self.min_ms > self.max_ms:
            raise GrammarError(f"edge {self.source}->{self.target}: min_ms {self.min_ms} > max_ms {self.max_ms}")

    def admits(self, dt: int) -> bool:
        """Whether a transition taking ``dt`` ms satisfies the duration bounds."""
        if self.min_ms is not None and dt < self.min_ms:
            return False
        if self.max_ms is not None and dt > self.max_ms:
            return False
        return True


@dataclass(frozen=True, eq=False)
class MovementGraph:
    """Validated grammar ``G = (V, E)`` plus a trigger per node."""

    nodes: tuple[NodeSpec, ...]
    edges: tuple[EdgeSpec, ...]
    bindings: Mapping[str, TriggerSpec]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        seen = set()
        for i in ids:
            if i in seen:
                raise GrammarError(f"duplicate node id {i!r}")
            seen.add(i)
        edges: dict[tuple[str, str], EdgeSpec] = {}
        for e in self.edges:
            for end in (e.source, e.target):
                if end not in seen:
                    raise GrammarError(f"edge {e.source}->{e.target} references undefined node {end!r}")
            key = (e.source, e.target)
            if key in edges and edges[key] != e:
                raise GrammarError(f"conflicting duplicate edges {e.source}->{e.target}")
            edges[key] = e
        if not any(n.is_start for n in self.nodes):
            raise GrammarError("grammar has no start node")
        if not any(n.is_finish for n in self.nodes):
            raise GrammarError("grammar has no finish node")
        for n in self.nodes:
            if n.id not in self.bindings:
                raise GrammarError(f"node {n.id!r} has no trigger binding")
        extra = set(self.bindings) - seen
        if extra:
            raise GrammarError(f"bindings for unknown nodes {sorted(extra)}")
        has_out = {s for s, _ in edges}
        for n in self.nodes:
            if not n.is_finish and n.id not in has_out:
                raise GrammarError(f"node {n.id!r} is not a finish node and has no outgoing edge")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(sorted(edges.values(), key=lambda e: (e.source, e.target))))
        object.__setattr__(self, "bindings", MappingProxyType(dict(self.bindings)))

    def __eq__(self, other):
        if not isinstance(other, MovementGraph):
            return NotImplemented
        return (
            set(self.nodes) == set(other.nodes)
            and self.edges == other.edges
            and dict(self.bindings) == dict(other.bindings)
        )

    __hash__ = None

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def trigger_bindings(self) -> list[tuple[str, TriggerSpec]]:
        return [(n.id, self.bindings[n.id]) for n in self.nodes]

    def compile(self) -> "Automaton":
        return compile_automaton(self)


@dataclass(frozen=True, eq=False)
class Automaton:
    """The grammar as a deterministic automaton with several start states.

    ``transitions`` only holds the explicit moves ``(A, B) -> B`` given by
    edges. Any other input leaves the state unchanged.
    """

    states: frozenset
    alphabet: frozenset
    transitions: Mapping[tuple[str, str], str]
    start_states: frozenset
    accepting: frozenset
    edges: Mapping[tuple[str, str], EdgeSpec]

    def __eq__(self, other):
        if not isinstance(other, Automaton):
            return NotImplemented
        return (
            self.states == other.states
            and self.alphabet == other.alphabet
            and dict(self.transitions) == dict(other.transitions)
            and self.start_states == other.start_states
            and self.accepting == other.accepting
            and dict(self.edges) == dict(other.edges)
        )

    __hash__ = None

    def has_transition(self, state: str, symbol: str) -> bool:
        return (state, symbol) in self.transitions

    def step(self, state: str, symbol: str) -> str:
        return self.transitions.get((state, symbol), state)

    def admits(self, state: str, symbol: str, dt: int) -> bool:
        """Whether reading ``symbol`` ``dt`` ms after entering ``state`` moves the automaton."""
        edge = self.edges.get((state, symbol))
        return edge is not None and edge.admits(dt)


def compile_automaton(graph: MovementGraph) -> Automaton:
    ids = frozenset(n.id for n in graph.nodes)
    edges = {(e.source, e.target): e for e in graph.edges}
    return Automaton(
        states=ids,
        alphabet=ids,
        transitions=MappingProxyType({k: k[1] for k in edges}),
        start_states=frozenset(n.id for n in graph.nodes if n.is_start),
        accepting=frozenset(n.id for n in graph.nodes if n.is_finish),
        edges=MappingProxyType(edges),
    )


# -- config file ------------------------------------------------------------

_NODE_KEYS = {"id", "label", "start", "finish", "trigger"}
_EDGE_KEYS = {"from", "to", "min_ms", "max_ms"}
_TRIGGER_KEYS = {
    "edge": ({"channel", "threshold", "direction"}, set()),
    "peak": ({"channel"}, {"min_prominence", "min_separation_ms", "polarity"}),
    "gate": ({"lat1", "lon1", "lat2", "lon2"}, {"direction", "channel"}),
}


def _check_keys(obj: Any, required: set, optional: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise GrammarError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise GrammarError(f"{where}: missing key(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise GrammarError(f"{where}: unknown key(s) {sorted(unknown)}")


def _number(v: Any, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise GrammarError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def trigger_from_dict(obj: Any, where: str = "trigger") -> TriggerSpec:
    if not isinstance(obj, dict) or obj.get("type") not in _TRIGGER_KEYS:
        raise GrammarError(f"{where}: type must be one of {sorted(_TRIGGER_KEYS)}")
    kind = obj["type"]
    required, optional = _TRIGGER_KEYS[kind]
    _check_keys(obj, required | {"type"}, optional, where)
    try:
        if kind == "edge":
            return EdgeTriggerSpec(str(obj["channel"]), _number(obj["threshold"], where), obj["direction"])
        if kind == "peak":
            sep = obj.get("min_separation_ms", 0)
            if isinstance(sep, bool) or not isinstance(sep, int):
                raise GrammarError(f"{where}: min_separation_ms must be an integer")
            return PeakTriggerSpec(
                str(obj["channel"]),
                _number(obj.get("min_prominence", 0.0), where),
                sep,
                obj.get("polarity", "maxima"),
            )
        a = GeoPoint(_number(obj["lat1"], where), _number(obj["lon1"], where))
        b = GeoPoint(_number(obj["lat2"], where), _number(obj["lon2"], where))
        return GateTriggerSpec((a, b), obj.get("direction", "any"), str(obj.get("channel", "position")))
    except (TriggerError, ValueError) as exc:
        if isinstance(exc, GrammarError):
            raise
        raise GrammarError(f"{where}: {exc}") from None


def trigger_to_dict(spec: TriggerSpec) -> dict:
    if isinstance(spec, EdgeTriggerSpec):
        return {"type": "edge", "channel": spec.channel, "threshold": spec.threshold,
                "direction": spec.direction.value}
    if isinstance(spec, PeakTriggerSpec):
        return {"type": "peak", "channel": spec.channel, "min_prominence": spec.min_prominence,
                "min_separation_ms": spec.min_separation_ms, "polarity": spec.polarity.value}
    a, b = spec.gate
    out = {"type": "gate", "lat1": a.lat, "lon1": a.lon, "lat2": b.lat, "lon2": b.lon,
           "direction": spec.direction.value}
    if spec.channel != "position":
        out["channel"] = spec.channel
    return out


def grammar_from_dict(data: Any) -> MovementGraph:
    _check_keys(data, {"nodes", "edges"}, set(), "grammar")
    if not isinstance(data["nodes"], list) or not isinstance(data["edges"], list):
        raise GrammarError("grammar: nodes and edges must be arrays")
    nodes, bindings = [], {}
    for i, obj in enumerate(data["nodes"]):
        where = f"nodes[{i}]"
        _check_keys(obj, {"id", "trigger"}, _NODE_KEYS, where)
        node_id = obj["id"]
        if not isinstance(node_id, str) or not node_id:
            raise GrammarError(f"{where}: id must be a non-empty string")
        for flag in ("start", "finish"):
            if not isinstance(obj.get(flag, False), bool):
                raise GrammarError(f"{where}: {flag} must be a boolean")
        nodes.append(NodeSpec(node_id, str(obj.get("label", node_id)),
                              obj.get("start", False), obj.get("finish", False)))
        if node_id in bindings:
            raise GrammarError(f"duplicate node id {node_id!r}")
        bindings[node_id] = trigger_from_dict(obj["trigger"], f"{where}.trigger")
    edges = []
    for i, obj in enumerate(data["edges"]):
        _check_keys(obj, {"from", "to"}, _EDGE_KEYS, f"edges[{i}]")
        edges.append(EdgeSpec(str(obj["from"]), str(obj["to"]), obj.get("min_ms"), obj.get("max_ms")))
    return MovementGraph(tuple(nodes), tuple(edges), bindings)


def grammar_to_dict(graph: MovementGraph) -> dict:
    nodes = []
    for n in graph.nodes:
        nodes.append({"id": n.id, "label": n.label, "start": n.is_start, "finish": n.is_finish,
                      "trigger": trigger_to_dict(graph.bindings[n.id])})
    edges = []
    for e in graph.edges:
        obj: dict = {"from": e.source, "to": e.target}
        if e.min_ms is not None:
            obj["min_ms"] = e.min_ms
        if e.max_ms is not None:
            obj["max_ms"] = e.max_ms
        edges.append(obj)
    return {"nodes": nodes, "edges": edges}


def parse_grammar(path: str | os.PathLike) -> MovementGraph:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GrammarError(f"{path}: invalid JSON ({exc})") from None
    return grammar_from_dict(data)


def build_graph(
    nodes: Iterable[NodeSpec],
    edges: Iterable[EdgeSpec | tuple],
    bindings: Mapping[str, TriggerSpec],
) -> MovementGraph:
    """Convenience constructor accepting ``(from, to[, min, max])`` tuples."""
    es = [e if isinstance(e, EdgeSpec) else EdgeSpec(*e) for e in edges]
    return MovementGraph(tuple(nodes), tuple(es), bindings)
