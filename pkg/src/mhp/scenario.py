"""Scenario schema: network files, demand profiles, and signal layouts.

A scenario file is a JSON document referencing (or inlining) a network
file plus demand profiles, per-intersection phase definitions, horizon,
step size, and decision epoch.  See README for the documented schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidScenario
from .network import (
    ExtendedGraph,
    Link,
    LinkGraph,
    Movement,
    TransitionMatrix,
    build_graph,
    extend_with_supersink,
    transition_matrix,
)
from .pressure import Phase


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant arrival rates at one origin link."""

    origin: str
    pieces: tuple[tuple[float, float, float], ...]  # (start_s, end_s, rate_vph)

    def __post_init__(self):
        prev_end = None
        for start, end, rate in self.pieces:
            if end <= start:
                raise InvalidScenario(f"demand window [{start}, {end}) is empty")
            if rate < 0:
                raise InvalidScenario(f"negative demand rate {rate}")
            if prev_end is not None and start < prev_end:
                raise InvalidScenario("demand windows overlap or are out of order")
            prev_end = end

    def rate_at(self, t_s: float) -> float:
        for start, end, rate in self.pieces:
            if start <= t_s < end:
                return rate
        return 0.0


@dataclass(frozen=True)
class IntersectionSpec:
    """Signalized intersection: ordered phases plus cycle timing constants."""

    name: str
    phases: tuple[Phase, ...]
    cycle_s: int = 90
    lost_time_s: int = 4
    min_green_s: int = 10

    def __post_init__(self):
        if not self.phases:
            raise InvalidScenario(f"intersection {self.name!r} has no phases")
        seen: set[int] = set()
        for ph in self.phases:
            overlap = seen.intersection(ph.incoming)
            if overlap:
                raise InvalidScenario(
                    f"intersection {self.name!r}: links {sorted(overlap)} appear in two phases"
                )
            seen.update(ph.incoming)
        n = len(self.phases)
        if self.min_green_s * n > self.cycle_s:
            raise InvalidScenario(
                f"intersection {self.name!r}: {n} phases at min green "
                f"{self.min_green_s}s exceed cycle {self.cycle_s}s"
            )
        if self.lost_time_s >= self.min_green_s:
            raise InvalidScenario(
                f"intersection {self.name!r}: lost time must be below min green"
            )


@dataclass(frozen=True)
class Scenario:
    """Immutable episode setup shared by all replications."""

    name: str
    graph: LinkGraph
    egraph: ExtendedGraph
    tm: TransitionMatrix
    demands: tuple[DemandProfile, ...]
    intersections: tuple[IntersectionSpec, ...]
    horizon_s: int = 7200
    dt_s: int = 1
    decision_epoch_s: int = 90
    virtual_in_queues: bool = True
    source: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dt_s <= 0:
            raise InvalidScenario("dt must be > 0")
        if self.horizon_s <= 0 or self.horizon_s % self.dt_s:
            raise InvalidScenario("horizon must be a positive multiple of dt")
        names = {l.name for l in self.graph.links}
        for d in self.demands:
            if d.origin not in names:
                raise InvalidScenario(f"demand origin {d.origin!r} is not a link")
            if not self.graph.links[self.graph.index[d.origin]].is_entry:
                raise InvalidScenario(f"demand origin {d.origin!r} is not an entry link")
        seen_x: set[str] = set()
        for spec in self.intersections:
            if spec.name in seen_x:
                raise InvalidScenario(f"duplicate intersection {spec.name!r}")
            seen_x.add(spec.name)

    def intersection(self, name: str) -> IntersectionSpec:
        for spec in self.intersections:
            if spec.name == name:
                return spec
        raise InvalidScenario(f"unknown intersection {name!r}")


def scale_link_supply(scenario: Scenario, factor: float) -> Scenario:
    """Clone a scenario with storage capacities and saturation flows scaled."""
    from dataclasses import replace as _replace

    links = [
        _replace(
            l,
            capacity_veh=max(1, int(round(l.capacity_veh * factor))),
            sat_flow_vph=l.sat_flow_vph * factor,
        )
        for l in scenario.graph.links
    ]
    graph = build_graph(links, list(scenario.graph.movements))
    egraph = extend_with_supersink(graph)
    return Scenario(
        name=f"{scenario.name}@supply{factor:g}",
        graph=graph,
        egraph=egraph,
        tm=transition_matrix(egraph),
        demands=scenario.demands,
        intersections=scenario.intersections,
        horizon_s=scenario.horizon_s,
        dt_s=scenario.dt_s,
        decision_epoch_s=scenario.decision_epoch_s,
        virtual_in_queues=scenario.virtual_in_queues,
        source=scenario.source,
    )


def _load_network_dict(doc: dict) -> LinkGraph:
    try:
        link_docs = doc["links"]
        movement_docs = doc.get("movements", [])
    except (TypeError, KeyError) as exc:
        raise InvalidScenario(f"malformed network document: {exc}") from None
    links = []
    for ld in link_docs:
        try:
            links.append(
                Link(
                    name=str(ld["id"]),
                    length_m=float(ld.get("length_m", 300.0)),
                    capacity_veh=int(ld.get("capacity_veh", 40)),
                    sat_flow_vph=float(ld.get("sat_flow_vph", 1800.0)),
                    ff_time_s=float(ld.get("ff_time_s", 36.0)),
                    is_entry=bool(ld.get("entry", False)),
                    is_exit=bool(ld.get("exit", False)),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidScenario(f"bad link record {ld!r}: {exc}") from None
    movements = [
        Movement(str(md["from"]), str(md["to"]), float(md["ratio"]))
        for md in movement_docs
    ]
    return build_graph(links, movements)


def load_network_file(path: str | Path) -> LinkGraph:
    """Load and validate a network JSON file."""
    with open(path) as fh:
        return _load_network_dict(json.load(fh))


def load_scenario_file(path: str | Path) -> Scenario:
    """Load a scenario JSON file; the network may be a sibling path or inline."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    net = doc.get("network")
    if isinstance(net, str):
        graph = load_network_file(path.parent / net)
    elif isinstance(net, dict):
        graph = _load_network_dict(net)
    else:
        raise InvalidScenario("scenario must reference or inline a network")
    return scenario_from_dict(doc, graph, name=doc.get("name", path.stem))


def scenario_from_dict(doc: dict, graph: LinkGraph, name: str) -> Scenario:
    egraph = extend_with_supersink(graph)
    tm = transition_matrix(egraph)

    demands = tuple(
        DemandProfile(
            origin=str(dd["origin"]),
            pieces=tuple(
                (float(p["start_s"]), float(p["end_s"]), float(p["rate_vph"]))
                for p in dd["profile"]
            ),
        )
        for dd in doc.get("demand", [])
    )

    def link_index(name: str) -> int:
        try:
            return graph.index[name]
        except KeyError:
            raise InvalidScenario(f"phase references unknown link {name!r}") from None

    intersections = []
    for sd in doc.get("signals", []):
        xname = str(sd["intersection"])
        min_green = int(sd.get("min_green_s", 10))
        phases = tuple(
            Phase(
                intersection=xname,
                label=str(pd["label"]),
                incoming=tuple(link_index(str(l)) for l in pd["incoming"]),
                min_green_s=min_green,
            )
            for pd in sd["phases"]
        )
        intersections.append(
            IntersectionSpec(
                name=xname,
                phases=phases,
                cycle_s=int(sd.get("cycle_s", 90)),
                lost_time_s=int(sd.get("lost_time_s", 4)),
                min_green_s=min_green,
            )
        )

    options = doc.get("options", {})
    return Scenario(
        name=name,
        graph=graph,
        egraph=egraph,
        tm=tm,
        demands=demands,
        intersections=tuple(intersections),
        horizon_s=int(doc.get("horizon_s", 7200)),
        dt_s=int(doc.get("dt_s", 1)),
        decision_epoch_s=int(doc.get("decision_epoch_s", 90)),
        virtual_in_queues=bool(options.get("virtual_queues_in_snapshot", True)),
        source=doc,
    )
