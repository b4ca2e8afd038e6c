"""Basin connectivity graphs: parsing, validation, and tree surgery.

A region is an inverted tree of basins: every basin drains into at most one
downstream basin, and exactly one basin (the drain) has no outlet. The graph
shape drives the model's computation graph, so everything here is strictly
deterministic: source lists are sorted, topological order breaks ties
lexicographically, and pruning preserves declaration order.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

from .errors import HydroNetsError


@dataclass(frozen=True)
class Basin:
    """One drainage area. ``static_features`` are carried but unused by the
    linear models."""

    id: str
    name: str
    static_features: tuple[float, ...] | None = None


@dataclass(frozen=True)
class RegionGraph:
    """Basins plus directed edges (upstream id -> downstream id).

    Construction does not validate tree-ness; call :func:`validate`.
    Instances are immutable and safe to share across workers.
    """

    basins: tuple[Basin, ...]
    edges: tuple[tuple[str, str], ...]

    @cached_property
    def basin_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.basins)

    @cached_property
    def basin_by_id(self) -> dict[str, Basin]:
        return {b.id: b for b in self.basins}

    @cached_property
    def upstream(self) -> dict[str, tuple[str, ...]]:
        """Basin id -> ids flowing directly into it, sorted ascending."""
        ins: dict[str, list[str]] = {b.id: [] for b in self.basins}
        for src, dst in self.edges:
            if dst in ins:
                ins[dst].append(src)
        return {bid: tuple(sorted(srcs)) for bid, srcs in ins.items()}

    @cached_property
    def downstream(self) -> dict[str, tuple[str, ...]]:
        """Basin id -> ids it flows into (a valid tree has at most one)."""
        outs: dict[str, list[str]] = {b.id: [] for b in self.basins}
        for src, dst in self.edges:
            if src in outs:
                outs[src].append(dst)
        return {bid: tuple(v) for bid, v in outs.items()}

    @cached_property
    def topo_order(self) -> tuple[str, ...]:
        """Validated topological order, cached per graph instance."""
        return tuple(topological_order(self))

    def __contains__(self, basin_id: str) -> bool:
        return basin_id in self.basin_by_id


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`; ``ok`` iff ``errors`` is empty."""

    errors: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(code for code, _ in self.errors)


_REGION_KEYS = {"basins", "edges"}
_BASIN_KEYS = {"id", "name", "static"}


def parse_region(text: str) -> RegionGraph:
    """Parse a region file (JSON with "basins" and "edges" arrays).

    Echoes the declared structure exactly; tree invariants are checked by
    :func:`validate`, not here. Raises on malformed syntax, duplicate ids,
    edges naming unknown basins, unknown fields, and empty basin lists.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise HydroNetsError(
            "syntax-error", f"invalid region file at line {e.lineno} column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(doc, dict):
        raise HydroNetsError("syntax-error", "region file must be a JSON object")
    unknown = set(doc) - _REGION_KEYS
    if unknown:
        raise HydroNetsError("unknown-field", f"unknown top-level fields: {sorted(unknown)}")
    if not isinstance(doc.get("basins"), list) or not isinstance(doc.get("edges"), list):
        raise HydroNetsError("syntax-error", "region file needs 'basins' and 'edges' arrays")
    if not doc["basins"]:
        raise HydroNetsError("empty-region", "region declares no basins")

    basins: list[Basin] = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["basins"]):
        if not isinstance(entry, dict):
            raise HydroNetsError("syntax-error", f"basin #{i} is not an object")
        unknown = set(entry) - _BASIN_KEYS
        if unknown:
            raise HydroNetsError("unknown-field", f"basin #{i} has unknown fields: {sorted(unknown)}")
        bid = entry.get("id")
        name = entry.get("name")
        if not isinstance(bid, str) or not bid:
            raise HydroNetsError("syntax-error", f"basin #{i} needs a non-empty string 'id'")
        if not isinstance(name, str):
            raise HydroNetsError("syntax-error", f"basin {bid!r} needs a string 'name'")
        if bid in seen:
            raise HydroNetsError("duplicate-id", f"basin id {bid!r} declared more than once")
        seen.add(bid)
        static = entry.get("static")
        if static is not None:
            if not isinstance(static, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in static
            ):
                raise HydroNetsError("syntax-error", f"basin {bid!r} 'static' must be a number array")
            static = tuple(float(v) for v in static)
        basins.append(Basin(id=bid, name=name, static_features=static))

    edges: list[tuple[str, str]] = []
    for i, entry in enumerate(doc["edges"]):
        if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(v, str) for v in entry)):
            raise HydroNetsError("syntax-error", f"edge #{i} must be a [src_id, dst_id] pair")
        src, dst = entry
        for endpoint in (src, dst):
            if endpoint not in seen:
                raise HydroNetsError("unknown-edge-endpoint", f"edge #{i} references unknown basin {endpoint!r}")
        edges.append((src, dst))

    return RegionGraph(basins=tuple(basins), edges=tuple(edges))


def dump_region(g: RegionGraph) -> str:
    """Serialize a region graph back to the region file format."""
    basins = []
    for b in g.basins:
        entry: dict = {"id": b.id, "name": b.name}
        if b.static_features is not None:
            entry["static"] = list(b.static_features)
        basins.append(entry)
    doc = {"basins": basins, "edges": [list(e) for e in g.edges]}
    return json.dumps(doc, indent=2) + "\n"


def validate(g: RegionGraph) -> ValidationReport:
    """Check the inverted-tree invariants; one report entry per violation."""
    errors: list[tuple[str, str]] = []
    ids = list(g.basin_ids)
    id_set = set(ids)

    if not ids:
        return ValidationReport(errors=(("empty-region", "graph has no basins"),))
    if len(id_set) != len(ids):
        dupes = sorted({bid for bid in ids if ids.count(bid) > 1})
        errors.append(("duplicate-id", f"duplicate basin ids: {dupes}"))

    dangling = [e for e in g.edges if e[0] not in id_set or e[1] not in id_set]
    for src, dst in dangling:
        errors.append(("unknown-edge-endpoint", f"edge ({src!r}, {dst!r}) names a missing basin"))
    edges = [e for e in g.edges if e not in dangling]

    out_deg = {bid: 0 for bid in id_set}
    for src, _ in edges:
        out_deg[src] += 1
    for bid in sorted(b for b, d in out_deg.items() if d > 1):
        errors.append(("multiple-out-edges", f"basin {bid!r} has out-degree {out_deg[bid]}"))

    drains = sorted(b for b, d in out_deg.items() if d == 0)
    if len(drains) == 0:
        errors.append(("no-drain", "no basin has out-degree 0"))
    elif len(drains) > 1:
        errors.append(("multiple-drains", f"basins with out-degree 0: {drains}"))

    # Kahn residue detects cycles independently of the drain bookkeeping.
    indeg = {bid: 0 for bid in id_set}
    outs: dict[str, list[str]] = {bid: [] for bid in id_set}
    for src, dst in edges:
        indeg[dst] += 1
        outs[src].append(dst)
    ready = deque(bid for bid in id_set if indeg[bid] == 0)
    processed = 0
    while ready:
        bid = ready.popleft()
        processed += 1
        for nxt in outs[bid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    if processed != len(id_set):
        errors.append(("cycle-detected", "graph contains a directed cycle"))

    # Weak connectivity over the undirected view.
    neighbours: dict[str, set[str]] = {bid: set() for bid in id_set}
    for src, dst in edges:
        neighbours[src].add(dst)
        neighbours[dst].add(src)
    seen = {ids[0]}
    frontier = deque([ids[0]])
    while frontier:
        for nxt in neighbours[frontier.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if len(seen) != len(id_set):
        errors.append(("not-connected", f"{len(id_set) - len(seen)} basin(s) unreachable from {ids[0]!r}"))

    return ValidationReport(errors=tuple(errors))


def topological_order(g: RegionGraph) -> list[str]:
    """Basin ids with every basin after all of its sources; lexicographic
    tie-break makes the order unique and stable."""
    report = validate(g)
    if not report.ok:
        raise HydroNetsError("invalid-graph", f"cannot order an invalid graph: {report.codes}")
    indeg = {bid: len(g.upstream[bid]) for bid in g.basin_ids}
    heap = [bid for bid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        bid = heapq.heappop(heap)
        order.append(bid)
        for nxt in g.downstream[bid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(heap, nxt)
    return order


def sources_of(g: RegionGraph, basin_id: str) -> list[str]:
    """Ids flowing directly into ``basin_id``, ascending. This is the
    canonical combiner input order."""
    if basin_id not in g:
        raise HydroNetsError("unknown-basin", f"no basin {basin_id!r} in graph")
    return list(g.upstream[basin_id])


def drain_of(g: RegionGraph) -> str:
    """The unique basin with no outlet. Requires a valid graph."""
    drains = [bid for bid in g.basin_ids if not g.downstream[bid]]
    if len(drains) != 1:
        raise HydroNetsError("invalid-graph", f"expected exactly one drain, found {len(drains)}")
    return drains[0]


def height(g: RegionGraph) -> int:
    """Number of basins on the longest upstream path from the drain,
    counting the drain itself (single basin -> 1)."""
    drain = drain_of(g)
    best = 1
    frontier = deque([(drain, 1)])
    while frontier:
        bid, depth = frontier.popleft()
        best = max(best, depth)
        for src in g.upstream[bid]:
            frontier.append((src, depth + 1))
    return best


def prune_to_depth(g: RegionGraph, target: str, depth: int) -> RegionGraph:
    """Sub-tree draining into ``target``: basins whose directed path to
    ``target`` is shorter than ``depth`` steps. depth=1 keeps the target
    alone; the target becomes the drain of the result."""
    if target not in g:
        raise HydroNetsError("unknown-target", f"no basin {target!r} in graph")
    if depth < 1:
        raise HydroNetsError("invalid-depth", f"depth must be >= 1, got {depth}")
    keep = {target}
    frontier = deque([(target, 0)])
    while frontier:
        bid, dist = frontier.popleft()
        if dist + 1 >= depth:
            continue
        for src in g.upstream[bid]:
            if src not in keep:
                keep.add(src)
                frontier.append((src, dist + 1))
    basins = tuple(b for b in g.basins if b.id in keep)
    edges = tuple(e for e in g.edges if e[0] in keep and e[1] in keep)
    return RegionGraph(basins=basins, edges=edges)
