"""Link-level road graphs, the absorbing supersink extension, and the
row-stochastic transition matrix over extended links.

A traffic network is modelled at the link level: every directed road
segment is a vertex, and an edge ``i -> j`` carries the turning ratio,
i.e. the probability that a vehicle leaving link ``i`` continues onto
link ``j``.  Appending a supersink that absorbs all exit links turns the
edge-weight matrix into a proper Markov transition matrix, which is the
single home of all matrix-power math used by the pressure metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DanglingMovement,
    DimensionMismatch,
    DuplicateLink,
    DuplicateMovement,
    NoExitLink,
    RatioSumViolation,
    UnknownLink,
)

RATIO_TOL = 1e-9

#: Reserved name of the supersink vertex appended by :func:`extend_with_supersink`.
OMEGA_NAME = "@sink"

#: Above this size the transition matrix keeps a sparse representation
#: for its power cache instead of dense ``n x n`` arrays.
DENSE_LIMIT = 512


@dataclass(frozen=True)
class Link:
    """A directed road segment; the vertex unit of the link graph.

    ``capacity_veh`` is the storage capacity (max vehicles the link can
    hold), ``sat_flow_vph`` the discharge rate under green, and
    ``ff_time_s`` the free-flow traversal time.
    """

    name: str
    length_m: float = 300.0
    capacity_veh: int = 40
    sat_flow_vph: float = 1800.0
    ff_time_s: float = 36.0
    is_entry: bool = False
    is_exit: bool = False

    def __post_init__(self):
        if self.length_m <= 0:
            raise ValueError(f"link {self.name}: length must be > 0")
        if self.capacity_veh < 1:
            raise ValueError(f"link {self.name}: storage capacity must be >= 1")
        if self.sat_flow_vph <= 0:
            raise ValueError(f"link {self.name}: saturation flow must be > 0")
        if self.ff_time_s <= 0:
            raise ValueError(f"link {self.name}: free-flow time must be > 0")


@dataclass(frozen=True)
class Movement:
    """A permissible turn ``from_link -> to_link`` with its turning ratio."""

    from_link: str
    to_link: str
    ratio: float

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(
                f"movement {self.from_link}->{self.to_link}: ratio {self.ratio} outside [0, 1]"
            )


class LinkGraph:
    """Validated link-level graph prior to the supersink extension.

    Construct via :func:`build_graph`.  Link order is preserved from the
    input and defines the canonical index order used by every vector and
    matrix in the system.
    """

    def __init__(self, links: tuple[Link, ...], movements: tuple[Movement, ...]):
        self.links = links
        self.movements = movements
        self.index = {l.name: i for i, l in enumerate(links)}
        n = len(links)
        self.out_edges: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        self.in_edges: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for m in movements:
            i, j = self.index[m.from_link], self.index[m.to_link]
            if m.ratio > 0.0:
                self.out_edges[i].append((j, m.ratio))
                self.in_edges[j].append((i, m.ratio))
        self.exit_indices = tuple(i for i, l in enumerate(links) if l.is_exit)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def name_of(self, idx: int) -> str:
        return self.links[idx].name


class ExtendedGraph:
    """Link graph plus the absorbing supersink at the last index.

    Immutable after construction and safe to share across concurrent
    episodes.  The supersink's only outgoing edge is its unit self-loop;
    every exit link gains a single unit-ratio edge into it.
    """

    def __init__(self, base: LinkGraph):
        self.base = base
        self.n_real = base.n_links
        self.omega = base.n_links
        self.names = tuple(l.name for l in base.links) + (OMEGA_NAME,)
        n = self.n_real + 1
        self.out_edges: list[list[tuple[int, float]]] = [list(e) for e in base.out_edges]
        self.out_edges.append([])
        self.in_edges: list[list[tuple[int, float]]] = [list(e) for e in base.in_edges]
        self.in_edges.append([])
        for i in base.exit_indices:
            self.out_edges[i].append((self.omega, 1.0))
            self.in_edges[self.omega].append((i, 1.0))
        self.out_edges[self.omega].append((self.omega, 1.0))
        self.in_edges[self.omega].append((self.omega, 1.0))
        self._n = n

    @property
    def n_vertices(self) -> int:
        return self._n

    @property
    def links(self) -> tuple[Link, ...]:
        return self.base.links

    def index_of(self, name: str) -> int:
        if name == OMEGA_NAME:
            return self.omega
        try:
            return self.base.index[name]
        except KeyError:
            raise UnknownLink(f"unknown link {name!r}") from None

    def _check_vertex(self, l: int) -> None:
        if not 0 <= l < self._n:
            raise UnknownLink(f"vertex index {l} outside 0..{self._n - 1}")

    def upstream_neighbors(self, l: int, h: int) -> set[int]:
        """Vertices with a directed walk of exactly ``h`` edges into ``l``.

        ``h = 0`` returns ``{l}`` (the link itself).
        """
        self._check_vertex(l)
        if h < 0:
            raise ValueError("hop count must be >= 0")
        frontier = {l}
        for _ in range(h):
            frontier = {i for j in frontier for i, _ in self.in_edges[j]}
            if not frontier:
                break
        return frontier

    def downstream_neighbors(self, l: int, h: int) -> set[int]:
        """Mirror of :meth:`upstream_neighbors` following edge direction."""
        self._check_vertex(l)
        if h < 0:
            raise ValueError("hop count must be >= 0")
        frontier = {l}
        for _ in range(h):
            frontier = {j for i in frontier for j, _ in self.out_edges[i]}
            if not frontier:
                break
        return frontier


def build_graph(links: Sequence[Link], movements: Sequence[Movement]) -> LinkGraph:
    """Validate links and movements and assemble a :class:`LinkGraph`.

    Exit links are inferred from topology (no outgoing movements); an
    ``is_exit`` declaration is accepted as confirmation but a declared
    exit with outgoing movements is rejected.  Turning ratios per source
    link must sum to 1 within ``1e-9`` and are renormalized exactly.
    """
    seen: set[str] = set()
    for l in links:
        if l.name in seen:
            raise DuplicateLink(f"duplicate link id {l.name!r}")
        seen.add(l.name)

    by_source: dict[str, list[Movement]] = {}
    pairs: set[tuple[str, str]] = set()
    for m in movements:
        if m.from_link not in seen:
            raise DanglingMovement(f"movement from unknown link {m.from_link!r}")
        if m.to_link not in seen:
            raise DanglingMovement(f"movement to unknown link {m.to_link!r}")
        if (m.from_link, m.to_link) in pairs:
            raise DuplicateMovement(f"duplicate movement {m.from_link}->{m.to_link}")
        pairs.add((m.from_link, m.to_link))
        by_source.setdefault(m.from_link, []).append(m)

    normalized: list[Movement] = []
    final_links: list[Link] = []
    for l in links:
        outgoing = by_source.get(l.name, [])
        if outgoing:
            if l.is_exit:
                raise DanglingMovement(
                    f"link {l.name!r} is declared exit but has outgoing movements"
                )
            total = sum(m.ratio for m in outgoing)
            if abs(total - 1.0) > RATIO_TOL:
                raise RatioSumViolation(
                    f"turning ratios out of link {l.name!r} sum to {total!r}, expected 1"
                )
            normalized.extend(replace(m, ratio=m.ratio / total) for m in outgoing)
            final_links.append(l if not l.is_exit else replace(l, is_exit=False))
        else:
            # No outgoing movements: the link terminates at the network
            # boundary and will be wired to the supersink.
            final_links.append(l if l.is_exit else replace(l, is_exit=True))

    return LinkGraph(tuple(final_links), tuple(normalized))


def extend_with_supersink(graph: LinkGraph) -> ExtendedGraph:
    """Append the supersink and its absorbing edges.

    Raises :class:`NoExitLink` when the network has no exit link or when
    some link cannot reach one (the chain would not be absorbing).
    """
    if not graph.exit_indices:
        raise NoExitLink("network has no exit link; supersink would be unreachable")
    reaches: set[int] = set(graph.exit_indices)
    frontier = list(reaches)
    while frontier:
        j = frontier.pop()
        for i, _ in graph.in_edges[j]:
            if i not in reaches:
                reaches.add(i)
                frontier.append(i)
    stranded = [graph.name_of(i) for i in range(graph.n_links) if i not in reaches]
    if stranded:
        raise NoExitLink(f"links {stranded} cannot reach any exit; chain not absorbing")
    return ExtendedGraph(graph)


class TransitionMatrix:
    """Dense row-stochastic matrix over extended links, with cached powers.

    Row ``i`` holds the outgoing turning ratios of link ``i``; the last
    row is the unit vector on the supersink column.  Powers are built
    incrementally and cached, since the matrix is constant per scenario
    while queue vectors change every step.  Above :data:`DENSE_LIMIT`
    vertices the power cache switches to a sparse representation.
    """

    def __init__(self, graph: ExtendedGraph):
        self.graph = graph
        n = graph.n_vertices
        mat = np.zeros((n, n), dtype=np.float64)
        for i in range(n):
            for j, r in graph.out_edges[i]:
                mat[i, j] += r
        rowsum = mat.sum(axis=1)
        if not np.allclose(rowsum, 1.0, atol=RATIO_TOL, rtol=0.0):
            bad = int(np.argmax(np.abs(rowsum - 1.0)))
            raise RatioSumViolation(
                f"row {graph.names[bad]!r} of transition matrix sums to {rowsum[bad]!r}"
            )
        mat.flags.writeable = False
        self.matrix = mat
        self.n = n
        self._sparse = n > DENSE_LIMIT
        if self._sparse:
            from scipy.sparse import csr_matrix, identity

            self._sp = csr_matrix(mat)
            self._powers_sp = [identity(n, format="csr"), self._sp]
        else:
            self._powers = [np.eye(n), mat]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "TransitionMatrix":
        """Wrap a raw row-stochastic absorbing matrix (no graph attached)."""
        mat = np.array(matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch("transition matrix must be square")
        rowsum = mat.sum(axis=1)
        if not np.allclose(rowsum, 1.0, atol=RATIO_TOL, rtol=0.0):
            raise RatioSumViolation("matrix rows must sum to 1")
        self = cls.__new__(cls)
        self.graph = None
        mat.flags.writeable = False
        self.matrix = mat
        self.n = mat.shape[0]
        self._sparse = self.n > DENSE_LIMIT
        if self._sparse:
            from scipy.sparse import csr_matrix, identity

            self._sp = csr_matrix(mat)
            self._powers_sp = [identity(self.n, format="csr"), self._sp]
        else:
            self._powers = [np.eye(self.n), mat]
        return self

    def power(self, h: int) -> np.ndarray:
        """Return ``P**h`` (dense ndarray), extending the cache as needed."""
        if h < 0:
            raise ValueError("matrix power must be >= 0")
        if self._sparse:
            while len(self._powers_sp) <= h:
                self._powers_sp.append(self._powers_sp[-1] @ self._sp)
            return self._powers_sp[h].toarray()
        while len(self._powers) <= h:
            nxt = self._powers[-1] @ self.matrix
            nxt.flags.writeable = False
            self._powers.append(nxt)
        return self._powers[h]

    def importance(self, j: int, l: int, h: int) -> float:
        """Probability that a vehicle released on ``j`` sits on ``l`` after ``h`` hops."""
        if not 0 <= j < self.n or not 0 <= l < self.n:
            raise UnknownLink(f"link index outside 0..{self.n - 1}")
        return float(self.power(h)[j, l])


def transition_matrix(graph: ExtendedGraph) -> TransitionMatrix:
    """Build the Markov transition matrix of an extended graph."""
    return TransitionMatrix(graph)


@dataclass(frozen=True)
class QueueSnapshot:
    """Per-link queue vector aligned to the extended graph's index order.

    Values are vehicle counts by default, or vehicles per km when built
    with density normalization.  The supersink entry is identically 0.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionMismatch("queue snapshot must be a 1-d vector")
        if (v < 0).any():
            raise ValueError("queue values must be >= 0")
        if v[-1] != 0.0:
            raise ValueError("supersink queue must be 0")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_counts(
        cls,
        graph: ExtendedGraph,
        counts: Mapping[str, float] | Iterable[float],
        density: bool = False,
    ) -> "QueueSnapshot":
        """Build a snapshot from a name->count mapping or an ordered iterable.

        An iterable may cover the real links only (the supersink entry is
        appended) or all extended vertices.  With ``density=True`` counts
        are divided by link length in km, yielding veh/km.
        """
        n = graph.n_vertices
        if isinstance(counts, Mapping):
            vec = np.zeros(n)
            for name, value in counts.items():
                idx = graph.index_of(name)
                if idx == graph.omega:
                    raise UnknownLink("cannot assign a queue to the supersink")
                vec[idx] = value
        else:
            arr = np.asarray(list(counts), dtype=np.float64)
            if len(arr) == n - 1:
                vec = np.concatenate([arr, [0.0]])
            elif len(arr) == n:
                vec = arr.copy()
            else:
                raise DimensionMismatch(
                    f"expected {n - 1} or {n} queue values, got {len(arr)}"
                )
        if density:
            lengths_km = np.array([l.length_m / 1000.0 for l in graph.links] + [1.0])
            vec = vec / lengths_km
        return cls(vec)
