"""Multi-hop upstream potentials and pressures over the link transition matrix.

The h-hop upstream potential of a link weighs queues h hops upstream by
the probability that their vehicles arrive on the link after h
transitions.  Pressure accumulates those potentials from hop 0 up to h
and subtracts the immediate downstream potential, generalizing the
classic upstream-minus-downstream queue imbalance to a farsighted,
distance-discounted congestion signal.

All functions are pure over immutable inputs; matrix powers are cached
on the :class:`~mhp.network.TransitionMatrix` and shared read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, UnknownLink
from .network import QueueSnapshot, TransitionMatrix


@dataclass(frozen=True)
class Phase:
    """A set of incoming links receiving green simultaneously."""

    intersection: str
    label: str
    incoming: tuple[int, ...]
    min_green_s: float = 10.0

    def __post_init__(self):
        if not self.incoming:
            raise ValueError(f"phase {self.label!r} has no incoming links")


@dataclass(frozen=True)
class PotentialVector:
    """``(P**h)^T Q``: queue mass arriving per link after exactly h hops."""

    hop: int
    values: np.ndarray


@dataclass(frozen=True)
class PressureVector:
    """Pressure of every link at hop ``hop``; ``by_hop[k]`` holds hop ``k``."""

    hop: int
    values: np.ndarray
    by_hop: tuple[np.ndarray, ...] = field(repr=False, default=())

    def link(self, l: int) -> float:
        if not 0 <= l < len(self.values):
            raise UnknownLink(f"link index {l} outside snapshot")
        return float(self.values[l])


def _queue_array(P: TransitionMatrix, Q: QueueSnapshot | np.ndarray) -> np.ndarray:
    q = Q.values if isinstance(Q, QueueSnapshot) else np.asarray(Q, dtype=np.float64)
    if q.shape != (P.n,):
        raise DimensionMismatch(f"queue vector has shape {q.shape}, matrix is {P.n}x{P.n}")
    return q


def upstream_potential(P: TransitionMatrix, Q: QueueSnapshot, h: int) -> PotentialVector:
    """Hop-``h`` upstream potential for all links at once.

    Hop 0 is the queue vector itself (identity matrix power).
    """
    q = _queue_array(P, Q)
    if h < 0:
        raise ValueError("hop must be >= 0")
    return PotentialVector(hop=h, values=P.power(h).T @ q)


def link_importance(P: TransitionMatrix, j: int, l: int, h: int) -> float:
    """Importance of the h-hop upstream link ``j`` to link ``l``: ``(P**h)[j, l]``."""
    return P.importance(j, l, h)


def pressure_vector(P: TransitionMatrix, Q: QueueSnapshot, h: int) -> PressureVector:
    """Multi-hop pressure for all links, evaluated recursively.

    Hop 0 is the queue minus the ratio-weighted immediate downstream
    queues; every further hop adds that hop's upstream potential.  All
    intermediate hop vectors are retained for diagnostics.
    """
    q = _queue_array(P, Q)
    if h < 0:
        raise ValueError("hop must be >= 0")
    levels = [q - P.matrix @ q]
    for k in range(1, h + 1):
        levels.append(levels[-1] + P.power(k).T @ q)
    return PressureVector(hop=h, values=levels[-1], by_hop=tuple(levels))


def pressure_vector_unrolled(P: TransitionMatrix, Q: QueueSnapshot, h: int) -> PressureVector:
    """Multi-hop pressure via the closed form: sum of hop-0..h potentials minus PQ.

    Exists to cross-check the recursive evaluation; both agree to
    floating-point tolerance.
    """
    q = _queue_array(P, Q)
    if h < 0:
        raise ValueError("hop must be >= 0")
    total = np.zeros_like(q)
    for k in range(h + 1):
        total += P.power(k).T @ q
    return PressureVector(hop=h, values=total - P.matrix @ q)


def link_pressure(P: TransitionMatrix, Q: QueueSnapshot, l: int, h: int) -> float:
    """Pressure of a single link, by column extraction (controller hot path)."""
    q = _queue_array(P, Q)
    if not 0 <= l < P.n:
        raise UnknownLink(f"link index {l} outside 0..{P.n - 1}")
    if h < 0:
        raise ValueError("hop must be >= 0")
    total = q[l]  # hop-0 potential: (P**0)[:, l] . q
    for k in range(1, h + 1):
        total += float(P.power(k)[:, l] @ q)
    return float(total - P.matrix[l] @ q)


def phase_pressure(pressures: PressureVector, phase: Phase) -> float:
    """Sum of link pressure over the phase's incoming links."""
    n = len(pressures.values)
    for l in phase.incoming:
        if not 0 <= l < n:
            raise UnknownLink(f"phase {phase.label!r} references link {l} outside snapshot")
    return float(pressures.values[list(phase.incoming)].sum())


def potential_sum(
    P: TransitionMatrix,
    Q: QueueSnapshot,
    links: Iterable[int],
    H: int,
    h_start: int = 0,
) -> float:
    """Cumulative upstream potential of ``links`` over hops ``h_start..H``.

    This is the (positive) quantity whose negation serves as the learning
    reward; ``h_start`` defaults to 0 so a link's own queue is included.
    """
    q = _queue_array(P, Q)
    if H < 0 or h_start < 0:
        raise ValueError("hop bounds must be >= 0")
    idx = list(links)
    for l in idx:
        if not 0 <= l < P.n:
            raise UnknownLink(f"link index {l} outside 0..{P.n - 1}")
    total = 0.0
    for k in range(h_start, H + 1):
        total += float(q @ P.power(k)[:, idx].sum(axis=1))
    return total


def phase_pressures_at(
    P: TransitionMatrix, Q: QueueSnapshot, phases: Sequence[Phase], h: int
) -> np.ndarray:
    """Per-phase pressures at hop ``h``, in phase order."""
    pv = pressure_vector(P, Q, h)
    return np.array([phase_pressure(pv, ph) for ph in phases])
