"""Observation, reward, and action construction for the split agents."""

from __future__ import annotations

import numpy as np

from ..controllers import ControlDecision, floor_splits
from ..network import QueueSnapshot, TransitionMatrix
from ..pressure import Phase, phase_pressure, potential_sum, pressure_vector
from ..scenario import IntersectionSpec


def make_observation(
    tm: TransitionMatrix,
    queues: QueueSnapshot,
    phases: tuple[Phase, ...],
    hop: int,
    stacked: bool = False,
) -> np.ndarray:
    """Per-phase pressures at the configured hop, in fixed phase order.

    With ``stacked=True`` all hop levels 0..hop are concatenated per
    phase instead of the single hop-``hop`` scalar.
    """
    pv = pressure_vector(tm, queues, hop)
    if not stacked:
        return np.array([phase_pressure(pv, ph) for ph in phases])
    cols = []
    for ph in phases:
        idx = list(ph.incoming)
        cols.extend(float(level[idx].sum()) for level in pv.by_hop)
    return np.array(cols)


def compute_reward(
    tm: TransitionMatrix,
    queues: QueueSnapshot,
    links: tuple[int, ...],
    hop: int,
    mode: str = "potential",
    h_start: int = 0,
) -> float:
    """Cycle reward for one intersection's incoming links.

    ``potential`` negates the cumulative multi-hop upstream potential;
    ``pressure`` is the myopic ablation that negates the magnitude of the
    summed link pressures instead.
    """
    if mode == "potential":
        return -potential_sum(tm, queues, links, hop, h_start=h_start)
    if mode == "pressure":
        pv = pressure_vector(tm, queues, hop)
        return -abs(float(pv.values[list(links)].sum()))
    raise ValueError(f"unknown reward mode {mode!r}")


def action_to_splits(raw: np.ndarray, spec: IntersectionSpec) -> ControlDecision:
    """Map an unconstrained action vector to feasible cycle splits.

    Softmax onto the simplex, then min-green floors are pinned and the
    free mass renormalized; deterministic in ``raw``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValueError("action vector must be finite")
    z = raw - raw.max()
    weights = np.exp(z)
    splits = floor_splits(weights, spec.min_green_s / spec.cycle_s)
    return ControlDecision(spec.name, splits=tuple(float(s) for s in splits))
