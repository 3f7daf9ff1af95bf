"""Non-learning signal controllers sharing one control interface.

Controllers are decentralized: each decision concerns a single
intersection and depends only on that intersection's phases and the
shared queue snapshot.  Three families are provided: fixed-time plans
(Webster or explicit), classic max-pressure phase activation, and a
greedy split heuristic proportional to multi-hop phase pressure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pressure import phase_pressures_at

SPLIT_TOL = 1e-9


@dataclass(frozen=True)
class ControlDecision:
    """Either next-cycle splits or the next control period's active phase."""

    intersection: str
    splits: tuple[float, ...] | None = None
    phase: int | None = None

    def __post_init__(self):
        if (self.splits is None) == (self.phase is None):
            raise ValueError("decision must set exactly one of splits/phase")
        if self.splits is not None:
            total = sum(self.splits)
            if abs(total - 1.0) > SPLIT_TOL:
                raise ValueError(f"splits sum to {total!r}, expected 1")
            if min(self.splits) < 0.0:
                raise ValueError("splits must be nonnegative")


@dataclass(frozen=True)
class FixedPlan:
    """A pre-timed cycle: effective greens plus lost time per phase change."""

    cycle_s: float
    green_s: tuple[float, ...]
    lost_time_s: float
    oversaturated: bool = False

    def __post_init__(self):
        total = sum(self.green_s) + self.lost_time_s * len(self.green_s)
        if abs(total - self.cycle_s) > 1e-6:
            raise ValueError(f"greens + lost times = {total}, cycle is {self.cycle_s}")


def floor_splits(weights, floor: float) -> np.ndarray:
    """Map nonnegative weights onto the simplex with a per-entry lower bound.

    Entries falling below ``floor`` are pinned to it and the remaining
    mass is redistributed proportionally; an all-zero weight vector
    yields equal splits.
    """
    w = np.maximum(np.asarray(weights, dtype=np.float64), 0.0)
    n = len(w)
    if n == 0:
        raise ValueError("no weights")
    if floor < 0 or floor * n > 1.0 + 1e-12:
        raise ValueError(f"floor {floor} infeasible for {n} phases")
    if w.sum() <= 0.0:
        w = np.ones(n)
    splits = np.empty(n)
    pinned = np.zeros(n, dtype=bool)
    while True:
        free = 1.0 - floor * pinned.sum()
        rest = ~pinned
        total = w[rest].sum()
        if total <= 0.0:
            splits[rest] = free / rest.sum()
        else:
            splits[rest] = free * w[rest] / total
        splits[pinned] = floor
        below = rest & (splits < floor - 1e-15)
        if not below.any():
            return splits
        pinned |= below
        if pinned.all():
            return np.full(n, 1.0 / n)


def webster_plan(
    critical_flows_vph,
    sat_flow_vph: float,
    lost_time_s: float,
    min_green_s: float = 0.0,
    cycle_bounds: tuple[float, float] = (30.0, 180.0),
) -> FixedPlan:
    """Optimal pre-timed cycle length and greens from historical flows.

    ``lost_time_s`` is the total lost time per cycle.  The flow-ratio sum
    is clamped at 0.95; a clamped plan is flagged ``oversaturated`` but
    still produced.  Greens are proportional to flow ratios with a
    minimum-green floor.
    """
    flows = np.asarray(critical_flows_vph, dtype=np.float64)
    if (flows < 0).any() or sat_flow_vph <= 0:
        raise ValueError("flows must be >= 0 and saturation flow > 0")
    n = len(flows)
    y = flows / sat_flow_vph
    Y = float(y.sum())
    oversaturated = Y >= 0.95
    if oversaturated:
        Y = 0.95
    cycle = (1.5 * lost_time_s + 5.0) / (1.0 - Y)
    cycle = float(np.clip(cycle, *cycle_bounds))
    usable = cycle - lost_time_s
    if usable <= 0:
        raise ValueError(f"lost time {lost_time_s} leaves no usable green in cycle {cycle}")
    shares = floor_splits(y, min_green_s / usable if min_green_s else 0.0)
    greens = tuple(float(g) for g in shares * usable)
    per_phase_lost = lost_time_s / n
    return FixedPlan(cycle_s=cycle, green_s=greens, lost_time_s=per_phase_lost,
                     oversaturated=oversaturated)


class Controller:
    """Base control interface used by the episode runner.

    ``decision_mode`` selects when :meth:`decide` is invoked: never
    (``"none"``, fixed plans installed up front), at each intersection's
    cycle boundary (``"cycle"``), or every ``period_s`` seconds
    (``"period"``).
    """

    decision_mode: str = "none"
    period_s: int = 10

    def begin_episode(self, sim) -> None:
        pass

    def decide(self, sim, t_s: int, due) -> dict[str, ControlDecision]:
        return {}

    def end_episode(self, sim) -> None:
        pass


class FixedTimeController(Controller):
    """Installs pre-timed plans once at episode start."""

    decision_mode = "none"

    def __init__(self, plans: dict[str, FixedPlan]):
        self.plans = dict(plans)

    def begin_episode(self, sim) -> None:
        for name, plan in self.plans.items():
            sim.install_plan(name, plan)


class FixedSplitController(Controller):
    """Re-issues the same cycle splits at every cycle boundary."""

    decision_mode = "cycle"

    def __init__(self, splits_by_intersection: dict[str, tuple[float, ...]]):
        self.splits = dict(splits_by_intersection)

    def decide(self, sim, t_s, due):
        return {
            name: ControlDecision(name, splits=tuple(self.splits[name]))
            for name in due
            if name in self.splits
        }


class MaxPressureController(Controller):
    """Classic max-pressure: activate the argmax-pressure phase each period.

    ``hop`` generalizes the pressure to multi-hop upstream scope; hop 0
    is the standard immediate-neighbour balance.  Ties break toward the
    lowest phase index, which keeps episodes deterministic.
    """

    decision_mode = "period"

    def __init__(self, hop: int = 0, period_s: int = 10):
        self.hop = hop
        self.period_s = period_s

    def decide(self, sim, t_s, due):
        snapshot = sim.measure_queues()
        decisions = {}
        for name in due:
            spec = sim.intersection(name)
            pressures = phase_pressures_at(sim.tm, snapshot, spec.phases, self.hop)
            decisions[name] = ControlDecision(name, phase=int(np.argmax(pressures)))
        return decisions


class GreedySplitController(Controller):
    """Sets next-cycle splits proportional to clipped multi-hop phase pressure."""

    decision_mode = "cycle"

    def __init__(self, hop: int = 0):
        self.hop = hop

    def decide(self, sim, t_s, due):
        snapshot = sim.measure_queues()
        decisions = {}
        for name in due:
            spec = sim.intersection(name)
            pressures = phase_pressures_at(sim.tm, snapshot, spec.phases, self.hop)
            splits = floor_splits(np.maximum(pressures, 0.0), spec.min_green_s / spec.cycle_s)
            decisions[name] = ControlDecision(name, splits=tuple(splits))
        return decisions
