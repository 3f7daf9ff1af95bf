"""Deterministic discrete-time store-and-forward traffic simulator.

Links hold integer vehicle counts; signals gate stop-line transfers at
saturation-flow rates with per-link fractional accumulators so the
long-run discharge matches saturation flow exactly.  Vehicles are
individually tracked (creation, entry, exit, queued seconds) through
FIFO queues, free-flow transit delays, turning-ratio routing, spillback
blocking, and unbounded origin virtual queues.  A fixed seed yields a
bit-identical episode.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .controllers import ControlDecision, Controller, FixedPlan
from .errors import CapacityViolation, InvalidScenario
from .network import QueueSnapshot
from .scenario import Scenario

LOST = -1  # active-phase code for clearance intervals


@dataclass(frozen=True)
class MetricsLog:
    """Episode outcome: the three time metrics plus step-level traces."""

    scenario: str
    seed: int
    horizon_s: int
    dt_s: int
    tts_h: float
    queue_time_h: float
    virtual_queue_time_h: float
    vehicles_created: int
    vehicles_exited: int
    link_names: tuple[str, ...]
    origin_names: tuple[str, ...]
    intersection_names: tuple[str, ...]
    queue_history: np.ndarray  # (steps, links) stop-line queues
    virtual_history: np.ndarray  # (steps, origins)
    active_history: np.ndarray  # (steps, intersections), phase index or -1

    def summary_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "tts_h": self.tts_h,
            "queue_time_h": self.queue_time_h,
            "virtual_queue_time_h": self.virtual_queue_time_h,
            "vehicles_created": self.vehicles_created,
            "vehicles_exited": self.vehicles_exited,
        }


def _largest_remainder(fractions: np.ndarray, total: int) -> np.ndarray:
    """Integer allocations summing to ``total``, proportional to fractions."""
    raw = fractions * total
    base = np.floor(raw).astype(int)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


class Simulation:
    """One episode's mutable state; owned by exactly one runner."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = seed
        self.tm = scenario.tm
        eg = scenario.egraph
        self.n = eg.n_real
        self.dt = scenario.dt_s
        self.steps = scenario.horizon_s // scenario.dt_s
        self.t = 0

        links = scenario.graph.links
        self.cap = [l.capacity_veh for l in links]
        self.sat_step = [l.sat_flow_vph * self.dt / 3600.0 for l in links]
        self.ff_steps = [max(1, round(l.ff_time_s / self.dt)) for l in links]

        # Routing: destination list per link; the supersink becomes -1.
        self.dests: list[list[int]] = []
        self.dest_cum: list[np.ndarray] = []
        for i in range(self.n):
            pairs = [(j if j < self.n else -1, r) for j, r in eg.out_edges[i]]
            self.dests.append([j for j, _ in pairs])
            self.dest_cum.append(np.cumsum([r for _, r in pairs]))

        # Signal layout.
        self.x_names = tuple(spec.name for spec in scenario.intersections)
        self.x_specs = {spec.name: spec for spec in scenario.intersections}
        self.phase_links: list[list[tuple[int, ...]]] = [
            [ph.incoming for ph in spec.phases] for spec in scenario.intersections
        ]
        controlled = {l for spec in scenario.intersections for ph in spec.phases for l in ph.incoming}
        self.green = [i not in controlled for i in range(self.n)]  # free links stay green
        self.cur_phase = [LOST] * len(self.x_names)
        self.schedule: list[list[int]] = []
        self.anchor = [0] * len(self.x_names)
        for xi, spec in enumerate(scenario.intersections):
            self.schedule.append(self._build_schedule(xi, np.full(len(spec.phases), 1.0 / len(spec.phases))))

        # Demand: pre-draw Poisson arrival counts for the whole horizon.
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self.origins = [scenario.graph.index[d.origin] for d in scenario.demands]
        rates = np.zeros((self.steps, len(self.origins)))
        for k, dprof in enumerate(scenario.demands):
            for start, end, rate_vph in dprof.pieces:
                a, b = int(start // self.dt), min(int(end // self.dt), self.steps)
                rates[a:b, k] = rate_vph * self.dt / 3600.0
        self.arrival_counts = self.rng.poisson(rates).astype(np.int32)

        # Vehicle ledger, grown as vehicles are created.
        self.created_step: list[int] = []
        self.entered_step: list[int] = []
        self.exited_step: list[int] = []
        self.queued_steps: list[int] = []
        self.q_join: list[int] = []
        self.veh_dest: list[int] = []

        self.queues: list[deque[int]] = [deque() for _ in range(self.n)]
        self.transit: list[deque[tuple[int, int]]] = [deque() for _ in range(self.n)]
        self.virtual: list[deque[int]] = [deque() for _ in self.origins]
        self.onlink = [0] * self.n
        self.acc = [0.0] * self.n

        self.created_n = 0
        self.exited_n = 0
        self.in_network = 0
        self.in_virtual = 0
        self.qcount = 0
        self.tts_steps = 0
        self.queue_time_steps = 0
        self.virtual_time_steps = 0

        self.queue_history = np.zeros((self.steps, self.n), dtype=np.int32)
        self.virtual_history = np.zeros((self.steps, len(self.origins)), dtype=np.int32)
        self.active_history = np.full((self.steps, len(self.x_names)), LOST, dtype=np.int8)

        # Phase-activation mode state (max-pressure style control).
        self.activation = [None] * len(self.x_names)  # (target_phase, green_from)

    # -- signal plumbing ---------------------------------------------------

    def _build_schedule(self, xi: int, splits: np.ndarray) -> list[int]:
        """Second-by-second phase table for one cycle from split fractions."""
        spec = self.scenario.intersections[xi]
        cycle = spec.cycle_s // self.dt
        lost = spec.lost_time_s // self.dt
        floor = spec.min_green_s / spec.cycle_s
        if np.min(splits) < floor - 1e-9:
            raise InvalidScenario(
                f"{spec.name}: split {np.min(splits):.4f} below min-green floor {floor:.4f}"
            )
        alloc = _largest_remainder(np.asarray(splits, dtype=np.float64), cycle)
        table: list[int] = []
        for p, a in enumerate(alloc):
            g = max(int(a) - lost, 0)
            table.extend([p] * g)
            table.extend([LOST] * (int(a) - g))
        return table

    def install_plan(self, name: str, plan: FixedPlan) -> None:
        """Install a pre-timed plan (its own cycle length) for one intersection."""
        xi = self.x_names.index(name)
        spec = self.scenario.intersections[xi]
        greens = _largest_remainder(
            np.asarray(plan.green_s) / sum(plan.green_s),
            int(round(sum(plan.green_s) / self.dt)),
        )
        lost = int(round(plan.lost_time_s / self.dt))
        table: list[int] = []
        for p, g in enumerate(greens):
            table.extend([p] * int(g))
            table.extend([LOST] * lost)
        self.schedule[xi] = table
        self.anchor[xi] = self.t
        self.activation[xi] = None

    def apply_decisions(self, decisions: dict[str, ControlDecision], t_s: int) -> None:
        for name, dec in decisions.items():
            xi = self.x_names.index(name)
            if dec.splits is not None:
                self.schedule[xi] = self._build_schedule(xi, np.asarray(dec.splits))
                self.anchor[xi] = self.t
                self.activation[xi] = None
            else:
                spec = self.scenario.intersections[xi]
                if not 0 <= dec.phase < len(spec.phases):
                    raise InvalidScenario(f"{name}: phase {dec.phase} out of range")
                prev = self.activation[xi]
                if prev is None or prev[0] != dec.phase:
                    lost = 0 if prev is None and self.t == 0 else spec.lost_time_s // self.dt
                    self.activation[xi] = (dec.phase, self.t + lost)

    def _active_phase(self, xi: int) -> int:
        act = self.activation[xi]
        if act is not None:
            target, green_from = act
            return target if self.t >= green_from else LOST
        table = self.schedule[xi]
        return table[(self.t - self.anchor[xi]) % len(table)]

    # -- state access ------------------------------------------------------

    def intersection(self, name: str):
        return self.x_specs[name]

    def measure_queues(self) -> QueueSnapshot:
        """Stop-line queues per link (origin virtual queues included by default)."""
        vals = np.zeros(self.n + 1)
        for i in range(self.n):
            vals[i] = len(self.queues[i])
        if self.scenario.virtual_in_queues:
            for k, oi in enumerate(self.origins):
                vals[oi] += len(self.virtual[k])
        return QueueSnapshot(vals)

    # -- dynamics ----------------------------------------------------------

    def _new_vehicle(self, t: int) -> int:
        vid = self.created_n
        self.created_step.append(t)
        self.entered_step.append(-1)
        self.exited_step.append(-1)
        self.queued_steps.append(0)
        self.q_join.append(-1)
        self.veh_dest.append(-2)
        self.created_n += 1
        return vid

    def _draw_dest(self, j: int) -> int:
        dl = self.dests[j]
        if len(dl) == 1:
            return dl[0]
        r = self.rng.random()
        return dl[int(np.searchsorted(self.dest_cum[j], r, side="right"))]

    def step(self) -> None:
        """Advance one time step; conservation holds exactly afterwards."""
        t = self.t
        if t >= self.steps:
            raise InvalidScenario("stepping past the horizon")
        queues = self.queues
        onlink = self.onlink
        cap = self.cap

        # (a) vehicles finishing free-flow travel join their stop-line queue
        for i in range(self.n):
            tr = self.transit[i]
            while tr and tr[0][0] <= t:
                _, vid = tr.popleft()
                queues[i].append(vid)
                self.q_join[vid] = t
                self.qcount += 1

        # (b) demand arrivals enter origin virtual queues
        row = self.arrival_counts[t]
        for k in range(len(self.origins)):
            for _ in range(int(row[k])):
                vid = self._new_vehicle(t)
                self.virtual[k].append(vid)
                self.in_virtual += 1

        # (c) signal phase update
        for xi in range(len(self.x_names)):
            ph = self._active_phase(xi)
            if ph != self.cur_phase[xi]:
                old = self.cur_phase[xi]
                if old != LOST:
                    for l in self.phase_links[xi][old]:
                        self.green[l] = False
                if ph != LOST:
                    for l in self.phase_links[xi][ph]:
                        self.green[l] = True
                self.cur_phase[xi] = ph
            self.active_history[t, xi] = self.cur_phase[xi]

        # (d) saturation-limited discharge at green stop lines
        for i in range(self.n):
            if not self.green[i]:
                continue
            a = self.acc[i] + self.sat_step[i]
            grant = int(a)
            self.acc[i] = a - grant
            q = queues[i]
            if grant == 0 or not q:
                continue
            dl = self.dests[i]
            if len(dl) == 1 and dl[0] >= 0 and onlink[dl[0]] >= cap[dl[0]]:
                continue  # spillback: single destination full, whole approach blocked
            moved = 0
            blocked: list[int] | None = None
            while moved < grant and q:
                vid = q.popleft()
                d = self.veh_dest[vid]
                if d >= 0 and onlink[d] >= cap[d]:
                    if blocked is None:
                        blocked = []
                    blocked.append(vid)
                    continue
                self.queued_steps[vid] += t - self.q_join[vid]
                self.qcount -= 1
                onlink[i] -= 1
                if d < 0:
                    self.exited_step[vid] = t
                    self.exited_n += 1
                    self.in_network -= 1
                else:
                    onlink[d] += 1
                    self.veh_dest[vid] = self._draw_dest(d)
                    self.transit[d].append((t + self.ff_steps[d], vid))
                moved += 1
            if blocked:
                q.extendleft(reversed(blocked))

        # (e) virtual-queue vehicles enter their origin link while it has room
        for k, oi in enumerate(self.origins):
            v = self.virtual[k]
            while v and onlink[oi] < cap[oi]:
                vid = v.popleft()
                self.in_virtual -= 1
                self.in_network += 1
                self.entered_step[vid] = t
                self.queued_steps[vid] += t - self.created_step[vid]
                self.veh_dest[vid] = self._draw_dest(oi)
                self.transit[oi].append((t + self.ff_steps[oi], vid))
                onlink[oi] += 1

        # (f) metric accrual and exact conservation
        self.tts_steps += self.created_n - self.exited_n
        self.queue_time_steps += self.qcount + self.in_virtual
        self.virtual_time_steps += self.in_virtual
        for i in range(self.n):
            self.queue_history[t, i] = len(queues[i])
        for k in range(len(self.origins)):
            self.virtual_history[t, k] = len(self.virtual[k])
        if self.created_n != self.in_virtual + self.in_network + self.exited_n:
            raise CapacityViolation(
                f"conservation broken at t={t}: created {self.created_n} != "
                f"{self.in_virtual} virtual + {self.in_network} in-network + {self.exited_n} exited"
            )
        for i in range(self.n):
            if onlink[i] > cap[i]:
                raise CapacityViolation(f"link {i} holds {onlink[i]} > capacity {cap[i]}")
        self.t += 1

    def finish(self) -> MetricsLog:
        """Flush per-vehicle accounting and assemble the metrics log."""
        T = self.steps
        for i in range(self.n):
            for vid in self.queues[i]:
                self.queued_steps[vid] += T - self.q_join[vid]
        for v in self.virtual:
            for vid in v:
                self.queued_steps[vid] += T - self.created_step[vid]

        created = np.asarray(self.created_step)
        exited = np.asarray(self.exited_step, dtype=np.int64)
        exit_or_end = np.where(exited >= 0, exited, T)
        tts_vehicle_steps = int((exit_or_end - created).sum()) if len(created) else 0
        if tts_vehicle_steps != self.tts_steps:
            raise CapacityViolation(
                f"time accounting mismatch: per-vehicle {tts_vehicle_steps}, accrued {self.tts_steps}"
            )
        to_h = self.dt / 3600.0
        return MetricsLog(
            scenario=self.scenario.name,
            seed=self.seed,
            horizon_s=self.scenario.horizon_s,
            dt_s=self.dt,
            tts_h=self.tts_steps * to_h,
            queue_time_h=self.queue_time_steps * to_h,
            virtual_queue_time_h=self.virtual_time_steps * to_h,
            vehicles_created=self.created_n,
            vehicles_exited=self.exited_n,
            link_names=tuple(l.name for l in self.scenario.graph.links),
            origin_names=tuple(d.origin for d in self.scenario.demands),
            intersection_names=self.x_names,
            queue_history=self.queue_history,
            virtual_history=self.virtual_history,
            active_history=self.active_history,
        )


def init(scenario: Scenario, seed: int) -> Simulation:
    """Fresh, seeded episode state over a validated scenario."""
    return Simulation(scenario, seed)


def step(sim: Simulation, decisions: dict[str, ControlDecision] | None = None) -> Simulation:
    """Apply optional control decisions, then advance one step."""
    if decisions:
        sim.apply_decisions(decisions, sim.t * sim.dt)
    sim.step()
    return sim


def measure_queues(sim: Simulation) -> QueueSnapshot:
    return sim.measure_queues()


def decision_due(sim: Simulation, controller: Controller, t_s: int) -> list[str]:
    """Intersections whose decision boundary falls on ``t_s`` for this controller."""
    if controller.decision_mode == "cycle":
        return [spec.name for spec in sim.scenario.intersections if t_s % spec.cycle_s == 0]
    if controller.decision_mode == "period":
        if t_s % controller.period_s == 0:
            return list(sim.x_names)
        return []
    return []


def run_episode(scenario: Scenario, controller: Controller, seed: int) -> MetricsLog:
    """Run one full episode under a controller and return its metrics."""
    sim = Simulation(scenario, seed)
    controller.begin_episode(sim)
    for k in range(sim.steps):
        t_s = k * sim.dt
        due = decision_due(sim, controller, t_s)
        if due:
            decisions = controller.decide(sim, t_s, due)
            if decisions:
                sim.apply_decisions(decisions, t_s)
        sim.step()
    controller.end_episode(sim)
    return sim.finish()
