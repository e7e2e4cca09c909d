"""Asynchronous guide/think/act episode executor.

A slow loop (reasoner) and a fast loop (action head + simulator) exchange a
cached reasoning memory.  In simulated-clock mode the two loops interleave
deterministically on one thread with the slow loop firing every
``slow_period`` fast ticks; in wall-clock mode the same single-writer /
single-reader contract runs on two threads.  Guidance arrives on a
many-producer queue drained only at slow ticks.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import flow, reasoner, sim
from .codec import serialize_cot
from .guide import GuidanceEvent, ImagePoint, PointPrior, SpatialPrior, TracePrior

SIMULATED = "simulated"
WALL = "wall"


class RuntimeError_(RuntimeError):
    pass


class StaleEpisodeError(RuntimeError_):
    """Guidance arrived after the episode terminated."""


@dataclass(frozen=True)
class RuntimeConfig:
    slow_period: int = 5
    chunk_length: int = flow.CHUNK_LEN
    max_fast_ticks: int = 400
    clock_mode: str = SIMULATED
    chunk_stride: Optional[int] = None  # None = execute the full chunk
    euler_steps: int = flow.EULER_STEPS

    def __post_init__(self):
        if self.slow_period < 1:
            raise ValueError("slow_period must be >= 1")
        if self.max_fast_ticks < 1:
            raise ValueError("max_fast_ticks must be >= 1")
        if self.chunk_stride is not None and not (1 <= self.chunk_stride <= self.chunk_length):
            raise ValueError("chunk_stride must be in [1, chunk_length]")

    @property
    def stride(self) -> int:
        return self.chunk_stride or self.chunk_length


@dataclass(frozen=True)
class CachedMemory:
    current: reasoner.ReasoningMemory
    updated_at_fast_tick: int


@dataclass(frozen=True)
class FastRecord:
    tick: int
    memory_tick: int
    staleness: int
    action: Tuple[float, float, float]
    gripper: Tuple[float, float, float]


@dataclass(frozen=True)
class SlowRecord:
    fast_tick: int
    slow_index: int
    cot_text: str
    guidance_applied: Tuple[GuidanceEvent, ...]
    picked_label: str
    picked_box: Tuple[float, float, float, float]
    grounding_rule: str


@dataclass(frozen=True)
class EpisodeTrace:
    fast: Tuple[FastRecord, ...]
    slow: Tuple[SlowRecord, ...]
    guidance_events: Tuple[GuidanceEvent, ...]
    success: bool
    final_tick: int
    seed: int
    scenario: str
    instruction: str

    def to_jsonl(self) -> str:
        lines = [json.dumps({
            "record": "meta", "seed": self.seed, "scenario": self.scenario,
            "instruction": self.instruction, "success": self.success,
            "final_tick": self.final_tick,
        })]
        for s in self.slow:
            lines.append(json.dumps({
                "record": "slow", "fast_tick": s.fast_tick, "slow_index": s.slow_index,
                "cot": s.cot_text, "picked_label": s.picked_label,
                "picked_box": list(s.picked_box), "grounding_rule": s.grounding_rule,
                "guidance": [g.to_json() for g in s.guidance_applied],
            }))
        for f in self.fast:
            lines.append(json.dumps({
                "record": "fast", "tick": f.tick, "memory_tick": f.memory_tick,
                "staleness": f.staleness, "action": list(f.action),
                "gripper": list(f.gripper),
            }))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Policy:
    model: flow.FlowModel
    ablation: frozenset = frozenset()


GuidanceSource = Mapping[int, Sequence[GuidanceEvent]]


def effective_tick(injected_at: int, slow_period: int) -> int:
    """First slow-tick index strictly after ``injected_at``."""
    return slow_period * math.ceil((injected_at + 1) / slow_period)


class EpisodeEngine:
    """Steps one episode; drives the slow/fast schedule and the guidance queue."""

    def __init__(
        self,
        scenario: str,
        perturbation: sim.PerturbationConfig,
        policy: Policy,
        config: RuntimeConfig,
        seed: int,
        guidance_source: Optional[GuidanceSource] = None,
    ):
        self.scenario = scenario
        self.perturbation = perturbation
        self.policy = policy
        self.config = config
        self.seed = seed
        self.guidance_source = dict(guidance_source or {})

        self.state, self.task = sim.reset(seed, scenario, perturbation)
        self._step_rng = np.random.default_rng([seed, 0xE4be27])
        self._sample_rng = np.random.default_rng([seed, 0x5A3F])
        self._lock = threading.Lock()
        self._queue: List[GuidanceEvent] = []
        self.active_priors: Dict[str, SpatialPrior] = {}
        self.cached: Optional[CachedMemory] = None
        self.tick = 0
        self.slow_index = 0
        self.done = False
        self.success = False
        self._chunk: Optional[np.ndarray] = None
        self._chunk_pos = 0
        self._last_current: Optional[str] = None
        self._tracked_pick: Optional[ImagePoint] = None

        self.fast_records: List[FastRecord] = []
        self.slow_records: List[SlowRecord] = []
        self.applied_events: List[GuidanceEvent] = []

        for ev in self.guidance_source.get(-1, ()):  # up-front guidance
            self._queue.append(ev)

    # -- guidance ----------------------------------------------------------

    def inject_guidance(self, event: GuidanceEvent) -> int:
        """Enqueue a guidance event; returns the fast tick at which it takes effect."""
        with self._lock:
            if self.done:
                raise StaleEpisodeError("episode already terminated")
            self._queue.append(event)
            return effective_tick(self.tick, self.config.slow_period)

    def _drain_queue(self) -> Tuple[GuidanceEvent, ...]:
        with self._lock:
            events, self._queue = self._queue, []
        applied: Dict[str, GuidanceEvent] = {}
        for ev in events:  # latest-wins per prior kind
            applied[ev.prior.kind] = ev
        for kind, ev in applied.items():
            self.active_priors[kind] = ev.prior
            self.applied_events.append(ev)
        return tuple(applied.values())

    # -- loop bodies --------------------------------------------------------

    def _slow_tick(self) -> None:
        applied = self._drain_queue()
        obs = sim.observe(self.state, self.perturbation, self.seed, self.task)
        # The slow loop commits to its grounded pick: after a grounding prior
        # (or the instruction) has selected an object once, subsequent ticks
        # follow that object's observed position instead of re-grounding from
        # the by-now stale click.  Fresh guidance resets the commitment.
        if any(ev.prior.kind in ("point", "box") for ev in applied):
            self._tracked_pick = None
        priors = dict(self.active_priors)
        if self._tracked_pick is not None:
            priors["point"] = PointPrior(self._tracked_pick)
            priors.pop("box", None)
        result = reasoner.plan(
            obs, self.task.instruction, priors or None, self.task.task_kind,
        )
        cot = result.cot
        # A trace prior steers the subtask it was issued during; clear it when
        # the reasoner moves to the next subtask.
        if self._last_current is not None and cot.current != self._last_current:
            self.active_priors.pop("trace", None)
            if "trace" not in {e.prior.kind for e in applied}:
                priors.pop("trace", None)
                result = reasoner.plan(
                    obs, self.task.instruction, priors or None, self.task.task_kind,
                )
                cot = result.cot
        self._last_current = cot.current
        self._tracked_pick = cot.pick.box.center

        if self.policy.ablation:
            cot = reasoner.ablate_cot(cot, self.policy.ablation)
        memory = reasoner.encode_memory(cot, self.slow_index)
        self.cached = CachedMemory(current=memory, updated_at_fast_tick=self.tick)

        b = result.grounding.picked.box
        self.slow_records.append(SlowRecord(
            fast_tick=self.tick,
            slow_index=self.slow_index,
            cot_text=serialize_cot(cot),
            guidance_applied=applied,
            picked_label=result.grounding.picked.label,
            picked_box=(b.x_min, b.y_min, b.x_max, b.y_max),
            grounding_rule=result.grounding.rule_used,
        ))
        self.slow_index += 1

    def _fast_tick(self) -> None:
        cached = self.cached
        assert cached is not None, "fast tick before the first slow tick"
        if self._chunk is None or self._chunk_pos >= self.config.stride:
            obs = sim.observe(self.state, self.perturbation, self.seed, self.task)
            cond = flow.featurize(obs, cached.current)
            if reasoner.DROP_ROBOT in self.policy.ablation:
                # The robot context is the state measured in the robot frame:
                # the proprio echo plus the wrist-range close cue.
                cond[0:3] = 0.0
                cond[3:6] = (0.0, 0.0, flow.WRIST_SENTINEL_DIST)
            chunk = flow.sample_chunk(
                self.policy.model, cond,
                euler_steps=self.config.euler_steps, rng=self._sample_rng,
            )
            self._chunk = chunk.steps
            self._chunk_pos = 0
        action = tuple(float(a) for a in self._chunk[self._chunk_pos])
        self._chunk_pos += 1

        self.state = sim.step(self.state, action, self.perturbation, self._step_rng)
        g = self.state.gripper
        self.fast_records.append(FastRecord(
            tick=self.tick,
            memory_tick=cached.updated_at_fast_tick,
            staleness=self.tick - cached.updated_at_fast_tick,
            action=action,
            gripper=(g.position[0], g.position[1], g.aperture),
        ))
        if sim.check_success(self.state, self.task):
            self.success = True

    def advance(self) -> bool:
        """Run one fast tick (plus the slow tick when scheduled). False when done."""
        if self.done:
            return False
        if self.tick % self.config.slow_period == 0:
            self._slow_tick()
        self._fast_tick()
        # Scripted guidance issued during this tick becomes visible to the
        # next slow boundary, matching the effective-tick arithmetic.
        for ev in self.guidance_source.get(self.tick, ()):
            self._queue.append(ev)
        self.tick += 1
        if self.success or self.tick >= self.config.max_fast_ticks:
            with self._lock:
                self.done = True
        return not self.done

    def run(self) -> EpisodeTrace:
        while self.advance():
            pass
        return self.trace()

    def trace(self) -> EpisodeTrace:
        return EpisodeTrace(
            fast=tuple(self.fast_records),
            slow=tuple(self.slow_records),
            guidance_events=tuple(self.applied_events),
            success=self.success,
            final_tick=self.tick,
            seed=self.seed,
            scenario=self.scenario,
            instruction=self.task.instruction,
        )


def run_episode(
    scenario: str,
    perturbation: sim.PerturbationConfig,
    policy: Policy,
    config: RuntimeConfig = RuntimeConfig(),
    guidance_source: Optional[GuidanceSource] = None,
    seed: int = 0,
) -> EpisodeTrace:
    """Run one episode to success or budget exhaustion (simulated clock)."""
    engine = EpisodeEngine(scenario, perturbation, policy, config, seed, guidance_source)
    return engine.run()


def staleness_report(trace: EpisodeTrace) -> Dict[str, object]:
    """Max staleness and a staleness histogram over the fast ticks."""
    hist: Dict[int, int] = {}
    max_s = 0
    for rec in trace.fast:
        hist[rec.staleness] = hist.get(rec.staleness, 0) + 1
        max_s = max(max_s, rec.staleness)
    return {"max_staleness": max_s, "histogram": hist}
