"""Shift-suite evaluation harness.

Runs seeded episode grids across distribution-shift cells and guidance
modalities, separates grounding correctness from end-to-end success, and
emits deterministic CSV / Markdown reports plus raw JSON-lines traces.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import guide, runtime, sim
from .codec import ImageBox, ImagePoint
from .guide import BoxPrior, GuidanceEvent, PointPrior, TracePrior, UP_FRONT

SHIFTS = ("none", "sensor", "lighting", "robot_state", "language",
          "unseen_object", "distractor_color", "distractor_position", "obstacle")
MODALITIES = ("none", "point", "box", "trace")

_SHIFT_SCENARIO = {
    "none": "single_target",
    "sensor": "single_target",
    "lighting": "single_target",
    "robot_state": "single_target",
    "language": "single_target",
    "unseen_object": "unseen_object",
    "distractor_color": "distractor_color",
    "distractor_position": "distractor_position",
    "obstacle": "obstacle",
}

_TRACE_SHIFTS = ("obstacle",)


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class SuiteConfig:
    shift: str = "none"
    episodes: int = 200
    base_seed: int = 0
    modality: str = "none"
    ablation: frozenset = frozenset()

    def __post_init__(self):
        if self.shift not in SHIFTS:
            raise BenchError(f"unknown shift {self.shift!r}")
        if self.modality not in MODALITIES:
            raise BenchError(f"unknown modality {self.modality!r}")
        if self.episodes < 1:
            raise BenchError("episodes must be >= 1")
        if self.modality == "trace" and self.shift not in _TRACE_SHIFTS:
            raise BenchError("trace guidance is only valid on obstacle/constrained-path cells")

    @property
    def scenario(self) -> str:
        return _SHIFT_SCENARIO[self.shift]

    @property
    def cell_key(self) -> str:
        abl = "+".join(sorted(self.ablation)) if self.ablation else "full"
        return f"{self.shift}/{self.modality}/{abl}"


def shift_perturbation(shift: str) -> sim.PerturbationConfig:
    """Default perturbation magnitudes per shift family."""
    if shift == "sensor":
        return sim.PerturbationConfig(sensor=sim.SensorShift(
            rotation_deg=15.0, scale=1.1, translation=(0.05, -0.05)))
    if shift == "lighting":
        return sim.PerturbationConfig(lighting=sim.LightingShift())
    if shift == "robot_state":
        return sim.PerturbationConfig(robot_state=sim.RobotStateShift())
    if shift == "language":
        return sim.PerturbationConfig(language=sim.LanguageShift(lexicon_seed=1))
    return sim.NO_PERTURBATION


@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    success: bool
    grounding_correct: bool
    max_staleness: int
    guidance_count: int
    ticks: int


@dataclass
class CellResult:
    suite: SuiteConfig
    episodes: List[EpisodeResult] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.episodes)

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / max(1, self.n)

    @property
    def grounding_rate(self) -> float:
        return sum(e.grounding_correct for e in self.episodes) / max(1, self.n)

    @property
    def mean_staleness(self) -> float:
        return sum(e.max_staleness for e in self.episodes) / max(1, self.n)

    @property
    def guidance_count(self) -> int:
        return sum(e.guidance_count for e in self.episodes)

    def failures(self) -> List[EpisodeResult]:
        return [e for e in self.episodes if not e.success]


@dataclass
class Report:
    cells: Dict[str, CellResult] = field(default_factory=dict)
    model_hash: str = ""
    config_hash: str = ""

    def add(self, cell: CellResult) -> None:
        self.cells[cell.suite.cell_key] = cell


def binomial_interval(successes: int, n: int, z: float = 1.645) -> Tuple[float, float]:
    """Wilson score interval (default 90%)."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# Oracle guidance construction


def _target_observed(state: sim.SceneState, task: sim.TaskSpec) -> ImageBox:
    return state.object_by_id(task.target_id).box


def oracle_guidance(
    modality: str, state: sim.SceneState, task: sim.TaskSpec, source: str = "oracle"
) -> Optional[GuidanceEvent]:
    """Up-front prior generated from simulator state for controlled comparison."""
    if modality == "none":
        return None
    box = _target_observed(state, task)
    if modality == "point":
        return GuidanceEvent(PointPrior(box.center), UP_FRONT, source)
    if modality == "box":
        return GuidanceEvent(BoxPrior(box), UP_FRONT, source)
    if modality == "trace":
        return GuidanceEvent(oracle_trace(state, task), UP_FRONT, source)
    raise BenchError(f"unknown modality {modality!r}")


def oracle_trace(state: sim.SceneState, task: sim.TaskSpec) -> TracePrior:
    """Trace to the target box center; detours around an obstacle when present.

    With no obstacle on the line this reduces to the linear
    :func:`steertab.guide.make_eval_trace` construction.
    """
    gripper = ImagePoint(*state.gripper.position)
    target = state.object_by_id(task.target_id)
    center = target.box.center
    obstacle = next((o for o in state.objects if o.category == "obstacle"), None)
    if obstacle is not None:
        wp = sim.detour_waypoint(state.gripper.position, target.position, obstacle)
        if wp is not None:
            pts = [gripper, ImagePoint(*wp), center]
            return TracePrior(tuple(guide.resample_trace(pts, 5)))
    return guide.make_eval_trace(gripper, target.box, m=5)


def _grounding_correct(trace: runtime.EpisodeTrace, state: sim.SceneState,
                       task: sim.TaskSpec) -> bool:
    """First-slow-tick grounding vs the true target (identity view)."""
    if not trace.slow:
        return False
    box = _target_observed(state, task)
    first = trace.slow[0].picked_box
    return all(abs(a - b) < 1e-9 for a, b in
               zip(first, (box.x_min, box.y_min, box.x_max, box.y_max)))


# ---------------------------------------------------------------------------
# Suite execution


def _run_one(
    policy: runtime.Policy,
    suite: SuiteConfig,
    seed: int,
    config: runtime.RuntimeConfig,
    extra_guidance: Optional[GuidanceEvent] = None,
) -> Tuple[EpisodeResult, runtime.EpisodeTrace]:
    perturbation = shift_perturbation(suite.shift)
    state0, task = sim.reset(seed, suite.scenario, perturbation)
    guidance: Dict[int, List[GuidanceEvent]] = {}
    ev = extra_guidance if extra_guidance is not None else oracle_guidance(
        suite.modality, state0, task)
    if ev is not None:
        guidance[-1] = [ev]
    policy = replace(policy, ablation=suite.ablation)
    trace = runtime.run_episode(suite.scenario, perturbation, policy, config,
                                guidance, seed)
    rep = runtime.staleness_report(trace)
    result = EpisodeResult(
        seed=seed,
        success=trace.success,
        grounding_correct=_grounding_correct(trace, state0, task),
        max_staleness=int(rep["max_staleness"]),
        guidance_count=len(trace.guidance_events),
        ticks=trace.final_tick,
    )
    return result, trace


def run_suite(
    policy: runtime.Policy,
    suite: SuiteConfig,
    parallelism: int = 1,
    config: runtime.RuntimeConfig = runtime.RuntimeConfig(),
) -> CellResult:
    """Run one cell; deterministic given seeds regardless of parallelism."""
    seeds = [suite.base_seed + i for i in range(suite.episodes)]
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(
                lambda s: _run_one(policy, suite, s, config)[0], seeds))
    else:
        results = [_run_one(policy, suite, s, config)[0] for s in seeds]
    return CellResult(suite=suite, episodes=results)


def run_report(
    policy: runtime.Policy,
    suites: Sequence[SuiteConfig],
    parallelism: int = 1,
    config: runtime.RuntimeConfig = runtime.RuntimeConfig(),
) -> Report:
    report = Report()
    for suite in suites:
        report.add(run_suite(policy, suite, parallelism, config))
    blob = json.dumps([s.cell_key for s in suites]).encode()
    report.config_hash = hashlib.sha256(blob).hexdigest()[:12]
    return report


@dataclass(frozen=True)
class RecoveryRow:
    cell: str
    rerun: int
    recovered: int
    grounding_failures: int
    grounding_recovered: int

    @property
    def recovery_rate(self) -> float:
        return self.recovered / self.rerun if self.rerun else 0.0


def failure_recovery(
    report: Report,
    policy: runtime.Policy,
    n_failures_per_cell: int = 10,
    modality: str = "point",
    config: runtime.RuntimeConfig = runtime.RuntimeConfig(),
) -> List[RecoveryRow]:
    """Re-run failed episodes (same seeds) with an up-front oracle prior."""
    rows: List[RecoveryRow] = []
    for key, cell in report.cells.items():
        failures = cell.failures()[:n_failures_per_cell]
        rerun = 0
        recovered = 0
        g_fail = 0
        g_rec = 0
        for ep in failures:
            suite = replace(cell.suite, modality=modality)
            result, _ = _run_one(policy, suite, ep.seed, config)
            rerun += 1
            recovered += result.success
            if not ep.grounding_correct:
                g_fail += 1
                g_rec += result.success
        rows.append(RecoveryRow(key, rerun, recovered, g_fail, g_rec))
    return rows


# ---------------------------------------------------------------------------
# Report emission


def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def report_csv(report: Report) -> str:
    lines = ["cell,episodes,success_pct,grounding_pct,mean_max_staleness,guidance_count"]
    for key in sorted(report.cells):
        c = report.cells[key]
        lines.append(f"{key},{c.n},{_pct(c.success_rate)},{_pct(c.grounding_rate)},"
                     f"{c.mean_staleness:.2f},{c.guidance_count}")
    return "\n".join(lines) + "\n"


def report_markdown(report: Report) -> str:
    shifts = sorted({c.suite.shift for c in report.cells.values()})
    modalities = [m for m in MODALITIES
                  if any(c.suite.modality == m for c in report.cells.values())]
    lines = ["| shift | " + " | ".join(modalities) + " |",
             "|" + "---|" * (len(modalities) + 1)]
    for shift in shifts:
        row = [shift]
        for m in modalities:
            match = [c for c in report.cells.values()
                     if c.suite.shift == shift and c.suite.modality == m
                     and not c.suite.ablation]
            row.append(_pct(match[0].success_rate) if match else "-")
        lines.append("| " + " | ".join(row) + " |")

    ablations = [c for c in report.cells.values() if c.suite.ablation]
    if ablations:
        lines += ["", "| ablation | shift | success |", "|---|---|---|"]
        for c in sorted(ablations, key=lambda c: c.suite.cell_key):
            abl = "+".join(sorted(c.suite.ablation))
            lines.append(f"| -{abl} | {c.suite.shift} | {_pct(c.success_rate)} |")
    return "\n".join(lines) + "\n"


def emit_report(report: Report, out_dir: str, formats: Sequence[str] = ("csv", "markdown")) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w") as f:
            f.write(report_csv(report))
        written.append(path)
    if "markdown" in formats:
        path = os.path.join(out_dir, "report.md")
        with open(path, "w") as f:
            f.write(report_markdown(report))
        written.append(path)
    return written
