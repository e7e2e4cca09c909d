"""Annotation pipeline: expert rollouts -> supervised training samples.

Keyframes are extracted from the gripper aperture signal, end-effector motion
is projected into the primary view to build affordance points and coarse
motion sketches, and a seeded interaction-augmentation sampler attaches
perturbed spatial priors to a configurable fraction of instructions.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import codec, flow, guide, reasoner, sim
from .codec import ImageBox, ImagePoint, ObjectRef, StructuredCot
from .guide import BoxPrior, PointPrior, SpatialPrior, TracePrior

MODE_NONE = "none"
MODE_PICK_BOX = "pick_box"
MODE_PLACE_BOX = "place_box"
MODE_PICK_AND_PLACE = "pick_and_place"
MODE_AFFORDANCE = "affordance_2d"
MODE_PATH = "gripper_path_2d"

MODES = (MODE_NONE, MODE_PICK_BOX, MODE_PLACE_BOX, MODE_PICK_AND_PLACE,
         MODE_AFFORDANCE, MODE_PATH)

GRASP = "grasp"
RELEASE = "release"
_APERTURE_THRESHOLD = 0.5
_DEBOUNCE_TICKS = 3


class DatagenError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    states: Tuple[sim.SceneState, ...]   # len(actions) + 1 entries
    actions: Tuple[Tuple[float, float, float], ...]
    task: sim.TaskSpec
    scenario: str
    seed: int

    def __post_init__(self):
        if not self.actions or len(self.states) != len(self.actions) + 1:
            raise DatagenError("trajectory must be non-empty and tick-contiguous")

    @property
    def apertures(self) -> List[float]:
        return [s.gripper.aperture for s in self.states]


@dataclass(frozen=True)
class AnnotatedSample:
    observation: sim.Observation
    instruction: str          # possibly augmented with a serialized prior
    cot: StructuredCot
    chunk: np.ndarray         # (k, 3) expert actions
    interaction_mode: str
    prior: Optional[SpatialPrior] = None
    scenario: str = ""
    seed: int = 0


@dataclass(frozen=True)
class RecipeConfig:
    enable_probability: float = 0.5
    mode_weights: Tuple[Tuple[str, float], ...] = (
        (MODE_NONE, 0.40),
        (MODE_PICK_BOX, 0.20),
        (MODE_PLACE_BOX, 0.12),
        (MODE_PICK_AND_PLACE, 0.12),
        (MODE_AFFORDANCE, 0.10),
        (MODE_PATH, 0.06),
    )
    box_sigma: float = 0.01
    point_sigma: float = 0.01
    trace_sigma: float = 0.01

    def __post_init__(self):
        total = sum(w for _, w in self.mode_weights)
        if abs(total - 1.0) > 1e-12:
            raise DatagenError(f"mode weights sum to {total!r}, expected 1.0")
        if not 0.0 <= self.enable_probability <= 1.0:
            raise DatagenError("enable_probability must be in [0, 1]")
        for name, s in (("box_sigma", self.box_sigma), ("point_sigma", self.point_sigma),
                        ("trace_sigma", self.trace_sigma)):
            if s < 0:
                raise DatagenError(f"{name} must be >= 0")

    def marginals(self) -> Dict[str, float]:
        """Analytic mode marginals including the enable gate."""
        out = {mode: self.enable_probability * w for mode, w in self.mode_weights}
        out[MODE_NONE] = out.get(MODE_NONE, 0.0) + (1.0 - self.enable_probability)
        return out


def extract_keyframes(trajectory: TrajectoryRecord) -> List[Tuple[int, str]]:
    """Ticks where the aperture crosses 0.5 downward (grasp) or upward (release)."""
    ap = trajectory.apertures
    raw: List[Tuple[int, str]] = []
    for t in range(1, len(ap)):
        if ap[t - 1] >= _APERTURE_THRESHOLD and ap[t] < _APERTURE_THRESHOLD:
            raw.append((t, GRASP))
        elif ap[t - 1] < _APERTURE_THRESHOLD and ap[t] >= _APERTURE_THRESHOLD:
            raw.append((t, RELEASE))
    out: List[Tuple[int, str]] = []
    for t, kind in raw:
        if out and out[-1][1] == kind and t - out[-1][0] < _DEBOUNCE_TICKS:
            continue
        out.append((t, kind))
    return out


def project_motion(
    trajectory: TrajectoryRecord, window: Tuple[int, int], m: int = codec.PATH_LEN
) -> Tuple[ImagePoint, List[ImagePoint]]:
    """Affordance point and arc-length-resampled motion sketch for a window.

    ``window`` is (start_tick, keyframe_tick) inclusive; the sketch ends at
    the affordance, which is the gripper position at the keyframe.
    """
    start, end = window
    if end - start < 1:
        raise DatagenError("projection window must span >= 2 ticks")
    pts = [ImagePoint(float(np.clip(s.gripper.position[0], 0.0, 1.0)),
                      float(np.clip(s.gripper.position[1], 0.0, 1.0)))
           for s in trajectory.states[start:end + 1]]
    affordance = pts[-1]
    if guide.arc_length(pts) <= 0.0:
        return affordance, [affordance] * m  # degenerate zero-length motion
    path = guide.resample_trace(pts, m)
    return affordance, path


def perturb_annotation(
    prior: SpatialPrior, recipe: RecipeConfig, seed: int
) -> SpatialPrior:
    """Gaussian jitter per prior kind, clamped to the image; deterministic per seed."""
    rng = np.random.default_rng(seed)

    def clamp(v: float) -> float:
        return float(np.clip(v, 0.0, 1.0))

    if isinstance(prior, PointPrior):
        j = rng.normal(0.0, recipe.point_sigma, size=2) if recipe.point_sigma > 0 else (0.0, 0.0)
        return PointPrior(ImagePoint(clamp(prior.point.x + j[0]), clamp(prior.point.y + j[1])))
    if isinstance(prior, BoxPrior):
        b = prior.box
        j = rng.normal(0.0, recipe.box_sigma, size=4) if recipe.box_sigma > 0 else np.zeros(4)
        xs = sorted((clamp(b.x_min + j[0]), clamp(b.x_max + j[2])))
        ys = sorted((clamp(b.y_min + j[1]), clamp(b.y_max + j[3])))
        if xs[1] - xs[0] < 1e-3:
            xs[1] = clamp(xs[0] + 1e-3) if xs[0] < 0.999 else xs[1]
            xs[0] = min(xs[0], xs[1] - 1e-3)
        if ys[1] - ys[0] < 1e-3:
            ys[1] = clamp(ys[0] + 1e-3) if ys[0] < 0.999 else ys[1]
            ys[0] = min(ys[0], ys[1] - 1e-3)
        return BoxPrior(ImageBox(xs[0], ys[0], xs[1], ys[1]))
    if isinstance(prior, TracePrior):
        if recipe.trace_sigma > 0:
            j = rng.normal(0.0, recipe.trace_sigma, size=(len(prior.points), 2))
        else:
            j = np.zeros((len(prior.points), 2))
        pts = tuple(ImagePoint(clamp(p.x + j[i][0]), clamp(p.y + j[i][1]))
                    for i, p in enumerate(prior.points))
        return TracePrior(pts)
    raise DatagenError(f"unknown prior type {type(prior).__name__}")


def sample_interaction_mode(recipe: RecipeConfig, seed: int) -> str:
    """Gate on enable_probability, then sample a mode from the weight table."""
    rng = np.random.default_rng(seed)
    if rng.uniform() >= recipe.enable_probability:
        return MODE_NONE
    u = rng.uniform()
    acc = 0.0
    for mode, w in recipe.mode_weights:
        acc += w
        if u < acc:
            return mode
    return recipe.mode_weights[-1][0]


# ---------------------------------------------------------------------------
# Dataset assembly


def collect_trajectories(
    scenarios: Sequence[Tuple[str, int]],
    base_seed: int = 0,
    perturbation: sim.PerturbationConfig = sim.NO_PERTURBATION,
) -> List[TrajectoryRecord]:
    """Roll the scripted expert: ``scenarios`` is a list of (name, episodes)."""
    out: List[TrajectoryRecord] = []
    for name, episodes in scenarios:
        for i in range(episodes):
            seed = base_seed + i
            states, actions, task = sim.rollout_expert(seed, name, perturbation)
            if len(actions) == 0:
                continue
            out.append(TrajectoryRecord(tuple(states), tuple(actions), task, name, seed))
    return out


def _mode_prior(
    mode: str,
    trajectory: TrajectoryRecord,
    keyframes: List[Tuple[int, str]],
    tick: int,
    recipe: RecipeConfig,
    seed: int,
) -> Optional[SpatialPrior]:
    """Oracle prior for an interaction mode, before jitter."""
    task = trajectory.task
    state = trajectory.states[tick]
    target = state.object_by_id(task.target_id)
    if mode == MODE_PICK_BOX:
        return BoxPrior(target.box)
    if mode == MODE_PLACE_BOX:
        return BoxPrior(task.goal_zone)
    if mode == MODE_AFFORDANCE:
        c = target.box.center
        return PointPrior(c)
    if mode == MODE_PATH:
        kf = next((t for t, kind in keyframes if kind == GRASP and t > tick), None)
        if kf is None or kf - tick < 1:
            return None
        _, path = project_motion(trajectory, (tick, kf))
        if guide.arc_length(path) <= 0.0:
            return None
        return TracePrior(tuple(path))
    return None


def _serialize_mode_prior(instruction: str, mode: str, prior, place_prior=None) -> str:
    if mode == MODE_PICK_AND_PLACE:
        return (instruction + " " + codec.serialize_prior(prior)
                + " " + codec.serialize_prior(place_prior))
    return codec.attach_prior(instruction, prior)


def build_dataset(
    trajectories: Sequence[TrajectoryRecord],
    recipe: RecipeConfig = RecipeConfig(),
    seed: int = 0,
    chunk_len: int = flow.CHUNK_LEN,
) -> List[AnnotatedSample]:
    """Chunk-aligned annotated samples with ground-truth reasoning targets.

    Per trajectory the sample count is floor(len / chunk_len); every emitted
    reasoning record survives a codec round trip.
    """
    if not trajectories:
        raise DatagenError("no trajectories given")
    samples: List[AnnotatedSample] = []
    for traj in trajectories:
        try:
            samples.extend(_annotate_trajectory(traj, recipe, seed, chunk_len))
        except (DatagenError, codec.CotValidationError) as exc:
            # A malformed trajectory is skipped, not fatal.
            import logging
            logging.getLogger(__name__).warning(
                "skipping trajectory (scenario=%s seed=%d): %s", traj.scenario, traj.seed, exc)
    return samples


def _annotate_trajectory(
    traj: TrajectoryRecord, recipe: RecipeConfig, seed: int, chunk_len: int
) -> List[AnnotatedSample]:
    keyframes = extract_keyframes(traj)
    n = len(traj.actions)
    out: List[AnnotatedSample] = []
    for tick in range(0, n - chunk_len + 1, chunk_len):
        sample_seed = int(np.random.SeedSequence(
            [seed, traj.seed, zlib.crc32(traj.scenario.encode()), tick]
        ).generate_state(1)[0])

        mode = sample_interaction_mode(recipe, sample_seed)
        prior = None
        place_prior = None
        instruction = traj.task.instruction
        if mode != MODE_NONE:
            base_mode = MODE_PICK_BOX if mode == MODE_PICK_AND_PLACE else mode
            raw = _mode_prior(base_mode, traj, keyframes, tick, recipe, sample_seed)
            if raw is None:
                mode = MODE_NONE
            else:
                prior = perturb_annotation(raw, recipe, sample_seed + 1)
                if mode == MODE_PICK_AND_PLACE:
                    raw_place = _mode_prior(MODE_PLACE_BOX, traj, keyframes, tick,
                                            recipe, sample_seed)
                    place_prior = perturb_annotation(raw_place, recipe, sample_seed + 2)
                instruction = _serialize_mode_prior(
                    traj.task.instruction, mode, prior, place_prior)

        cot, obs = _ground_truth_cot(traj, keyframes, tick)
        # Pipeline invariant: the reasoning record survives the codec round trip.
        codec.parse_cot(codec.serialize_cot(cot))
        chunk = np.array(traj.actions[tick:tick + chunk_len], dtype=np.float64)
        out.append(AnnotatedSample(
            observation=obs,
            instruction=instruction,
            cot=cot,
            chunk=chunk,
            interaction_mode=mode,
            prior=prior,
            scenario=traj.scenario,
            seed=traj.seed,
        ))
    return out


def _ground_truth_cot(
    traj: TrajectoryRecord, keyframes: List[Tuple[int, str]], tick: int
) -> Tuple[StructuredCot, sim.Observation]:
    """Target reasoning record assembled from simulator ground truth."""
    state = traj.states[tick]
    task = traj.task
    obs = sim.observe(state, sim.NO_PERTURBATION, traj.seed, task)
    target = state.object_by_id(task.target_id)

    held = state.gripper.held_object == task.target_id
    if task.task_kind == sim.PICK:
        subtasks = (f"grasp the {target.label}", f"lift the {target.label}")
    else:
        subtasks = (f"grasp the {target.label}", f"place the {target.label} in the goal zone")
    current = subtasks[1] if held else subtasks[0]

    next_kf = next((t for t, kind in keyframes if t > tick), None)
    window_end = next_kf if next_kf is not None else len(traj.states) - 1
    if window_end - tick < 1:
        window_end = min(tick + 1, len(traj.states) - 1)
    affordance, path = project_motion(traj, (tick, window_end))

    objects = tuple(ObjectRef(it.label, it.box) for it in obs.main_view)
    pick = next(o for o in objects if o.label == target.label and
                abs(o.box.center.x - target.box.center.x) < 1e-9)

    return StructuredCot(
        task=task.instruction,
        subtasks=subtasks,
        current=current,
        objects=objects,
        pick=pick,
        affordance=affordance,
        gripper_path=tuple(path),
    ), obs


def flow_training_set(samples: Sequence[AnnotatedSample]) -> Tuple[np.ndarray, np.ndarray]:
    """(conditioning, chunk) arrays for the action head."""
    conds = []
    chunks = []
    for s in samples:
        memory = reasoner.encode_memory(s.cot, slow_tick=0)
        conds.append(flow.featurize(s.observation, memory))
        chunks.append(np.asarray(s.chunk, dtype=np.float64).reshape(-1))
    return np.asarray(conds), np.asarray(chunks)


# ---------------------------------------------------------------------------
# Serialization / stats


def samples_to_jsonl(samples: Sequence[AnnotatedSample]) -> str:
    lines = []
    for s in samples:
        lines.append(json.dumps({
            "observation": s.observation.to_json(),
            "instruction": s.instruction,
            "cot": codec.serialize_cot(s.cot),
            "chunk": np.asarray(s.chunk).tolist(),
            "interaction_mode": s.interaction_mode,
            "prior": None if s.prior is None else guide.prior_to_json(s.prior),
            "scenario": s.scenario,
            "seed": s.seed,
        }))
    return "\n".join(lines) + ("\n" if lines else "")


def mode_histogram(samples: Sequence[AnnotatedSample]) -> Dict[str, int]:
    hist = {m: 0 for m in MODES}
    for s in samples:
        hist[s.interaction_mode] += 1
    return hist


def stats_csv(samples: Sequence[AnnotatedSample]) -> str:
    hist = mode_histogram(samples)
    total = max(1, len(samples))
    lines = ["mode,count,fraction"]
    for m in MODES:
        lines.append(f"{m},{hist[m]},{hist[m] / total:.6f}")
    return "\n".join(lines) + "\n"
