"""Deterministic 2D tabletop pick-and-place world.

The table is the unit square and the primary camera is a top-down view, so
world and image coordinates coincide up to the configurable sensor transform.
The simulator provides ground-truth state, perturbed observations, a scripted
expert, and success checks; everything is a pure function of
(seed, scenario, perturbation, action sequence).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .codec import ImageBox, ImagePoint

MAX_STEP = 0.05          # table units moved per fast tick at full command
APERTURE_RATE = 0.25     # max aperture change per tick
GRASP_EPS = 0.03         # gripper-to-center distance that allows attachment
PLACE_EPS = 0.05         # target-to-goal-center distance that counts as placed
LIFT_EPS = 0.05          # carry distance that counts as "lifted" for pick tasks
WRIST_RADIUS = 0.2       # wrist view range
OBSTACLE_INFLATION = 0.03  # success check inflates obstacle extents by this
HOME_POSE = (0.5, 0.8)
DEFAULT_HALF_EXTENT = 0.04

SEEN_CATEGORIES = ("block", "spoon")
UNSEEN_CATEGORIES = ("carrot", "mug")
COLORS = ("red", "green", "blue", "yellow")

PICK = "pick"
PICK_AND_PLACE = "pick_and_place"
AVOID_OBSTACLE = "avoid_obstacle"


class SimError(ValueError):
    pass


class UnknownScenarioError(SimError):
    pass


class PlacementError(SimError):
    pass


# ---------------------------------------------------------------------------
# State types


@dataclass(frozen=True)
class SceneObject:
    id: int
    category: str
    color: str
    position: Tuple[float, float]
    half_extent: float = DEFAULT_HALF_EXTENT
    seen_in_training: bool = True

    @property
    def box(self) -> ImageBox:
        x, y = self.position
        h = self.half_extent
        return ImageBox(max(0.0, x - h), max(0.0, y - h), min(1.0, x + h), min(1.0, y + h))

    @property
    def label(self) -> str:
        return f"{self.color} {self.category}" if self.color else self.category


@dataclass(frozen=True)
class GripperState:
    position: Tuple[float, float]
    aperture: float = 1.0
    held_object: Optional[int] = None


@dataclass(frozen=True)
class SceneState:
    objects: Tuple[SceneObject, ...]
    gripper: GripperState
    tick: int = 0
    grasp_position: Optional[Tuple[float, float]] = None
    carry_distance: float = 0.0
    entered_obstacle: bool = False

    def object_by_id(self, oid: int) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise SimError(f"no object with id {oid}")


@dataclass(frozen=True)
class TaskSpec:
    instruction: str
    target_id: int
    goal_zone: ImageBox
    task_kind: str  # PICK | PICK_AND_PLACE | AVOID_OBSTACLE


@dataclass(frozen=True)
class SensorShift:
    rotation_deg: float = 0.0
    scale: float = 1.0
    translation: Tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class LightingShift:
    position_sigma: float = 0.01
    color_dropout: float = 0.2

    def __post_init__(self):
        if self.position_sigma < 0:
            raise SimError("position_sigma must be >= 0")
        if not 0.0 <= self.color_dropout <= 1.0:
            raise SimError("color_dropout must be in [0, 1]")


@dataclass(frozen=True)
class RobotStateShift:
    init_radius: float = 0.1
    actuation_sigma: float = 0.02

    def __post_init__(self):
        if self.init_radius < 0 or self.actuation_sigma < 0:
            raise SimError("robot-state shift magnitudes must be >= 0")


@dataclass(frozen=True)
class LanguageShift:
    lexicon_seed: int = 0


@dataclass(frozen=True)
class ObjectShift:
    unseen_category: bool = False
    distractor: Optional[str] = None  # "color" | "position"


@dataclass(frozen=True)
class PerturbationConfig:
    sensor: Optional[SensorShift] = None
    lighting: Optional[LightingShift] = None
    robot_state: Optional[RobotStateShift] = None
    language: Optional[LanguageShift] = None
    objects: Optional[ObjectShift] = None

    @staticmethod
    def from_dict(data: dict) -> "PerturbationConfig":
        """Build from the declarative config schema (see docs/config.md)."""
        def sub(key, cls):
            block = data.get(key)
            if block is None:
                return None
            if key == "sensor" and "translation" in block:
                block = dict(block, translation=tuple(block["translation"]))
            return cls(**block)

        return PerturbationConfig(
            sensor=sub("sensor", SensorShift),
            lighting=sub("lighting", LightingShift),
            robot_state=sub("robot_state", RobotStateShift),
            language=sub("language", LanguageShift),
            objects=sub("objects", ObjectShift),
        )


NO_PERTURBATION = PerturbationConfig()


@dataclass(frozen=True)
class ObservedItem:
    label: str
    box: ImageBox
    color: Optional[str]


@dataclass(frozen=True)
class WristItem:
    label: str
    offset: Tuple[float, float]


@dataclass(frozen=True)
class Observation:
    main_view: Tuple[ObservedItem, ...]
    wrist_view: Tuple[WristItem, ...]
    proprio: Tuple[float, float, float]  # (x, y, aperture)
    tick: int

    def to_json(self) -> dict:
        return {
            "main_view": [
                {"label": it.label,
                 "box": [it.box.x_min, it.box.y_min, it.box.x_max, it.box.y_max],
                 "color": it.color}
                for it in self.main_view
            ],
            "wrist_view": [
                {"label": it.label, "offset": list(it.offset)} for it in self.wrist_view
            ],
            "proprio": list(self.proprio),
            "tick": self.tick,
        }

    @staticmethod
    def from_json(data: dict) -> "Observation":
        return Observation(
            main_view=tuple(
                ObservedItem(it["label"], ImageBox(*it["box"]), it.get("color"))
                for it in data["main_view"]
            ),
            wrist_view=tuple(
                WristItem(it["label"], tuple(it["offset"])) for it in data["wrist_view"]
            ),
            proprio=tuple(data["proprio"]),
            tick=int(data["tick"]),
        )


# ---------------------------------------------------------------------------
# Synonym lexicon for language shift

SYNONYMS: Dict[str, Tuple[str, ...]] = {
    "pick": ("pick", "grab", "lift"),
    "put": ("put", "place", "move"),
    "block": ("block", "cube"),
    "spoon": ("spoon", "scoop"),
    "carrot": ("carrot", "veggie"),
    "mug": ("mug", "cup"),
    "red": ("red", "crimson"),
    "green": ("green", "emerald"),
    "blue": ("blue", "azure"),
    "yellow": ("yellow", "golden"),
    "zone": ("zone", "region", "area"),
}

CANONICAL: Dict[str, str] = {
    variant: canon for canon, variants in SYNONYMS.items() for variant in variants
}

_TEMPLATE_VERBS = ("pick", "put")


def canonical_word(word: str) -> str:
    return CANONICAL.get(word, word)


def paraphrase_instruction(
    instruction: str, lexicon_seed: int, lexicon: Optional[Dict[str, Tuple[str, ...]]] = None
) -> str:
    """Substitute verbs/nouns/attributes with seeded synonyms; referent preserved."""
    if lexicon is None:
        lexicon = SYNONYMS
    words = instruction.split()
    if not words or canonical_word(words[0]) not in _TEMPLATE_VERBS:
        raise SimError(f"instruction outside the template grammar: {instruction!r}")
    rng = np.random.default_rng(lexicon_seed)
    out = []
    for w in words:
        canon = canonical_word(w)
        variants = lexicon.get(canon)
        out.append(variants[rng.integers(len(variants))] if variants else w)
    return " ".join(out)


# ---------------------------------------------------------------------------
# Scenarios

ScenarioBuilder = Callable[[np.random.Generator, PerturbationConfig], Tuple[List[SceneObject], TaskSpec]]
SCENARIOS: Dict[str, ScenarioBuilder] = {}


def register_scenario(name: str):
    def deco(fn: ScenarioBuilder) -> ScenarioBuilder:
        SCENARIOS[name] = fn
        return fn
    return deco


def _sample_position(rng, half_extent, existing, min_gap=0.14, tries=1000,
                     lo=(0.12, 0.12), hi=(0.88, 0.62)):
    for _ in range(tries):
        p = (float(rng.uniform(lo[0], hi[0])), float(rng.uniform(lo[1], hi[1])))
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) >= min_gap for q in existing):
            return p
    raise PlacementError("infeasible placement after 1000 rejection samples")


def _goal_zone(rng, existing, half=0.06):
    c = _sample_position(rng, half, existing, min_gap=0.25)
    return ImageBox(c[0] - half, c[1] - half, c[0] + half, c[1] + half), c


@register_scenario("single_target")
def _single_target(rng, perturbation):
    color = COLORS[rng.integers(len(COLORS))]
    pos = _sample_position(rng, DEFAULT_HALF_EXTENT, [])
    zone, _ = _goal_zone(rng, [pos])
    obj = SceneObject(0, "block", color, pos)
    task = TaskSpec(f"put the {color} block in the goal zone", 0, zone, PICK_AND_PLACE)
    return [obj], task


@register_scenario("single_target_pick")
def _single_target_pick(rng, perturbation):
    color = COLORS[rng.integers(len(COLORS))]
    pos = _sample_position(rng, DEFAULT_HALF_EXTENT, [])
    zone, _ = _goal_zone(rng, [pos])
    obj = SceneObject(0, "block", color, pos)
    task = TaskSpec(f"pick the {color} block", 0, zone, PICK)
    return [obj], task


@register_scenario("two_red_blocks")
@register_scenario("distractor_position")
def _distractor_position(rng, perturbation):
    p0 = _sample_position(rng, DEFAULT_HALF_EXTENT, [])
    p1 = _sample_position(rng, DEFAULT_HALF_EXTENT, [p0])
    zone, _ = _goal_zone(rng, [p0, p1])
    objs = [SceneObject(0, "block", "red", p0), SceneObject(1, "block", "red", p1)]
    target = int(rng.integers(2))
    task = TaskSpec("put the red block in the goal zone", target, zone, PICK_AND_PLACE)
    return objs, task


@register_scenario("distractor_color")
def _distractor_color(rng, perturbation):
    c0, c1 = rng.choice(len(COLORS), size=2, replace=False)
    p0 = _sample_position(rng, DEFAULT_HALF_EXTENT, [])
    p1 = _sample_position(rng, DEFAULT_HALF_EXTENT, [p0])
    zone, _ = _goal_zone(rng, [p0, p1])
    objs = [SceneObject(0, "block", COLORS[c0], p0), SceneObject(1, "block", COLORS[c1], p1)]
    target = int(rng.integers(2))
    # The instruction deliberately omits the color, so both blocks match it.
    task = TaskSpec("put the block in the goal zone", target, zone, PICK_AND_PLACE)
    return objs, task


@register_scenario("unseen_object")
def _unseen_object(rng, perturbation):
    cat = UNSEEN_CATEGORIES[rng.integers(len(UNSEEN_CATEGORIES))]
    color = COLORS[rng.integers(len(COLORS))]
    pos = _sample_position(rng, DEFAULT_HALF_EXTENT, [])
    zone, _ = _goal_zone(rng, [pos])
    objs = [SceneObject(0, cat, color, pos, seen_in_training=False)]
    task = TaskSpec(f"put the {color} {cat} in the goal zone", 0, zone, PICK_AND_PLACE)
    return objs, task


@register_scenario("obstacle")
def _obstacle(rng, perturbation):
    color = COLORS[rng.integers(len(COLORS))]
    pos = _sample_position(rng, DEFAULT_HALF_EXTENT, [], lo=(0.15, 0.15), hi=(0.85, 0.45))
    # Obstacle sits on the straight line from the gripper home pose to the
    # target, so an undetoured approach always clips its inflated extent.
    home = HOME_POSE
    mid = (0.5 * (home[0] + pos[0]), 0.5 * (home[1] + pos[1]))
    obstacle = SceneObject(1, "obstacle", "gray", mid)
    zone, _ = _goal_zone(rng, [pos, mid])
    objs = [SceneObject(0, "block", color, pos), obstacle]
    task = TaskSpec(f"put the {color} block in the goal zone", 0, zone, AVOID_OBSTACLE)
    return objs, task


# ---------------------------------------------------------------------------
# Core operations


def _scenario_rng(seed: int, scenario: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(scenario.encode())])


def reset(
    seed: int, scenario: str, perturbation: PerturbationConfig = NO_PERTURBATION
) -> Tuple[SceneState, TaskSpec]:
    """Deterministically build the initial state for (seed, scenario, perturbation)."""
    if scenario not in SCENARIOS:
        raise UnknownScenarioError(f"unknown scenario {scenario!r}")
    rng = _scenario_rng(seed, scenario)
    objects, task = SCENARIOS[scenario](rng, perturbation)

    home = HOME_POSE
    if perturbation.robot_state is not None and perturbation.robot_state.init_radius > 0:
        r = perturbation.robot_state.init_radius * math.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * math.pi)
        home = (
            float(np.clip(home[0] + r * math.cos(theta), 0.02, 0.98)),
            float(np.clip(home[1] + r * math.sin(theta), 0.02, 0.98)),
        )

    if perturbation.language is not None:
        task = replace(
            task,
            instruction=paraphrase_instruction(
                task.instruction, perturbation.language.lexicon_seed
            ),
        )

    state = SceneState(objects=tuple(objects), gripper=GripperState(position=home))
    return state, task


def step(
    state: SceneState,
    action: Sequence[float],
    perturbation: PerturbationConfig = NO_PERTURBATION,
    rng: Optional[np.random.Generator] = None,
) -> SceneState:
    """Advance the world one fast tick under a (dx, dy, grip) command in [-1, 1]^3."""
    dx, dy, grip = (float(a) for a in action)
    if not all(math.isfinite(v) for v in (dx, dy, grip)):
        raise SimError(f"non-finite action {action!r}")
    dx = max(-1.0, min(1.0, dx)) * MAX_STEP
    dy = max(-1.0, min(1.0, dy)) * MAX_STEP
    if perturbation.robot_state is not None and perturbation.robot_state.actuation_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(state.tick)
        noise = rng.normal(0.0, perturbation.robot_state.actuation_sigma, size=2)
        dx += float(noise[0])
        dy += float(noise[1])

    gx, gy = state.gripper.position
    pos = (float(np.clip(gx + dx, 0.0, 1.0)), float(np.clip(gy + dy, 0.0, 1.0)))

    target_aperture = 0.0 if grip < 0 else 1.0
    aperture = state.gripper.aperture
    delta = np.clip(target_aperture - aperture, -APERTURE_RATE, APERTURE_RATE)
    new_aperture = float(np.clip(aperture + delta, 0.0, 1.0))

    held = state.gripper.held_object
    objects = list(state.objects)
    grasp_position = state.grasp_position
    carry = state.carry_distance

    if held is not None:
        if new_aperture >= 0.5:
            held = None  # release at the current position
        else:
            carry += math.hypot(pos[0] - gx, pos[1] - gy)
    if held is not None:
        idx = next(i for i, o in enumerate(objects) if o.id == held)
        objects[idx] = replace(objects[idx], position=pos)
    elif state.gripper.held_object is None and aperture >= 0.5 and new_aperture < 0.5:
        # Closing crossed the grasp threshold: attach the nearest object in range.
        best, best_d = None, GRASP_EPS
        for o in objects:
            d = math.hypot(o.position[0] - pos[0], o.position[1] - pos[1])
            if d <= best_d:
                best, best_d = o, d
        if best is not None:
            held = best.id
            grasp_position = pos
            carry = 0.0
            idx = next(i for i, o in enumerate(objects) if o.id == held)
            objects[idx] = replace(objects[idx], position=pos)

    entered = state.entered_obstacle
    for o in objects:
        if o.category == "obstacle":
            h = o.half_extent + OBSTACLE_INFLATION
            if (abs(pos[0] - o.position[0]) <= h and abs(pos[1] - o.position[1]) <= h):
                entered = True

    return SceneState(
        objects=tuple(objects),
        gripper=GripperState(position=pos, aperture=new_aperture, held_object=held),
        tick=state.tick + 1,
        grasp_position=grasp_position,
        carry_distance=carry,
        entered_obstacle=entered,
    )


def _apply_sensor(point: Tuple[float, float], shift: SensorShift) -> Tuple[float, float]:
    theta = math.radians(shift.rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    x = point[0] - 0.5
    y = point[1] - 0.5
    xr = shift.scale * (c * x - s * y) + 0.5 + shift.translation[0]
    yr = shift.scale * (s * x + c * y) + 0.5 + shift.translation[1]
    return xr, yr


def invert_sensor(point: Tuple[float, float], shift: SensorShift) -> Tuple[float, float]:
    """Inverse of the sensor transform (exact up to float round-off)."""
    theta = math.radians(shift.rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    x = (point[0] - shift.translation[0] - 0.5) / shift.scale
    y = (point[1] - shift.translation[1] - 0.5) / shift.scale
    return (c * x + s * y + 0.5, -s * x + c * y + 0.5)


def _sensor_box(box: ImageBox, shift: SensorShift) -> ImageBox:
    # The transform moves box centers and scales extents; boxes stay
    # axis-aligned so the transform is exactly invertible on observations.
    cx, cy = _apply_sensor(((box.x_min + box.x_max) / 2, (box.y_min + box.y_max) / 2), shift)
    hx = (box.x_max - box.x_min) / 2 * shift.scale
    hy = (box.y_max - box.y_min) / 2 * shift.scale
    return ImageBox(
        float(np.clip(cx - hx, 0.0, 1.0)), float(np.clip(cy - hy, 0.0, 1.0)),
        float(np.clip(cx + hx, 0.0, 1.0)), float(np.clip(cy + hy, 0.0, 1.0)),
    )


GOAL_ZONE_LABEL = "goal zone"


def observe(
    state: SceneState,
    perturbation: PerturbationConfig = NO_PERTURBATION,
    seed: int = 0,
    task: Optional[TaskSpec] = None,
) -> Observation:
    """Agent-visible view of the scene under the configured shifts.

    The goal zone (when a task is supplied) appears in the main view as a
    labeled region so the policy can ground placements.
    """
    rng = np.random.default_rng([seed, state.tick])
    items: List[ObservedItem] = []

    def shifted_box(box: ImageBox) -> ImageBox:
        if perturbation.sensor is not None:
            box = _sensor_box(box, perturbation.sensor)
        if perturbation.lighting is not None and perturbation.lighting.position_sigma > 0:
            jitter = rng.normal(0.0, perturbation.lighting.position_sigma, size=2)
            box = ImageBox(
                float(np.clip(box.x_min + jitter[0], 0.0, 1.0)),
                float(np.clip(box.y_min + jitter[1], 0.0, 1.0)),
                float(np.clip(box.x_max + jitter[0], 0.0, 1.0)),
                float(np.clip(box.y_max + jitter[1], 0.0, 1.0)),
            )
        return box

    for o in state.objects:
        color: Optional[str] = o.color
        if (perturbation.lighting is not None
                and rng.uniform() < perturbation.lighting.color_dropout):
            color = None
        label = f"{color} {o.category}" if color else o.category
        items.append(ObservedItem(label, shifted_box(o.box), color))

    if task is not None:
        items.append(ObservedItem(GOAL_ZONE_LABEL, shifted_box(task.goal_zone), None))

    gx, gy = state.gripper.position
    wrist: List[WristItem] = []
    for o in state.objects:
        off = (o.position[0] - gx, o.position[1] - gy)
        d = math.hypot(*off)
        if d <= WRIST_RADIUS:
            wrist.append(WristItem(o.label, off))
    wrist.sort(key=lambda w: math.hypot(*w.offset))

    return Observation(
        main_view=tuple(items),
        wrist_view=tuple(wrist),
        proprio=(gx, gy, state.gripper.aperture),
        tick=state.tick,
    )


# ---------------------------------------------------------------------------
# Scripted expert

_NEAR_EPS = 0.015       # positional tolerance before switching to grasp/release
DETOUR_CLEARANCE = 0.16  # perpendicular clearance of the obstacle detour


def _toward(pos: Tuple[float, float], wp: Tuple[float, float]) -> Tuple[float, float]:
    # Uniform scaling (not per-component clipping) keeps the motion on the
    # straight segment toward the waypoint, which the obstacle detour relies on.
    dx = wp[0] - pos[0]
    dy = wp[1] - pos[1]
    m = max(MAX_STEP, abs(dx), abs(dy))
    return (dx / m, dy / m)


def _segment_hits_box(p, q, center, half) -> bool:
    """True if segment p->q passes within `half` (Chebyshev) of `center`."""
    steps = 32
    for i in range(steps + 1):
        t = i / steps
        x = p[0] + (q[0] - p[0]) * t
        y = p[1] + (q[1] - p[1]) * t
        if abs(x - center[0]) <= half and abs(y - center[1]) <= half:
            return True
    return False


def detour_waypoint(pos, goal, obstacle: SceneObject) -> Optional[Tuple[float, float]]:
    """Clearance waypoint that routes around `obstacle`, or None if the path is clear."""
    half = obstacle.half_extent + OBSTACLE_INFLATION + 0.02
    ox, oy = obstacle.position
    rel = (pos[0] - ox, pos[1] - oy)
    if abs(rel[0]) <= half and abs(rel[1]) <= half:
        # Inside the avoidance ball: escape radially outward.  Chebyshev
        # distance grows monotonically along the radial ray, so this can
        # never re-enter the (smaller) keep-out zone or oscillate.
        d = math.hypot(*rel)
        if d == 0.0:
            rel, d = (1.0, 0.0), 1.0
        wp = (ox + rel[0] / d * DETOUR_CLEARANCE, oy + rel[1] / d * DETOUR_CLEARANCE)
        return (float(np.clip(wp[0], 0.02, 0.98)), float(np.clip(wp[1], 0.02, 0.98)))
    if not _segment_hits_box(pos, goal, (ox, oy), half):
        return None
    dxy = (goal[0] - pos[0], goal[1] - pos[1])
    norm = math.hypot(*dxy)
    if norm == 0:
        return None
    perp = (-dxy[1] / norm, dxy[0] / norm)
    cands = [
        (ox + perp[0] * DETOUR_CLEARANCE, oy + perp[1] * DETOUR_CLEARANCE),
        (ox - perp[0] * DETOUR_CLEARANCE, oy - perp[1] * DETOUR_CLEARANCE),
    ]
    # Shorter total path wins; prefer the on-table side when tied.
    def cost(c):
        detour = math.hypot(c[0] - pos[0], c[1] - pos[1]) + math.hypot(goal[0] - c[0], goal[1] - c[1])
        return (detour, -min(c[0], c[1], 1 - c[0], 1 - c[1]))
    cands.sort(key=cost)
    return (float(np.clip(cands[0][0], 0.02, 0.98)), float(np.clip(cands[0][1], 0.02, 0.98)))


def _expert_waypoint(state: SceneState, goal: Tuple[float, float]) -> Tuple[float, float]:
    pos = state.gripper.position
    for o in state.objects:
        if o.category == "obstacle":
            wp = detour_waypoint(pos, goal, o)
            if wp is not None and math.hypot(wp[0] - pos[0], wp[1] - pos[1]) > 0.02:
                return wp
    return goal


def expert_policy(state: SceneState, task: TaskSpec) -> Tuple[float, float, float]:
    """One action of the deterministic phase-machine expert."""
    gripper = state.gripper
    pos = gripper.position
    target = state.object_by_id(task.target_id)

    if gripper.held_object != task.target_id:
        # Approach the target center, then close.
        d = math.hypot(target.position[0] - pos[0], target.position[1] - pos[1])
        if d > _NEAR_EPS:
            wp = _expert_waypoint(state, target.position)
            ax, ay = _toward(pos, wp)
            return (ax, ay, 1.0)
        ax, ay = _toward(pos, target.position)
        return (ax, ay, -1.0)

    if task.task_kind == PICK:
        if state.carry_distance < LIFT_EPS:
            ax, ay = _toward(pos, HOME_POSE)
            return (ax, ay, -1.0)
        return (0.0, 0.0, -1.0)

    goal = task.goal_zone.center
    goal_pos = (goal.x, goal.y)
    d = math.hypot(goal_pos[0] - pos[0], goal_pos[1] - pos[1])
    if d > _NEAR_EPS:
        wp = _expert_waypoint(state, goal_pos)
        ax, ay = _toward(pos, wp)
        return (ax, ay, -1.0)
    return (0.0, 0.0, 1.0)


def check_success(state: SceneState, task: TaskSpec) -> bool:
    target = state.object_by_id(task.target_id)
    if task.task_kind == PICK:
        return state.gripper.held_object == task.target_id and state.carry_distance >= LIFT_EPS
    goal = task.goal_zone.center
    placed = (
        math.hypot(target.position[0] - goal.x, target.position[1] - goal.y) <= PLACE_EPS
        and state.gripper.aperture >= 0.5
        and state.gripper.held_object is None
    )
    if task.task_kind == AVOID_OBSTACLE:
        return placed and not state.entered_obstacle
    return placed


def rollout_expert(
    seed: int,
    scenario: str,
    perturbation: PerturbationConfig = NO_PERTURBATION,
    max_steps: int = 400,
):
    """Roll the expert to success or budget; returns (states, actions, task).

    ``states`` has one more entry than ``actions``.
    """
    state, task = reset(seed, scenario, perturbation)
    rng = np.random.default_rng([seed, 0xE4be27])
    states = [state]
    actions: List[Tuple[float, float, float]] = []
    for _ in range(max_steps):
        if check_success(state, task):
            break
        a = expert_policy(state, task)
        state = step(state, a, perturbation, rng)
        states.append(state)
        actions.append(a)
    return states, actions, task
