"""Deterministic "Think" oracle.

Produces a structured reasoning record from (observation, instruction,
optional priors) and pools it into a fixed 32-dimensional memory vector for
the fast action head.  The oracle is intentionally simple and fully
verifiable; it sits behind small functions so a learned model could be
substituted without touching the runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from . import guide
from .codec import ImageBox, ImagePoint, ObjectRef, StructuredCot, box_iou, PATH_LEN
from .guide import BoxPrior, PointPrior, SpatialPrior, TracePrior
from .sim import (
    CANONICAL,
    COLORS,
    GOAL_ZONE_LABEL,
    HOME_POSE,
    Observation,
    PICK,
    canonical_word,
)

MEMORY_DIM = 32
PHASES = ("approach", "grasp", "transport", "release")
_PHASE_NEAR = 0.08  # path-anchor proximity that flips approach->grasp etc.
HELD_APERTURE = 0.5
HELD_OFFSET = 0.02  # wrist offset below which an object counts as held

RULE_INSTRUCTION = "instruction_match"
RULE_POINT_CONTAIN = "point_containment"
RULE_POINT_NEAREST = "point_nearest"
RULE_BOX_IOU = "box_iou"

_NON_PICKABLE = ("zone", "obstacle")


class GroundingError(ValueError):
    """Nothing in view matches the instruction and no prior was given."""


@dataclass(frozen=True)
class GroundingResult:
    picked: ObjectRef
    rule_used: str
    tie_broken: bool = False
    fallback: bool = False  # nearest-to-center fallback was used


@dataclass(frozen=True)
class ReasoningMemory:
    vector: np.ndarray
    produced_at_slow_tick: int
    cot: StructuredCot

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.shape != (MEMORY_DIM,) or not np.all(np.isfinite(v)):
            raise ValueError(f"memory vector must be {MEMORY_DIM} finite floats")
        object.__setattr__(self, "vector", v)


Priors = Union[None, SpatialPrior, Mapping[str, SpatialPrior]]


def _as_prior_map(prior: Priors) -> Dict[str, SpatialPrior]:
    if prior is None:
        return {}
    if isinstance(prior, Mapping):
        return dict(prior)
    return {prior.kind: prior}


def _category_of(label: str) -> str:
    return canonical_word(label.split()[-1]) if label else ""


def _pickable(items) -> List:
    return [it for it in items if _category_of(it.label) not in _NON_PICKABLE]


def _center(box: ImageBox) -> Tuple[float, float]:
    c = box.center
    return (c.x, c.y)


def _tiebreak(items):
    """Smallest box-center x, then y."""
    return sorted(items, key=lambda it: _center(it.box))


def _instruction_words(instruction: str) -> Tuple[Optional[str], Optional[str]]:
    """Extract the (color, category) the instruction refers to, lexicon-normalized."""
    color = None
    category = None
    for raw in instruction.replace(",", " ").split():
        w = canonical_word(raw.lower())
        if color is None and w in COLORS:
            color = w
        from .sim import SEEN_CATEGORIES, UNSEEN_CATEGORIES
        if category is None and w in SEEN_CATEGORIES + UNSEEN_CATEGORIES:
            category = w
    return color, category


def ground(
    observation: Observation,
    instruction: str,
    prior: Priors = None,
) -> GroundingResult:
    """Select the manipulation target from the main view.

    Box prior wins over point prior for target selection; without a prior the
    instruction's (color, category) words are matched exactly after lexicon
    normalization, ties broken by smallest box-center x then y.
    """
    items = _pickable(observation.main_view)
    if not items:
        raise GroundingError("main view holds no pickable objects")
    priors = _as_prior_map(prior)

    box_prior = priors.get("box")
    if isinstance(box_prior, BoxPrior):
        best_iou = max(box_iou(it.box, box_prior.box) for it in items)
        best = [it for it in items if box_iou(it.box, box_prior.box) == best_iou]
        chosen = _tiebreak(best)[0]
        return GroundingResult(ObjectRef(chosen.label, chosen.box), RULE_BOX_IOU,
                               tie_broken=len(best) > 1)

    point_prior = priors.get("point")
    if isinstance(point_prior, PointPrior):
        p = point_prior.point
        containing = [it for it in items if it.box.contains(p)]
        if containing:
            containing.sort(key=lambda it: (it.box.area,) + _center(it.box))
            chosen = containing[0]
            return GroundingResult(ObjectRef(chosen.label, chosen.box), RULE_POINT_CONTAIN,
                                   tie_broken=len(containing) > 1)
        chosen = min(items, key=lambda it: (math.hypot(_center(it.box)[0] - p.x,
                                                       _center(it.box)[1] - p.y),)
                     + _center(it.box))
        return GroundingResult(ObjectRef(chosen.label, chosen.box), RULE_POINT_NEAREST)

    color, category = _instruction_words(instruction)
    candidates = []
    for it in items:
        it_color = canonical_word(it.color) if it.color else None
        it_cat = _category_of(it.label)
        if category is not None and it_cat != category:
            continue
        if color is not None and it_color != color:
            continue
        candidates.append(it)
    if not candidates:
        # Graceful OOD fallback: nearest to image center, flagged.
        chosen = min(items, key=lambda it: (math.hypot(_center(it.box)[0] - 0.5,
                                                       _center(it.box)[1] - 0.5),)
                     + _center(it.box))
        return GroundingResult(ObjectRef(chosen.label, chosen.box), RULE_INSTRUCTION,
                               fallback=True)
    ordered = _tiebreak(candidates)
    return GroundingResult(ObjectRef(ordered[0].label, ordered[0].box), RULE_INSTRUCTION,
                           tie_broken=len(candidates) > 1)


# ---------------------------------------------------------------------------
# Planning


def _is_held(observation: Observation) -> bool:
    if observation.proprio[2] >= HELD_APERTURE:
        return False
    return any(math.hypot(*w.offset) < HELD_OFFSET for w in observation.wrist_view)


def _place_referent(observation: Observation, instruction: str,
                    pick_label: str) -> Optional[ObjectRef]:
    """Placement anchor: an 'on the X' object, else the goal zone, else None."""
    lowered = instruction.lower()
    if " on the " in lowered:
        wanted = lowered.split(" on the ", 1)[1].strip()
        for it in observation.main_view:
            if it.label.lower() == wanted and it.label != pick_label:
                return ObjectRef(it.label, it.box)
    for it in observation.main_view:
        if it.label == GOAL_ZONE_LABEL:
            return ObjectRef(it.label, it.box)
    return None


def _interp_path(start: Tuple[float, float], end: Tuple[float, float],
                 m: int = PATH_LEN) -> Tuple[ImagePoint, ...]:
    def clamp(v: float) -> float:
        return min(1.0, max(0.0, v))

    return tuple(
        ImagePoint(clamp(start[0] + (end[0] - start[0]) * i / (m - 1)),
                   clamp(start[1] + (end[1] - start[1]) * i / (m - 1)))
        for i in range(m)
    )


_TRACE_DENSE = 64


def _trace_path(points: Tuple[ImagePoint, ...],
                gripper: Tuple[float, float]) -> Tuple[ImagePoint, ...]:
    """Remaining leg of a guidance trace, anchored at the gripper's progress.

    A trace prior is issued once but replanned against many times; waypoints
    already passed must not re-enter the path or they drag the policy
    backwards.  We resample densely, cut at the sample nearest the gripper,
    and keep the suffix.
    """
    if guide.arc_length(points) <= 0.0:
        return (points[0],) * PATH_LEN
    dense = guide.resample_trace(points, _TRACE_DENSE)
    nearest = min(
        range(len(dense)),
        key=lambda i: (dense[i].x - gripper[0]) ** 2 + (dense[i].y - gripper[1]) ** 2,
    )
    suffix = dense[nearest:]
    if len(suffix) < 2 or guide.arc_length(suffix) <= 0.0:
        return (dense[-1],) * PATH_LEN
    return tuple(guide.resample_trace(suffix, PATH_LEN))


def plan_cot(
    observation: Observation,
    instruction: str,
    prior: Priors = None,
    task_kind: str = "pick_and_place",
) -> StructuredCot:
    return plan(observation, instruction, prior, task_kind).cot


@dataclass(frozen=True)
class PlanResult:
    cot: StructuredCot
    grounding: GroundingResult


def plan(
    observation: Observation,
    instruction: str,
    prior: Priors = None,
    task_kind: str = "pick_and_place",
) -> PlanResult:
    """Full Think step: grounding plus the structured reasoning record."""
    priors = _as_prior_map(prior)
    grounding = ground(observation, instruction, priors if priors else None)
    pick = grounding.picked

    if task_kind == PICK:
        subtasks = (f"grasp the {pick.label}", f"lift the {pick.label}")
        place = None
    else:
        place = _place_referent(observation, instruction, pick.label)
        where = f"on the {place.label}" if place is not None and place.label != GOAL_ZONE_LABEL \
            else f"in the {GOAL_ZONE_LABEL}"
        subtasks = (f"grasp the {pick.label}", f"place the {pick.label} {where}")

    held = _is_held(observation)
    current = subtasks[1] if held else subtasks[0]

    objects = tuple(ObjectRef(it.label, it.box) for it in observation.main_view)

    gripper = (observation.proprio[0], observation.proprio[1])

    if held:
        # Once grasped, the grounding prior has served its purpose: track the
        # object in hand (the pickable item riding the gripper) so the
        # affordance stays anchored to it during transport.
        candidates = _pickable(observation.main_view)
        nearest = min(
            candidates,
            key=lambda it: (it.box.center.x - gripper[0]) ** 2
            + (it.box.center.y - gripper[1]) ** 2,
        )
        pick = ObjectRef(nearest.label, nearest.box)
        affordance = pick.box.center
    else:
        point_prior = priors.get("point")
        if isinstance(point_prior, PointPrior) and pick.box.contains(
                point_prior.point):
            # Honor the exact click while it still lies on the picked object;
            # once the object has been nudged away from the clicked spot the
            # point is stale and the observed box center is the live target.
            affordance = point_prior.point
        else:
            affordance = pick.box.center

    trace_prior = priors.get("trace")
    if isinstance(trace_prior, TracePrior) and not held:
        path = _trace_path(trace_prior.points, gripper)
    elif held:
        if place is not None:
            end = _center(place.box)
        elif task_kind == PICK:
            end = HOME_POSE
        else:
            end = (affordance.x, affordance.y)
        path = _interp_path(gripper, end)
    else:
        path = _interp_path(gripper, (affordance.x, affordance.y))

    cot = StructuredCot(
        task=instruction,
        subtasks=subtasks,
        current=current,
        objects=objects,
        pick=pick,
        affordance=affordance,
        gripper_path=path,
    )
    return PlanResult(cot=cot, grounding=grounding)


# ---------------------------------------------------------------------------
# Memory encoding


def _phase_of(cot: StructuredCot) -> str:
    anchor = cot.gripper_path[0] if cot.gripper_path else None
    grasp_leg = cot.current == cot.subtasks[0]
    if grasp_leg:
        if (anchor is not None and cot.affordance is not None
                and math.hypot(anchor.x - cot.affordance.x,
                               anchor.y - cot.affordance.y) < _PHASE_NEAR):
            return "grasp"
        return "approach"
    if anchor is not None and cot.gripper_path and math.hypot(
            anchor.x - cot.gripper_path[-1].x, anchor.y - cot.gripper_path[-1].y) < _PHASE_NEAR:
        return "release"
    return "transport"


def encode_memory(cot: StructuredCot, slow_tick: int) -> ReasoningMemory:
    """Pool a reasoning record into the fixed 32-entry layout.

    [0:4] pick box, [4:6] affordance, [6:16] five path waypoints,
    [16:20] phase one-hot, [20:32] zero padding; absent fields encode as zeros.
    """
    v = np.zeros(MEMORY_DIM, dtype=np.float64)
    if cot.pick is not None:
        b = cot.pick.box
        v[0:4] = (b.x_min, b.y_min, b.x_max, b.y_max)
    if cot.affordance is not None:
        v[4:6] = (cot.affordance.x, cot.affordance.y)
    for i, p in enumerate(cot.gripper_path[:PATH_LEN]):
        v[6 + 2 * i] = p.x
        v[7 + 2 * i] = p.y
    v[16 + PHASES.index(_phase_of(cot))] = 1.0
    return ReasoningMemory(vector=v, produced_at_slow_tick=slow_tick, cot=cot)


# ---------------------------------------------------------------------------
# CoT field ablation

DROP_TASK = "task"
DROP_VISION = "vision"
DROP_ROBOT = "robot"


def ablate_cot(cot: StructuredCot, drop: Iterable[str]) -> StructuredCot:
    """Clear the selected reasoning context (task / vision / robot).

    ``task`` collapses the subtask decomposition to the bare instruction;
    ``vision`` clears everything grounded in the image: the object list, the
    pick, the affordance, and the 2D motion sketch.  ``robot`` leaves the
    record itself untouched -- the robot context lives in the proprioceptive
    echo the fast loop conditions on, which the runtime zeroes instead.
    """
    drop = frozenset(drop)
    unknown = drop - {DROP_TASK, DROP_VISION, DROP_ROBOT}
    if unknown:
        raise ValueError(f"unknown ablation fields {sorted(unknown)}")
    out = cot
    if DROP_TASK in drop:
        out = replace(out, subtasks=(out.task,), current=out.task)
    if DROP_VISION in drop:
        out = replace(out, objects=(), pick=None, affordance=None,
                      gripper_path=())
    return out
