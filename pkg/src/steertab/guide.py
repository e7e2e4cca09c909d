"""Spatial priors: the tagged guidance union, validation, and trace construction.

A prior is sparse geometric guidance in normalized image coordinates: a single
point (interaction anchor), a box (target region), or an ordered trace
(coarse motion path).  Priors are plain immutable values; queueing semantics
live in :mod:`steertab.runtime`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

from .codec import ImageBox, ImagePoint


class PriorValidationError(ValueError):
    """A spatial prior violates its invariants; message names the constraint."""


@dataclass(frozen=True)
class PointPrior:
    point: ImagePoint

    kind = "point"


@dataclass(frozen=True)
class BoxPrior:
    box: ImageBox

    kind = "box"


@dataclass(frozen=True)
class TracePrior:
    points: Tuple[ImagePoint, ...]

    kind = "trace"

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))


SpatialPrior = Union[PointPrior, BoxPrior, TracePrior]

UP_FRONT = "up_front"
MID_EPISODE = "mid_episode"


@dataclass(frozen=True)
class GuidanceEvent:
    prior: SpatialPrior
    timing: str  # UP_FRONT | MID_EPISODE
    source: str = "user"  # user | scripted | oracle
    issued_at: int = 0  # fast-tick index

    def __post_init__(self):
        if self.timing not in (UP_FRONT, MID_EPISODE):
            raise PriorValidationError(f"unknown timing {self.timing!r}")
        if self.timing == UP_FRONT and self.issued_at != 0:
            raise PriorValidationError("up-front events must have issued_at = 0")
        validate_prior(self.prior)

    def to_json(self) -> dict:
        return {
            "prior": prior_to_json(self.prior),
            "timing": self.timing,
            "source": self.source,
            "issued_at": self.issued_at,
        }

    @staticmethod
    def from_json(data: dict) -> "GuidanceEvent":
        return GuidanceEvent(
            prior=prior_from_json(data["prior"]),
            timing=data["timing"],
            source=data.get("source", "user"),
            issued_at=int(data.get("issued_at", 0)),
        )


def prior_to_json(prior: SpatialPrior) -> dict:
    if isinstance(prior, PointPrior):
        return {"kind": "point", "x": prior.point.x, "y": prior.point.y}
    if isinstance(prior, BoxPrior):
        b = prior.box
        return {"kind": "box", "x_min": b.x_min, "y_min": b.y_min,
                "x_max": b.x_max, "y_max": b.y_max}
    if isinstance(prior, TracePrior):
        return {"kind": "trace", "points": [[p.x, p.y] for p in prior.points]}
    raise PriorValidationError(f"unknown prior type {type(prior).__name__}")


def prior_from_json(data: dict) -> SpatialPrior:
    kind = data.get("kind")
    try:
        if kind == "point":
            return PointPrior(ImagePoint(float(data["x"]), float(data["y"])))
        if kind == "box":
            return BoxPrior(ImageBox(float(data["x_min"]), float(data["y_min"]),
                                     float(data["x_max"]), float(data["y_max"])))
        if kind == "trace":
            pts = tuple(ImagePoint(float(x), float(y)) for x, y in data["points"])
            prior = TracePrior(pts)
            validate_prior(prior)
            return prior
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PriorValidationError):
            raise
        raise PriorValidationError(f"malformed prior payload: {exc}") from exc
    raise PriorValidationError(f"unknown prior kind {kind!r}")


def validate_prior(prior: SpatialPrior) -> None:
    """Raise :class:`PriorValidationError` naming the first violated constraint."""
    if isinstance(prior, PointPrior):
        if not isinstance(prior.point, ImagePoint):
            raise PriorValidationError("point prior needs an ImagePoint")
        return
    if isinstance(prior, BoxPrior):
        if not isinstance(prior.box, ImageBox):
            raise PriorValidationError("box prior needs an ImageBox")
        # ImageBox enforces ordering at construction; re-check for clarity.
        if not prior.box.x_min < prior.box.x_max:
            raise PriorValidationError("x_min >= x_max")
        if not prior.box.y_min < prior.box.y_max:
            raise PriorValidationError("y_min >= y_max")
        return
    if isinstance(prior, TracePrior):
        # A fully-degenerate trace (all points equal) is a valid "stay here"
        # cue, so only the length is enforced.
        if len(prior.points) < 2:
            raise PriorValidationError("trace needs >= 2 points")
        return
    raise PriorValidationError(f"unknown prior type {type(prior).__name__}")


def _dist(a: ImagePoint, b: ImagePoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def arc_length(points: Sequence[ImagePoint]) -> float:
    return sum(_dist(a, b) for a, b in zip(points, points[1:]))


def resample_trace(points: Sequence[ImagePoint], m: int) -> List[ImagePoint]:
    """Resample a polyline to ``m`` points equally spaced by arc length.

    The first and last input points are preserved exactly.
    """
    if len(points) < 2:
        raise PriorValidationError("trace needs >= 2 points")
    if m < 2:
        raise PriorValidationError("resample target m must be >= 2")
    total = arc_length(points)
    if total <= 0.0:
        raise PriorValidationError("degenerate zero-length polyline")

    out: List[ImagePoint] = [points[0]]
    seg = 0  # index of the segment currently being consumed
    seg_start = 0.0  # cumulative length at the start of that segment
    for i in range(1, m - 1):
        target = total * i / (m - 1)
        while True:
            seg_len = _dist(points[seg], points[seg + 1])
            if seg_start + seg_len >= target or seg == len(points) - 2:
                break
            seg_start += seg_len
            seg += 1
        a, b = points[seg], points[seg + 1]
        seg_len = _dist(a, b)
        t = 0.0 if seg_len == 0.0 else (target - seg_start) / seg_len
        out.append(ImagePoint(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t))
    out.append(points[-1])
    return out


def make_eval_trace(gripper: ImagePoint, target_box: ImageBox, m: int = 5) -> TracePrior:
    """Linear evaluation trace: ``m`` waypoints from the gripper to the box center."""
    if m < 2:
        raise PriorValidationError("trace length m must be >= 2")
    c = target_box.center
    pts = tuple(
        ImagePoint(
            gripper.x + (c.x - gripper.x) * i / (m - 1),
            gripper.y + (c.y - gripper.y) * i / (m - 1),
        )
        for i in range(m)
    )
    prior = TracePrior(pts)
    validate_prior(prior)
    return prior
