"""Bit-exact text codec for structured reasoning records.

The reasoning record is serialized into a delimiter-based text format with all
image coordinates quantized to integer bins in [0, 999].  The serializer emits
one canonical form (documented in ``docs/format.md``); the parser accepts
flexible surrounding whitespace but is strict about delimiter spelling and
coordinate syntax.  ``parse_cot(serialize_cot(c))`` recovers ``c`` with every
coordinate snapped to its bin center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

COORD_SCALE = 1000
PATH_LEN = 5  # fixed waypoint count of the motion sketch

_DELIMITERS = (
    "<|cot_start|>", "<|cot_end|>",
    "<TASK>", "</TASK>", "<SUBTASKS>", "</SUBTASKS>", "<CURRENT>", "</CURRENT>",
    "<|objects_start|>", "<|objects_end|>",
    "<|pick_start|>", "<|pick_end|>",
    "<|box_start|>", "<|box_end|>",
    "<|affordance_2d_start|>", "<|affordance_2d_end|>",
    "<|gripper_path_2d_start|>", "<|gripper_path_2d_end|>",
)


class CoordDomainError(ValueError):
    """Coordinate outside its legal domain."""


class CotValidationError(ValueError):
    """A structured record violates a field invariant.

    ``field`` names the first violated field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CotParseError(ValueError):
    """Base class for parse failures."""


class CotSyntaxError(CotParseError):
    """Missing or malformed delimiter / coordinate syntax.

    ``offset`` is the byte offset of the failure in the input text.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class CotSemanticError(CotParseError):
    """Structurally valid text whose fields violate record invariants."""


class CotRangeError(CotSemanticError):
    """Quantized coordinate outside [0, 999]."""


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class ImagePoint:
    x: float
    y: float

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y)):
            if not (0.0 <= v <= 1.0):
                raise CotValidationError(name, f"coordinate {v!r} outside [0, 1]")


@dataclass(frozen=True)
class ImageBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise CotValidationError(name, f"coordinate {v!r} outside [0, 1]")
        if not self.x_min < self.x_max:
            raise CotValidationError("x_min", "x_min >= x_max")
        if not self.y_min < self.y_max:
            raise CotValidationError("y_min", "y_min >= y_max")

    @property
    def center(self) -> ImagePoint:
        return ImagePoint((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, p: ImagePoint) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max


def box_iou(a: ImageBox, b: ImageBox) -> float:
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def _check_text(field: str, text: str, forbid_arrow: bool = False) -> None:
    if not text.strip():
        raise CotValidationError(field, "empty text")
    if "\n" in text:
        raise CotValidationError(field, "text contains a newline")
    for tok in _DELIMITERS:
        if tok in text:
            raise CotValidationError(field, f"text contains delimiter token {tok!r}")
    if forbid_arrow and " -> " in text:
        raise CotValidationError(field, "text contains the subtask separator ' -> '")


@dataclass(frozen=True)
class ObjectRef:
    label: str
    box: ImageBox

    def __post_init__(self):
        _check_text("label", self.label)


@dataclass(frozen=True)
class StructuredCot:
    """Three-part reasoning record: task decomposition, visual grounding, motion sketch."""

    task: str
    subtasks: Tuple[str, ...]
    current: str
    objects: Tuple[ObjectRef, ...] = ()
    pick: Optional[ObjectRef] = None
    affordance: Optional[ImagePoint] = None
    gripper_path: Tuple[ImagePoint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "subtasks", tuple(self.subtasks))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "gripper_path", tuple(self.gripper_path))
        _check_text("task", self.task)
        if not self.subtasks:
            raise CotValidationError("subtasks", "at least one subtask required")
        for s in self.subtasks:
            _check_text("subtasks", s, forbid_arrow=True)
        _check_text("current", self.current, forbid_arrow=True)
        if self.current not in self.subtasks:
            raise CotValidationError("current", "current is not one of the subtasks")
        if self.pick is not None and self.pick not in self.objects:
            raise CotValidationError("pick", "pick does not match any objects entry")
        if self.gripper_path and len(self.gripper_path) != PATH_LEN:
            raise CotValidationError(
                "gripper_path", f"path has {len(self.gripper_path)} waypoints, expected {PATH_LEN}"
            )


# ---------------------------------------------------------------------------
# Coordinate quantization

# Small epsilon absorbs float noise when a product like 0.437*1000 lands a hair
# below the intended integer; it is far smaller than a bin, so monotonicity holds.
_QUANT_EPS = 1e-9


def quantize_coord(v: float) -> int:
    """Map a normalized coordinate in [0, 1] to an integer bin in [0, 999]."""
    if not (0.0 <= v <= 1.0):
        raise CoordDomainError(f"coordinate {v!r} outside [0, 1]")
    return min(int(math.floor(v * COORD_SCALE + _QUANT_EPS)), COORD_SCALE - 1)


def dequantize_coord(q: int) -> float:
    """Return the center of bin ``q``; right inverse of :func:`quantize_coord`."""
    if not (0 <= q <= COORD_SCALE - 1):
        raise CoordDomainError(f"bin index {q!r} outside [0, {COORD_SCALE - 1}]")
    return (q + 0.5) / COORD_SCALE


def _qpair(p: ImagePoint) -> str:
    return f"({quantize_coord(p.x)},{quantize_coord(p.y)})"


def _qbox(b: ImageBox) -> str:
    q = (quantize_coord(b.x_min), quantize_coord(b.y_min),
         quantize_coord(b.x_max), quantize_coord(b.y_max))
    if q[0] >= q[2] or q[1] >= q[3]:
        raise CotValidationError("box", "box collapses to a degenerate box under quantization")
    return f"({q[0]},{q[1]}),({q[2]},{q[3]})"


def snap_point(p: ImagePoint) -> ImagePoint:
    """Snap a point to its quantization bin center."""
    return ImagePoint(dequantize_coord(quantize_coord(p.x)), dequantize_coord(quantize_coord(p.y)))


def snap_box(b: ImageBox) -> ImageBox:
    return ImageBox(
        dequantize_coord(quantize_coord(b.x_min)), dequantize_coord(quantize_coord(b.y_min)),
        dequantize_coord(quantize_coord(b.x_max)), dequantize_coord(quantize_coord(b.y_max)),
    )


def snap_cot(c: StructuredCot) -> StructuredCot:
    """The record ``parse_cot(serialize_cot(c))`` returns: bin-center coordinates."""
    return replace(
        c,
        objects=tuple(ObjectRef(o.label, snap_box(o.box)) for o in c.objects),
        pick=None if c.pick is None else ObjectRef(c.pick.label, snap_box(c.pick.box)),
        affordance=None if c.affordance is None else snap_point(c.affordance),
        gripper_path=tuple(snap_point(p) for p in c.gripper_path),
    )


# ---------------------------------------------------------------------------
# Serialization


def _object_line(obj: ObjectRef) -> str:
    return f"{obj.label} <|box_start|> {_qbox(obj.box)} <|box_end|>"


def serialize_cot(cot: StructuredCot) -> str:
    """Emit the canonical text form of a reasoning record.

    Output is byte-deterministic; blocks are separated by one blank line with
    the closing ``<|cot_end|>`` directly after the last block.
    """
    blocks = [
        "<|cot_start|>\n<TASK> " + cot.task + " </TASK>",
        "<SUBTASKS>\n" + " -> ".join(cot.subtasks) + "\n</SUBTASKS>",
        "<CURRENT>\n" + cot.current + "\n</CURRENT>",
        "<|objects_start|>\n"
        + "".join(_object_line(o) + "\n" for o in cot.objects)
        + "<|objects_end|>",
    ]
    if cot.pick is not None:
        blocks.append("<|pick_start|>\n" + _object_line(cot.pick) + "\n<|pick_end|>")
    if cot.affordance is not None:
        blocks.append(
            "<|affordance_2d_start|>\n" + _qpair(cot.affordance) + "\n<|affordance_2d_end|>"
        )
    if cot.gripper_path:
        blocks.append(
            "<|gripper_path_2d_start|>\n"
            + ";".join(_qpair(p) for p in cot.gripper_path)
            + "\n<|gripper_path_2d_end|>"
        )
    return "\n\n".join(blocks) + "\n<|cot_end|>"


# ---------------------------------------------------------------------------
# Parsing


class _Cursor:
    __slots__ = ("text", "pos")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        t, n = self.text, len(self.text)
        i = self.pos
        while i < n and t[i] in " \t\r\n":
            i += 1
        self.pos = i

    def at(self, literal: str) -> bool:
        return self.text.startswith(literal, self.pos)

    def expect(self, literal: str) -> None:
        self.skip_ws()
        if not self.at(literal):
            raise CotSyntaxError(f"expected {literal!r}", self.pos)
        self.pos += len(literal)

    def take(self, literal: str) -> bool:
        self.skip_ws()
        if self.at(literal):
            self.pos += len(literal)
            return True
        return False

    def until(self, literal: str) -> str:
        """Consume text up to ``literal`` (also consumed); return the stripped text."""
        idx = self.text.find(literal, self.pos)
        if idx < 0:
            raise CotSyntaxError(f"missing closing {literal!r}", self.pos)
        chunk = self.text[self.pos : idx]
        self.pos = idx + len(literal)
        return chunk.strip()

    def quantized(self) -> int:
        self.skip_ws()
        start = self.pos
        t, n = self.text, len(self.text)
        i = start
        while i < n and t[i].isdigit():
            i += 1
        if i == start:
            raise CotSyntaxError("expected a coordinate integer", start)
        digits = t[start:i]
        if len(digits) > 1 and digits[0] == "0":
            raise CotSyntaxError("coordinate has a leading zero", start)
        self.pos = i
        value = int(digits)
        if value > COORD_SCALE - 1:
            raise CotRangeError(f"coordinate {value} outside [0, {COORD_SCALE - 1}]")
        return value

    def point(self) -> ImagePoint:
        self.expect("(")
        x = self.quantized()
        self.expect(",")
        y = self.quantized()
        self.expect(")")
        return ImagePoint(dequantize_coord(x), dequantize_coord(y))

    def box(self) -> ImageBox:
        p1 = self.point()
        self.expect(",")
        p2 = self.point()
        if p1.x >= p2.x:
            raise CotSemanticError("box not well-ordered: x_min >= x_max")
        if p1.y >= p2.y:
            raise CotSemanticError("box not well-ordered: y_min >= y_max")
        return ImageBox(p1.x, p1.y, p2.x, p2.y)

    def object_ref(self, end_token: str) -> ObjectRef:
        self.skip_ws()
        idx = self.text.find("<|box_start|>", self.pos)
        end_idx = self.text.find(end_token, self.pos)
        if idx < 0 or (0 <= end_idx < idx):
            raise CotSyntaxError("expected an object entry with '<|box_start|>'", self.pos)
        label = self.text[self.pos : idx].strip()
        if not label:
            raise CotSyntaxError("empty object label", self.pos)
        if "\n" in label:
            raise CotSyntaxError("object label spans multiple lines", self.pos)
        self.pos = idx + len("<|box_start|>")
        box = self.box()
        self.expect("<|box_end|>")
        return ObjectRef(label, box)


def parse_cot(text: str) -> StructuredCot:
    """Parse a serialized reasoning record; inverse of :func:`serialize_cot`.

    Raises :class:`CotSyntaxError` (with byte offset) on delimiter or
    coordinate-syntax failures and :class:`CotSemanticError` on invariant
    violations; never raises anything else on arbitrary input.
    """
    cur = _Cursor(text)
    cur.expect("<|cot_start|>")
    cur.expect("<TASK>")
    task = cur.until("</TASK>")
    if not task:
        raise CotSemanticError("empty task text")
    cur.expect("<SUBTASKS>")
    raw_subtasks = cur.until("</SUBTASKS>")
    subtasks = tuple(s.strip() for s in raw_subtasks.split(" -> "))
    if any(not s for s in subtasks):
        raise CotSemanticError("empty subtask text")
    cur.expect("<CURRENT>")
    current = cur.until("</CURRENT>")
    if not current:
        raise CotSemanticError("empty current-subtask text")
    if current not in subtasks:
        raise CotSemanticError("current subtask does not match any listed subtask")

    cur.expect("<|objects_start|>")
    objects = []
    while not cur.take("<|objects_end|>"):
        objects.append(cur.object_ref("<|objects_end|>"))

    pick = None
    if cur.take("<|pick_start|>"):
        pick = cur.object_ref("<|pick_end|>")
        cur.expect("<|pick_end|>")
        if pick not in objects:
            raise CotSemanticError("pick entry does not match any objects entry")

    affordance = None
    if cur.take("<|affordance_2d_start|>"):
        affordance = cur.point()
        cur.expect("<|affordance_2d_end|>")

    path: Tuple[ImagePoint, ...] = ()
    if cur.take("<|gripper_path_2d_start|>"):
        pts = [cur.point()]
        while cur.take(";"):
            pts.append(cur.point())
        cur.expect("<|gripper_path_2d_end|>")
        if len(pts) != PATH_LEN:
            raise CotSemanticError(f"gripper path has {len(pts)} waypoints, expected {PATH_LEN}")
        path = tuple(pts)

    cur.expect("<|cot_end|>")
    cur.skip_ws()
    if cur.pos != len(cur.text):
        raise CotSyntaxError("trailing content after '<|cot_end|>'", cur.pos)

    try:
        return StructuredCot(
            task=task,
            subtasks=subtasks,
            current=current,
            objects=tuple(objects),
            pick=pick,
            affordance=affordance,
            gripper_path=path,
        )
    except CotValidationError as exc:  # e.g. delimiter tokens inside text fields
        raise CotSemanticError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Spatial-prior fragments (the "Guide" wire form)


def serialize_prior(prior) -> str:
    """Serialize a spatial prior as a text fragment in the coordinate grammar.

    Accepts the tagged union from :mod:`steertab.guide` (Point / Box / Trace).
    """
    from . import guide  # local import to avoid a cycle

    guide.validate_prior(prior)
    if isinstance(prior, guide.PointPrior):
        return f"<|affordance_2d_start|> {_qpair(prior.point)} <|affordance_2d_end|>"
    if isinstance(prior, guide.BoxPrior):
        return f"<|box_start|> {_qbox(prior.box)} <|box_end|>"
    if isinstance(prior, guide.TracePrior):
        pts = ";".join(_qpair(p) for p in prior.points)
        return f"<|gripper_path_2d_start|> {pts} <|gripper_path_2d_end|>"
    raise CotValidationError("prior", f"unknown prior type {type(prior).__name__}")


def attach_prior(instruction: str, prior) -> str:
    """Append a serialized prior fragment to an instruction after one space."""
    return instruction + " " + serialize_prior(prior)
