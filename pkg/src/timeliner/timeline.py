"""Action taxonomy, interval timelines and frame-level annotation vectors.

A :class:`Timeline` is the user-facing control signal: per-region lists of
half-open ``[start, end)`` action intervals. An :class:`AnnotationSequence` is
the equivalent frame-level encoding, one 16-wide 0/1 vector per frame.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError


class Region(str, Enum):
    BROW = "Brow"
    EYE = "Eye"
    MOUTH = "Mouth"
    GAZE = "Gaze"
    HEAD = "Head"

    @property
    def actions(self) -> tuple["Action", ...]:
        return tuple(a for a in Action if a.region is self)

    @property
    def columns(self) -> list[int]:
        return [a.index for a in self.actions]


class Action(str, Enum):
    BROW_UP = "BrowUp"
    BROW_DOWN = "BrowDown"
    EYE_SQUINT = "EyeSquint"
    EYE_WIDEN = "EyeWiden"
    EYE_CLOSE = "EyeClose"
    SOFT_SMILE = "SoftSmile"
    SMILE = "Smile"
    MOUTH_FROWN = "MouthFrown"
    GAZE_LEFT = "GazeLeft"
    GAZE_RIGHT = "GazeRight"
    GAZE_UP = "GazeUp"
    GAZE_DOWN = "GazeDown"
    HEAD_LEFT = "HeadLeft"
    HEAD_RIGHT = "HeadRight"
    HEAD_UP = "HeadUp"
    HEAD_DOWN = "HeadDown"

    @property
    def region(self) -> Region:
        return _ACTION_REGION[self]

    @property
    def index(self) -> int:
        return _ACTION_INDEX[self]


ACTIONS: tuple[Action, ...] = tuple(Action)
NUM_ACTIONS = len(ACTIONS)
ACTION_NAMES: tuple[str, ...] = tuple(a.value for a in ACTIONS)

_ACTION_REGION = {
    **{a: Region.BROW for a in (Action.BROW_UP, Action.BROW_DOWN)},
    **{a: Region.EYE for a in (Action.EYE_SQUINT, Action.EYE_WIDEN, Action.EYE_CLOSE)},
    **{a: Region.MOUTH for a in (Action.SOFT_SMILE, Action.SMILE, Action.MOUTH_FROWN)},
    **{a: Region.GAZE for a in (Action.GAZE_LEFT, Action.GAZE_RIGHT, Action.GAZE_UP, Action.GAZE_DOWN)},
    **{a: Region.HEAD for a in (Action.HEAD_LEFT, Action.HEAD_RIGHT, Action.HEAD_UP, Action.HEAD_DOWN)},
}
_ACTION_INDEX = {a: i for i, a in enumerate(Action)}

# Mutually exclusive action groups. EyeClose is deliberately absent: closure
# may overlay squint or widen. Horizontal and vertical axes combine freely.
CONFLICT_SETS: tuple[frozenset[Action], ...] = (
    frozenset({Action.BROW_UP, Action.BROW_DOWN}),
    frozenset({Action.EYE_SQUINT, Action.EYE_WIDEN}),
    frozenset({Action.SOFT_SMILE, Action.SMILE, Action.MOUTH_FROWN}),
    frozenset({Action.GAZE_LEFT, Action.GAZE_RIGHT}),
    frozenset({Action.GAZE_UP, Action.GAZE_DOWN}),
    frozenset({Action.HEAD_LEFT, Action.HEAD_RIGHT}),
    frozenset({Action.HEAD_UP, Action.HEAD_DOWN}),
)
_CONFLICT_COLUMNS = [sorted(a.index for a in cs) for cs in CONFLICT_SETS]


def parse_action(name: str | Action) -> Action:
    if isinstance(name, Action):
        return name
    try:
        return Action(name)
    except ValueError:
        raise DataError(f"unknown action {name!r}") from None


def parse_region(name: str | Region) -> Region:
    if isinstance(name, Region):
        return name
    for r in Region:
        if r.value.lower() == str(name).lower():
            return r
    raise DataError(f"unknown region {name!r}")


@dataclass(frozen=True)
class Interval:
    action: Action
    start: int
    end: int

    def __post_init__(self):
        object.__setattr__(self, "action", parse_action(self.action))
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "end", int(self.end))

    @property
    def length(self) -> int:
        return self.end - self.start

    def to_dict(self) -> dict:
        return {"action": self.action.value, "start": self.start, "end": self.end}


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    frame: int | None = None
    interval: Interval | None = None

    def __str__(self):
        where = f" at frame {self.frame}" if self.frame is not None else ""
        return f"[{self.rule}]{where}: {self.message}"


@dataclass(frozen=True)
class Timeline:
    num_frames: int
    fps: float = 30.0
    tracks: dict[Region, tuple[Interval, ...]] = field(default_factory=dict)

    def __post_init__(self):
        tracks = {r: () for r in Region}
        for key, ivs in dict(self.tracks).items():
            tracks[parse_region(key)] = tuple(ivs)
        object.__setattr__(self, "tracks", tracks)
        object.__setattr__(self, "num_frames", int(self.num_frames))
        object.__setattr__(self, "fps", float(self.fps))

    @classmethod
    def from_intervals(cls, num_frames: int, intervals, fps: float = 30.0) -> "Timeline":
        tracks: dict[Region, list[Interval]] = {r: [] for r in Region}
        for iv in intervals:
            tracks[iv.action.region].append(iv)
        return cls(num_frames, fps, {r: tuple(v) for r, v in tracks.items()})

    @property
    def intervals(self) -> list[Interval]:
        return [iv for r in Region for iv in self.tracks[r]]

    def normalized(self) -> "Timeline":
        """Sorted tracks with overlapping or touching same-action intervals merged."""
        out = {}
        for r in Region:
            merged: list[Interval] = []
            for a in r.actions:
                runs = sorted((iv.start, iv.end) for iv in self.tracks[r] if iv.action is a)
                cur = None
                for s, e in runs:
                    if cur is not None and s <= cur[1]:
                        cur[1] = max(cur[1], e)
                    else:
                        if cur is not None:
                            merged.append(Interval(a, cur[0], cur[1]))
                        cur = [s, e]
                if cur is not None:
                    merged.append(Interval(a, cur[0], cur[1]))
            out[r] = tuple(sorted(merged, key=lambda iv: (iv.start, iv.action.index)))
        return Timeline(self.num_frames, self.fps, out)

    def to_dict(self) -> dict:
        return {
            "num_frames": self.num_frames,
            "fps": self.fps,
            "tracks": {r.value: [iv.to_dict() for iv in self.tracks[r]] for r in Region},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Timeline":
        try:
            tracks = {
                parse_region(r): tuple(Interval(iv["action"], iv["start"], iv["end"]) for iv in ivs)
                for r, ivs in d.get("tracks", {}).items()
            }
            return cls(int(d["num_frames"]), float(d.get("fps", 30.0)), tracks)
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed timeline JSON: {exc}") from exc

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "Timeline":
        return cls.from_dict(json.loads(_read_text(source, "{")))


@dataclass(frozen=True, eq=False)
class AnnotationSequence:
    """Per-frame 16-wide binary action vectors in :data:`ACTIONS` order."""

    values: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.int8, copy=True)
        if v.ndim == 1 and v.size == 0:
            v = v.reshape(0, NUM_ACTIONS)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "fps", float(self.fps))

    @classmethod
    def zeros(cls, num_frames: int, fps: float = 30.0) -> "AnnotationSequence":
        return cls(np.zeros((num_frames, NUM_ACTIONS), dtype=np.int8), fps)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    def column(self, action: Action) -> np.ndarray:
        return self.values[:, action.index]

    def region(self, region: Region) -> np.ndarray:
        return self.values[:, region.columns]

    def __eq__(self, other):
        if not isinstance(other, AnnotationSequence):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash(self.values.tobytes())

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ACTION_NAMES)
        w.writerows(self.values.tolist())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path, fps: float = 30.0) -> "AnnotationSequence":
        text = _read_text(source, ACTION_NAMES[0])
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise DataError("empty annotation CSV")
        header = [h.strip() for h in rows[0]]
        missing = set(ACTION_NAMES) - set(header)
        if missing:
            raise DataError(f"annotation CSV missing columns: {sorted(missing)}")
        order = [header.index(n) for n in ACTION_NAMES]
        data = np.array([[int(r[i]) for i in order] for r in rows[1:]], dtype=np.int8)
        seq = cls(data.reshape(-1, NUM_ACTIONS), fps)
        problems = validate(seq)
        if problems:
            raise ValidationError(problems)
        return seq


def _read_text(source, marker: str) -> str:
    """Accept either a path or literal file content starting with ``marker``."""
    if isinstance(source, str) and source.lstrip().startswith(marker):
        return source
    return Path(source).read_text()


def validate(x: Timeline | AnnotationSequence) -> list[Violation]:
    """Return every invariant violation of ``x``; an empty list means valid."""
    if isinstance(x, Timeline):
        return _validate_timeline(x)
    if isinstance(x, AnnotationSequence):
        return _validate_annotation(x)
    raise TypeError(f"cannot validate {type(x).__name__}")


def _validate_timeline(t: Timeline) -> list[Violation]:
    out = []
    if t.num_frames <= 0:
        out.append(Violation("frame count", f"num_frames must be positive, got {t.num_frames}"))
    for region, ivs in t.tracks.items():
        for iv in ivs:
            if iv.action.region is not region:
                out.append(Violation("region", f"{iv.action.value} placed on {region.value} track", interval=iv))
            if not 0 <= iv.start < iv.end <= t.num_frames:
                out.append(
                    Violation(
                        "out of bounds",
                        f"{iv.action.value} [{iv.start},{iv.end}) outside [0,{t.num_frames})",
                        frame=iv.start if iv.start < 0 or iv.start >= t.num_frames else iv.end - 1,
                        interval=iv,
                    )
                )
    ivs = t.intervals
    for cs in CONFLICT_SETS:
        members = sorted((iv for iv in ivs if iv.action in cs), key=lambda iv: (iv.start, iv.end))
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                if b.start >= a.end:
                    break
                if a.action is b.action:
                    continue
                lo, hi = max(a.start, b.start), min(a.end, b.end)
                out.append(
                    Violation(
                        "conflict set",
                        f"{a.action.value} [{a.start},{a.end}) overlaps {b.action.value} "
                        f"[{b.start},{b.end}) on frames {lo}..{hi - 1}",
                        frame=lo,
                        interval=b,
                    )
                )
    return out


def _validate_annotation(a: AnnotationSequence) -> list[Violation]:
    v = a.values
    if v.ndim != 2 or v.shape[1] != NUM_ACTIONS:
        return [Violation("width", f"expected frames x {NUM_ACTIONS}, got shape {v.shape}")]
    out = []
    bad = np.argwhere((v != 0) & (v != 1))
    for f, c in bad[:100]:
        out.append(Violation("binary", f"{ACTION_NAMES[c]} has value {v[f, c]}", frame=int(f)))
    for cs, cols in zip(CONFLICT_SETS, _CONFLICT_COLUMNS):
        clash = np.flatnonzero(v[:, cols].sum(axis=1) > 1)
        for f in clash:
            names = [ACTION_NAMES[c] for c in cols if v[f, c]]
            out.append(Violation("conflict set", f"{' and '.join(names)} both active", frame=int(f)))
    return out


def timeline_to_frames(t: Timeline) -> AnnotationSequence:
    problems = validate(t)
    if problems:
        raise ValidationError(problems)
    v = np.zeros((t.num_frames, NUM_ACTIONS), dtype=np.int8)
    for iv in t.intervals:
        v[iv.start : iv.end, iv.action.index] = 1
    return AnnotationSequence(v, t.fps)


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of truthy entries as half-open ``(start, end)`` pairs."""
    m = np.asarray(mask).astype(bool)
    if m.size == 0:
        return []
    d = np.diff(np.concatenate(([0], m.view(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def frames_to_timeline(a: AnnotationSequence) -> Timeline:
    problems = validate(a)
    if problems:
        raise ValidationError(problems)
    intervals = [
        Interval(act, s, e) for act in ACTIONS for s, e in runs(a.values[:, act.index])
    ]
    return Timeline.from_intervals(a.num_frames, intervals, a.fps).normalized()
