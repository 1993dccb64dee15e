"""Descriptor tables, per-region channel selection and null-separated concatenation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyFileError, NonFiniteValueError, RaggedRowError
from .timeline import Region, parse_region

# Only left-side ARKit coefficients are used for the blendshape regions.
# Gaze and head channels stand in for 3DMM eye and angle coefficients.
DEFAULT_CHANNEL_MAP: dict[Region, tuple[str, ...]] = {
    Region.BROW: ("browDown_L", "browInnerUp", "browOuterUp_L"),
    Region.EYE: ("eyeBlink_L", "eyeSquint_L", "eyeWide_L"),
    Region.MOUTH: ("mouthSmile_L", "mouthStretch_L", "mouthFrown_L"),
    Region.GAZE: ("gaze_x", "gaze_y"),
    Region.HEAD: ("head_pitch", "head_yaw", "head_roll"),
}

NULL_LENGTH = 100
NULL_VALUE = -1.0


@dataclass(frozen=True, eq=False)
class ClipSeries:
    clip_id: str
    fps: float
    channel_names: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        names = tuple(self.channel_names)
        if data.ndim != 2:
            raise DataError(f"clip {self.clip_id}: data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1:
            raise DataError(f"clip {self.clip_id}: needs at least one frame")
        if data.shape[1] != len(names):
            raise DataError(f"clip {self.clip_id}: {data.shape[1]} columns but {len(names)} channel names")
        if not np.all(np.isfinite(data)):
            r, c = np.argwhere(~np.isfinite(data))[0]
            raise NonFiniteValueError(f"clip {self.clip_id}: non-finite value at row {r}, column {names[c]}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def channels(self, names) -> np.ndarray:
        idx = []
        for n in names:
            try:
                idx.append(self.channel_names.index(n))
            except ValueError:
                raise DataError(f"clip {self.clip_id}: unknown channel {n!r}") from None
        return self.data[:, idx]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.channel_names)
            # repr() round-trips float64 exactly
            w.writerows([repr(float(v)) for v in row] for row in self.data)


def load_descriptor_csv(path: str | Path, fps: float, clip_id: str | None = None) -> ClipSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"descriptor file not found: {path}")
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if not rows:
        raise EmptyFileError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(rows) < 2:
        raise EmptyFileError(f"{path}: header but no frames")
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise RaggedRowError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {header[j]}: cannot parse {cell!r}") from None
            if not math.isfinite(v):
                raise NonFiniteValueError(f"{path}: row {i}, column {header[j]}: non-finite value {cell!r}")
            values[i - 1, j] = v
    return ClipSeries(clip_id or path.stem, fps, tuple(header), values)


@dataclass
class RegionChannelMap:
    channels: dict[Region, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_CHANNEL_MAP))

    def __post_init__(self):
        self.channels = {parse_region(r): tuple(v) for r, v in self.channels.items()}

    def __getitem__(self, region) -> tuple[str, ...]:
        region = parse_region(region)
        if region not in self.channels:
            raise DataError(f"channel map has no entry for region {region.value}")
        return self.channels[region]

    def check(self, available, regions=(Region.BROW, Region.EYE, Region.MOUTH)) -> None:
        """Raise if a mapped name is missing, a list is empty, or TICC regions share channels."""
        available = set(available)
        seen: dict[str, Region] = {}
        for r, names in self.channels.items():
            if not names:
                raise DataError(f"channel map for {r.value} is empty")
            missing = [n for n in names if n not in available]
            if missing:
                raise DataError(f"channel map for {r.value} names unknown channels {missing}")
            if r in regions:
                for n in names:
                    if n in seen:
                        raise DataError(f"channel {n} mapped to both {seen[n].value} and {r.value}")
                    seen[n] = r

    def to_dict(self) -> dict:
        return {r.value: list(v) for r, v in self.channels.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionChannelMap":
        return cls({parse_region(k): tuple(v) for k, v in d.items()})


def select_region_channels(clip: ClipSeries, region, channel_map: RegionChannelMap | None = None) -> np.ndarray:
    channel_map = channel_map or RegionChannelMap()
    return clip.channels(channel_map[region])


@dataclass
class Corpus:
    clips: list[ClipSeries]
    channel_map: RegionChannelMap = field(default_factory=RegionChannelMap)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.clips:
            names, fps = self.clips[0].channel_names, self.clips[0].fps
            for c in self.clips[1:]:
                if c.channel_names != names:
                    raise DataError(f"clip {c.clip_id} channels differ from {self.clips[0].clip_id}")
                if c.fps != fps:
                    raise DataError(f"clip {c.clip_id} fps {c.fps} differs from {fps}")
            ids = [c.clip_id for c in self.clips]
            if len(set(ids)) != len(ids):
                raise DataError("duplicate clip ids in corpus")

    @property
    def fps(self) -> float:
        return self.clips[0].fps if self.clips else 30.0

    @property
    def channel_names(self) -> tuple[str, ...]:
        return self.clips[0].channel_names if self.clips else ()

    def clip(self, clip_id: str) -> ClipSeries:
        for c in self.clips:
            if c.clip_id == clip_id:
                return c
        raise KeyError(clip_id)

    def save(self, directory: str | Path) -> Path:
        """Write one CSV per clip plus ``manifest.json``; return the manifest path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for c in self.clips:
            name = f"{c.clip_id}.csv"
            c.to_csv(directory / name)
            entries.append({"id": c.clip_id, "path": name})
        manifest = {
            "fps": self.fps,
            "clips": entries,
            "channel_map": self.channel_map.to_dict(),
            "provenance": self.provenance,
        }
        out = directory / "manifest.json"
        out.write_text(json.dumps(manifest, indent=2))
        return out


def load_corpus(manifest_path: str | Path) -> Corpus:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"corpus manifest not found: {manifest_path}")
    try:
        m = json.loads(manifest_path.read_text())
        fps = float(m["fps"])
        entries = m["clips"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed manifest {manifest_path}: {exc}") from exc
    base = manifest_path.parent
    clips = [load_descriptor_csv(base / e["path"], fps, clip_id=e["id"]) for e in entries]
    cmap = RegionChannelMap.from_dict(m["channel_map"]) if "channel_map" in m else RegionChannelMap()
    corpus = Corpus(clips, cmap, dict(m.get("provenance", {})))
    if clips:
        cmap.check(corpus.channel_names)
    return corpus


@dataclass(frozen=True, eq=False)
class ConcatenatedSeries:
    """Clips stacked end to end with constant-valued separator blocks.

    ``clip_index[g]`` is the clip position of global row ``g`` (-1 on separator
    rows) and ``local_frame[g]`` its frame within that clip.
    """

    data: np.ndarray
    null_mask: np.ndarray
    clip_index: np.ndarray
    local_frame: np.ndarray
    clip_ids: tuple[str, ...]
    offsets: tuple[int, ...]

    @property
    def num_rows(self) -> int:
        return self.data.shape[0]

    def clip_rows(self, i: int) -> slice:
        start = self.offsets[i]
        n = int(np.count_nonzero(self.clip_index == i))
        return slice(start, start + n)


def concatenate_with_null(
    mats,
    null_len: int = NULL_LENGTH,
    null_value: float = NULL_VALUE,
    clip_ids=None,
) -> ConcatenatedSeries:
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    if null_len < 0:
        raise DataError("null_len must be non-negative")
    if not mats:
        raise DataError("nothing to concatenate")
    k = mats[0].shape[1]
    for i, m in enumerate(mats):
        if m.shape[1] != k:
            raise DataError(f"matrix {i} has width {m.shape[1]}, expected {k}")
    clip_ids = tuple(clip_ids) if clip_ids is not None else tuple(f"clip{i}" for i in range(len(mats)))
    if len(clip_ids) != len(mats):
        raise DataError("clip_ids length does not match number of matrices")

    blocks, mask, cidx, local, offsets = [], [], [], [], []
    pos = 0
    for i, m in enumerate(mats):
        if i > 0 and null_len > 0:
            blocks.append(np.full((null_len, k), null_value))
            mask.append(np.ones(null_len, bool))
            cidx.append(np.full(null_len, -1))
            local.append(np.full(null_len, -1))
            pos += null_len
        offsets.append(pos)
        blocks.append(m)
        mask.append(np.zeros(len(m), bool))
        cidx.append(np.full(len(m), i))
        local.append(np.arange(len(m)))
        pos += len(m)
    arrays = [np.concatenate(b) for b in (blocks, mask, cidx, local)]
    for a in arrays:
        a.setflags(write=False)
    return ConcatenatedSeries(*arrays, clip_ids=clip_ids, offsets=tuple(offsets))


def map_global_to_clip(s: ConcatenatedSeries, g: int) -> tuple[str, int] | None:
    if not 0 <= g < s.num_rows:
        raise IndexError(f"row {g} outside [0, {s.num_rows})")
    if s.null_mask[g]:
        return None
    return s.clip_ids[s.clip_index[g]], int(s.local_frame[g])


def concatenate_corpus(corpus: Corpus, channels, null_len: int = NULL_LENGTH, null_value: float = NULL_VALUE):
    mats = [c.channels(channels) for c in corpus.clips]
    return concatenate_with_null(mats, null_len, null_value, [c.clip_id for c in corpus.clips])
