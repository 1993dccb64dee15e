"""From cluster assignments and threshold rules to frame-level annotations.

The pipeline fits one TICC model per clustered region (brow, eye squint/widen,
mouth) on the null-separated concatenation of all clips, asks a human (or an
oracle, for synthetic data) to name each cluster once, and uses hysteresis
thresholds for eye closure, gaze and head pose.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ticc
from .errors import DataError, LabelsRequired, ValidationError
from .ingest import NULL_LENGTH, NULL_VALUE, ConcatenatedSeries, Corpus, concatenate_corpus
from .metrics import NEUTRAL, region_labels
from .timeline import (
    NUM_ACTIONS,
    Action,
    AnnotationSequence,
    Region,
    parse_action,
    parse_region,
    runs,
    validate,
)

log = logging.getLogger(__name__)

NULL = "Null"
TICC_REGIONS = (Region.BROW, Region.EYE, Region.MOUTH)


# ---------------------------------------------------------------------------
# label maps


@dataclass
class ClusterLabelMap:
    region: Region
    labels: dict[int, str]
    note: str = ""

    def __post_init__(self):
        self.region = parse_region(self.region)
        self.labels = {int(k): str(v) for k, v in self.labels.items()}
        allowed = {a.value for a in self.region.actions} | {NEUTRAL, NULL}
        bad = {k: v for k, v in self.labels.items() if v not in allowed}
        if bad:
            raise DataError(f"label map for {self.region.value} has labels outside the region: {bad}")

    def check_total(self, n_clusters: int) -> None:
        missing = [k for k in range(n_clusters) if k not in self.labels]
        if missing:
            raise DataError(f"label map for {self.region.value} does not cover clusters {missing}")

    def to_dict(self) -> dict:
        return {"region": self.region.value, "labels": {str(k): v for k, v in sorted(self.labels.items())},
                "note": self.note}

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        Path(path).write_text(json.dumps(d, indent=2))

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterLabelMap":
        try:
            return cls(d["region"], d["labels"], d.get("note", ""))
        except KeyError as exc:
            raise DataError(f"label map missing field {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ClusterLabelMap":
        path = Path(path)
        if not path.exists():
            raise DataError(f"label map not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class ThresholdRule:
    """Hysteresis threshold on one signed channel.

    The action switches on when ``sign * value`` exceeds ``enter`` and off
    once it drops to ``exit`` or below. Active runs shorter than
    ``min_duration`` frames are discarded.
    """

    channel: str
    action: Action
    enter: float
    exit: float
    min_duration: int = 1
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "action", parse_action(self.action))
        if not (np.isfinite(self.enter) and np.isfinite(self.exit)):
            raise DataError("thresholds must be finite")
        if abs(self.exit) > abs(self.enter):
            raise DataError(f"{self.action.value}: |exit| must not exceed |enter|")
        if self.min_duration < 1:
            raise DataError("min_duration must be >= 1")
        if self.sign not in (1, -1):
            raise DataError("sign must be +1 or -1")

    def to_dict(self) -> dict:
        return {"channel": self.channel, "action": self.action.value, "enter": self.enter, "exit": self.exit,
                "min_duration": self.min_duration, "sign": self.sign}

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRule":
        return cls(d["channel"], d["action"], float(d["enter"]), float(d["exit"]),
                   int(d.get("min_duration", 1)), int(d.get("sign", 1)))


def default_threshold_rules() -> tuple[ThresholdRule, ...]:
    # only the 0.4 blink threshold is a published value; the rest are tunable defaults
    A = Action
    rules = [ThresholdRule("eyeBlink_L", A.EYE_CLOSE, 0.4, 0.4, 1)]
    for ch, pos, neg in (("gaze_x", A.GAZE_LEFT, A.GAZE_RIGHT), ("gaze_y", A.GAZE_UP, A.GAZE_DOWN)):
        rules += [ThresholdRule(ch, pos, 0.25, 0.20, 3, 1), ThresholdRule(ch, neg, 0.25, 0.20, 3, -1)]
    for ch, pos, neg, enter in (("head_yaw", A.HEAD_LEFT, A.HEAD_RIGHT, 0.15),
                                ("head_pitch", A.HEAD_UP, A.HEAD_DOWN, 0.12)):
        rules += [ThresholdRule(ch, pos, enter, 0.8 * enter, 3, 1), ThresholdRule(ch, neg, enter, 0.8 * enter, 3, -1)]
    return tuple(rules)


def hysteresis(values, enter: float, exit: float) -> np.ndarray:
    active = np.zeros(len(values), dtype=bool)
    on = False
    for i, v in enumerate(np.asarray(values, dtype=float).tolist()):
        on = v > enter if not on else v > exit
        active[i] = on
    return active


# ---------------------------------------------------------------------------
# partial annotations


@dataclass(frozen=True, eq=False)
class PartialAnnotation:
    """Annotation columns produced by one source, plus which frames it covers."""

    values: np.ndarray
    keep: np.ndarray
    actions: frozenset

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    def labels(self, region: Region) -> list:
        seq = AnnotationSequence(self.values)
        labs = region_labels(seq, region)
        return [lab if k else None for lab, k in zip(labs.tolist(), self.keep.tolist())]


def threshold_annotate(series, channel_names, rules) -> PartialAnnotation:
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    names = list(channel_names)
    out = np.zeros((len(series), NUM_ACTIONS), dtype=np.int8)
    for rule in rules:
        if rule.channel not in names:
            raise DataError(f"threshold rule for {rule.action.value} references unknown channel {rule.channel!r}")
        v = rule.sign * series[:, names.index(rule.channel)]
        active = hysteresis(v, abs(rule.enter), abs(rule.exit))
        for s, e in runs(active):
            if e - s >= rule.min_duration:
                out[s:e, rule.action.index] = 1
    return PartialAnnotation(out, np.ones(len(series), bool), frozenset(r.action for r in rules))


def identify_null_cluster(frame_labels, null_mask, warn_share: float = 0.05) -> int:
    """Cluster holding most null frames; warns if it also holds many real frames."""
    labels = np.asarray(frame_labels)
    null_mask = np.asarray(null_mask, bool)
    if not null_mask.any():
        raise DataError("no null frames to identify a null cluster from")
    counts = np.bincount(labels[null_mask])
    k = int(np.argmax(counts))
    real = ~null_mask
    share = float(np.mean(labels[real] == k)) if real.any() else 0.0
    if share > warn_share:
        warnings.warn(f"null cluster {k} also covers {share:.1%} of non-null frames", RuntimeWarning, stacklevel=2)
    minority = counts.sum() - counts[k]
    if minority:
        warnings.warn(f"{minority} null frames fall outside null cluster {k}", RuntimeWarning, stacklevel=2)
    return k


def representative_intervals(frame_labels, cluster: int, count: int, min_len: int = 1,
                             series: ConcatenatedSeries | None = None) -> list[tuple[str, int, int]]:
    """The ``count`` longest runs of ``cluster`` on real frames, in clip coordinates.

    Runs never cross a separator or clip boundary. Without ``series`` every
    row counts as one clip called ``"series"``.
    """
    labels = np.asarray(frame_labels)
    if series is None:
        clip_index = np.zeros(len(labels), dtype=np.intp)
        local = np.arange(len(labels))
        ids = ("series",)
    else:
        clip_index, local, ids = series.clip_index, series.local_frame, series.clip_ids
    mask = (labels == cluster) & (clip_index >= 0)
    found = []
    for s, e in runs(mask):
        cut = [s] + (np.flatnonzero(np.diff(clip_index[s:e])) + s + 1).tolist() + [e]
        for a, b in zip(cut[:-1], cut[1:]):
            if b - a >= min_len:
                found.append((b - a, a, ids[clip_index[a]], int(local[a]), int(local[b - 1]) + 1))
    found.sort(key=lambda r: (-r[0], r[1]))
    return [(cid, s, e) for _, _, cid, s, e in found[:count]]


def apply_label_map(frame_labels, label_map: ClusterLabelMap, null_mask=None) -> PartialAnnotation:
    """Translate cluster ids to region actions.

    Frames labelled Null (and separator rows) are not kept; Neutral clears the
    region.
    """
    labels = np.asarray(frame_labels)
    unmapped = sorted(set(np.unique(labels).tolist()) - set(label_map.labels))
    if unmapped:
        raise DataError(f"clusters {unmapped} have no label in the {label_map.region.value} map")
    out = np.zeros((len(labels), NUM_ACTIONS), dtype=np.int8)
    keep = np.ones(len(labels), bool) if null_mask is None else ~np.asarray(null_mask, bool)
    for k, name in label_map.labels.items():
        sel = labels == k
        if name == NULL:
            keep &= ~sel
        elif name != NEUTRAL:
            out[sel, Action(name).index] = 1
    return PartialAnnotation(out, keep, frozenset(label_map.region.actions))


def assemble_annotation(parts, fps: float = 30.0) -> AnnotationSequence:
    parts = list(parts)
    if not parts:
        raise DataError("nothing to assemble")
    T = parts[0].num_frames
    for p in parts:
        if p.num_frames != T:
            raise DataError(f"frame count mismatch: {p.num_frames} vs {T}")
    out = np.zeros((T, NUM_ACTIONS), dtype=np.int8)
    for p in parts:
        # dropped frames contribute nothing, i.e. neutral for that source
        out |= p.values * p.keep[:, None].astype(np.int8)
    seq = AnnotationSequence(out, fps)
    problems = validate(seq)
    if problems:
        raise ValidationError(problems)
    return seq


# ---------------------------------------------------------------------------
# inspection report


@dataclass
class ClusterSummary:
    cluster: int
    member_frames: int
    is_null: bool
    channel_means: dict[str, float]
    representatives: list[tuple[str, int, int]]
    plots: list[dict] = field(default_factory=list)


@dataclass
class RegionReport:
    region: Region
    channels: tuple[str, ...]
    null_cluster: int | None
    clusters: list[ClusterSummary]
    model_notes: list[str] = field(default_factory=list)


@dataclass
class InspectionReport:
    regions: dict[Region, RegionReport] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            r.value: {
                "channels": list(rr.channels),
                "null_cluster": rr.null_cluster,
                "notes": rr.model_notes,
                "clusters": [
                    {"cluster": c.cluster, "member_frames": c.member_frames, "is_null": c.is_null,
                     "channel_means": c.channel_means,
                     "representatives": [list(x) for x in c.representatives]}
                    for c in rr.clusters
                ],
            }
            for r, rr in self.regions.items()
        }

    def to_html(self) -> str:
        from .report import render_inspection_html

        return render_inspection_html(self)


def build_region_report(region, channels, series: ConcatenatedSeries, frame_labels, n_clusters,
                        null_cluster, count: int = 3, min_len: int = 5, context: int = 10,
                        notes=()) -> RegionReport:
    clusters = []
    real = ~series.null_mask
    for k in range(n_clusters):
        member = (frame_labels == k) & real
        reps = [] if k == null_cluster else representative_intervals(frame_labels, k, count, min_len, series)
        if k != null_cluster and not reps and member.any():
            reps = representative_intervals(frame_labels, k, count, 1, series)
        means = {ch: round(float(series.data[member, j].mean()), 6) if member.any() else float("nan")
                 for j, ch in enumerate(channels)}
        plots = []
        for cid, s, e in reps:
            ci = series.clip_ids.index(cid)
            rows = series.clip_rows(ci)
            n = rows.stop - rows.start
            lo, hi = max(0, s - context), min(n, e + context)
            seg = series.data[rows.start + lo: rows.start + hi]
            plots.append({"clip": cid, "start": s, "end": e, "offset": lo,
                          "series": {ch: seg[:, j].round(6).tolist() for j, ch in enumerate(channels)}})
        clusters.append(ClusterSummary(k, int(member.sum()), k == null_cluster, means, reps, plots))
    return RegionReport(region, tuple(channels), null_cluster, clusters, list(notes))


# ---------------------------------------------------------------------------
# pipeline


def _default_ticc() -> dict[Region, ticc.TiccConfig]:
    return {
        Region.BROW: ticc.TiccConfig(n_clusters=9, beta=5.0),
        Region.EYE: ticc.TiccConfig(n_clusters=8, beta=5.0),
        Region.MOUTH: ticc.TiccConfig(n_clusters=9, beta=5.0),
    }


@dataclass
class PipelineConfig:
    ticc: dict[Region, ticc.TiccConfig] = field(default_factory=_default_ticc)
    threshold_rules: tuple[ThresholdRule, ...] = field(default_factory=default_threshold_rules)
    null_len: int = NULL_LENGTH
    null_value: float = NULL_VALUE
    representatives: int = 3
    representative_min_len: int = 5

    def ticc_channels(self, region: Region, channel_map) -> tuple[str, ...]:
        """Region channels minus any channel a threshold rule of that region consumes."""
        used = {r.channel for r in self.threshold_rules if r.action.region is region}
        chans = tuple(c for c in channel_map[region] if c not in used)
        if not chans:
            raise DataError(f"no channels left for TICC on region {region.value}")
        return chans


@dataclass
class RegionFit:
    region: Region
    model: ticc.TiccModel
    series: ConcatenatedSeries
    frame_labels: np.ndarray
    null_cluster: int | None


@dataclass
class PipelineResult:
    status: str
    report: InspectionReport
    fits: dict[Region, RegionFit]
    annotations: dict[str, AnnotationSequence] = field(default_factory=dict)

    @property
    def models(self) -> dict[Region, ticc.TiccModel]:
        return {r: f.model for r, f in self.fits.items()}


def fit_regions(corpus: Corpus, config: PipelineConfig, models=None) -> dict[Region, RegionFit]:
    """Fit (or reuse) one TICC model per clustered region and label every global row."""
    if not corpus.clips:
        raise DataError("corpus has no clips")
    models = models or {}
    fits = {}
    for region, cfg in config.ticc.items():
        channels = config.ticc_channels(region, corpus.channel_map)
        series = concatenate_corpus(corpus, channels, config.null_len, config.null_value)
        T = series.num_rows
        if region in models:
            model = models[region]
            if tuple(model.channel_names) and tuple(model.channel_names) != channels:
                raise DataError(f"{region.value} model was fitted on {model.channel_names}, not {channels}")
            path = ticc.predict(model, series.data, series.null_mask)
        else:
            log.info("fitting %s: %d rows, %d channels, K=%d", region.value, T, len(channels), cfg.n_clusters)
            model, path = ticc.fit(series.data, cfg, series.null_mask, channels)
        frame_labels = ticc.expand_path_to_frames(path, T, model.config.window_size)
        null_cluster = None
        if series.null_mask.any():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                null_cluster = identify_null_cluster(frame_labels, series.null_mask)
        fits[region] = RegionFit(region, model, series, frame_labels, null_cluster)
    return fits


def inspection_report(fits: dict[Region, RegionFit], config: PipelineConfig) -> InspectionReport:
    report = InspectionReport()
    for region, f in fits.items():
        report.regions[region] = build_region_report(
            region, f.model.channel_names or tuple(f"ch{i}" for i in range(f.series.data.shape[1])),
            f.series, f.frame_labels, f.model.n_clusters, f.null_cluster,
            config.representatives, config.representative_min_len, notes=f.model.notes,
        )
    return report


def skeleton_label_map(fit: RegionFit) -> ClusterLabelMap:
    labels = {k: (NULL if k == fit.null_cluster else NEUTRAL) for k in range(fit.model.n_clusters)}
    return ClusterLabelMap(fit.region, labels, "skeleton: replace Neutral with the action each cluster shows")


def oracle_label_map(fit: RegionFit, truth: dict[str, AnnotationSequence]) -> ClusterLabelMap:
    """Name each cluster by the majority ground-truth label of its real frames.

    This stands in for the human inspection step on synthetic data.
    """
    s = fit.series
    gt = np.full(s.num_rows, None, dtype=object)
    for i, cid in enumerate(s.clip_ids):
        rows = s.clip_rows(i)
        gt[rows] = region_labels(truth[cid], fit.region)
    labels = {}
    for k in range(fit.model.n_clusters):
        member = (fit.frame_labels == k) & ~s.null_mask
        if not member.any():
            labels[k] = NULL if k == fit.null_cluster else NEUTRAL
            continue
        names, counts = np.unique(gt[member].astype(str), return_counts=True)
        top = str(names[int(np.argmax(counts))])
        # combined classes cannot come out of one TICC cluster label
        labels[k] = top if "+" not in top else top.split("+")[0]
    return ClusterLabelMap(fit.region, labels, "oracle: majority of planted ground truth")


def annotate_clips(corpus: Corpus, fits: dict[Region, RegionFit], label_maps: dict[Region, ClusterLabelMap],
                   config: PipelineConfig) -> dict[str, AnnotationSequence]:
    out = {}
    for region, f in fits.items():
        if region not in label_maps:
            raise LabelsRequired(f"no label map for region {region.value}")
        label_maps[region].check_total(f.model.n_clusters)
    for i, clip in enumerate(corpus.clips):
        parts = []
        for region, f in fits.items():
            rows = f.series.clip_rows(i)
            part = apply_label_map(f.frame_labels[rows], label_maps[region])
            parts.append(part)
        if config.threshold_rules:
            parts.append(threshold_annotate(clip.data, clip.channel_names, config.threshold_rules))
        out[clip.clip_id] = assemble_annotation(parts, clip.fps)
    return out


def run_pipeline(corpus: Corpus, config: PipelineConfig | None = None, label_maps=None, models=None,
                 truth=None) -> PipelineResult:
    """Fit, inspect and (when every clustered region has a label map) annotate.

    ``truth`` (clip id -> ground-truth annotation) builds oracle label maps for
    any region without one. Without label maps the result carries only the
    inspection report and status ``"labels_required"``.
    """
    config = config or PipelineConfig()
    label_maps = dict(label_maps or {})
    fits = fit_regions(corpus, config, models)
    report = inspection_report(fits, config)
    if truth is not None:
        for region, f in fits.items():
            label_maps.setdefault(region, oracle_label_map(f, truth))
    missing = [r for r in fits if r not in label_maps]
    if missing:
        log.warning("label maps required for: %s", ", ".join(r.value for r in missing))
        return PipelineResult("labels_required", report, fits)
    annotations = annotate_clips(corpus, fits, label_maps, config)
    return PipelineResult("ok", report, fits, annotations)
