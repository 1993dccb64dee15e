"""Evaluation metrics: region macro-F1, TAS, Var, FID on coefficients and deltas, SND.

Covariances use the population (1/N) convention throughout.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .timeline import Action, AnnotationSequence, Region, Timeline, parse_region, timeline_to_frames

NEUTRAL = "Neutral"


# ---------------------------------------------------------------------------
# classification scores


def per_class_f1(pred, gt) -> dict:
    """F1 for every label present in ``pred`` or ``gt``."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"length mismatch: {pred.shape} vs {gt.shape}")
    out = {}
    for c in sorted(set(pred.tolist()) | set(gt.tolist()), key=str):
        tp = int(np.count_nonzero((pred == c) & (gt == c)))
        fp = int(np.count_nonzero((pred == c) & (gt != c)))
        fn = int(np.count_nonzero((pred != c) & (gt == c)))
        out[c] = 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
    return out


def macro_f1_labels(pred, gt) -> float:
    """Unweighted mean of per-class F1; classes absent from both sides do not count."""
    scores = per_class_f1(pred, gt)
    return float(np.mean(list(scores.values()))) if scores else math.nan


def region_labels(a: AnnotationSequence, region: Region) -> np.ndarray:
    """One class string per frame; simultaneous actions form a combined class."""
    region = parse_region(region)
    actions = [x for x in region.actions if x is not Action.EYE_CLOSE]
    cols = a.values[:, [x.index for x in actions]]
    labels = np.full(a.num_frames, NEUTRAL, dtype=object)
    for i in np.flatnonzero(cols.any(axis=1)):
        labels[i] = "+".join(x.value for x, on in zip(actions, cols[i]) if on)
    return labels


def eye_closure_f1(pred: AnnotationSequence, gt: AnnotationSequence) -> float:
    """Binary F1 of the EyeClose dimension; NaN when neither side has a closure."""
    _check_lengths(pred, gt)
    p = pred.column(Action.EYE_CLOSE).astype(bool)
    g = gt.column(Action.EYE_CLOSE).astype(bool)
    tp = np.count_nonzero(p & g)
    denom = np.count_nonzero(p) + np.count_nonzero(g)
    if denom == 0:
        return math.nan
    return 2.0 * tp / denom


def macro_f1(pred: AnnotationSequence, gt: AnnotationSequence, region) -> float:
    """Frame-wise macro-F1 over a region's classes including Neutral.

    For the eye region only squint/widen/neutral are scored, and only on frames
    where the ground truth eye is open; closure is scored by :func:`eye_closure_f1`.
    """
    region = parse_region(region)
    _check_lengths(pred, gt)
    p = region_labels(pred, region)
    g = region_labels(gt, region)
    if region is Region.EYE:
        keep = gt.column(Action.EYE_CLOSE) == 0
        p, g = p[keep], g[keep]
    if len(g) == 0:
        return math.nan
    return macro_f1_labels(p, g)


def _check_lengths(pred, gt):
    if pred.num_frames != gt.num_frames:
        raise DataError(f"frame count mismatch: prediction {pred.num_frames}, ground truth {gt.num_frames}")


def concat_annotations(seqs) -> AnnotationSequence:
    seqs = list(seqs)
    if not seqs:
        raise DataError("no annotations to concatenate")
    return AnnotationSequence(np.concatenate([s.values for s in seqs]), seqs[0].fps)


def region_scores(pred: AnnotationSequence, gt: AnnotationSequence) -> dict[str, float]:
    return {r.value: macro_f1(pred, gt, r) for r in Region}


def tas(timeline: Timeline, generated: AnnotationSequence) -> float:
    """Timeline alignment: region macro-F1 averaged uniformly over the five regions."""
    target = timeline_to_frames(timeline)
    _check_lengths(generated, target)
    return float(np.nanmean(list(region_scores(generated, target).values())))


def tas_many(timelines, generated) -> float:
    """TAS with frames pooled across several (timeline, annotation) pairs."""
    timelines, generated = list(timelines), list(generated)
    if len(timelines) != len(generated):
        raise DataError("need one generated annotation per timeline")
    gt = concat_annotations(timeline_to_frames(t) for t in timelines)
    pred = concat_annotations(generated)
    _check_lengths(pred, gt)
    return float(np.nanmean(list(region_scores(pred, gt).values())))


def match_clusters(pred, gt, one_to_one: bool = True) -> dict:
    """Map predicted cluster ids onto ground-truth labels.

    One-to-one uses a maximum-overlap assignment; unmatched clusters map to
    ``None``. Otherwise each cluster takes its majority ground-truth label.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    ps = np.unique(pred).tolist()
    gs = np.unique(gt).tolist()
    overlap = np.array([[np.count_nonzero((pred == p) & (gt == g)) for g in gs] for p in ps])
    if one_to_one:
        rows, cols = linear_sum_assignment(-overlap)
        mapping = {p: None for p in ps}
        for r, c in zip(rows, cols):
            mapping[ps[r]] = gs[c]
        return mapping
    return {p: gs[int(np.argmax(overlap[i]))] for i, p in enumerate(ps)}


def matched_macro_f1(pred, gt, one_to_one: bool = True) -> float:
    mapping = match_clusters(pred, gt, one_to_one)
    mapped = np.array([mapping[p] if mapping[p] is not None else "__unmatched__" for p in np.asarray(pred).tolist()],
                      dtype=object)
    return macro_f1_labels(mapped, np.asarray(gt, dtype=object))


# ---------------------------------------------------------------------------
# distribution metrics


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataError(f"expected a 2-D sample matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError("coefficients must be finite")
    return a


def variance_metric(samples) -> float:
    """Per-dimension variance over all pooled frames, averaged over dimensions."""
    mats = [_as_matrix(s) for s in samples]
    if not mats:
        raise DataError("variance of an empty sample list")
    if len({m.shape[1] for m in mats}) != 1:
        raise DataError("samples do not share a coefficient dimension")
    pooled = np.concatenate(mats)
    # shifting by one row is variance-preserving and makes constant data exactly zero
    pooled = pooled - pooled[:1]
    return float(np.var(pooled, axis=0).mean())


def gaussian_stats(x) -> tuple[np.ndarray, np.ndarray]:
    x = _as_matrix(x)
    if len(x) == 0:
        raise DataError("empty sample set")
    mu = x.mean(axis=0)
    d = x - mu
    return mu, d.T @ d / len(x)


def _psd_sqrt(a):
    evals, q = np.linalg.eigh(0.5 * (a + a.T))
    return (q * np.sqrt(np.clip(evals, 0.0, None))) @ q.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    """``|mu_a - mu_b|^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2})``.

    The trace of the product root is taken from the symmetric form
    ``sqrt(cov_a) cov_b sqrt(cov_a)``, whose eigenvalues are clamped at zero.
    """
    ra = _psd_sqrt(cov_a)
    m = ra @ cov_b @ ra
    evals = np.linalg.eigvalsh(0.5 * (m + m.T))
    tr_sqrt = float(np.sum(np.sqrt(np.clip(evals, 0.0, None))))
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    val = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(val, 0.0)


def fid(a, b, eps: float = 1e-6) -> float:
    a = _as_matrix(a)
    b = _as_matrix(b)
    if len(a) == 0 or len(b) == 0:
        raise DataError("empty sample set")
    if a.shape[1] != b.shape[1]:
        raise DataError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    d = a.shape[1]
    mu_a, cov_a = gaussian_stats(a)
    mu_b, cov_b = gaussian_stats(b)
    if min(len(a), len(b)) < d + 1:
        warnings.warn(f"fewer than d+1={d + 1} samples; covariances regularized by {eps}", RuntimeWarning,
                      stacklevel=2)
        cov_a = cov_a + eps * np.eye(d)
        cov_b = cov_b + eps * np.eye(d)
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)


def delta_series(c) -> np.ndarray:
    c = _as_matrix(c)
    if len(c) < 2:
        raise DataError("delta series needs at least two frames")
    return np.diff(c, axis=0)


def snd(fid_fm: float, fid_dfm: float) -> float:
    return fid_fm + fid_dfm


# ---------------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    region_f1: dict[str, float] = field(default_factory=dict)
    eye_closure_f1: float | None = None
    tas: float | None = None
    var: float | None = None
    var_reference: float | None = None
    fid_fm: float | None = None
    fid_dfm: float | None = None
    snd: float | None = None
    sample_counts: dict[str, int] = field(default_factory=dict)
    config_hash: str = ""

    def __post_init__(self):
        if self.fid_fm is not None and self.fid_dfm is not None:
            self.snd = snd(self.fid_fm, self.fid_dfm)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        return {k: clean(v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        def fmt(v):
            return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"

        lines = ["metric              value", "------------------  ----------"]
        for r, v in self.region_f1.items():
            lines.append(f"{'macroF1 ' + r:<18}  {fmt(v)}")
        for name in ("eye_closure_f1", "tas", "var", "var_reference", "fid_fm", "fid_dfm", "snd"):
            v = getattr(self, name)
            if v is not None:
                lines.append(f"{name:<18}  {fmt(v)}")
        for k, v in self.sample_counts.items():
            lines.append(f"{'n_' + k:<18}  {v}")
        return "\n".join(lines)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def evaluate(
    predictions=None,
    ground_truth=None,
    generated_motion=None,
    reference_motion=None,
    config: dict | None = None,
) -> MetricsReport:
    """Build a report from whichever inputs are supplied.

    ``predictions``/``ground_truth`` are parallel lists of annotation sequences
    and timelines; motion inputs are lists of ``T x d`` coefficient matrices.
    """
    rep = MetricsReport(config_hash=config_hash(config or {}))
    if predictions is not None and ground_truth is not None:
        predictions, ground_truth = list(predictions), list(ground_truth)
        pred = concat_annotations(predictions)
        gt = concat_annotations(timeline_to_frames(t) for t in ground_truth)
        rep.region_f1 = region_scores(pred, gt)
        rep.eye_closure_f1 = eye_closure_f1(pred, gt)
        rep.tas = float(np.nanmean(list(rep.region_f1.values())))
        rep.sample_counts["clips"] = len(predictions)
        rep.sample_counts["frames"] = pred.num_frames
    if generated_motion is not None:
        gen = [_as_matrix(m) for m in generated_motion]
        rep.var = variance_metric(gen)
        rep.sample_counts["generated_sequences"] = len(gen)
        if reference_motion is not None:
            ref = [_as_matrix(m) for m in reference_motion]
            rep.var_reference = variance_metric(ref)
            rep.fid_fm = fid(np.concatenate(gen), np.concatenate(ref))
            rep.fid_dfm = fid(np.concatenate([delta_series(m) for m in gen]),
                              np.concatenate([delta_series(m) for m in ref]))
            rep.snd = snd(rep.fid_fm, rep.fid_dfm)
            rep.sample_counts["reference_sequences"] = len(ref)
    return rep
