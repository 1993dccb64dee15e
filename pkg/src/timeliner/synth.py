"""Rule-based synthetic motion with known ground truth.

Two generators live here. :func:`synth_motion` renders a :class:`Timeline`
into blendshape/gaze/head descriptor channels, so annotations recovered by the
pipeline can be scored against the planted timeline. :func:`planted_regimes`
draws a multivariate series whose segments follow distinct block-Toeplitz
Gaussian processes, the classic recovery benchmark for TICC.

Profile amplitudes, ramp lengths and noise levels are invented defaults.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ValidationError
from .ingest import ClipSeries, Corpus, RegionChannelMap
from .timeline import ACTIONS, CONFLICT_SETS, Action, Interval, Timeline, validate

CHANNELS: tuple[str, ...] = (
    "browDown_L", "browDown_R", "browInnerUp", "browOuterUp_L", "browOuterUp_R",
    "eyeBlink_L", "eyeBlink_R", "eyeSquint_L", "eyeSquint_R", "eyeWide_L", "eyeWide_R",
    "mouthSmile_L", "mouthSmile_R", "mouthStretch_L", "mouthStretch_R", "mouthFrown_L", "mouthFrown_R",
    "gaze_x", "gaze_y", "head_pitch", "head_yaw", "head_roll",
)


@dataclass(frozen=True)
class ActionProfile:
    """How one action moves the descriptor channels.

    ``targets`` holds ``(channel, low, high)`` amplitude ranges; a single
    uniform draw per interval places every target at the same relative point
    of its range. Ramps are raised cosines centred on the interval edges, so
    the half-amplitude crossings land on the planted boundaries.
    """

    action: Action
    targets: tuple[tuple[str, float, float], ...]
    attack_frames: int = 6
    decay_frames: int = 8
    sigma_hold: float = 0.03

    def __post_init__(self):
        for ch, lo, hi in self.targets:
            if abs(lo) > abs(hi) or lo * hi < 0:
                raise DataError(f"{self.action.value}: amplitude range for {ch} must be ordered and one-signed")


@dataclass(frozen=True)
class CouplingRule:
    trigger: Action
    channel: str
    bleed: float


@dataclass(frozen=True)
class LanePlan:
    """Interval statistics for one group of mutually exclusive actions."""

    actions: tuple[Action, ...]
    mean_duration: float = 40.0
    min_duration: int = 8
    min_gap: int = 12


def _both(name, lo, hi):
    return ((f"{name}_L", lo, hi), (f"{name}_R", lo, hi))


def default_profiles() -> dict[Action, ActionProfile]:
    A = Action
    p = [
        ActionProfile(A.BROW_UP, (("browInnerUp", 0.4, 0.8), *_both("browOuterUp", 0.4, 0.8))),
        ActionProfile(A.BROW_DOWN, _both("browDown", 0.4, 0.8)),
        ActionProfile(A.EYE_SQUINT, _both("eyeSquint", 0.3, 0.7)),
        ActionProfile(A.EYE_WIDEN, _both("eyeWide", 0.3, 0.7)),
        ActionProfile(A.EYE_CLOSE, _both("eyeBlink", 0.7, 1.0), attack_frames=2, decay_frames=2),
        ActionProfile(A.SOFT_SMILE, _both("mouthSmile", 0.15, 0.35)),
        ActionProfile(A.SMILE, _both("mouthSmile", 0.5, 0.9)),
        ActionProfile(A.MOUTH_FROWN, _both("mouthFrown", 0.3, 0.7)),
        # signed axes: positive gaze_x / head_yaw is the subject's left, positive pitch is up
        ActionProfile(A.GAZE_LEFT, (("gaze_x", 0.5, 0.8),)),
        ActionProfile(A.GAZE_RIGHT, (("gaze_x", -0.5, -0.8),)),
        ActionProfile(A.GAZE_UP, (("gaze_y", 0.5, 0.8),)),
        ActionProfile(A.GAZE_DOWN, (("gaze_y", -0.5, -0.8),)),
        ActionProfile(A.HEAD_LEFT, (("head_yaw", 0.3, 0.5),)),
        ActionProfile(A.HEAD_RIGHT, (("head_yaw", -0.3, -0.5),)),
        ActionProfile(A.HEAD_UP, (("head_pitch", 0.24, 0.4),)),
        ActionProfile(A.HEAD_DOWN, (("head_pitch", -0.24, -0.4),)),
    ]
    return {x.action: x for x in p}


def default_couplings() -> tuple[CouplingRule, ...]:
    return (
        CouplingRule(Action.SMILE, "eyeSquint_L", 0.15),
        CouplingRule(Action.SMILE, "eyeSquint_R", 0.15),
        CouplingRule(Action.BROW_UP, "head_pitch", 0.03),
    )


def default_lanes() -> tuple[LanePlan, ...]:
    lanes = [LanePlan(tuple(sorted(cs, key=lambda a: a.index))) for cs in CONFLICT_SETS]
    lanes.append(LanePlan((Action.EYE_CLOSE,), mean_duration=6.0, min_duration=3, min_gap=8))
    return tuple(lanes)


@dataclass
class SynthConfig:
    profiles: dict[Action, ActionProfile] = field(default_factory=default_profiles)
    couplings: tuple[CouplingRule, ...] = field(default_factory=default_couplings)
    lanes: tuple[LanePlan, ...] = field(default_factory=default_lanes)
    channels: tuple[str, ...] = CHANNELS
    sigma_base: float = 0.02
    fps: float = 30.0
    seed: int = 0

    def __post_init__(self):
        missing = [a.value for a in ACTIONS if a not in self.profiles]
        if missing:
            raise DataError(f"SynthConfig lacks profiles for {missing}")
        for prof in self.profiles.values():
            for ch, _, _ in prof.targets:
                if ch not in self.channels:
                    raise DataError(f"profile {prof.action.value} targets unknown channel {ch}")
        for c in self.couplings:
            if c.channel not in self.channels:
                raise DataError(f"coupling targets unknown channel {c.channel}")
            # bleed must stay below what any action driving that channel produces
            lows = [abs(lo) for p in self.profiles.values() for ch, lo, _ in p.targets if ch == c.channel]
            if lows and abs(c.bleed) >= min(lows):
                raise DataError(f"coupling bleed {c.bleed} on {c.channel} not below its primary amplitudes")

    def to_dict(self) -> dict:
        return {
            "sigma_base": self.sigma_base,
            "fps": self.fps,
            "seed": self.seed,
            "profiles": {
                a.value: {
                    "targets": [list(t) for t in p.targets],
                    "attack_frames": p.attack_frames,
                    "decay_frames": p.decay_frames,
                    "sigma_hold": p.sigma_hold,
                }
                for a, p in self.profiles.items()
            },
            "couplings": [[c.trigger.value, c.channel, c.bleed] for c in self.couplings],
            "lanes": [
                {"actions": [a.value for a in ln.actions], "mean_duration": ln.mean_duration,
                 "min_duration": ln.min_duration, "min_gap": ln.min_gap}
                for ln in self.lanes
            ],
            "channels": list(self.channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        kw = {k: d[k] for k in ("sigma_base", "fps", "seed") if k in d}
        if "profiles" in d:
            profiles = default_profiles()
            for name, p in d["profiles"].items():
                a = Action(name)
                profiles[a] = ActionProfile(
                    a,
                    tuple((t[0], float(t[1]), float(t[2])) for t in p["targets"]),
                    int(p.get("attack_frames", 6)),
                    int(p.get("decay_frames", 8)),
                    float(p.get("sigma_hold", 0.03)),
                )
            kw["profiles"] = profiles
        if "couplings" in d:
            kw["couplings"] = tuple(CouplingRule(Action(a), ch, float(b)) for a, ch, b in d["couplings"])
        if "lanes" in d:
            kw["lanes"] = tuple(
                LanePlan(tuple(Action(a) for a in ln["actions"]), float(ln.get("mean_duration", 40.0)),
                         int(ln.get("min_duration", 8)), int(ln.get("min_gap", 12)))
                for ln in d["lanes"]
            )
        if "channels" in d:
            kw["channels"] = tuple(d["channels"])
        return cls(**kw)


def envelope(num_frames: int, start: int, end: int, attack: int, decay: int) -> np.ndarray:
    """Activation in [0, 1] per frame, sampled at frame centres."""
    t = np.arange(num_frames) + 0.5

    def ramp(centre, width):
        if width <= 0:
            return (t >= centre).astype(float)
        u = np.clip((t - (centre - width / 2.0)) / width, 0.0, 1.0)
        return 0.5 - 0.5 * np.cos(np.pi * u)

    return np.minimum(ramp(start, attack), 1.0 - ramp(end, decay))


def synth_motion(t: Timeline, cfg: SynthConfig | None = None, seed=None, clip_id: str = "synth") -> ClipSeries:
    cfg = cfg or SynthConfig()
    problems = validate(t)
    if problems:
        raise ValidationError(problems)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    T = t.num_frames
    idx = {c: i for i, c in enumerate(cfg.channels)}
    data = rng.normal(0.0, cfg.sigma_base, size=(T, len(cfg.channels)))
    for iv in sorted(t.intervals, key=lambda iv: (iv.start, iv.action.index)):
        prof = cfg.profiles[iv.action]
        if prof.attack_frames + prof.decay_frames > 2 * iv.length:
            warnings.warn(f"{iv.action.value} [{iv.start},{iv.end}) shorter than its ramps", RuntimeWarning,
                          stacklevel=2)
        env = envelope(T, iv.start, iv.end, prof.attack_frames, prof.decay_frames)
        u = rng.uniform()
        for ch, lo, hi in prof.targets:
            amp = lo + u * (hi - lo)
            data[:, idx[ch]] += env * (amp + rng.normal(0.0, prof.sigma_hold, size=T))
        for c in cfg.couplings:
            if c.trigger is iv.action:
                data[:, idx[c.channel]] += env * c.bleed
    return ClipSeries(clip_id, t.fps, cfg.channels, data)


def random_timeline(num_frames: int, action_rate: float, rng, lanes=None, fps: float = 30.0) -> Timeline:
    """Independent lanes of non-overlapping intervals with geometric gaps and lengths."""
    lanes = lanes or default_lanes()
    intervals = []
    if action_rate > 0:
        for lane in lanes:
            pos = int(rng.geometric(action_rate)) - 1
            while True:
                length = lane.min_duration + int(rng.geometric(1.0 / max(lane.mean_duration - lane.min_duration, 1.0))) - 1
                if pos + length > num_frames:
                    break
                action = lane.actions[int(rng.integers(len(lane.actions)))]
                intervals.append(Interval(action, pos, pos + length))
                pos += length + lane.min_gap + int(rng.geometric(action_rate)) - 1
    return Timeline.from_intervals(num_frames, intervals, fps).normalized()


def synth_corpus(num_clips: int, clip_len_range=(200, 600), action_rate: float = 0.01,
                 cfg: SynthConfig | None = None) -> tuple[Corpus, list[Timeline]]:
    cfg = cfg or SynthConfig()
    if num_clips < 0 or action_rate < 0 or clip_len_range[0] < 1 or clip_len_range[1] < clip_len_range[0]:
        raise DataError("synth_corpus parameters must be positive and ordered")
    master = np.random.SeedSequence(cfg.seed)
    clips, timelines = [], []
    for i, child in enumerate(master.spawn(num_clips)):
        rng = np.random.default_rng(child)
        T = int(rng.integers(clip_len_range[0], clip_len_range[1] + 1))
        tl = random_timeline(T, action_rate, rng, cfg.lanes, cfg.fps)
        clip_seed = int(rng.integers(2**63 - 1))
        clips.append(synth_motion(tl, cfg, seed=clip_seed, clip_id=f"clip{i:04d}"))
        timelines.append(tl)
    provenance = {"generator": "synth", "seed": cfg.seed, "num_clips": num_clips,
                  "clip_len_range": list(clip_len_range), "action_rate": action_rate}
    return Corpus(clips, RegionChannelMap(), provenance), timelines


# ---------------------------------------------------------------------------
# planted block-Toeplitz regimes


def random_block_toeplitz_precision(n: int, w: int, rng, density: float = 0.6,
                                    magnitude=(0.3, 0.6), min_eig: float = 0.1) -> np.ndarray:
    """Sparse random block-Toeplitz precision, shifted to have smallest eigenvalue ``min_eig``."""
    blocks = []
    for m in range(w):
        a = rng.uniform(*magnitude, size=(n, n)) * rng.choice([-1.0, 1.0], size=(n, n))
        a *= rng.uniform(size=(n, n)) < density
        if m == 0:
            a = np.triu(a, 1)
            a = a + a.T
        blocks.append(a)
    theta = np.zeros((n * w, n * w))
    for i in range(w):
        for j in range(w):
            m = j - i
            theta[i * n:(i + 1) * n, j * n:(j + 1) * n] = blocks[m] if m >= 0 else blocks[-m].T
    shift = min_eig - np.linalg.eigvalsh(theta).min()
    return theta + shift * np.eye(n * w)


def symmetric_kl(theta_a, theta_b) -> float:
    """Symmetrized KL divergence between zero-mean Gaussians given by precisions."""
    d = len(theta_a)
    return 0.5 * (np.trace(theta_b @ np.linalg.inv(theta_a)) + np.trace(theta_a @ np.linalg.inv(theta_b))) - d


def planted_regimes(T: int = 5000, n: int = 3, w: int = 3, n_regimes: int = 3, seg_len=(200, 500),
                    seed: int = 0, precisions=None, min_separation: float = 5.0):
    """Sample a series whose segments cycle through distinct block-Toeplitz processes.

    Regime precisions are redrawn until every pair has symmetric KL divergence
    of at least ``min_separation`` nats per window. Each new frame is drawn
    from the regime's window Gaussian conditioned on the previous ``w - 1``
    frames. Returns ``(x, labels, precisions)``.
    """
    rng = np.random.default_rng(seed)
    if precisions is None:
        for _ in range(1000):
            precisions = [random_block_toeplitz_precision(n, w, rng) for _ in range(n_regimes)]
            seps = [symmetric_kl(a, b) for i, a in enumerate(precisions) for b in precisions[i + 1:]]
            if not seps or min(seps) >= min_separation:
                break
        else:
            raise DataError("could not draw sufficiently distinct regimes")
    covs = [np.linalg.inv(p) for p in precisions]
    labels = np.empty(T, dtype=np.intp)
    pos, prev = 0, -1
    while pos < T:
        k = int(rng.integers(n_regimes - 1)) if prev >= 0 else int(rng.integers(n_regimes))
        if prev >= 0 and k >= prev:
            k += 1
        length = int(rng.integers(seg_len[0], seg_len[1] + 1))
        labels[pos:pos + length] = k
        pos += length
        prev = k
    x = np.zeros((T, n))
    cond = []
    for cov in covs:
        if w == 1:
            cond.append((np.zeros((n, 0)), np.linalg.cholesky(cov)))
            continue
        s11 = cov[: (w - 1) * n, : (w - 1) * n]
        s21 = cov[(w - 1) * n:, : (w - 1) * n]
        s22 = cov[(w - 1) * n:, (w - 1) * n:]
        gain = s21 @ np.linalg.inv(s11)
        cond.append((gain, np.linalg.cholesky(s22 - gain @ s21.T)))
    first = rng.multivariate_normal(np.zeros(n * w), covs[labels[0]])
    x[: min(w, T)] = first.reshape(w, n)[: min(w, T)]
    for t in range(w, T):
        gain, chol = cond[labels[t]]
        past = x[t - w + 1:t].ravel()
        x[t] = gain @ past + chol @ rng.standard_normal(n)
    return x, labels, precisions
