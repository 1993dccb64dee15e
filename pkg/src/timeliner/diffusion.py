"""Generation-side math that needs no trained network.

Noise schedule and forward process, the x0-prediction loss, classifier-free
guidance dropout of region conditions, and the -1 encoding of dropped
regions. The denoiser is only a callable contract so everything here can be
exercised with stubs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import DataError
from .timeline import NUM_ACTIONS, AnnotationSequence, Region

REGIONS = tuple(Region)
P_DROP_ALL = 0.1
P_KEEP_ALL = 0.1
P_DROP_EACH = 0.5


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """``alphas[n-1]`` is alpha_n for steps n = 1..N; ``alpha_bar(0)`` is 1."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float)
        if a.ndim != 1 or len(a) < 1:
            raise DataError("schedule needs at least one step")
        if np.any(a <= 0) or np.any(a > 1):
            raise DataError("alpha_n must lie in (0, 1]")
        a.setflags(write=False)
        bars = np.concatenate([[1.0], np.cumprod(a)])
        bars.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "_bars", bars)

    @classmethod
    def linear(cls, num_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> "NoiseSchedule":
        if num_steps < 1:
            raise DataError("num_steps must be >= 1")
        return cls(1.0 - np.linspace(beta_start, beta_end, num_steps))

    @property
    def num_steps(self) -> int:
        return len(self.alphas)

    @property
    def alpha_bars(self) -> np.ndarray:
        """alpha_bar_0..alpha_bar_N."""
        return self._bars

    def alpha_bar(self, n: int) -> float:
        self._check(n, allow_zero=True)
        return float(self._bars[n])

    def _check(self, n, allow_zero=False):
        lo = 0 if allow_zero else 1
        if not lo <= n <= self.num_steps:
            raise DataError(f"step {n} outside [{lo}, {self.num_steps}]")


def forward_noise(m0, n: int, schedule: NoiseSchedule, eps) -> np.ndarray:
    """Sample of q(M_n | M_0) given the standard-normal draw ``eps``."""
    m0 = np.asarray(m0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    schedule._check(n)
    if eps.shape != m0.shape:
        raise DataError(f"noise shape {eps.shape} does not match motion shape {m0.shape}")
    ab = schedule.alpha_bar(n)
    return np.sqrt(ab) * m0 + np.sqrt(1.0 - ab) * eps


def forward_step(m_prev, n: int, schedule: NoiseSchedule, eps) -> np.ndarray:
    """One transition q(M_n | M_{n-1}) = N(sqrt(alpha_n) M_{n-1}, (1 - alpha_n) I)."""
    schedule._check(n)
    a = schedule.alphas[n - 1]
    return np.sqrt(a) * np.asarray(m_prev, float) + np.sqrt(1.0 - a) * np.asarray(eps, float)


def forward_chain(m0, n: int, schedule: NoiseSchedule, rng) -> np.ndarray:
    """Apply ``n`` stepwise transitions with fresh noise each step."""
    schedule._check(n)
    m = np.asarray(m0, dtype=float)
    for k in range(1, n + 1):
        m = forward_step(m, k, schedule, rng.standard_normal(m.shape))
    return m


def x0_loss(m0, m0_pred) -> float:
    m0 = np.asarray(m0, dtype=float)
    m0_pred = np.asarray(m0_pred, dtype=float)
    if m0.shape != m0_pred.shape:
        raise DataError(f"shape mismatch: {m0.shape} vs {m0_pred.shape}")
    if m0.size == 0:
        raise DataError("empty motion")
    return float(np.mean((m0 - m0_pred) ** 2))


# ---------------------------------------------------------------------------
# condition dropout


@dataclass(frozen=True)
class ConditionMask:
    """Per-region keep flags in :class:`Region` order."""

    kept: tuple[bool, bool, bool, bool, bool]

    def __post_init__(self):
        kept = tuple(bool(k) for k in self.kept)
        if len(kept) != len(REGIONS):
            raise DataError(f"mask needs {len(REGIONS)} entries, got {len(kept)}")
        object.__setattr__(self, "kept", kept)

    @classmethod
    def all_kept(cls) -> "ConditionMask":
        return cls((True,) * len(REGIONS))

    @classmethod
    def all_dropped(cls) -> "ConditionMask":
        return cls((False,) * len(REGIONS))

    @classmethod
    def dropping(cls, *regions) -> "ConditionMask":
        drop = {Region(r) for r in regions}
        return cls(tuple(r not in drop for r in REGIONS))

    def is_kept(self, region) -> bool:
        return self.kept[REGIONS.index(Region(region))]

    def code(self) -> int:
        """Bit r set when region r is kept."""
        return sum(1 << i for i, k in enumerate(self.kept) if k)


def sample_condition_masks(rng, size: int) -> np.ndarray:
    """``size`` masks as a boolean (size, 5) keep matrix."""
    u = rng.random(size)
    keep = rng.random((size, len(REGIONS))) >= P_DROP_EACH
    keep[u < P_DROP_ALL] = False
    keep[(u >= P_DROP_ALL) & (u < P_DROP_ALL + P_KEEP_ALL)] = True
    return keep


def sample_condition_mask(rng) -> ConditionMask:
    return ConditionMask(tuple(sample_condition_masks(rng, 1)[0].tolist()))


def mask_distribution() -> np.ndarray:
    """Exact probability of each of the 32 masks, indexed by :meth:`ConditionMask.code`."""
    n = len(REGIONS)
    p = np.full(2**n, (1.0 - P_DROP_ALL - P_KEEP_ALL) * 0.5**n)
    p[0] += P_DROP_ALL
    p[-1] += P_KEEP_ALL
    return p


def encode_timeline_condition(a: AnnotationSequence, mask: ConditionMask) -> np.ndarray:
    out = np.array(a.values, dtype=float)
    if out.shape[1] != NUM_ACTIONS:
        raise DataError(f"annotation has {out.shape[1]} columns, expected {NUM_ACTIONS}")
    for region, kept in zip(REGIONS, mask.kept):
        if not kept:
            out[:, [x.index for x in region.actions]] = -1.0
    return out


def apply_condition_mask(encoded, mask: ConditionMask) -> np.ndarray:
    """Re-apply a mask to an already encoded condition (idempotent)."""
    out = np.array(encoded, dtype=float)
    for region, kept in zip(REGIONS, mask.kept):
        if not kept:
            out[:, [x.index for x in region.actions]] = -1.0
    return out


# ---------------------------------------------------------------------------
# denoiser contract


class Denoiser(Protocol):
    def __call__(self, noisy: np.ndarray, step: int, condition: np.ndarray) -> np.ndarray: ...


def training_loss(denoiser: Denoiser, m0, annotation: AnnotationSequence, schedule: NoiseSchedule, rng,
                  step: int | None = None, mask: ConditionMask | None = None) -> float:
    """One draw of the x0-prediction objective for a given denoiser."""
    m0 = np.asarray(m0, dtype=float)
    if m0.shape[0] != annotation.num_frames:
        raise DataError("motion and annotation frame counts differ")
    n = int(rng.integers(1, schedule.num_steps + 1)) if step is None else step
    mask = sample_condition_mask(rng) if mask is None else mask
    noisy = forward_noise(m0, n, schedule, rng.standard_normal(m0.shape))
    cond = encode_timeline_condition(annotation, mask)
    return x0_loss(m0, denoiser(noisy, n, cond))
