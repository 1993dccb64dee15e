"""Toeplitz inverse-covariance clustering (TICC).

Each cluster is a Gaussian over stacked windows of ``w`` consecutive frames
whose precision matrix is block-Toeplitz: the ``n x n`` block linking window
slots ``i`` and ``j`` depends only on ``j - i``. Fitting alternates an M-step
(per-cluster penalized precision estimation by ADMM) with an E-step (exact
Viterbi-style assignment under a switching penalty ``beta``).
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning as SkConvergenceWarning

from .errors import ConvergenceError, DataError

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TiccConfig:
    """Fit configuration.

    ``n_clusters`` counts valid clusters only; when the input carries null
    separator rows one extra cluster is fitted to absorb them.
    """

    n_clusters: int = 8
    window_size: int = 3
    beta: float = 5.0
    lam: float | tuple = 0.11
    rho: float = 1.0
    adaptive_rho: bool = True
    admm_eps_abs: float = 1e-5
    admm_eps_rel: float = 1e-4
    admm_max_iter: int = 1000
    em_max_iter: int = 100
    n_init: int = 2
    min_cluster_size: int = 1
    ridge: float = 1e-6
    standardize: bool = False
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n_clusters < 1:
            problems.append("n_clusters must be >= 1")
        if not 1 <= self.window_size:
            problems.append("window_size must be >= 1")
        if self.beta < 0:
            problems.append("beta must be >= 0")
        if self.rho <= 0:
            problems.append("rho must be > 0")
        if min(self.admm_eps_abs, self.admm_eps_rel, self.ridge) <= 0:
            problems.append("tolerances and ridge must be > 0")
        if min(self.admm_max_iter, self.em_max_iter, self.n_init, self.min_cluster_size) < 1:
            problems.append("iteration limits and min_cluster_size must be >= 1")
        lam = np.asarray(self.lam, dtype=float)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            problems.append("lam must be finite and >= 0")
        if isinstance(self.lam, np.ndarray):
            object.__setattr__(self, "lam", tuple(map(tuple, self.lam.tolist())))
        if problems:
            raise DataError("invalid TiccConfig: " + "; ".join(problems))

    def lambda_matrix(self, dim: int) -> np.ndarray:
        """Per-entry l1 weights with the diagonal left unpenalized."""
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 0:
            out = np.full((dim, dim), float(lam))
        elif lam.shape == (dim, dim):
            out = lam.copy()
        else:
            raise DataError(f"lam has shape {lam.shape}, expected scalar or {(dim, dim)}")
        np.fill_diagonal(out, 0.0)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.lam, (int, float)):
            d["lam"] = [list(r) for r in self.lam]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TiccConfig":
        d = dict(d)
        if isinstance(d.get("lam"), list):
            d["lam"] = tuple(tuple(r) for r in d["lam"])
        return cls(**d)


# ---------------------------------------------------------------------------
# windows and likelihoods


def stack_windows(x, w: int) -> np.ndarray:
    """Row ``t`` of the result is ``[x_t, x_{t+1}, ..., x_{t+w-1}]`` flattened."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, n = x.shape
    if w < 1:
        raise DataError("window size must be >= 1")
    if T < w:
        raise DataError(f"series has {T} frames, fewer than window size {w}")
    view = np.lib.stride_tricks.sliding_window_view(x, w, axis=0)  # (T-w+1, n, w)
    return np.ascontiguousarray(view.transpose(0, 2, 1).reshape(T - w + 1, w * n))


def window_null_mask(null_mask, w: int) -> np.ndarray:
    """True for windows that contain at least one null row."""
    m = np.asarray(null_mask, dtype=bool)
    return np.lib.stride_tricks.sliding_window_view(m, w).any(axis=1)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    theta: np.ndarray
    mu: np.ndarray
    logdet_theta: float
    member_count: int = 0

    @classmethod
    def from_precision(cls, theta, mu, member_count: int = 0) -> "ClusterModel":
        theta = np.asarray(theta, dtype=float)
        L = np.linalg.cholesky(theta)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return cls(theta, np.asarray(mu, dtype=float), logdet, int(member_count))

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    def neg_log_likelihood(self, xw: np.ndarray) -> np.ndarray:
        """Row-wise ``-log N(x | mu, theta^-1)`` for a windows matrix."""
        d = np.atleast_2d(xw) - self.mu
        quad = np.einsum("ij,jk,ik->i", d, self.theta, d)
        return 0.5 * quad - 0.5 * self.logdet_theta + 0.5 * self.dim * LOG_2PI


def log_likelihood(xw, c: ClusterModel) -> float:
    xw = np.asarray(xw, dtype=float)
    if xw.shape != (c.dim,):
        raise DataError(f"window has shape {xw.shape}, cluster expects ({c.dim},)")
    return -float(c.neg_log_likelihood(xw[None, :])[0])


# ---------------------------------------------------------------------------
# assignment


@dataclass(frozen=True, eq=False)
class AssignmentPath:
    labels: np.ndarray
    objective: float

    def __len__(self):
        return len(self.labels)

    @property
    def num_switches(self) -> int:
        return int(np.count_nonzero(np.diff(self.labels)))


def path_cost(costs, labels, beta: float) -> float:
    costs = np.asarray(costs, dtype=float)
    labels = np.asarray(labels)
    return float(costs[np.arange(len(labels)), labels].sum() + beta * np.count_nonzero(np.diff(labels)))


def assign_dp(costs, beta: float) -> AssignmentPath:
    """Minimize ``sum_t costs[t, path_t] + beta * #switches`` exactly.

    Ties between predecessors go to the lower cluster index.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.size == 0:
        raise DataError("costs must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(costs)):
        raise DataError("costs must be finite")
    if beta < 0:
        raise DataError("beta must be >= 0")
    T, K = costs.shape
    ks = np.arange(K)
    back = np.empty((T, K), dtype=np.intp)
    back[0] = ks
    acc = costs[0].copy()
    for t in range(1, T):
        j = int(np.argmin(acc))
        switch = acc[j] + beta
        take = (switch < acc) | ((switch == acc) & (j < ks))
        back[t] = np.where(take, j, ks)
        acc = np.where(take, switch, acc) + costs[t]
    labels = np.empty(T, dtype=np.intp)
    labels[-1] = int(np.argmin(acc))
    for t in range(T - 1, 0, -1):
        labels[t - 1] = back[t, labels[t]]
    return AssignmentPath(labels, path_cost(costs, labels, beta))


def expand_path_to_frames(path, T: int, w: int) -> np.ndarray:
    labels = np.asarray(path.labels if isinstance(path, AssignmentPath) else path)
    if len(labels) != T - w + 1:
        raise DataError(f"path has {len(labels)} windows, expected {T - w + 1} for T={T}, w={w}")
    if w == 1:
        return labels.copy()
    return np.concatenate([labels, np.full(w - 1, labels[-1], dtype=labels.dtype)])


# ---------------------------------------------------------------------------
# block-Toeplitz graphical lasso


@lru_cache(maxsize=64)
def toeplitz_classes(n: int, w: int) -> tuple[np.ndarray, int]:
    """Label each entry of an ``nw x nw`` matrix with its tied-parameter class.

    Entry ``(i*n+p, j*n+q)`` belongs to block lag ``m = j - i``; negative lags
    are the transposes of positive ones and lag 0 is symmetric.
    """
    idx = np.empty((n * w, n * w), dtype=np.intp)
    keys: dict[tuple[int, int, int], int] = {}
    for bi in range(w):
        for bj in range(w):
            m = bj - bi
            for p in range(n):
                for q in range(n):
                    if m > 0:
                        key = (m, p, q)
                    elif m < 0:
                        key = (-m, q, p)
                    else:
                        key = (0, min(p, q), max(p, q))
                    idx[bi * n + p, bj * n + q] = keys.setdefault(key, len(keys))
    idx.setflags(write=False)
    return idx, len(keys)


def project_toeplitz(a: np.ndarray, n: int, w: int) -> np.ndarray:
    """Replace every tied class by its mean (orthogonal projection)."""
    classes, nc = toeplitz_classes(n, w)
    flat = classes.ravel()
    means = np.bincount(flat, weights=a.ravel(), minlength=nc) / np.bincount(flat, minlength=nc)
    return means[classes]


def glasso_objective(theta, S, sample_count: int, lam) -> float:
    """``-logdet(theta) + tr(S theta) + ||lam * theta||_1 / sample_count``; +inf if not PD."""
    theta = np.asarray(theta, dtype=float)
    try:
        L = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        return math.inf
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-logdet + np.sum(S * theta) + np.sum(np.abs(lam * theta)) / sample_count)


@dataclass(frozen=True, eq=False)
class GlassoResult:
    theta: np.ndarray
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float


def _is_pd(a: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(a)
        return True
    except np.linalg.LinAlgError:
        return False


RHO_BALANCE = math.sqrt(10.0)
RHO_STEP_MAX = 50.0


def solve_toeplitz_glasso(S, sample_count: int, cfg: TiccConfig, n_channels: int | None = None) -> GlassoResult:
    """Penalized block-Toeplitz precision estimate by ADMM with splitting theta = Z.

    The problem is first rescaled per channel so that ``S`` has unit diagonal;
    the rescaled optimum maps back exactly, which keeps a fixed ``rho``
    effective across channels of very different magnitude.
    """
    S = np.asarray(S, dtype=float)
    w = cfg.window_size
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError(f"S must be square, got {S.shape}")
    nw = S.shape[0]
    n = n_channels if n_channels is not None else nw // w
    if n * w != nw:
        raise DataError(f"S has size {nw}, not divisible into window {w}")
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise DataError("S is not symmetric")
    if sample_count < 1:
        raise DataError("sample_count must be >= 1")
    S = 0.5 * (S + S.T)
    lam = cfg.lambda_matrix(nw)

    # per-channel scale, tied across window slots so the Toeplitz pattern survives
    diag = np.clip(np.diag(S).reshape(w, n).mean(axis=0), 1e-300, None)
    d = np.tile(np.sqrt(diag), w)
    Ss = S / np.outer(d, d)
    lam_s = lam / np.outer(d, d)

    classes, nc = toeplitz_classes(n, w)
    flat = classes.ravel()
    sizes = np.bincount(flat, minlength=nc).astype(float)
    lam_c = np.bincount(flat, weights=lam_s.ravel(), minlength=nc)
    rho = cfg.rho
    base_kappa = lam_c / (sizes * sample_count)

    Z = np.eye(nw)
    U = np.zeros((nw, nw))
    converged = False
    r_norm = s_norm = math.inf
    best = (math.inf, Z)
    it = 0
    for it in range(1, cfg.admm_max_iter + 1):
        evals, Q = np.linalg.eigh(rho * (Z - U) - Ss)
        theta = (Q * ((evals + np.sqrt(evals**2 + 4.0 * rho)) / (2.0 * rho))) @ Q.T
        v = np.bincount(flat, weights=(theta + U).ravel(), minlength=nc) / sizes
        z = np.sign(v) * np.maximum(np.abs(v) - base_kappa / rho, 0.0)
        Z_new = z[classes]
        U = U + theta - Z_new
        r_norm = float(np.linalg.norm(theta - Z_new))
        s_norm = float(rho * np.linalg.norm(Z_new - Z))
        Z = Z_new
        eps_pri = cfg.admm_eps_abs * nw + cfg.admm_eps_rel * max(np.linalg.norm(theta), np.linalg.norm(Z))
        eps_dual = cfg.admm_eps_abs * nw + cfg.admm_eps_rel * rho * np.linalg.norm(U)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if cfg.adaptive_rho and it % 10 == 0 and s_norm > 0 and r_norm > 0:
            # residual balancing against the tolerances, step sized by the imbalance;
            # U is the scaled dual so it rescales with rho
            tau = math.sqrt((r_norm / eps_pri) / (s_norm / eps_dual))
            if not 1.0 / RHO_BALANCE <= tau <= RHO_BALANCE:
                tau = min(max(tau, 1.0 / RHO_STEP_MAX), RHO_STEP_MAX)
                rho *= tau
                U /= tau
        if it % 25 == 0:
            obj = glasso_objective(Z, Ss, sample_count, lam_s)
            if obj < best[0]:
                best = (obj, Z)

    out = Z
    if not converged:
        obj = glasso_objective(Z, Ss, sample_count, lam_s)
        if best[0] < obj:
            out = best[1]
        warnings.warn(
            f"ADMM did not converge in {cfg.admm_max_iter} iterations "
            f"(primal {r_norm:.3g}, dual {s_norm:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    if not _is_pd(out):
        # Z can sit a hair outside the cone before full convergence
        out = project_toeplitz(theta, n, w)
        shift = 0.0
        while not _is_pd(out + shift * np.eye(nw)):
            shift = max(1e-10, 10 * shift)
            if shift > 1e6:
                raise ConvergenceError("could not recover a positive-definite precision")
        out = out + shift * np.eye(nw)
    theta_out = out / np.outer(d, d)
    return GlassoResult(0.5 * (theta_out + theta_out.T), converged, it, r_norm, s_norm)


# ---------------------------------------------------------------------------
# model


@dataclass(eq=False)
class TiccModel:
    clusters: list[ClusterModel]
    config: TiccConfig
    channel_names: tuple[str, ...] = ()
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    null_value: float = -1.0
    history: list[float] = field(default_factory=list)
    converged: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def n_channels(self) -> int:
        return self.clusters[0].dim // self.config.window_size

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def transform(self, x, null_mask=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.center is None:
            return x
        out = (x - self.center) / self.scale
        if null_mask is not None:
            out[np.asarray(null_mask, bool)] = self.null_value
        return out

    def window_costs(self, windows: np.ndarray) -> np.ndarray:
        return np.column_stack([c.neg_log_likelihood(windows) for c in self.clusters])

    def to_dict(self) -> dict:
        return {
            "format": "timeliner.ticc",
            "version": MODEL_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "channel_names": list(self.channel_names),
            "window_size": self.config.window_size,
            "center": None if self.center is None else self.center.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "null_value": self.null_value,
            "converged": self.converged,
            "history": list(self.history),
            "notes": list(self.notes),
            "clusters": [
                {
                    "mu": c.mu.tolist(),
                    "theta": c.theta.ravel().tolist(),
                    "logdet_theta": c.logdet_theta,
                    "member_count": c.member_count,
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TiccModel":
        if d.get("format") != "timeliner.ticc":
            raise DataError("not a TICC model file")
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model version {d.get('version')}")
        clusters = []
        for c in d["clusters"]:
            mu = np.array(c["mu"], dtype=float)
            theta = np.array(c["theta"], dtype=float).reshape(len(mu), len(mu))
            clusters.append(ClusterModel(theta, mu, float(c["logdet_theta"]), int(c["member_count"])))
        return cls(
            clusters,
            TiccConfig.from_dict(d["config"]),
            tuple(d.get("channel_names", ())),
            None if d.get("center") is None else np.array(d["center"], dtype=float),
            None if d.get("scale") is None else np.array(d["scale"], dtype=float),
            float(d.get("null_value", -1.0)),
            list(d.get("history", [])),
            bool(d.get("converged", False)),
            list(d.get("notes", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TiccModel":
        path = Path(path)
        if not path.exists():
            raise DataError(f"model file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def _m_step_cluster(windows, cfg, n, previous: ClusterModel | None):
    count = len(windows)
    mu = windows.mean(axis=0)
    centered = windows - mu
    S_raw = centered.T @ centered / count
    S = S_raw + cfg.ridge * np.eye(len(mu))
    res = solve_toeplitz_glasso(S, count, cfg, n_channels=n)
    lam = cfg.lambda_matrix(len(mu))
    candidate = ClusterModel.from_precision(res.theta, mu, count)
    if previous is not None:
        # keep the old precision when the new solve is worse on this member set,
        # which makes the EM objective exactly non-increasing
        old = replace(previous, mu=mu, member_count=count)
        if glasso_objective(old.theta, S_raw, count, lam) < glasso_objective(candidate.theta, S_raw, count, lam):
            candidate = old
    return candidate, res


def em_objective(model: TiccModel, costs: np.ndarray, path: AssignmentPath) -> float:
    """Penalized negative log-likelihood plus switching cost."""
    nw = model.clusters[0].dim
    lam = model.config.lambda_matrix(nw)
    pen = sum(0.5 * float(np.sum(np.abs(lam * c.theta))) for c in model.clusters)
    return path_cost(costs, path.labels, model.config.beta) + pen


def _reseed(costs_assigned, eligible, length) -> np.ndarray | None:
    """Indices of the contiguous eligible run with the worst total cost."""
    score = np.where(eligible, costs_assigned, -np.inf)
    if len(score) < length:
        return None
    sums = np.convolve(score, np.ones(length), mode="valid")
    ok = np.isfinite(sums)
    if not ok.any():
        return None
    best_start = int(np.argmax(np.where(ok, sums, -np.inf)))
    return np.arange(best_start, best_start + length)


def _kmeans_init(windows, k, seed):
    if len(windows) < k:
        raise DataError(f"only {len(windows)} usable windows for {k} clusters")
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, random_state=seed)
    with warnings.catch_warnings():
        # duplicate points leave clusters empty; the EM loop handles that itself
        warnings.simplefilter("ignore", SkConvergenceWarning)
        return km.fit_predict(windows)


MOMENT_SMOOTHING = 61


def _moment_init(windows, k, seed):
    """k-means++ on locally averaged second moments of the windows.

    Regimes that differ only in covariance look alike to plain k-means on
    zero-mean windows; their local second moments do not.
    """
    if len(windows) < k:
        raise DataError(f"only {len(windows)} usable windows for {k} clusters")
    iu = np.triu_indices(windows.shape[1])
    feats = (windows[:, :, None] * windows[:, None, :])[:, iu[0], iu[1]]
    feats = uniform_filter1d(feats, min(MOMENT_SMOOTHING, len(feats)), axis=0, mode="nearest")
    sd = feats.std(axis=0)
    feats = (feats - feats.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SkConvergenceWarning)
        return KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed).fit_predict(feats)


INIT_STRATEGIES = {"kmeans": _kmeans_init, "moments": _moment_init}


def fit(x, cfg: TiccConfig, null_mask=None, channel_names=(), callback=None) -> tuple[TiccModel, AssignmentPath]:
    """Fit TICC to a (possibly null-separated) series.

    Windows touching a null row never enter a valid cluster's statistics. If
    any exist, an extra cluster (index ``n_clusters``) is seeded with them.

    EM is started ``cfg.n_init`` times from each initializer in
    :data:`INIT_STRATEGIES` (seeds derived from ``cfg.seed``); the run with the
    lowest final objective wins, earlier runs winning ties.
    """
    best = None
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.n_init)
    for s in seeds:
        for name, init in INIT_STRATEGIES.items():
            model, path = _fit_once(x, cfg, init, int(s), null_mask, channel_names, callback)
            log.debug("init %s/%d: objective %.6g", name, s, model.history[-1])
            if best is None or model.history[-1] < best[0].history[-1]:
                best = (model, path)
    return best


def _fit_once(x, cfg, init, init_seed, null_mask, channel_names, callback):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    T, n = x.shape
    w = cfg.window_size
    if T < w:
        raise DataError(f"series has {T} frames, fewer than window size {w}")
    null_mask = np.zeros(T, bool) if null_mask is None else np.asarray(null_mask, bool)
    if null_mask.shape != (T,):
        raise DataError("null_mask length does not match series")

    center = scale = None
    null_value = float(x[null_mask][0, 0]) if null_mask.any() else -1.0
    if cfg.standardize:
        valid = x[~null_mask]
        center = valid.mean(axis=0)
        scale = valid.std(axis=0)
        scale[scale == 0] = 1.0
    model = TiccModel([], cfg, tuple(channel_names), center, scale, null_value)
    xs = model.transform(x, null_mask)

    X = stack_windows(xs, w)
    wnull = window_null_mask(null_mask, w)
    has_null = bool(wnull.any())
    K = cfg.n_clusters
    K_total = K + int(has_null)
    valid_idx = np.flatnonzero(~wnull)

    labels = np.full(len(X), K if has_null else 0, dtype=np.intp)
    labels[valid_idx] = init(X[valid_idx], K, init_seed) if K > 1 else 0

    clusters: list[ClusterModel | None] = [None] * K_total
    path = None
    history: list[float] = []
    converged = False
    notes: list[str] = []
    min_size = max(cfg.min_cluster_size, 1)
    for it in range(cfg.em_max_iter):
        for k in range(K_total):
            members = labels == k
            if k < K and has_null:
                members &= ~wnull
            if not members.any():
                if clusters[k] is None:
                    # degenerate start (e.g. a constant series); seed from every usable window
                    pool = X[valid_idx] if k < K else X[wnull]
                    clusters[k], _ = _m_step_cluster(pool, cfg, n, None)
                    notes.append(f"cluster {k} empty at initialization; seeded from pooled windows")
                    continue
                notes.append(f"iteration {it}: cluster {k} has no members; kept previous parameters")
                continue
            clusters[k], _ = _m_step_cluster(X[members], cfg, n, clusters[k])
        model.clusters = list(clusters)
        costs = model.window_costs(X)
        new_path = assign_dp(costs, cfg.beta)
        history.append(em_objective(model, costs, new_path))
        if callback is not None:
            callback(it, model, new_path)

        new_labels = new_path.labels.copy()
        repaired = False
        assigned = costs[np.arange(len(X)), new_labels]
        for k in range(K):
            n_members = int(np.count_nonzero((new_labels == k) & ~wnull))
            if n_members >= min_size:
                continue
            run = _reseed(assigned, ~wnull, max(w, min_size))
            if run is None:
                notes.append(f"iteration {it}: could not reseed empty cluster {k}")
                continue
            new_labels[run] = k
            assigned[run] = -np.inf
            repaired = True
            notes.append(f"iteration {it}: reseeded empty cluster {k} at windows {run[0]}..{run[-1]}")
        path = new_path
        if not repaired and np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels

    if not converged:
        notes.append(f"EM stopped at em_max_iter={cfg.em_max_iter} without a fixed point")
    for note in notes:
        log.info(note)
    empty = [k for k in range(K) if not np.any((path.labels == k) & ~wnull)]
    if empty:
        warnings.warn(f"clusters {empty} ended with no members", RuntimeWarning, stacklevel=3)
    model.history = history
    model.converged = converged
    model.notes = notes
    if has_null:
        heavy = [k for k in range(K_total) if np.any(path.labels == k) and np.mean(wnull[path.labels == k]) > 0.5]
        if len(heavy) > 1:
            model.notes.append(f"more than one null-dominated cluster: {heavy}")
    return model, path


def predict(model: TiccModel, x, null_mask=None) -> AssignmentPath:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.n_channels:
        raise DataError(f"series has {x.shape[1]} channels, model expects {model.n_channels}")
    X = stack_windows(model.transform(x, null_mask), model.config.window_size)
    return assign_dp(model.window_costs(X), model.config.beta)


def fit_predict_costs(model: TiccModel, x, null_mask=None) -> np.ndarray:
    """Window cost matrix of ``x`` under a fitted model (used by beta sweeps)."""
    X = stack_windows(model.transform(np.asarray(x, float), null_mask), model.config.window_size)
    return model.window_costs(X)
