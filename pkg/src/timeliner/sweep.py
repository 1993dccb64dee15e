"""Sensitivity sweeps over the cluster count K and the switching penalty beta."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .metrics import matched_macro_f1
from .ticc import TiccConfig, assign_dp, expand_path_to_frames, fit, fit_predict_costs


@dataclass(frozen=True)
class SweepRow:
    value: float
    macro_f1: float
    switches: int


def _score(frames, truth, null_mask):
    keep = ~null_mask
    return matched_macro_f1(frames[keep], np.asarray(truth)[keep], one_to_one=True)


def sweep_k(x, truth, ks, cfg: TiccConfig, null_mask=None, channel_names=()) -> list[SweepRow]:
    """Refit for every K and score against ``truth`` with one-to-one matching.

    One-to-one matching leaves surplus clusters unmatched, so over-segmentation
    costs F1 just as under-segmentation does.
    """
    x = np.asarray(x, dtype=float)
    null_mask = np.zeros(len(x), bool) if null_mask is None else np.asarray(null_mask, bool)
    rows = []
    for k in ks:
        model, path = fit(x, replace(cfg, n_clusters=int(k)), null_mask if null_mask.any() else None, channel_names)
        frames = expand_path_to_frames(path, len(x), cfg.window_size)
        rows.append(SweepRow(int(k), _score(frames, truth, null_mask), path.num_switches))
    return rows


def sweep_beta(model, x, truth, betas, null_mask=None) -> list[SweepRow]:
    """Re-run only the assignment step under each beta on one model's fixed costs."""
    x = np.asarray(x, dtype=float)
    null_mask = np.zeros(len(x), bool) if null_mask is None else np.asarray(null_mask, bool)
    costs = fit_predict_costs(model, x, null_mask if null_mask.any() else None)
    rows = []
    for b in betas:
        path = assign_dp(costs, float(b))
        frames = expand_path_to_frames(path, len(x), model.config.window_size)
        rows.append(SweepRow(float(b), _score(frames, truth, null_mask), path.num_switches))
    return rows


def rows_to_csv(rows, name: str) -> str:
    lines = [f"{name},macro_f1,switches"]
    lines += [f"{r.value:g},{r.macro_f1:.6f},{r.switches}" for r in rows]
    return "\n".join(lines) + "\n"
