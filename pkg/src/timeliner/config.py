"""Run configuration: one TOML file, overridable through TIMELINER_* variables.

Nested keys use double underscores, e.g. ``TIMELINER_TICC__BROW__BETA=3`` or
``TIMELINER_PATHS__OUTPUT_DIR=out``. Values are parsed as TOML literals when
possible and kept as strings otherwise.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .annotate import PipelineConfig, ThresholdRule, default_threshold_rules
from .errors import DataError
from .ingest import NULL_LENGTH, NULL_VALUE
from .synth import SynthConfig
from .ticc import TiccConfig
from .timeline import Region, parse_region

ENV_PREFIX = "TIMELINER_"


@dataclass
class Paths:
    corpus: str = ""
    model_dir: str = "models"
    label_dir: str = "labels"
    output_dir: str = "out"


@dataclass
class MetricOptions:
    fid_eps: float = 1e-6


def _default_ticc() -> dict[Region, TiccConfig]:
    return dict(PipelineConfig().ticc)


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    ticc: dict[Region, TiccConfig] = field(default_factory=_default_ticc)
    threshold_rules: tuple[ThresholdRule, ...] = field(default_factory=default_threshold_rules)
    synth: SynthConfig = field(default_factory=SynthConfig)
    metrics: MetricOptions = field(default_factory=MetricOptions)
    null_len: int = NULL_LENGTH
    null_value: float = NULL_VALUE
    seed: int | None = None

    def pipeline(self) -> PipelineConfig:
        ticc = self.ticc
        if self.seed is not None:
            ticc = {r: _replace_seed(c, self.seed) for r, c in ticc.items()}
        return PipelineConfig(ticc=ticc, threshold_rules=self.threshold_rules,
                              null_len=self.null_len, null_value=self.null_value)

    def to_dict(self) -> dict:
        d = {
            "paths": vars(self.paths).copy(),
            "ticc": {r.value: c.to_dict() for r, c in self.ticc.items()},
            "threshold_rules": [r.to_dict() for r in self.threshold_rules],
            "synth": self.synth.to_dict(),
            "metrics": vars(self.metrics).copy(),
            "null_len": self.null_len,
            "null_value": self.null_value,
        }
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"paths", "ticc", "threshold_rules", "synth", "metrics", "null_len", "null_value", "seed"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        try:
            if "paths" in d:
                kw["paths"] = Paths(**d["paths"])
            if "ticc" in d:
                kw["ticc"] = {parse_region(r): TiccConfig.from_dict(c) for r, c in d["ticc"].items()}
            if "threshold_rules" in d:
                kw["threshold_rules"] = tuple(ThresholdRule.from_dict(r) for r in d["threshold_rules"])
            if "synth" in d:
                kw["synth"] = SynthConfig.from_dict(d["synth"])
            if "metrics" in d:
                kw["metrics"] = MetricOptions(**d["metrics"])
        except (TypeError, KeyError, ValueError) as exc:
            raise DataError(f"invalid config: {exc}") from exc
        for k in ("null_len", "null_value", "seed"):
            if k in d:
                kw[k] = d[k]
        return cls(**kw)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(tomli.loads(text))
        except tomli.TOMLDecodeError as exc:
            raise DataError(f"config is not valid TOML: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_toml())


def _replace_seed(cfg: TiccConfig, seed: int) -> TiccConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)


def _parse_scalar(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_env_overrides(d: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    d = _deepcopy(d)
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = d
        for part in path[:-1]:
            # region names are capitalized in the file
            match = next((k for k in node if k.lower() == part), part)
            node = node.setdefault(match, {})
            if not isinstance(node, dict):
                raise DataError(f"{key} does not address a table")
        leaf = next((k for k in node if k.lower() == path[-1]), path[-1])
        node[leaf] = _parse_scalar(environ[key])
    return d


def _deepcopy(d):
    if isinstance(d, dict):
        return {k: _deepcopy(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_deepcopy(v) for v in d]
    return d


def load_config(path: str | Path | None = None, environ=None) -> RunConfig:
    """Defaults, then the file (if given), then environment overrides."""
    d = RunConfig().to_dict()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        try:
            file_d = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise DataError(f"{path} is not valid TOML: {exc}") from exc
        d = _merge(d, file_d)
    return RunConfig.from_dict(apply_env_overrides(d, environ))


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
