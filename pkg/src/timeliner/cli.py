"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import annotate, metrics, synth, sweep, ticc
from .config import RunConfig, load_config
from .errors import ConvergenceError, DataError, LabelsRequired, TimelinerError
from .ingest import Corpus, RegionChannelMap, concatenate_corpus, load_corpus, load_descriptor_csv
from .report import svg_line_chart
from .timeline import AnnotationSequence, Region, Timeline, frames_to_timeline, parse_region, timeline_to_frames

log = logging.getLogger("timeliner")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
LOCK_NAME = ".timeliner.lock"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers


def _emit(args, payload: dict, table: str) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True) if args.json else table)


def _seed(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise UsageError(f"{args.command} is randomized: pass --seed or set seed in the config")
    return int(seed)


@contextmanager
def _locked(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(directory / LOCK_NAME))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise DataError(f"{directory} is in use by another timeliner process") from None
    try:
        yield
    finally:
        lock.release()


def _corpus(args, cfg: RunConfig) -> Corpus:
    path = args.corpus or cfg.paths.corpus
    if not path:
        raise DataError("no corpus manifest given (use --corpus or paths.corpus)")
    return load_corpus(path)


def _model_path(model_dir: Path, region: Region) -> Path:
    return model_dir / f"{region.value.lower()}.json"


def _label_path(label_dir: Path, region: Region) -> Path:
    return label_dir / f"{region.value.lower()}.json"


def _load_models(model_dir: Path, regions) -> dict:
    models = {}
    for r in regions:
        p = _model_path(model_dir, r)
        if p.exists():
            models[r] = ticc.TiccModel.load(p)
    return models


def _load_label_maps(label_dir: Path, regions) -> dict:
    maps = {}
    for r in regions:
        p = _label_path(label_dir, r)
        if p.exists():
            m = annotate.ClusterLabelMap.load(p)
            if m.region is not r:
                raise DataError(f"{p} is a {m.region.value} map, expected {r.value}")
            maps[r] = m
    return maps


def _with_seed(pcfg: annotate.PipelineConfig, seed: int) -> annotate.PipelineConfig:
    return replace(pcfg, ticc={r: replace(c, seed=seed) for r, c in pcfg.ticc.items()})


def _write_annotations(out: Path, annotations: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for cid, seq in annotations.items():
        seq.to_csv(out / f"{cid}.csv")
        (out / f"{cid}.json").write_text(frames_to_timeline(seq).to_json())


def _read_truth(path: Path) -> Timeline:
    if path.suffix == ".json":
        return Timeline.from_json(path)
    return frames_to_timeline(AnnotationSequence.from_csv(path))


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, cfg):
    if args.csv_dir:
        d = Path(args.csv_dir)
        files = sorted(d.glob("*.csv"))
        if not files:
            raise DataError(f"no CSV files in {d}")
        clips = [load_descriptor_csv(f, args.fps) for f in files]
        cmap = RegionChannelMap()
        corpus = Corpus(clips, cmap, {"source": str(d)})
        cmap.check(corpus.channel_names)
        with _locked(d):
            manifest = {"fps": args.fps, "clips": [{"id": f.stem, "path": f.name} for f in files],
                        "channel_map": cmap.to_dict(), "provenance": corpus.provenance}
            (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    else:
        corpus = _corpus(args, cfg)
    frames = sum(c.num_frames for c in corpus.clips)
    _emit(args, {"clips": len(corpus.clips), "frames": frames, "channels": list(corpus.channel_names)},
          f"corpus ok: {len(corpus.clips)} clips, {frames} frames, {len(corpus.channel_names)} channels")
    return EXIT_OK


def cmd_fit(args, cfg):
    corpus = _corpus(args, cfg)
    seed = _seed(args, cfg)
    pcfg = _with_seed(cfg.pipeline(), seed)
    if args.region:
        pcfg.ticc = {r: c for r, c in pcfg.ticc.items() if r.value.lower() in args.region}
    model_dir = Path(args.model_dir or cfg.paths.model_dir)
    with _locked(model_dir):
        fits = annotate.fit_regions(corpus, pcfg)
        summary = {}
        for r, f in fits.items():
            f.model.save(_model_path(model_dir, r))
            summary[r.value] = {"clusters": f.model.n_clusters, "null_cluster": f.null_cluster,
                                "objective": f.model.history[-1], "converged": f.model.converged}
        (model_dir / "run_config.toml").write_text(cfg.to_toml())
    lines = [f"{r}: K={s['clusters']} null={s['null_cluster']} objective={s['objective']:.4f}" for r, s in summary.items()]
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


def _fits_from_models(args, cfg, corpus):
    pcfg = cfg.pipeline()
    model_dir = Path(args.model_dir or cfg.paths.model_dir)
    models = _load_models(model_dir, pcfg.ticc)
    missing = [r.value for r in pcfg.ticc if r not in models]
    if missing:
        raise DataError(f"no fitted model for {missing} in {model_dir} (run fit first)")
    return pcfg, annotate.fit_regions(corpus, pcfg, models)


def cmd_labels(args, cfg):
    corpus = _corpus(args, cfg)
    pcfg, fits = _fits_from_models(args, cfg, corpus)
    label_dir = Path(args.label_dir or cfg.paths.label_dir)
    if args.labels_command == "init":
        report = annotate.inspection_report(fits, pcfg)
        with _locked(label_dir):
            written = []
            for r, f in fits.items():
                p = _label_path(label_dir, r)
                if p.exists() and not args.force:
                    raise DataError(f"{p} exists; pass --force to overwrite")
                reps = {str(c.cluster): [list(x) for x in c.representatives] for c in report.regions[r].clusters}
                annotate.skeleton_label_map(f).save(p, {"_representatives": reps, "_null_cluster": f.null_cluster})
                written.append(str(p))
        _emit(args, {"written": written}, "\n".join(f"wrote {p}" for p in written))
        return EXIT_OK
    maps = _load_label_maps(label_dir, fits)
    missing = [r.value for r in fits if r not in maps]
    if missing:
        raise LabelsRequired(f"label maps required for {missing} in {label_dir}")
    out = Path(args.out or cfg.paths.output_dir)
    with _locked(out):
        annotations = annotate.annotate_clips(corpus, fits, maps, pcfg)
        _write_annotations(out / "annotations", annotations)
    _emit(args, {"clips": len(annotations), "output": str(out / "annotations")},
          f"annotated {len(annotations)} clips into {out / 'annotations'}")
    return EXIT_OK


def cmd_annotate(args, cfg):
    corpus = _corpus(args, cfg)
    pcfg = cfg.pipeline()
    model_dir = Path(args.model_dir or cfg.paths.model_dir)
    label_dir = Path(args.label_dir or cfg.paths.label_dir)
    out = Path(args.out or cfg.paths.output_dir)
    models = _load_models(model_dir, pcfg.ticc)
    if len(models) < len(pcfg.ticc):
        pcfg = _with_seed(pcfg, _seed(args, cfg))
    maps = _load_label_maps(label_dir, pcfg.ticc)
    with _locked(out):
        result = annotate.run_pipeline(corpus, pcfg, maps, models)
        (out / "report.html").write_text(result.report.to_html())
        (out / "run_config.toml").write_text(cfg.to_toml())
        model_dir.mkdir(parents=True, exist_ok=True)
        for r, m in result.models.items():
            if r not in models:
                m.save(_model_path(model_dir, r))
        if result.status != "ok":
            missing = [r.value for r in result.fits if r not in maps]
            raise LabelsRequired(f"label maps required for {missing}; inspect {out / 'report.html'} "
                                 f"and run `labels init`")
        _write_annotations(out / "annotations", result.annotations)
    _emit(args, {"status": result.status, "clips": len(result.annotations)},
          f"annotated {len(result.annotations)} clips; report at {out / 'report.html'}")
    return EXIT_OK


def cmd_report(args, cfg):
    corpus = _corpus(args, cfg)
    pcfg, fits = _fits_from_models(args, cfg, corpus)
    out = Path(args.out or cfg.paths.output_dir)
    with _locked(out):
        report = annotate.inspection_report(fits, pcfg)
        (out / "report.html").write_text(report.to_html())
    _emit(args, report.to_dict(), f"wrote {out / 'report.html'}")
    return EXIT_OK


def _read_matrix(path: Path) -> np.ndarray:
    return load_descriptor_csv(path, 30.0).data


def cmd_eval(args, cfg):
    preds, truths = [], []
    if args.pred:
        pdir, tdir = Path(args.pred), Path(args.truth or "")
        if not args.truth:
            raise UsageError("eval --pred needs --truth")
        for p in sorted(pdir.glob("*.csv")):
            cands = [tdir / f"{p.stem}.json", tdir / f"{p.stem}.csv"]
            t = next((c for c in cands if c.exists()), None)
            if t is None:
                raise DataError(f"no ground truth for {p.stem} in {tdir}")
            preds.append(AnnotationSequence.from_csv(p))
            truths.append(_read_truth(t))
        if not preds:
            raise DataError(f"no prediction CSVs in {pdir}")
    gen = [_read_matrix(p) for p in sorted(Path(args.motion).glob("*.csv"))] if args.motion else None
    ref = [_read_matrix(p) for p in sorted(Path(args.reference).glob("*.csv"))] if args.reference else None
    if not preds and gen is None:
        raise UsageError("eval needs --pred/--truth and/or --motion")
    rep = metrics.evaluate(preds or None, truths or None, gen, ref, cfg.to_dict())
    if args.out:
        Path(args.out).write_text(rep.to_json())
    _emit(args, rep.to_dict(), rep.to_table())
    return EXIT_OK


def _parse_grid(text: str, cast=float) -> list:
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(cast(part))
    return [cast(v) for v in out]


def cmd_sweep(args, cfg):
    seed = _seed(args, cfg)
    ks = _parse_grid(args.k, int)
    betas = _parse_grid(args.beta, float)
    if args.planted:
        x, labels, _ = synth.planted_regimes(T=args.frames, n_regimes=args.regimes, seed=seed)
        base = ticc.TiccConfig(n_clusters=args.regimes, beta=args.fit_beta, seed=seed)
        null_mask, names, truth = None, (), labels
    else:
        region = parse_region(args.region)
        if args.corpus or cfg.paths.corpus:
            corpus = _corpus(args, cfg)
            tdir = Path(args.truth) if args.truth else None
            if tdir is None:
                raise UsageError("sweep on a corpus needs --truth with ground-truth timelines")
            gts = {c.clip_id: timeline_to_frames(_read_truth(tdir / f"{c.clip_id}.json")) for c in corpus.clips}
        else:
            corpus, tls = synth.synth_corpus(args.clips, cfg=_synth_cfg(cfg, seed))
            gts = {c.clip_id: timeline_to_frames(t) for c, t in zip(corpus.clips, tls)}
        pcfg = cfg.pipeline()
        if region not in pcfg.ticc:
            raise UsageError(f"{region.value} is not a clustered region")
        names = pcfg.ticc_channels(region, corpus.channel_map)
        s = concatenate_corpus(corpus, names, pcfg.null_len, pcfg.null_value)
        truth = np.full(s.num_rows, "__null__", dtype=object)
        for i, c in enumerate(corpus.clips):
            truth[s.clip_rows(i)] = metrics.region_labels(gts[c.clip_id], region)
        x, null_mask = s.data, s.null_mask
        base = replace(pcfg.ticc[region], beta=args.fit_beta, seed=seed)
    k_rows = sweep.sweep_k(x, truth, ks, base, null_mask, names)
    best_k = int(max(k_rows, key=lambda r: r.macro_f1).value)
    model, _ = ticc.fit(x, replace(base, n_clusters=best_k), null_mask, names)
    b_rows = sweep.sweep_beta(model, x, truth, betas, null_mask)
    out = Path(args.out or cfg.paths.output_dir)
    with _locked(out):
        (out / "sweep_k.csv").write_text(sweep.rows_to_csv(k_rows, "k"))
        (out / "sweep_beta.csv").write_text(sweep.rows_to_csv(b_rows, "beta"))
        (out / "sweep_k.svg").write_text(svg_line_chart([r.value for r in k_rows], [r.macro_f1 for r in k_rows],
                                                        "number of clusters K", "macro-F1"))
        (out / "sweep_beta.svg").write_text(svg_line_chart([r.value for r in b_rows], [r.macro_f1 for r in b_rows],
                                                           "switching penalty beta", "macro-F1"))
    payload = {"k": [vars(r) for r in k_rows], "beta": [vars(r) for r in b_rows], "best_k": best_k}
    table = sweep.rows_to_csv(k_rows, "k") + "\n" + sweep.rows_to_csv(b_rows, "beta")
    _emit(args, payload, table.rstrip())
    return EXIT_OK


def _synth_cfg(cfg: RunConfig, seed: int) -> synth.SynthConfig:
    return replace(cfg.synth, seed=seed)


def cmd_synth(args, cfg):
    seed = _seed(args, cfg)
    corpus, tls = synth.synth_corpus(args.clips, (args.min_len, args.max_len), args.action_rate, _synth_cfg(cfg, seed))
    out = Path(args.out or cfg.paths.output_dir)
    with _locked(out):
        manifest = corpus.save(out)
        tdir = out / "truth"
        tdir.mkdir(exist_ok=True)
        for c, t in zip(corpus.clips, tls):
            (tdir / f"{c.clip_id}.json").write_text(t.to_json())
    _emit(args, {"manifest": str(manifest), "clips": len(corpus.clips)},
          f"wrote {len(corpus.clips)} clips; manifest {manifest}")
    return EXIT_OK


def cmd_roundtrip(args, cfg):
    seed = _seed(args, cfg)
    t0 = time.perf_counter()
    corpus, tls = synth.synth_corpus(args.clips, cfg=_synth_cfg(cfg, seed))
    truth = {c.clip_id: timeline_to_frames(t) for c, t in zip(corpus.clips, tls)}
    result = annotate.run_pipeline(corpus, _with_seed(cfg.pipeline(), seed), truth=truth)
    gen = [result.annotations[c.clip_id] for c in corpus.clips]
    rep = metrics.evaluate(gen, tls, config=cfg.to_dict())
    elapsed = time.perf_counter() - t0
    if args.out:
        out = Path(args.out)
        with _locked(out):
            _write_annotations(out / "annotations", result.annotations)
            (out / "report.html").write_text(result.report.to_html())
            (out / "metrics.json").write_text(rep.to_json())
    payload = rep.to_dict() | {"seconds": round(elapsed, 1)}
    _emit(args, payload, f"TAS {rep.tas:.4f}\n{rep.to_table()}\nelapsed {elapsed:.1f}s")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="global seed for randomized steps")
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="timeliner", description="Frame-level facial action timelines from descriptor series.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="validate a corpus or build a manifest from CSVs")
    s.add_argument("--corpus", help="corpus manifest.json")
    s.add_argument("--csv-dir", help="directory of descriptor CSVs to index")
    s.add_argument("--fps", type=float, default=30.0)

    s = sub.add_parser("fit", parents=[common], help="fit one TICC model per clustered region")
    s.add_argument("--corpus")
    s.add_argument("--model-dir")
    s.add_argument("--region", nargs="*", type=str.lower, help="subset of brow/eye/mouth")

    s = sub.add_parser("labels", help="create or apply cluster label maps")
    lsub = s.add_subparsers(dest="labels_command", required=True, parser_class=_Parser)
    for name, helptext in (("init", "write skeleton label maps"), ("apply", "annotate with saved models and maps")):
        ls = lsub.add_parser(name, parents=[common], help=helptext)
        ls.add_argument("--corpus")
        ls.add_argument("--model-dir")
        ls.add_argument("--label-dir")
        if name == "init":
            ls.add_argument("--force", action="store_true")
        else:
            ls.add_argument("--out")

    s = sub.add_parser("annotate", parents=[common], help="full pipeline: fit or load, label, annotate")
    s.add_argument("--corpus")
    s.add_argument("--model-dir")
    s.add_argument("--label-dir")
    s.add_argument("--out")

    s = sub.add_parser("report", parents=[common], help="write the cluster inspection report")
    s.add_argument("--corpus")
    s.add_argument("--model-dir")
    s.add_argument("--out")

    s = sub.add_parser("eval", parents=[common], help="metrics from predictions and ground truth")
    s.add_argument("--pred", help="directory of annotation CSVs")
    s.add_argument("--truth", help="directory of ground-truth timeline JSON or annotation CSV")
    s.add_argument("--motion", help="directory of generated coefficient CSVs")
    s.add_argument("--reference", help="directory of reference coefficient CSVs")
    s.add_argument("--out", help="write the report JSON here")

    s = sub.add_parser("sweep", parents=[common], help="macro-F1 over a K grid and a beta grid")
    s.add_argument("--region", default="brow")
    s.add_argument("--k", default="4..14")
    s.add_argument("--beta", default="0,1,2,5,10,20", help="beta grid re-scored on fixed costs")
    s.add_argument("--fit-beta", type=float, default=5.0, help="beta used while fitting the K grid")
    s.add_argument("--planted", action="store_true", help="use planted block-Toeplitz regimes")
    s.add_argument("--regimes", type=int, default=3)
    s.add_argument("--frames", type=int, default=5000)
    s.add_argument("--clips", type=int, default=20)
    s.add_argument("--corpus")
    s.add_argument("--truth")
    s.add_argument("--out")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus with ground truth")
    s.add_argument("--clips", type=int, default=50)
    s.add_argument("--min-len", type=int, default=200)
    s.add_argument("--max-len", type=int, default=600)
    s.add_argument("--action-rate", type=float, default=0.01)
    s.add_argument("--out")

    s = sub.add_parser("roundtrip", parents=[common], help="synth, annotate with oracle labels, score TAS")
    s.add_argument("--clips", type=int, default=50)
    s.add_argument("--out")
    return p


COMMANDS = {
    "ingest": cmd_ingest, "fit": cmd_fit, "labels": cmd_labels, "annotate": cmd_annotate,
    "report": cmd_report, "eval": cmd_eval, "sweep": cmd_sweep, "synth": cmd_synth, "roundtrip": cmd_roundtrip,
}


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, LabelsRequired, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TimelinerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
