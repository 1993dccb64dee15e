"""Synthetic round trip: plant timelines, render descriptors, annotate, score TAS.

Repeats the 50-clip experiment over several corpus seeds and reports the
per-region macro-F1 and TAS of each.

    python scripts/roundtrip.py --seeds 0,1,2 --out out/roundtrip.json
"""

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from timeliner.annotate import PipelineConfig, run_pipeline
from timeliner.metrics import evaluate
from timeliner.synth import SynthConfig, synth_corpus
from timeliner.timeline import timeline_to_frames


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", default="0", help="comma-separated corpus seeds")
    p.add_argument("--clips", type=int, default=50)
    p.add_argument("--out", type=Path)
    args = p.parse_args()

    results = []
    for seed in (int(s) for s in args.seeds.split(",")):
        t0 = time.perf_counter()
        corpus, timelines = synth_corpus(args.clips, cfg=SynthConfig(seed=seed))
        truth = {c.clip_id: timeline_to_frames(t) for c, t in zip(corpus.clips, timelines)}
        base = PipelineConfig()
        pcfg = replace(base, ticc={r: replace(c, seed=seed) for r, c in base.ticc.items()})
        result = run_pipeline(corpus, pcfg, truth=truth)
        rep = evaluate([result.annotations[c.clip_id] for c in corpus.clips], timelines)
        secs = time.perf_counter() - t0
        regions = "  ".join(f"{k} {v:.3f}" for k, v in rep.region_f1.items())
        print(f"seed {seed}: TAS {rep.tas:.4f}  [{regions}]  {secs:.0f}s")
        results.append({"seed": seed, "seconds": round(secs, 1)} | rep.to_dict())
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
