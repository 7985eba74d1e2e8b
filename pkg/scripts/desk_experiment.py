"""Multi-seed desk study: LeGR vs. uniform sweeps, search-target robustness
and the tau_hat=0 ablation. Writes per-seed reports and a summary JSON."""

import argparse
import json
import sys
import time
from pathlib import Path

from legr.manifest import load_manifest
from legr.study import summarize, trend_trial


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--manifest", default=str(Path(__file__).resolve().parents[1] / "configs" / "desk.json"))
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", default="runs/desk_study")
    args = p.parse_args()

    base = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = lambda msg: print(msg, file=sys.stderr, flush=True)  # noqa: E731
    trials = []
    start = time.time()
    for seed in [int(s) for s in args.seeds.split(",")]:
        t = trend_trial(base.with_seed(seed), log=log)
        trials.append(t)
        (out / f"seed{seed}_legr.csv").write_text(t.pipeline.legr.to_csv())
        (out / f"seed{seed}_uniform.csv").write_text(t.pipeline.baseline.to_csv())
        (out / f"seed{seed}_search_history.csv").write_text(t.pipeline.search.history_csv())
    summary = summarize(trials, base.sweep.zetas)
    summary["seconds"] = time.time() - start
    summary["per_seed"] = [{"seed": t.seed, "pretrain": t.pipeline.pretrain_metrics,
                            "mid_from_mid": t.acc_half_from_half, "low_tau0": t.acc_low_tau0}
                           for t in trials]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    print(json.dumps(summary, indent=2, default=str))


if __name__ == "__main__":
    main()
