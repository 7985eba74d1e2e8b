"""Command line entry point: ``legr {pretrain,search,sweep,baseline,flops,eval}``.

Failures exit with status 1 and a single ``error[category]: message`` line
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from legr import experiment as ex
from legr.archgraph import (FingerprintMismatch, GraphError, MaskError, SpecError, format_mask, load_graph,
                            parse_mask, per_layer_flops, total_flops)
from legr.baselines import BASELINE_KINDS
from legr.data import IdxError
from legr.manifest import ConfigError, ExperimentManifest, load_manifest
from legr.nn import Model, evaluate
from legr.nn import checkpoint
from legr.nn.checkpoint import CheckpointError
from legr.ranking import InfeasibleTarget, load_pair, save_pair


def _zetas(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _manifest(args) -> ExperimentManifest:
    m = load_manifest(args.manifest)
    if getattr(args, "seed", None) is not None:
        m = m.with_seed(args.seed)
    if getattr(args, "zetas", None) is not None:
        try:
            m = m.with_zetas(args.zetas)
        except (ConfigError, ValueError) as e:
            raise ConfigError(str(e), "--zetas") from None
    return m


def _out_dir(args, m: ExperimentManifest) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else m.out_path
    out.mkdir(parents=True, exist_ok=True)
    return out


def _graph(m: ExperimentManifest):
    path = m.resolve(m.architecture)
    if not path.exists():
        raise ConfigError("architecture file not found", "architecture", str(path))
    return load_graph(path)


def _pretrained(args, graph):
    _, weights, _ = checkpoint.load(args.checkpoint, expect_graph=graph)
    return weights


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------- commands


def cmd_pretrain(args) -> int:
    m = _manifest(args)
    graph = _graph(m)
    splits = ex.prepare_data(m)
    weights, metrics, rows = ex.pretrain(m, graph, splits, log=_log if args.verbose else None)
    out = _out_dir(args, m)
    checkpoint.save(out / "pretrained.ckpt", graph, weights, {"seed": m.seed, **metrics})
    (out / "pretrain_log.csv").write_text("step,loss\n" + "".join(f"{s},{loss!r}\n" for s, loss in rows))
    (out / "pretrain_metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(f"test_accuracy {metrics['test_accuracy']:.4f}")
    return 0


def cmd_search(args) -> int:
    m = _manifest(args)
    graph = _graph(m)
    weights = _pretrained(args, graph)
    splits = ex.prepare_data(m)
    result = ex.run_search(m, graph, weights, splits, log=_log if args.verbose else None)
    out = _out_dir(args, m)
    save_pair(out / "pair.json", graph, result.best)
    (out / "search_history.csv").write_text(result.history_csv())
    print(f"best_fitness {result.best_fitness:.4f}")
    return 0


def _write_sweep(out: Path, graph, method: str, zetas, masks, report) -> None:
    mask_dir = out / "masks"
    mask_dir.mkdir(exist_ok=True)
    for z, mask in zip(zetas, masks):
        if mask is not None:
            (mask_dir / f"{method}_z{z:.3f}.mask").write_text(format_mask(graph, mask))
    (out / f"sweep_{method}.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_csv())


def _run_sweep(args, method: str, make_masks) -> int:
    m = _manifest(args)
    graph = _graph(m)
    weights = _pretrained(args, graph)
    masks = make_masks(m, graph, weights)
    splits = ex.prepare_data(m)
    out = _out_dir(args, m)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    report = ex.run_sweep(m, graph, weights, splits, masks, method, checkpoint_dir=ckpt_dir,
                          log=_log if args.verbose else None)
    _write_sweep(out, graph, method, m.sweep.zetas, masks, report)
    return 0


def cmd_sweep(args) -> int:
    def masks(m, graph, weights):
        pair = load_pair(args.pair, graph)
        return ex.legr_masks(graph, weights, pair, m.sweep.zetas)

    return _run_sweep(args, "legr", masks)


def cmd_baseline(args) -> int:
    return _run_sweep(args, args.kind,
                      lambda m, graph, weights: ex.baseline_masks(args.kind, graph, weights, m.sweep.zetas))


def cmd_flops(args) -> int:
    graph = load_graph(args.arch)
    mask = parse_mask(graph, Path(args.mask).read_text()) if args.mask else None
    rows = per_layer_flops(graph, mask)
    width = max(len(r[0]) for r in rows + [("layer",)])
    print(f"{'layer':<{width}}  {'kept/total':>11}  {'macs':>12}")
    for name, kept, total, macs in rows:
        print(f"{name:<{width}}  {f'{kept}/{total}':>11}  {macs:>12d}")
    full = total_flops(graph)
    now = total_flops(graph, mask)
    print(f"{'total':<{width}}  {'':>11}  {now:>12d}")
    print(f"ratio {now / full:.6f}")
    return 0


def cmd_eval(args) -> int:
    m = _manifest(args)
    graph, weights, _ = checkpoint.load(args.checkpoint)
    splits = ex.prepare_data(m)
    acc = evaluate(Model(graph, weights), splits.test)
    print(f"test_accuracy {acc:.4f}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="legr", description="Learned global ranking filter pruning.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint_required=False):
        sp.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
        sp.add_argument("--out", help="output directory (default: manifest output_dir)")
        sp.add_argument("--seed", type=int, help="override the manifest seed")
        sp.add_argument("--zetas", type=_zetas, help="override sweep targets, e.g. 0.75,0.5,0.25")
        sp.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
        if checkpoint_required:
            sp.add_argument("--checkpoint", required=True, help="pretrained checkpoint")

    sp = sub.add_parser("pretrain", help="train the base network")
    common(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("search", help="learn an affine pair at the lowest target")
    common(sp, True)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("sweep", help="prune at every target with a learned pair and fine-tune")
    common(sp, True)
    sp.add_argument("--pair", required=True, help="affine pair file from 'search'")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("baseline", help="same sweep protocol with a baseline pruner")
    common(sp, True)
    sp.add_argument("--kind", choices=BASELINE_KINDS, default="uniform")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("flops", help="per-layer MAC table")
    sp.add_argument("arch", help="architecture file")
    sp.add_argument("--mask", help="filter mask file")
    sp.set_defaults(func=cmd_flops)

    sp = sub.add_parser("eval", help="test accuracy of a checkpoint")
    common(sp, True)
    sp.set_defaults(func=cmd_eval)
    return p


_CATEGORIES = [
    (ConfigError, "config"),
    (SpecError, "spec"),
    (GraphError, "graph"),
    (MaskError, "mask"),
    (FingerprintMismatch, "fingerprint"),
    (CheckpointError, "checkpoint"),
    (InfeasibleTarget, "infeasible"),
    (IdxError, "data"),
    (OSError, "io"),
    (ValueError, "value"),
]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - every failure becomes one parseable line
        for cls, category in _CATEGORIES:
            if isinstance(e, cls):
                break
        else:
            raise
        message = " ".join(str(e).split())
        print(f"error[{category}]: {message}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
