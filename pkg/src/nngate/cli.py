"""Command-line entry point.

Every command reads only the inputs it is given, writes only its declared
outputs plus a ``*.manifest.json`` run record, and exits with 0 on success,
1 on a validation failure and 2 on an I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .formats import (
    FormatError,
    check_label_disjoint,
    encode_curve_csv,
    read_curve_csv,
    read_embeddings,
    read_neighbor_cache,
    read_predictions,
    read_splits,
    write_embeddings,
    write_neighbor_cache,
    write_predictions,
    write_splits,
)
from .gate import confidence_curve
from .metrics import IntegrationConfig, evaluate_curve
from .model import ConfidenceCurve, EmbeddingSet
from .synth import SynthConfig, generate_synthetic, make_split
from .tuner import TuneResult, combine, parse_n_grid, tune_n
from .vecstore import build_index, build_neighbor_cache

log = logging.getLogger("nngate")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_new(path, data: bytes) -> None:
    with open(path, "xb") as fh:
        fh.write(data)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _write_manifest(args, inputs: list, outputs: list, started: float, manifest_path) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func",)
    }
    record = {
        "command": args.command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "wall_time_s": round(time.time() - started, 6),
    }
    _write_new(manifest_path, _json_bytes(record))


def _manifest_for(out: Path) -> Path:
    return out.parent / (out.name + ".manifest.json") if not out.is_dir() else out / "manifest.json"


def _cfg(args) -> IntegrationConfig:
    return IntegrationConfig(args.coverage_floor, args.extrap_points)


def _load_pair(args):
    """Cache and predictions, optionally restricted to one split subset."""
    cache = read_neighbor_cache(args.cache)
    preds = read_predictions(args.predictions, args.classifier)
    inputs = [args.cache, args.predictions]
    if args.split:
        splits = read_splits(args.split)
        if args.subset not in splits:
            raise FormatError(f"{args.split}: no split named {args.subset!r}")
        ids = splits[args.subset]
        preds = preds.subset(ids)
        missing = [s for s in ids if s not in cache]
        if missing:
            raise ValueError(f"{args.cache}: split sample {missing[0]!r} missing from neighbor cache")
        cache = cache.subset(preds.sample_ids)
        inputs.append(args.split)
    return cache, preds, inputs


# -- commands ---------------------------------------------------------------

def cmd_index(args) -> list:
    base = read_embeddings(args.base)
    log.info("indexing %d vectors of dim %d", len(base), base.dim)
    index = build_index(base)
    write_embeddings(args.out, EmbeddingSet(index.base_set_name, index.row_ids, index.normalized))
    return [args.base]


def cmd_neighbors(args) -> list:
    index = build_index(read_embeddings(args.index))
    queries = read_embeddings(args.queries)
    log.info("searching %d queries against %d rows, k=%d", len(queries), len(index), args.k)
    cache = build_neighbor_cache(index, queries, args.k, embedder_name=args.embedder, threads=args.threads)
    write_neighbor_cache(args.out, cache)
    return [args.index, args.queries]


def cmd_curve(args) -> list:
    cache, preds, inputs = _load_pair(args)
    curve = confidence_curve(cache, preds, args.n)
    _write_new(args.out, encode_curve_csv(curve.coverage, curve.accuracy))
    return inputs


def cmd_gain(args) -> list:
    cfg = _cfg(args)
    if args.from_curve:
        cov, acc = read_curve_csv(args.from_curve)
        if args.acc_b is not None:
            acc_b = args.acc_b
        elif cov.size and cov[-1] == 1.0:
            acc_b = float(acc[-1])
        else:
            raise ValueError(f"{args.from_curve}: curve does not reach coverage 1; pass --acc-b")
        curve = ConfidenceCurve(args.n or 0, cov, acc, acc_b)
        inputs = [args.from_curve]
    else:
        if args.cache is None or args.predictions is None or args.n is None:
            raise ValueError("gain needs CACHE PREDICTIONS --n, or --from-curve")
        cache, preds, inputs = _load_pair(args)
        curve = confidence_curve(cache, preds, args.n)
    report = evaluate_curve(curve, cfg)
    _write_new(args.out, _json_bytes(report.to_dict()))
    log.info("NCG %.6f (gain %.6f / max %.6f)", report.normalized_confidence_gain,
             report.confidence_gain, report.max_confidence_gain)
    return inputs


def cmd_tune(args) -> list:
    cache, preds, inputs = _load_pair(args)
    grid = parse_n_grid(args.n_grid)
    grid = [n for n in grid if n <= cache.k] if args.clip_grid else grid
    result = tune_n(cache, preds, grid, _cfg(args), threads=args.threads)
    _write_new(args.out, _json_bytes(result.to_dict()))
    log.info("best N=%d, NCG=%.3f", result.best_n, result.best.normalized_confidence_gain)
    return inputs


def parse_coverages(spec: str) -> list[float]:
    """``"0.1,0.2"`` or ``"start:stop:step"`` (stop inclusive)."""
    if ":" in spec:
        start, stop, step = (float(x) for x in spec.split(":"))
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
    else:
        values = [float(x) for x in spec.split(",") if x.strip()]
    bad = [v for v in values if not 0.0 < v < 1.0]
    if not values or bad:
        raise ValueError(f"coverages must lie in (0, 1): {spec!r}")
    return values


def _load_combination(path: Path):
    spec = json.loads(path.read_text(encoding="utf-8"))
    models = spec.get("models") if isinstance(spec, dict) else None
    if not models:
        raise FormatError(f"{path}: expected an object with a non-empty 'models' list at line 1")
    entries, inputs = [], [path]
    for i, m in enumerate(models):
        try:
            cache_path = path.parent / m["cache"]
            if "tune" in m:
                tune_path = path.parent / m["tune"]
                tuned = TuneResult.from_dict(json.loads(tune_path.read_text(encoding="utf-8")))
                best_n, ncg = tuned.best_n, tuned.best.normalized_confidence_gain
                inputs.append(tune_path)
            else:
                best_n, ncg = int(m["best_n"]), float(m["train_ncg"])
            name = m.get("embedder")
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: models[{i}] is missing field {exc}") from None
        cache = read_neighbor_cache(cache_path)
        inputs.append(cache_path)
        entries.append((name or cache.embedder_name, cache, best_n, ncg))
    return entries, inputs


def cmd_combine(args) -> list:
    entries, inputs = _load_combination(args.manifest)
    preds = read_predictions(args.predictions, args.classifier)
    inputs.append(args.predictions)
    if args.split:
        preds = preds.subset(read_splits(args.split)[args.subset])
        inputs.append(args.split)
    caches = [(name, cache.subset(preds.sample_ids), n) for name, cache, n, _ in entries]
    gains = {name: ncg for name, _, _, ncg in entries}
    out = io.StringIO(newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["per_model_coverage", "total_coverage", "accuracy"])
    points: dict[float, float] = {}
    for cov in parse_coverages(args.coverage):
        _, acc, total = combine(caches, preds, cov, gains)
        w.writerow([repr(cov), repr(total), repr(acc)])
        points.setdefault(total, acc)
    _write_new(args.out, out.getvalue().encode("utf-8"))
    if args.gain_out:
        xs = sorted(points)
        curve = ConfidenceCurve(0, xs, [points[x] for x in xs], preds.accuracy)
        _write_new(args.gain_out, _json_bytes(evaluate_curve(curve, _cfg(args)).to_dict()))
    return inputs


def cmd_synth(args) -> list:
    cfg = SynthConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    base, queries, preds = generate_synthetic(cfg)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(out / "base.cgeb", base)
    write_embeddings(out / "queries.cgeb", queries)
    write_predictions(out / "predictions.csv", preds)
    _write_new(out / "config.json", _json_bytes(cfg.to_dict()))
    log.info("wrote %d base vectors and %d queries to %s", len(base), len(queries), out)
    return [args.config]


def cmd_split(args) -> list:
    preds = read_predictions(args.predictions)
    seed = 0 if args.seed is None else args.seed
    splits = make_split(preds, args.train_fraction, args.subsets, seed, args.prefix)
    clashes = check_label_disjoint(splits, preds, [k for k in splits if k != "train"])
    if clashes:
        raise ValueError("; ".join(clashes))
    write_splits(args.out, splits)
    return [args.predictions]


def _looks_like_tune(obj) -> bool:
    return isinstance(obj, dict) and {"best_n", "per_n", "grid"} <= obj.keys()


def _looks_like_gain(obj) -> bool:
    return isinstance(obj, dict) and "normalized_confidence_gain" in obj and "per_n" not in obj


def format_best_cell(n: int, ncg: float) -> str:
    """Render a best-N cell as ``"N / 0.xxx"``."""
    return f"{n} / {ncg:.3f}"


def cmd_report(args) -> list:
    run: Path = args.run_dir
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    tunes, gains, curves, inputs = [], [], [], []
    skip = out.resolve()
    for path in sorted(run.rglob("*")):
        if not path.is_file() or path.name.endswith("manifest.json") or skip in path.resolve().parents:
            continue
        if path.suffix == ".json":
            try:
                obj = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                continue
            if _looks_like_tune(obj):
                tunes.append(TuneResult.from_dict(obj))
                inputs.append(path)
            elif _looks_like_gain(obj):
                gains.append((path, obj))
                inputs.append(path)
        elif path.suffix == ".csv":
            with open(path, encoding="utf-8") as fh:
                if fh.readline().strip() == "coverage,accuracy":
                    curves.append((path, *read_curve_csv(path)))
                    inputs.append(path)

    embedders = sorted({t.embedder_name for t in tunes})
    classifiers = sorted({t.classifier_name for t in tunes})
    cell = {(t.classifier_name, t.embedder_name): format_best_cell(t.best_n, t.best.normalized_confidence_gain)
            for t in tunes}

    def table(rows, header) -> bytes:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue().encode("utf-8")

    _write_new(out / "best_n_table.csv", table(
        [[c] + [cell.get((c, e), "") for e in embedders] for c in classifiers],
        ["classifier"] + embedders,
    ))
    _write_new(out / "ncg_vs_n.csv", table(
        [[t.classifier_name, t.embedder_name, n, repr(t.per_n[n].normalized_confidence_gain)]
         for t in tunes for n in t.grid],
        ["classifier", "embedder", "n", "normalized_confidence_gain"],
    ))
    _write_new(out / "gains.csv", table(
        [[str(p.relative_to(run)), g.get("n"), repr(g["acc_b"]), repr(g["confidence_gain"]),
          repr(g["max_confidence_gain"]), repr(g["normalized_confidence_gain"])] for p, g in gains],
        ["source", "n", "acc_b", "confidence_gain", "max_confidence_gain", "normalized_confidence_gain"],
    ))
    _write_new(out / "curves.csv", table(
        [[str(p.relative_to(run)), repr(float(c)), repr(float(a))] for p, cov, acc in curves
         for c, a in zip(cov, acc)],
        ["source", "coverage", "accuracy"],
    ))
    _write_new(out / "summary.json", _json_bytes({
        "best": [
            {"classifier": t.classifier_name, "embedder": t.embedder_name, "best_n": t.best_n,
             "normalized_confidence_gain": t.best.normalized_confidence_gain}
            for t in sorted(tunes, key=lambda t: (t.classifier_name, t.embedder_name))
        ],
        "gain_reports": len(gains),
        "curves": len(curves),
    }))
    return inputs


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")
    common.add_argument("--out", type=Path, required=True, help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    integ = argparse.ArgumentParser(add_help=False)
    integ.add_argument("--coverage-floor", type=float, default=0.1)
    integ.add_argument("--extrap-points", type=int, default=20)

    split = argparse.ArgumentParser(add_help=False)
    split.add_argument("--split", type=Path, help="split file restricting the evaluated samples")
    split.add_argument("--subset", default="train", help="split name to evaluate (default: train)")
    split.add_argument("--classifier", help="classifier name (default: predictions file stem)")

    parser = argparse.ArgumentParser(prog="nngate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", parents=[common], help="normalise a base embedding set")
    p.add_argument("base", type=Path)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("neighbors", parents=[common], help="k nearest base rows for each query")
    p.add_argument("index", type=Path)
    p.add_argument("queries", type=Path)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--embedder", default=None, help="embedder name recorded in the cache")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("curve", parents=[common, split], help="confidence curve for one N")
    p.add_argument("cache", type=Path)
    p.add_argument("predictions", type=Path)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("gain", parents=[common, integ, split], help="Normalized Confidence Gain report")
    p.add_argument("cache", type=Path, nargs="?")
    p.add_argument("predictions", type=Path, nargs="?")
    p.add_argument("--n", type=int)
    p.add_argument("--from-curve", type=Path, help="score a curve CSV instead of a cache")
    p.add_argument("--acc-b", type=float, help="baseline accuracy for curves not reaching coverage 1")
    p.set_defaults(func=cmd_gain)

    p = sub.add_parser("tune", parents=[common, integ, split], help="pick N maximising NCG")
    p.add_argument("cache", type=Path)
    p.add_argument("predictions", type=Path)
    p.add_argument("--n-grid", default="1-100,150,200")
    p.add_argument("--clip-grid", action="store_true", help="drop grid values deeper than the cache")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("combine", parents=[common, integ, split], help="greedy multi-embedder gating")
    p.add_argument("manifest", type=Path, help="JSON listing per-embedder cache, best_n and train NCG")
    p.add_argument("predictions", type=Path)
    p.add_argument("--coverage", default="0.05:0.95:0.05", help="per-model coverages, list or start:stop:step")
    p.add_argument("--gain-out", type=Path, help="also score the combined curve into this JSON")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("config", type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", parents=[common], help="train/test split with label-disjoint subsets")
    p.add_argument("predictions", type=Path)
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--subsets", type=int, default=3)
    p.add_argument("--prefix", default="internal_test")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("report", parents=[common], help="collect run outputs into plot-ready tables")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    started = time.time()
    try:
        inputs = args.func(args)
        _write_manifest(args, inputs, [args.out], started, _manifest_for(args.out))
    except (FormatError, ValueError, KeyError) as exc:
        print(f"nngate {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"nngate {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
