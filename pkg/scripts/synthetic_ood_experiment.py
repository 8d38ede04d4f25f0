"""Tune N on a training split, then gate held-out subsets at several coverages.

    python3 scripts/synthetic_ood_experiment.py configs/reference.json --out results/ood.json

Prints one line per test subset and coverage and writes the same numbers
as JSON. Also sweeps the OOD fraction to show how the gain grows with it.
"""
import argparse
import dataclasses
import json
import time
from pathlib import Path

from nngate.gate import decide, nth_distances
from nngate.model import GateParams
from nngate.synth import SynthConfig, generate_synthetic, make_split
from nngate.tuner import coverage_threshold, tune_n
from nngate.vecstore import build_index, build_neighbor_cache


def run_once(cfg: SynthConfig, k: int, coverages, split_seed: int) -> dict:
    base, queries, preds = generate_synthetic(cfg)
    cache = build_neighbor_cache(build_index(base), queries, k)
    split = make_split(preds, 0.75, 3, seed=split_seed)
    train = split["train"]
    tuned = tune_n(cache.subset(train), preds.subset(train), [n for n in range(1, 101) if n <= cache.k])
    n = tuned.best_n
    train_nth = nth_distances(cache, n, train)

    rows = []
    for name in sorted(s for s in split if s != "train"):
        ids = split[name]
        sub_preds = preds.subset(ids)
        correct = sub_preds.correctness()
        for cov in coverages:
            gate = decide(cache.subset(ids), GateParams(n, coverage_threshold(train_nth, cov)))
            kept = [correct[s] for s in gate.accepted_ids()]
            rows.append({
                "subset": name,
                "target_coverage": cov,
                "coverage": gate.coverage,
                "acc_b": sub_preds.accuracy,
                "gated_accuracy": sum(kept) / len(kept) if kept else None,
            })
    return {"best_n": n, "train_ncg": tuned.best.normalized_confidence_gain, "rows": rows}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--k", type=int, default=200)
    ap.add_argument("--coverage", type=float, nargs="+", default=[0.5, 0.7, 0.9])
    ap.add_argument("--ood-sweep", type=float, nargs="*", default=[0.1, 0.3, 0.5])
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    cfg = SynthConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    started = time.perf_counter()
    result = {"config": cfg.to_dict(), "runs": {}}
    for frac in args.ood_sweep or [cfg.ood_fraction]:
        res = run_once(dataclasses.replace(cfg, ood_fraction=frac), args.k, args.coverage, cfg.seed)
        result["runs"][str(frac)] = res
        print(f"ood_fraction={frac:.2f}  best N={res['best_n']}  train NCG={res['train_ncg']:.3f}")
        for r in res["rows"]:
            acc = "n/a" if r["gated_accuracy"] is None else f"{r['gated_accuracy']:.3f}"
            print(f"  {r['subset']:<16} cov {r['coverage']:.3f}  acc_b {r['acc_b']:.3f}  gated {acc}")
    print(f"done in {time.perf_counter() - started:.1f}s")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
