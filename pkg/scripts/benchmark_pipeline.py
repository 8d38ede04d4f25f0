"""Time each CLI stage of synth -> index -> neighbors -> tune -> gain.

    python3 scripts/benchmark_pipeline.py --config configs/reference.json --threads 4
"""
import argparse
import json
import tempfile
import time
from pathlib import Path

from nngate.cli import main as nngate

ROOT = Path(__file__).resolve().parents[1]


def stage(name, argv, timings):
    t0 = time.perf_counter()
    code = nngate([str(a) for a in argv])
    timings[name] = time.perf_counter() - t0
    if code != 0:
        raise SystemExit(f"{name} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "reference.json")
    ap.add_argument("--k", type=int, default=1000)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--n-grid", default="1-100,150,200")
    args = ap.parse_args()
    threads = [] if args.threads is None else ["--threads", args.threads]

    timings: dict[str, float] = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        data = tmp / "data"
        stage("synth", ["synth", args.config, "--out", data], timings)
        stage("index", ["index", data / "base.cgeb", "--out", tmp / "index.cgeb"], timings)
        stage("neighbors", ["neighbors", tmp / "index.cgeb", data / "queries.cgeb", "--k", args.k,
                            "--out", tmp / "cache.cgnc", *threads], timings)
        stage("tune", ["tune", tmp / "cache.cgnc", data / "predictions.csv", "--n-grid", args.n_grid,
                       "--clip-grid", "--out", tmp / "tune.json", *threads], timings)
        best = json.loads((tmp / "tune.json").read_text())["best_n"]
        stage("gain", ["gain", tmp / "cache.cgnc", data / "predictions.csv", "--n", best,
                       "--out", tmp / "gain.json"], timings)
        ncg = json.loads((tmp / "gain.json").read_text())["normalized_confidence_gain"]

    for name, secs in timings.items():
        print(f"{name:<10} {secs:7.2f}s")
    print(f"{'total':<10} {sum(timings.values()):7.2f}s   best N={best}  NCG={ncg:.3f}")


if __name__ == "__main__":
    main()
