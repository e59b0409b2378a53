"""Prefetching pipe vs synchronous loading across injected disk latencies.

Uses a generated dataset (created under --data if missing) and prints batches/s
for both loops plus the speedup, one row per latency.
"""

import argparse
from pathlib import Path

from synthseg.batchpipe import PipeConfig, benchmark
from synthseg.manifest import read_manifest
from synthseg.synthworld import DatasetConfig, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", type=Path, default=Path("runs/bench_data"))
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--batches", type=int, default=200)
    ap.add_argument("--latencies-ms", default="0,2,5,10,20")
    ap.add_argument("--wait-mode", default="event", choices=["event", "sleep"])
    args = ap.parse_args()

    path = args.data / "manifest.tsv"
    manifest = read_manifest(path) if path.is_file() else \
        generate_dataset(DatasetConfig(seed=0), args.scenes, args.data)
    print(f"{'latency_ms':>10} {'sync/s':>9} {'prefetch/s':>11} {'speedup':>8}")
    for ms in (float(x) for x in args.latencies_ms.split(",")):
        cfg = PipeConfig(load_latency=ms / 1000.0, wait_mode=args.wait_mode)
        r = benchmark(manifest, cfg, args.batches)
        print(f"{ms:10.1f} {r.sync_throughput:9.1f} {r.prefetch_throughput:11.1f} {r.speedup:8.2f}")


if __name__ == "__main__":
    main()
