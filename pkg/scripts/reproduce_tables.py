"""Train and benchmark the preset topology lists for both regions over several
seeds, then print per-topology means across seeds.

    python3 scripts/reproduce_tables.py --out-dir runs/tables --seeds 0,1,2,3,4
"""
import argparse
import csv
import statistics
from collections import defaultdict
from pathlib import Path

from surrokit.cli import main as cli


def summarize(out_dir: Path, region: str, seeds: list[int]) -> None:
    acc, err, l2, speed = (defaultdict(list) for _ in range(4))
    order = []
    for seed in seeds:
        with open(out_dir / f"sweep_{region}_seed{seed}.csv") as fh:
            for row in csv.DictReader(fh):
                t = row["topology"]
                if t not in order:
                    order.append(t)
                acc[t].append(float(row["accuracy"]))
                err[t].append(float(row["mean_abs_err"]))
                l2[t].append(float(row["l2_loss"]))
                speed[t].append(float(row["speedup"]))
    print(f"\n{region}: mean over seeds {seeds}")
    print(f"{'topology':>12} {'l2':>10} {'accuracy':>9} {'abs err':>10} {'speedup':>8}")
    for t in order:
        print(f"{t:>12} {statistics.mean(l2[t]):10.3g} {statistics.mean(acc[t]):9.4f} "
              f"{statistics.mean(err[t]):10.4g} {statistics.mean(speed[t]):8.2f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/tables")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--regions", default="newton,lj")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]
    out = Path(args.out_dir)
    for region in args.regions.split(","):
        base = ["--out-dir", str(out), "--seed", str(seeds[0])]
        if cli(["gen", region, "--n", str(args.n), *base]) != 0:
            raise SystemExit(1)
        if cli(["sweep", region, "--seeds", args.seeds, *base]) != 0:
            raise SystemExit(1)
        summarize(out, region, seeds)


if __name__ == "__main__":
    main()
