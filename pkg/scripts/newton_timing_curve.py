"""Train the default Newton surrogate, then time the iterative solver against
it over batch sizes 5120..10240 and print the timing curve.

    python3 scripts/newton_timing_curve.py --out-dir runs/timing
"""
import argparse
import csv
from pathlib import Path

from surrokit.cli import main as cli


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/timing")
    ap.add_argument("--seed", default="1")
    ap.add_argument("--batch", default="5120..10240:512")
    ap.add_argument("--repetitions", default="5")
    args = ap.parse_args()
    out = Path(args.out_dir)
    base = ["--out-dir", str(out), "--seed", args.seed]
    for argv in (["gen", "newton", *base],
                 ["train", "newton", *base],
                 ["bench", "newton", "--model", str(out / "model_newton_3x5x3x1.txt"),
                  "--batch", args.batch, "--repetitions", args.repetitions, *base]):
        if cli(argv) != 0:
            raise SystemExit(1)
    with open(out / "bench_newton.csv") as fh:
        rows = list(csv.DictReader(fh))
    speedups = [float(r["speedup"]) for r in rows]
    print(f"speedup range {min(speedups):.2f}x .. {max(speedups):.2f}x, "
          f"mean {sum(speedups) / len(speedups):.2f}x")


if __name__ == "__main__":
    main()
