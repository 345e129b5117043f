"""Per-step time of the optimal pairing search as the number of 2-cells grows.

    python3 scripts/scaling.py --rows 16 --cols 8 16 32 64
"""

import argparse
import statistics

from morsepack.harness import generate_grid_complex, generate_signal
from morsepack.optimize import OptimizerConfig, k_optimal_pairings


def per_step(rows: int, cols: int, steps: int, repeats: int) -> float:
    C, xy = generate_grid_complex(rows, cols, 0)
    s = generate_signal(C, xy, "uniform", 0)
    return statistics.median(
        k_optimal_pairings(C, s, OptimizerConfig(1, steps, seed)).seconds_per_step for seed in range(repeats))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=16)
    p.add_argument("--cols", type=int, nargs="+", default=[8, 16, 32, 64])
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args(argv)

    per_step(4, 4, 8, 1)  # warm-up
    prev = None
    print("two_cells,ms_per_step,ratio_to_previous")
    for cols in args.cols:
        t = per_step(args.rows, cols, args.steps, args.repeats)
        ratio = "" if prev is None else f"{t / prev:.2f}"
        print(f"{2 * args.rows * cols},{1e3 * t:.3f},{ratio}")
        prev = t


if __name__ == "__main__":
    main()
