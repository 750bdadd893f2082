#!/usr/bin/env python3
"""Overfit sanity check: memorize a small synthetic corpus and report
training-set exact match under beam decoding. A healthy build reaches
100% well before 200 epochs; anything under 95% points at a training or
decoding defect."""

import argparse
import sys

from pickgen.experiments import overfit_run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--beam-size", type=int, default=8)
    parser.add_argument("--learning-rate", type=float, default=2e-3)
    parser.add_argument("--out-dir", help="also write checkpoint and loss log")
    parser.add_argument("--show-misses", action="store_true")
    args = parser.parse_args()

    result = overfit_run(
        size=args.size,
        epochs=args.epochs,
        seed=args.seed,
        beam_size=args.beam_size,
        learning_rate=args.learning_rate,
        out_dir=args.out_dir,
    )
    print(f"exact match: {result.exact_match_pct:.1f}%")
    print(f"final generator loss: {result.final_generator_loss:.4f}")
    if args.show_misses:
        for sample_id, text in result.predictions:
            print(f"  {sample_id}: {text}")
    return 0 if result.exact_match_pct >= 95.0 else 1


if __name__ == "__main__":
    sys.exit(main())
