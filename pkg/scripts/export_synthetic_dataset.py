#!/usr/bin/env python3
"""Write the synthetic palm-line fixture out as a directory of PNGs.

Useful for exercising the directory ingestion path end to end:

    python scripts/export_synthetic_dataset.py --out data/synth --count 200
    tvgan train --data-dir data/synth --image-size 64 --epochs 1
"""

import argparse
from pathlib import Path

from PIL import Image

from tvgan import SynthClassParams, denormalize, synth_palm_lines


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--size", type=int, default=64, choices=(32, 64))
    parser.add_argument("--class-seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = SynthClassParams(class_seed=args.class_seed)
    batch = synth_palm_lines(args.count, args.size, params)
    for i, image in enumerate(batch):
        Image.fromarray(denormalize(image[0]), mode="L").save(
            out / f"synth_{i:05d}.png")
    print(f"wrote {args.count} images to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
