#!/usr/bin/env python3
"""Write a small procedurally-drawn asset library (cutouts + soil
backgrounds + manifest.json) so the pipeline can run without any real
imagery.  The output plugs straight into `herbage generate --assets`."""

import argparse

from herbage.demo import write_demo_library
from herbage.species import PRESETS, SpeciesSet


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="library directory to create")
    ap.add_argument("--preset", default="irish", choices=sorted(PRESETS))
    ap.add_argument("--samples-per-species", type=int, default=4)
    ap.add_argument("--backgrounds", type=int, default=2)
    ap.add_argument("--background-size", type=int, nargs=2, default=(256, 256), metavar=("W", "H"))
    ap.add_argument("--sample-size", type=int, default=36)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    manifest = write_demo_library(
        args.out,
        SpeciesSet.preset(args.preset),
        samples_per_species=args.samples_per_species,
        n_backgrounds=args.backgrounds,
        background_size=tuple(args.background_size),
        sample_size=args.sample_size,
        seed=args.seed,
    )
    print(f"asset manifest: {manifest}")


if __name__ == "__main__":
    main()
