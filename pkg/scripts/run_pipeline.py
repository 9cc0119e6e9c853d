#!/usr/bin/env python3
"""End-to-end pipeline demo on procedurally generated assets.

Runs every CLI stage in order inside a work directory:

    assets -> generate -> segment -> features -> fit -> autolabel
           -> train -> eval

Real deployments take trusted labels from laboratory measurements; this
demo plants them instead, deriving each scene's biomass from its true
coverage fractions and mean height through a fixed linear rule plus a
little noise.  That makes the whole loop runnable (and checkable)
without field data: the final report should show small errors because
the planted relationship is exactly the kind the ridge model fits.
"""

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

from herbage.cli import main as herbage
from herbage.demo import write_demo_library
from herbage.formats import LabelRow, LabelTable, read_labels, read_height_raster, scene_paths, write_label_table
from herbage.species import SpeciesSet

# planted ground truth: total = BASE + GAIN * vegetated fraction + HGAIN * mean height
BASE, GAIN, HGAIN, NOISE = 800.0, 4000.0, 600.0, 25.0


def run(argv: list[str]) -> None:
    print(f"$ herbage {' '.join(argv)}")
    code = herbage(argv)
    if code != 0:
        sys.exit(code)


def plant_labels(dataset: Path, ids: list[str], species: SpeciesSet, seed: int) -> LabelTable:
    rng = np.random.default_rng(seed)
    rows = []
    for image_id in ids:
        paths = scene_paths(dataset, image_id)
        labels = read_labels(paths["labels"])
        height = read_height_raster(paths["height"])
        cov = np.bincount(labels.ravel(), minlength=len(species)) / labels.size
        total = BASE + GAIN * (1.0 - cov[0]) + HGAIN * float(height.mean())
        total += rng.normal(0.0, NOISE)
        veg = cov[1:]
        pct = veg / veg.sum() * 100.0 if veg.sum() > 0 else np.full(len(veg), 100.0 / len(veg))
        rows.append(LabelRow(image_id, float(max(total, 0.0)), pct, "trusted"))
    return LabelTable(species=species.pasteable, rows=rows)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="pipeline_demo")
    ap.add_argument("--n", type=int, default=30, help="scenes to generate")
    ap.add_argument("--trusted", type=int, default=12, help="scenes with planted lab labels")
    ap.add_argument("--size", type=int, default=160, help="canvas edge length")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fresh", action="store_true", help="wipe the work directory first")
    args = ap.parse_args()
    if args.trusted >= args.n:
        ap.error("--trusted must be smaller than --n")

    work = Path(args.workdir)
    if args.fresh and work.exists():
        shutil.rmtree(work)
    work.mkdir(parents=True, exist_ok=True)
    species = SpeciesSet.preset("irish")

    manifest = write_demo_library(work / "assets", species, seed=args.seed + 7)
    print(f"assets: {manifest}")

    data, scores = work / "data", work / "scores"
    run([
        "generate", "--assets", str(manifest), "--out", str(data),
        "--n", str(args.n), "--seed", str(args.seed),
        "--canvas-size", str(args.size), str(args.size),
        "--paste-count", "60", "120",
    ])
    run(["segment", "--dataset", str(data), "--out", str(scores)])
    run([
        "features", "--dataset", str(data), "--scores", str(scores),
        "--mode", "HL+SL+H", "--out", str(work / "features.csv"),
    ])

    ids = [f"scene_{i:05d}" for i in range(args.n)]
    truth = plant_labels(data, ids, species, args.seed + 1)
    trusted = LabelTable(species=truth.species, rows=truth.rows[: args.trusted])
    heldout = LabelTable(species=truth.species, rows=truth.rows[args.trusted :])
    write_label_table(work / "truth_all.csv", truth)
    write_label_table(work / "trusted.csv", trusted)
    write_label_table(work / "truth_heldout.csv", heldout)
    print(f"planted labels: {args.trusted} trusted, {args.n - args.trusted} held out")

    run([
        "fit", "--features", str(work / "features.csv"), "--labels", str(work / "trusted.csv"),
        "--mode", "all", "--val-frac", "0.25", "--seed", str(args.seed),
        "--out", str(work / "models"),
    ])
    run([
        "fit", "--features", str(work / "features.csv"), "--labels", str(work / "trusted.csv"),
        "--lambda", "1", "--val-frac", "0", "--out", str(work / "ridge.json"),
    ])
    run([
        "autolabel", "--model", str(work / "ridge.json"), "--features", str(work / "features.csv"),
        "--exclude", str(work / "trusted.csv"), "--renormalize",
        "--out", str(work / "auto.csv"),
    ])
    run([
        "autolabel", "--model", str(work / "ridge.json"), "--features", str(work / "features.csv"),
        "--renormalize", "--out", str(work / "pred_all.csv"),
    ])
    run([
        "train", "--features", str(work / "features.csv"),
        "--trusted", str(work / "trusted.csv"), "--auto", str(work / "auto.csv"),
        "--seed", str(args.seed), "--sigma-pred", str(work / "pred_all.csv"),
        "--log", str(work / "train_log.csv"), "--out", str(work / "trained.json"),
    ])
    run([
        "autolabel", "--model", str(work / "trained.json"), "--features", str(work / "features.csv"),
        "--exclude", str(work / "trusted.csv"), "--renormalize",
        "--out", str(work / "trained_pred.csv"),
    ])

    print("\nridge model vs held-out planted truth:")
    run(["eval", "--pred", str(work / "auto.csv"), "--truth", str(work / "truth_heldout.csv"),
         "--report-out", str(work / "report_ridge.json")])
    print("\nrobust-trained model vs held-out planted truth:")
    run(["eval", "--pred", str(work / "trained_pred.csv"), "--truth", str(work / "truth_heldout.csv"),
         "--report-out", str(work / "report_trained.json")])


if __name__ == "__main__":
    main()
