"""Command-line pipeline driver.

Subcommands cover the full pipeline in order::

    generate   synthesize scenes (rgb + labels + normalized height)
    segment    fit/apply the color-prototype segmenter, write score maps
    features   reduce score maps (+ heights) to per-image feature vectors
    fit        ridge-fit biomass targets from trusted labels (ablation table)
    autolabel  predict labels for unlabeled images with a fitted model
    train      robust mixed-batch training on trusted + automatic labels
    eval       compare predicted labels against ground truth

Every artifact records {tool_version, config_hash, seed}; stages are
deterministic given their inputs, so re-running reproduces identical
outputs.  Expected failures print a JSON error object on stderr and
exit non-zero (2 = pipeline error, 3 = I/O error).
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .assets import load_library
from .config import canonical_hash, load_pipeline_config, provenance
from .errors import ConfigError, FormatError, PipelineError
from .features import (
    MODES,
    check_mode,
    extract_features,
    feature_names,
    mode_columns,
    mode_uses_height,
    n_classes_for,
)
from .formats import (
    read_feature_table,
    read_height_raster,
    read_label_table,
    read_rgb,
    read_labels,
    read_score_map,
    scene_paths,
    write_feature_table,
    write_height_raster,
    write_label_table,
    write_scene_files,
    write_score_map,
)
from .metrics import evaluate, evaluate_arrays
from .protoseg import DEFAULT_TEMPERATURE, PrototypeModel, fit_prototypes, segment
from .ridge import RidgeModel
from .ridge import autolabel as ridge_autolabel
from .ridge import fit as ridge_fit
from .ridge import predict as ridge_predict
from .rng import make_rng
from .species import SpeciesSet
from .synth import (
    GenConfig,
    generate_scene,
    height_histogram,
    merge_histograms,
    normalize_height,
    normalizer_from_counts,
)
from .training import (
    MixedDataset,
    TrainConfig,
    observed_rmse,
    train_linear,
)

DATASET_MANIFEST = "dataset.json"


# ---------------------------------------------------------------------------
# helpers


def _resolve_jobs(value: int | None) -> int:
    """--jobs flag, HERBAGE_JOBS env var, then 1."""
    if value is None:
        env = os.environ.get("HERBAGE_JOBS", "").strip()
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"HERBAGE_JOBS={env!r} is not an integer") from None
        else:
            value = 1
    if value < 1:
        raise ConfigError(f"--jobs must be >= 1, got {value}")
    return value


def _stage_provenance(options: dict, seed: int) -> dict[str, str]:
    """Provenance triple for a stage: hash of its resolved options."""
    return provenance(canonical_hash(options), seed)


def _read_dataset_manifest(directory: str | Path) -> dict:
    path = Path(directory) / DATASET_MANIFEST
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: {e}") from None
    for key in ("species", "images", "clip_value"):
        if key not in raw:
            raise FormatError(f"{path}: manifest is missing key {key!r}")
    return raw


def _dataset_seed(manifest: dict) -> int:
    try:
        return int(manifest.get("provenance", {}).get("seed", 0))
    except (TypeError, ValueError):
        return 0


def _match_features(
    feat_ids: list[str], matrix: np.ndarray, wanted_ids: list[str], what: str
) -> np.ndarray:
    """Rows of the feature matrix for wanted ids, in wanted order."""
    pos = {image_id: i for i, image_id in enumerate(feat_ids)}
    missing = [i for i in wanted_ids if i not in pos]
    if missing:
        raise ConfigError(
            f"{what}: {len(missing)} id(s) have no feature row, e.g. {missing[:5]}"
        )
    return matrix[[pos[i] for i in wanted_ids]]


# ---------------------------------------------------------------------------
# generate


_WORKER: dict = {}


def _gen_worker_init(manifest_path: str, names: tuple, gen_cfg: GenConfig, out_dir: str):
    _WORKER["lib"] = load_library(manifest_path, SpeciesSet(tuple(names)))
    _WORKER["gen"] = gen_cfg
    _WORKER["out"] = out_dir


def _gen_worker(task: tuple[int, str]) -> tuple[str, np.ndarray]:
    index, image_id = task
    return _generate_one(_WORKER["lib"], _WORKER["gen"], index, image_id, _WORKER["out"])


def _generate_one(lib, gen_cfg: GenConfig, index: int, image_id: str, out_dir) -> tuple[str, np.ndarray]:
    """Render one scene; the height file holds *raw* counts until pass 2."""
    scene = generate_scene(lib, gen_cfg, index)
    write_scene_files(
        out_dir, image_id, scene.rgb, scene.labels, scene.raw_height.astype(np.float32)
    )
    return image_id, height_histogram(scene.raw_height)


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(args.config)
    if args.assets is not None:
        cfg.assets_manifest = args.assets
    if args.n is not None:
        cfg.gen.n_images = args.n
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.gen.master_seed = args.seed
    if args.canvas_size is not None:
        cfg.gen.canvas_size = tuple(args.canvas_size)
    if args.paste_count is not None:
        cfg.gen.paste_count_range = tuple(args.paste_count)
    if cfg.assets_manifest is None:
        raise ConfigError("no asset library: set assets_manifest in the config or pass --assets")
    cfg.gen.validate()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = _resolve_jobs(args.jobs)
    n = cfg.gen.n_images
    ids = [f"scene_{i:05d}" for i in range(n)]
    prov = provenance(cfg.config_hash(), cfg.gen.master_seed)

    if n == 0:
        warnings.warn("generate: n=0, writing a manifest only")
        clip = 1.0
    else:
        tasks = [(i, ids[i]) for i in range(n)]
        jobs = min(jobs, n)
        if jobs == 1:
            lib = load_library(cfg.assets_manifest, cfg.species)
            results = [_generate_one(lib, cfg.gen, i, image_id, out) for i, image_id in tasks]
        else:
            with multiprocessing.Pool(
                jobs,
                initializer=_gen_worker_init,
                initargs=(cfg.assets_manifest, cfg.species.names, cfg.gen, str(out)),
            ) as pool:
                results = list(pool.imap_unordered(_gen_worker, tasks, chunksize=1))
        norm = normalizer_from_counts(merge_histograms([h for _, h in results]))
        clip = norm.clip_value
        # pass 2: replace raw counts with clipped, normalized heights
        for image_id in ids:
            path = scene_paths(out, image_id)["height"]
            write_height_raster(path, normalize_height(read_height_raster(path), norm))

    manifest = {
        "version": 1,
        "species": list(cfg.species.names),
        "n_images": n,
        "canvas_size": list(cfg.gen.canvas_size),
        "clip_value": clip,
        "images": ids,
        "provenance": prov,
    }
    (out / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"generate: {n} scene(s) in {out} (clip_value={clip:g}, jobs={jobs})")
    return 0


# ---------------------------------------------------------------------------
# segment


def _scene_stream(directory: Path, ids: list[str]):
    for image_id in ids:
        paths = scene_paths(directory, image_id)
        yield read_rgb(paths["rgb"]), read_labels(paths["labels"])


def cmd_segment(args: argparse.Namespace) -> int:
    manifest = _read_dataset_manifest(args.dataset)
    ids = list(manifest["images"])
    species = SpeciesSet(tuple(manifest["species"]))
    dataset = Path(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.model is not None:
        model = PrototypeModel.load(args.model)
        model_path = Path(args.model)
        if model.n_classes != len(species):
            raise ConfigError(
                f"model has {model.n_classes} classes, dataset has {len(species)}"
            )
    else:
        fit_ids = args.fit_ids.split(",") if args.fit_ids else ids
        unknown = sorted(set(fit_ids) - set(ids))
        if unknown:
            raise ConfigError(f"--fit-ids not in dataset: {unknown[:5]}")
        if not fit_ids:
            raise ConfigError("no reference scenes to fit prototypes on")
        model = fit_prototypes(
            _scene_stream(dataset, fit_ids), len(species), args.temperature
        )
        model_path = Path(args.model_out) if args.model_out else out / "prototypes.json"
        model.save(model_path)

    for image_id in ids:
        scores = segment(read_rgb(scene_paths(dataset, image_id)["rgb"]), model)
        write_score_map(out / f"{image_id}.smp", scores)

    sidecar = {
        "model": str(model_path),
        "temperature": model.temperature,
        "images": ids,
        "provenance": _stage_provenance(
            {
                "stage": "segment",
                "dataset": str(dataset),
                "model": str(model_path),
                "temperature": model.temperature,
            },
            _dataset_seed(manifest),
        ),
    }
    (out / "segment.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"segment: {len(ids)} score map(s) in {out} (model {model_path})")
    return 0


# ---------------------------------------------------------------------------
# features


def cmd_features(args: argparse.Namespace) -> int:
    mode = check_mode(args.mode)
    manifest = _read_dataset_manifest(args.dataset)
    ids = list(manifest["images"])
    species = SpeciesSet(tuple(manifest["species"]))
    dataset = Path(args.dataset)
    scores_dir = Path(args.scores)

    rows = []
    for image_id in ids:
        scores = read_score_map(scores_dir / f"{image_id}.smp")
        if scores.shape[0] != len(species):
            raise FormatError(
                f"{image_id}: score map has {scores.shape[0]} classes, "
                f"dataset has {len(species)}"
            )
        height = None
        if mode_uses_height(mode):
            height = read_height_raster(scene_paths(dataset, image_id)["height"])
        rows.append(extract_features(scores, height, mode).flatten())

    names = feature_names(mode, species)
    matrix = (
        np.array(rows, dtype=float).reshape(len(ids), -1)
        if ids
        else np.empty((0, len(names)))
    )
    prov = _stage_provenance(
        {"stage": "features", "dataset": str(dataset), "scores": str(scores_dir), "mode": mode},
        _dataset_seed(manifest),
    )
    write_feature_table(args.out, ids, matrix, mode, names, prov)
    print(f"features: {len(ids)} row(s), mode {mode}, -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _report_line(mode: str, n_feat: int, rep) -> str:
    return (
        f"{mode:<10} {n_feat:>4}  "
        f"{rep.hrmse_total:>12.4f} {rep.hrmse_avg:>12.4f} "
        f"{rep.hrae:>8.2f} {rep.rmse_avg:>10.4f}"
    )


def cmd_fit(args: argparse.Namespace) -> int:
    feat_ids, X_full, table_mode, _names = read_feature_table(args.features)
    table_mode = check_mode(table_mode)
    labels = read_label_table(args.labels)
    if not labels.rows:
        raise ConfigError(f"{args.labels}: no label rows to fit on")
    label_ids = labels.ids()
    X = _match_features(feat_ids, X_full, label_ids, "fit")
    Y = labels.target_matrix()
    target_names = labels.target_names()
    n_classes = n_classes_for(table_mode, X.shape[1])

    modes = list(MODES) if args.mode == "all" else [check_mode(args.mode or table_mode)]

    # deterministic validation split (val-frac 0 trains and reports on all rows)
    n = len(label_ids)
    rng = make_rng(args.seed)
    perm = rng.permutation(n)
    n_val = int(round(args.val_frac * n))
    if n_val >= n:
        raise ConfigError(f"--val-frac {args.val_frac} leaves no training rows")
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    scope = "val" if n_val else "train"

    prov = _stage_provenance(
        {
            "stage": "fit",
            "features": str(args.features),
            "labels": str(args.labels),
            "mode": args.mode or table_mode,
            "lambda": args.lam,
            "standardize": not args.no_standardize,
            "val_frac": args.val_frac,
        },
        args.seed,
    )

    header = (
        f"{'mode':<10} {'F':>4}  "
        f"{scope + '_hrmse':>12} {'hrmse_avg':>12} {'hrae%':>8} {'rmse_pct':>10}"
    )
    print(header)
    models: dict[str, RidgeModel] = {}
    reports: dict[str, dict] = {}
    for mode in modes:
        cols = mode_columns(table_mode, mode, n_classes)
        Xm = X[:, cols]
        model = ridge_fit(
            Xm[train_idx],
            Y[train_idx],
            args.lam,
            standardize=not args.no_standardize,
            feature_mode=mode,
            target_names=target_names,
        )
        model.metadata["provenance"] = prov
        model.metadata["train_rows"] = int(train_idx.size)
        model.metadata["val_rows"] = int(val_idx.size)
        eval_idx = val_idx if n_val else train_idx
        pred = ridge_predict(model, Xm[eval_idx])
        truth = Y[eval_idx]
        rep = evaluate_arrays(
            truth[:, 0], pred[:, 0], truth[:, 1:], pred[:, 1:], tuple(labels.species)
        )
        print(_report_line(mode, Xm.shape[1], rep))
        models[mode] = model
        reports[mode] = json.loads(rep.to_json())

    out = Path(args.out)
    if args.mode == "all":
        out.mkdir(parents=True, exist_ok=True)
        for mode, model in models.items():
            model.save(out / f"model_{mode.replace('+', '_')}.json")
        summary = {"scope": scope, "reports": reports, "provenance": prov}
        (out / "ablation.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(f"fit: {len(models)} model(s) + ablation.json in {out}")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        models[modes[0]].save(out)
        print(f"fit: model ({modes[0]}, lambda={args.lam:g}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# autolabel


def cmd_autolabel(args: argparse.Namespace) -> int:
    model = RidgeModel.load(args.model)
    feat_ids, X, table_mode, _names = read_feature_table(args.features)
    table_mode = check_mode(table_mode)
    if model.feature_mode != table_mode:
        cols = mode_columns(table_mode, model.feature_mode, n_classes_for(table_mode, X.shape[1]))
        X = X[:, cols]

    keep = list(feat_ids)
    if args.exclude is not None:
        drop = set(read_label_table(args.exclude).ids())
        keep = [i for i in feat_ids if i not in drop]
        X = _match_features(feat_ids, X, keep, "autolabel")
    if not keep:
        raise ConfigError("autolabel: no rows left to label")

    species = tuple(n[: -len("_pct")] for n in model.target_names[1:])
    table = ridge_autolabel(model, X, keep, species, renormalize_pct=args.renormalize)
    table.provenance.update(
        _stage_provenance(
            {
                "stage": "autolabel",
                "model": str(args.model),
                "features": str(args.features),
                "renormalize": bool(args.renormalize),
            },
            0,
        )
    )
    write_label_table(args.out, table)
    print(f"autolabel: {len(keep)} row(s) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _parse_sigma(text: str, n_targets: int) -> np.ndarray:
    parts = [p for p in text.split(",") if p.strip()]
    try:
        values = np.array([float(p) for p in parts], dtype=float)
    except ValueError:
        raise ConfigError(f"--sigma must be comma-separated numbers, got {text!r}") from None
    if values.size == 1:
        values = np.full(n_targets, values[0])
    if values.size != n_targets:
        raise ConfigError(f"--sigma needs 1 or {n_targets} values, got {values.size}")
    return values


def cmd_train(args: argparse.Namespace) -> int:
    feat_ids, X_full, table_mode, _names = read_feature_table(args.features)
    table_mode = check_mode(table_mode)
    trusted = read_label_table(args.trusted)
    auto = read_label_table(args.auto)
    if trusted.species != auto.species:
        raise ConfigError(
            f"species mismatch: trusted {trusted.species} vs automatic {auto.species}"
        )
    target_names = trusted.target_names()

    Xt = _match_features(feat_ids, X_full, trusted.ids(), "train (trusted)")
    Xa = _match_features(feat_ids, X_full, auto.ids(), "train (automatic)")
    Yt, Ya = trusted.target_matrix(), auto.target_matrix()

    if args.sigma is not None:
        sigma = _parse_sigma(args.sigma, len(target_names))
    elif args.sigma_pred is not None:
        pred = read_label_table(args.sigma_pred)
        shared = [i for i in trusted.ids() if i in set(pred.ids())]
        if not shared:
            raise ConfigError("--sigma-pred shares no image ids with the trusted table")
        by_id_p, by_id_t = pred.by_id(), trusted.by_id()
        P = np.array([[by_id_p[i].total_mass, *by_id_p[i].species_pct] for i in shared])
        T = np.array([[by_id_t[i].total_mass, *by_id_t[i].species_pct] for i in shared])
        sigma = observed_rmse(P, T)
    else:
        sigma = np.zeros(len(target_names))
        if not args.no_perturb:
            print("train: no --sigma/--sigma-pred given, perturbation is a no-op")

    ds = MixedDataset(
        trusted_features=Xt,
        trusted_labels=Yt,
        automatic_features=Xa,
        automatic_labels=Ya,
        target_names=target_names,
        per_target_sigma=sigma,
        trusted_ids=trusted.ids(),
        automatic_ids=auto.ids(),
    )
    cfg = TrainConfig(
        batch_size=args.batch_size,
        trusted_fraction=args.trusted_fraction,
        epochs=args.epochs,
        lr=args.lr,
        perturb=not args.no_perturb,
        allow_untrusted=args.allow_untrusted,
        seed=args.seed,
    )
    model = train_linear(ds, cfg, feature_mode=table_mode, log_path=args.log)
    model.metadata["provenance"] = _stage_provenance(
        {
            "stage": "train",
            "features": str(args.features),
            "trusted": str(args.trusted),
            "auto": str(args.auto),
            "train": {
                "batch_size": cfg.batch_size,
                "trusted_fraction": cfg.trusted_fraction,
                "epochs": cfg.epochs,
                "lr": cfg.lr,
                "perturb": cfg.perturb,
            },
            "sigma": [float(s) for s in sigma],
        },
        cfg.seed,
    )
    model.save(args.out)
    print(
        f"train: {ds.n_trusted} trusted + {ds.n_automatic} automatic rows, "
        f"{cfg.epochs} epochs ({cfg.trusted_per_batch()} trusted/batch) -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    pred = read_label_table(args.pred)
    truth = read_label_table(args.truth)
    rep = evaluate(pred, truth)
    print(rep.to_text())
    if args.report_out is not None:
        payload = json.loads(rep.to_json())
        payload["provenance"] = _stage_provenance(
            {"stage": "eval", "pred": str(args.pred), "truth": str(args.truth)}, 0
        )
        Path(args.report_out).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"eval: report -> {args.report_out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="herbage",
        description="Synthetic herbage biomass pipeline: generate, segment, "
        "featurize, fit, autolabel, train, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled scene dataset")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n", type=int, help="number of scenes (overrides config)")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--assets", help="asset manifest path (overrides config)")
    p.add_argument(
        "--canvas-size", type=int, nargs=2, metavar=("W", "H"), help="canvas size override"
    )
    p.add_argument(
        "--paste-count", type=int, nargs=2, metavar=("LO", "HI"), help="paste count range override"
    )
    p.add_argument("--jobs", type=int, help="worker processes (env HERBAGE_JOBS, default 1)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("segment", help="fit/apply the prototype segmenter")
    p.add_argument("--dataset", required=True, help="dataset directory (from generate)")
    p.add_argument("--out", required=True, help="score map output directory")
    p.add_argument("--model", help="reuse an existing prototype model JSON")
    p.add_argument("--model-out", help="where to save a freshly fitted model")
    p.add_argument("--fit-ids", help="comma-separated reference scene ids (default: all)")
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="extract per-image feature vectors")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scores", required=True, help="score map directory (from segment)")
    p.add_argument("--mode", default="HL+SL+H", choices=MODES)
    p.add_argument("--out", required=True, help="feature CSV path")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("fit", help="closed-form ridge fit + ablation metrics")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True, help="trusted label CSV")
    p.add_argument("--mode", help="feature mode or 'all' (default: the table's mode)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--val-frac", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0, help="validation split seed")
    p.add_argument("--out", required=True, help="model JSON (file; directory when --mode all)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("autolabel", help="predict labels with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--exclude", help="label CSV whose image ids to skip (e.g. trusted)")
    p.add_argument("--renormalize", action="store_true", help="rescale percentages to sum to 100")
    p.add_argument("--out", required=True, help="automatic label CSV path")
    p.set_defaults(func=cmd_autolabel)

    p = sub.add_parser("train", help="mixed-batch robust training")
    p.add_argument("--features", required=True)
    p.add_argument("--trusted", required=True, help="trusted label CSV")
    p.add_argument("--auto", required=True, help="automatic label CSV")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--log", help="epoch log CSV path")
    p.add_argument("--batch-size", type=int, default=12)
    p.add_argument("--trusted-fraction", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-perturb", action="store_true")
    p.add_argument("--allow-untrusted", action="store_true")
    p.add_argument("--sigma", help="per-target perturbation scale(s), comma-separated")
    p.add_argument(
        "--sigma-pred",
        help="label CSV of model predictions on trusted ids; "
        "perturbation scale = per-target RMSE against the trusted table",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report-out", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as e:
        _emit_error(args.command, e)
        return 2
    except ValueError as e:
        _emit_error(args.command, e)
        return 2
    except OSError as e:
        _emit_error(args.command, e)
        return 3


def _emit_error(stage: str, exc: Exception) -> None:
    payload = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
