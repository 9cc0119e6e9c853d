"""Noise-robust regression training on mixed trusted/automatic labels.

Three mechanisms keep approximate labels from dominating: every batch
carries a fixed quota of trusted rows (the trusted set is oversampled by
recycling it with reshuffles), automatic labels are perturbed by a fresh
uniform draw within +/- 2x their observed RMSE at every epoch, and image
augmentation (vertical flip, random grayscale) is available for pixel
inputs.  The regressor itself is a linear head trained by mini-batch
gradient descent on MSE; the scheduler, perturbation, and augmentation
pieces are model-agnostic and usable by external trainers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .ridge import RidgeModel, clip_targets
from .rng import make_rng

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # Rec.601 luma


def _rows(arr, width: int, what: str) -> np.ndarray:
    """Coerce to a (N, width) float matrix; empty input means zero rows."""
    a = np.asarray(arr, dtype=float)
    if a.size == 0:
        return np.empty((0, width))
    a = np.atleast_2d(a)
    if a.shape[1] != width:
        raise ConfigError(f"{what}: {a.shape[1]} columns, expected {width}")
    return a


@dataclass
class MixedDataset:
    """Trusted rows (gold labels) plus automatic rows (approximate labels).

    ``per_target_sigma`` is the observed RMSE of the automatic labels per
    target, typically measured against a held-out trusted validation
    split; it scales the label perturbation.
    """

    trusted_features: np.ndarray  # (Nt, F)
    trusted_labels: np.ndarray  # (Nt, T)
    automatic_features: np.ndarray  # (Na, F)
    automatic_labels: np.ndarray  # (Na, T)
    target_names: list[str]
    per_target_sigma: np.ndarray | None = None  # (T,), defaults to zeros
    trusted_ids: list[str] | None = None
    automatic_ids: list[str] | None = None

    def __post_init__(self):
        tf = np.asarray(self.trusted_features, dtype=float)
        af = np.asarray(self.automatic_features, dtype=float)
        n_features = 0
        for arr in (tf, af):
            if arr.size:
                n_features = np.atleast_2d(arr).shape[1]
                break
        n_targets = len(self.target_names)
        self.trusted_features = _rows(tf, n_features, "trusted features")
        self.automatic_features = _rows(af, n_features, "automatic features")
        self.trusted_labels = _rows(self.trusted_labels, n_targets, "trusted labels")
        self.automatic_labels = _rows(self.automatic_labels, n_targets, "automatic labels")
        if self.per_target_sigma is None:
            self.per_target_sigma = np.zeros(n_targets)
        self.per_target_sigma = np.asarray(self.per_target_sigma, dtype=float)
        self.validate()

    def validate(self) -> None:
        n_targets = len(self.target_names)
        for what, feats, labs in (
            ("trusted", self.trusted_features, self.trusted_labels),
            ("automatic", self.automatic_features, self.automatic_labels),
        ):
            if feats.shape[0] != labs.shape[0]:
                raise ConfigError(
                    f"{what}: {feats.shape[0]} feature rows vs {labs.shape[0]} label rows"
                )
        if self.per_target_sigma.shape != (n_targets,):
            raise ConfigError(
                f"per_target_sigma must have shape ({n_targets},), got {self.per_target_sigma.shape}"
            )
        if np.any(~np.isfinite(self.per_target_sigma)) or np.any(self.per_target_sigma < 0):
            raise ConfigError("per_target_sigma entries must be finite and >= 0")
        if self.trusted_ids and self.automatic_ids:
            overlap = set(self.trusted_ids) & set(self.automatic_ids)
            if overlap:
                raise ConfigError(f"trusted and automatic rows share ids: {sorted(overlap)[:5]}")

    @property
    def n_trusted(self) -> int:
        return self.trusted_features.shape[0]

    @property
    def n_automatic(self) -> int:
        return self.automatic_features.shape[0]


@dataclass
class TrainConfig:
    """Gradient-descent schedule; defaults mirror the reference recipe."""

    batch_size: int = 12
    trusted_fraction: float = 0.25
    epochs: int = 100
    lr: float = 0.03
    lr_drop_epochs: tuple[int, ...] = (50, 80)
    lr_drop_factor: float = 0.5
    perturb: bool = True
    allow_untrusted: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.trusted_fraction <= 1.0:
            raise ConfigError("trusted_fraction must be in [0, 1]")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0 or self.lr_drop_factor <= 0:
            raise ConfigError("lr and lr_drop_factor must be > 0")

    def trusted_per_batch(self) -> int:
        return int(round(self.batch_size * self.trusted_fraction))


@dataclass
class BatchPlan:
    """One epoch of index batches: (trusted indices, automatic indices)."""

    batch_size: int
    trusted_fraction: float
    batches: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def build_batches(ds: MixedDataset, cfg: TrainConfig, rng: np.random.Generator) -> BatchPlan:
    """Schedule one epoch.

    Mixed regime: every batch holds exactly k = round(batch_size *
    trusted_fraction) trusted rows and fills the rest with automatic
    rows; automatic rows each appear exactly once per epoch while the
    trusted stream recycles with a reshuffle whenever it runs dry.  With
    no automatic rows the epoch is a plain pass over the shuffled trusted
    set.
    """
    cfg.validate()
    k = cfg.trusted_per_batch()
    plan = BatchPlan(batch_size=cfg.batch_size, trusted_fraction=cfg.trusted_fraction)

    if ds.n_automatic == 0:
        if ds.n_trusted == 0:
            raise ConfigError("dataset has no rows at all")
        order = rng.permutation(ds.n_trusted)
        for start in range(0, ds.n_trusted, cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            plan.batches.append((chunk, np.empty(0, dtype=int)))
        return plan

    if k == 0:
        if not cfg.allow_untrusted:
            raise ConfigError(
                "trusted_fraction rounds to 0 trusted rows per batch; set "
                "allow_untrusted=True for pure-automatic training"
            )
        auto_order = rng.permutation(ds.n_automatic)
        for start in range(0, ds.n_automatic, cfg.batch_size):
            plan.batches.append(
                (np.empty(0, dtype=int), auto_order[start : start + cfg.batch_size])
            )
        return plan

    if ds.n_trusted == 0:
        raise ConfigError("trusted set is empty but trusted_fraction > 0")
    auto_per_batch = cfg.batch_size - k
    if auto_per_batch == 0:
        raise ConfigError(
            "batch has no room for automatic rows; lower trusted_fraction or "
            "drop the automatic set"
        )

    auto_order = rng.permutation(ds.n_automatic)
    n_batches = math.ceil(ds.n_automatic / auto_per_batch)

    trusted_stream: list[int] = []
    while len(trusted_stream) < n_batches * k:
        trusted_stream.extend(rng.permutation(ds.n_trusted).tolist())

    for b in range(n_batches):
        auto_idx = auto_order[b * auto_per_batch : (b + 1) * auto_per_batch]
        trusted_idx = np.array(trusted_stream[b * k : (b + 1) * k], dtype=int)
        plan.batches.append((trusted_idx, auto_idx))
    return plan


def perturb_labels(
    labels: np.ndarray,
    per_target_sigma: np.ndarray,
    rng: np.random.Generator,
    target_names: list[str] | None = None,
) -> np.ndarray:
    """Shift each target by an independent uniform draw from [-2s, +2s].

    Meant for automatic labels only (trusted labels are never perturbed);
    callers resample fresh every epoch.  When target names are given the
    result is clipped to physical ranges.
    """
    lab = np.asarray(labels, dtype=float)
    squeeze = lab.ndim == 1
    lab = np.atleast_2d(lab)
    sigma = np.asarray(per_target_sigma, dtype=float)
    if sigma.shape != (lab.shape[1],):
        raise ValueError(f"sigma shape {sigma.shape} does not match {lab.shape[1]} targets")
    if np.any(~np.isfinite(sigma)):
        raise ValueError("sigma must be finite")
    out = lab + rng.uniform(-2.0 * sigma, 2.0 * sigma, size=lab.shape)
    if target_names is not None:
        out = clip_targets(out, target_names)
    return out[0] if squeeze else out


def vertical_flip(img: np.ndarray) -> np.ndarray:
    return np.asarray(img)[::-1].copy()


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma replicated over the three channels."""
    rgb = np.asarray(img, dtype=np.float64)
    luma = np.rint(
        GRAY_WEIGHTS[0] * rgb[..., 0]
        + GRAY_WEIGHTS[1] * rgb[..., 1]
        + GRAY_WEIGHTS[2] * rgb[..., 2]
    ).astype(np.uint8)
    return np.stack([luma] * 3, axis=-1)


def augment_image(
    img: np.ndarray,
    rng: np.random.Generator,
    p_gray: float = 0.2,
    p_flip: float = 0.5,
) -> np.ndarray:
    """Vertical flip with prob p_flip, then grayscale with prob p_gray.

    Both preserve the full herbage content of the image.  Decision draws
    happen in that fixed order regardless of probabilities.
    """
    out = np.asarray(img)
    flip = rng.random() < p_flip
    gray = rng.random() < p_gray
    if flip:
        out = vertical_flip(out)
    if gray:
        out = to_grayscale(out)
    return out.copy() if out is img else out


def observed_rmse(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-target RMSE, the sigma source for label perturbation."""
    p = np.atleast_2d(np.asarray(pred, dtype=float))
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return np.sqrt(np.mean((p - t) ** 2, axis=0))


def train_linear(
    ds: MixedDataset,
    cfg: TrainConfig | None = None,
    *,
    feature_mode: str = "HL+SL+H",
    log_path: str | Path | None = None,
) -> RidgeModel:
    """Mini-batch gradient descent for a linear head on feature rows.

    Features and targets are standardized internally for conditioning;
    the returned model carries raw-space weights, so ``ridge.predict``
    applies unchanged.  Training is fully reproducible from (ds, cfg).
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if ds.n_trusted == 0 and ds.n_automatic == 0:
        raise ConfigError("dataset has no rows at all")
    rng = make_rng(cfg.seed)

    X_all = (
        np.vstack([ds.trusted_features, ds.automatic_features])
        if ds.n_automatic
        else ds.trusted_features
    )
    x_mean = X_all.mean(axis=0)
    x_std = X_all.std(axis=0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    Y_all = (
        np.vstack([ds.trusted_labels, ds.automatic_labels])
        if ds.n_automatic
        else ds.trusted_labels
    )
    y_mean = Y_all.mean(axis=0)
    y_std = Y_all.std(axis=0)
    y_std = np.where(y_std > 0, y_std, 1.0)

    Xt = (ds.trusted_features - x_mean) / x_std
    Xa = (ds.automatic_features - x_mean) / x_std if ds.n_automatic else ds.automatic_features

    n_targets = len(ds.target_names)
    n_features = X_all.shape[1]
    W = np.zeros((n_targets, n_features))
    b = np.zeros(n_targets)

    history: list[dict] = []
    lr = cfg.lr
    for epoch in range(cfg.epochs):
        if epoch in cfg.lr_drop_epochs:
            lr *= cfg.lr_drop_factor
        plan = build_batches(ds, cfg, rng)
        if ds.n_automatic and cfg.perturb:
            auto_labels = perturb_labels(
                ds.automatic_labels, ds.per_target_sigma, rng, ds.target_names
            )
        else:
            auto_labels = ds.automatic_labels
        Ya = (auto_labels - y_mean) / y_std if ds.n_automatic else auto_labels
        Yt = (ds.trusted_labels - y_mean) / y_std

        epoch_mse = 0.0
        n_rows = 0
        for batch_no, (t_idx, a_idx) in enumerate(plan.batches):
            Xb = np.vstack([Xt[t_idx], Xa[a_idx]]) if a_idx.size else Xt[t_idx]
            Yb = np.vstack([Yt[t_idx], Ya[a_idx]]) if a_idx.size else Yt[t_idx]
            resid = Xb @ W.T + b - Yb
            loss = float(np.mean(resid**2))
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no} (lr={lr})"
                )
            nb = Xb.shape[0]
            scale = 2.0 / resid.size  # d mean(resid^2) / d resid
            W -= lr * scale * (resid.T @ Xb)
            b -= lr * scale * resid.sum(axis=0)
            epoch_mse += loss * nb
            n_rows += nb
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_mse": epoch_mse / n_rows,
                "batches": len(plan.batches),
                "trusted_per_batch": cfg.trusted_per_batch() if ds.n_automatic else plan.batches[0][0].size,
            }
        )

    W_raw = (W * y_std[:, None]) / x_std[None, :]
    b_raw = y_mean + y_std * b - W_raw @ x_mean

    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            writer = csv.DictWriter(
                f, fieldnames=["epoch", "lr", "train_mse", "batches", "trusted_per_batch"]
            )
            writer.writeheader()
            writer.writerows(history)

    return RidgeModel(
        weights=W_raw,
        intercepts=b_raw,
        lam=0.0,
        feature_mode=feature_mode,
        target_names=list(ds.target_names),
        standardize=True,
        feature_mean=x_mean,
        feature_std=x_std,
        metadata={
            "solver": "minibatch-gd",
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "final_train_mse": history[-1]["train_mse"],
        },
    )
