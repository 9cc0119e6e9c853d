"""L2-regularized least squares from image features to biomass targets.

Fits on the trusted rows, then predicts approximate labels for the
unlabeled rows (automatic labeling).  Features are standardized
internally by default (recorded in the model) and the intercept is never
penalized; both behaviors can be switched off to fit raw features.

Per-target weights solve (X'X + lambda I) w = X'y on the working design
matrix via a symmetric positive-definite factorization; lambda = 0 falls
back to a minimum-norm least-squares solution and flags the model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import FormatError
from .formats import LabelRow, LabelTable


@dataclass
class RidgeModel:
    """Linear map from raw feature space to targets.

    Weights are stored in raw feature space (standardization is folded
    in after the solve), so prediction is just X @ W.T + b.
    """

    weights: np.ndarray  # (T, F)
    intercepts: np.ndarray  # (T,)
    lam: float
    feature_mode: str
    target_names: list[str]
    standardize: bool = True
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_targets(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def to_json(self) -> str:
        obj = {
            "weights": self.weights.tolist(),
            "intercepts": self.intercepts.tolist(),
            "lambda": self.lam,
            "feature_mode": self.feature_mode,
            "target_names": list(self.target_names),
            "standardize": self.standardize,
            "feature_mean": None if self.feature_mean is None else self.feature_mean.tolist(),
            "feature_std": None if self.feature_std is None else self.feature_std.tolist(),
            "metadata": self.metadata,
        }
        return json.dumps(obj, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RidgeModel":
        try:
            obj = json.loads(text)
            return cls(
                weights=np.array(obj["weights"], dtype=float),
                intercepts=np.array(obj["intercepts"], dtype=float),
                lam=float(obj["lambda"]),
                feature_mode=obj["feature_mode"],
                target_names=list(obj["target_names"]),
                standardize=bool(obj["standardize"]),
                feature_mean=None if obj["feature_mean"] is None else np.array(obj["feature_mean"]),
                feature_std=None if obj["feature_std"] is None else np.array(obj["feature_std"]),
                metadata=obj.get("metadata", {}),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad ridge model JSON: {e}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "RidgeModel":
        try:
            return cls.from_json(Path(path).read_text())
        except FileNotFoundError:
            raise FormatError(f"{path}: no such file") from None

    def content_hash(self) -> str:
        """sha256 over the canonical JSON form, for provenance records."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def fit(
    features: np.ndarray,
    targets: np.ndarray,
    lam: float = 1.0,
    *,
    standardize: bool = True,
    fit_intercept: bool = True,
    feature_mode: str = "HL+SL+H",
    target_names: list[str] | None = None,
) -> RidgeModel:
    """Fit one ridge model per target column over a shared design matrix."""
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"features must be (N, F) with N >= 1, got {X.shape}")
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise ValueError(f"row mismatch: {X.shape[0]} feature rows, {Y.shape[0]} target rows")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    n, n_feat = X.shape
    n_targets = Y.shape[1]
    if target_names is None:
        target_names = [f"t{i}" for i in range(n_targets)]
    if len(target_names) != n_targets:
        raise ValueError(f"{len(target_names)} target names for {n_targets} targets")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std_safe = np.where(std > 0, std, 1.0)  # constant columns stay at 0 weight

    if standardize:
        Xw = (X - mean) / std_safe
    elif fit_intercept:
        Xw = X - mean
    else:
        Xw = X
    Yw = Y - Y.mean(axis=0) if fit_intercept else Y

    metadata: dict = {}
    if lam == 0.0:
        W_work, residuals, rank, _ = np.linalg.lstsq(Xw, Yw, rcond=None)
        metadata["solver"] = "lstsq-min-norm"
        if rank < n_feat:
            metadata["degenerate"] = True
    else:
        gram = Xw.T @ Xw + lam * np.eye(n_feat)
        W_work = scipy.linalg.solve(gram, Xw.T @ Yw, assume_a="pos")
        metadata["solver"] = "cholesky"

    W_raw = W_work / std_safe[:, None] if standardize else W_work
    W_raw = W_raw.T  # (T, F)
    if fit_intercept:
        intercepts = Y.mean(axis=0) - W_raw @ mean
    else:
        intercepts = np.zeros(n_targets)

    return RidgeModel(
        weights=W_raw,
        intercepts=intercepts,
        lam=lam,
        feature_mode=feature_mode,
        target_names=list(target_names),
        standardize=standardize,
        feature_mean=mean if standardize else None,
        feature_std=std_safe if standardize else None,
        metadata=metadata,
    )


def clip_targets(values: np.ndarray, target_names: list[str]) -> np.ndarray:
    """Physical clipping per target kind: percentages into [0, 100],
    masses (everything else) at >= 0.  No renormalization."""
    out = np.array(values, dtype=float)
    for j, name in enumerate(target_names):
        if name.endswith("_pct"):
            out[:, j] = np.clip(out[:, j], 0.0, 100.0)
        else:
            out[:, j] = np.maximum(out[:, j], 0.0)
    return out


def predict(
    m: RidgeModel,
    features: np.ndarray,
    *,
    clip: bool = True,
    renormalize_pct: bool = False,
) -> np.ndarray:
    """Predict targets for feature rows (N, F) -> (N, T).

    Percentage targets are clipped to [0, 100] and mass targets at 0.
    ``renormalize_pct`` optionally rescales the percentage columns to sum
    to 100 after clipping (off by default).
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != m.n_features:
        raise ValueError(f"model expects {m.n_features} features, got {X.shape[1]}")
    pred = X @ m.weights.T + m.intercepts
    if clip:
        pred = clip_targets(pred, m.target_names)
    if renormalize_pct:
        pct_cols = [j for j, n in enumerate(m.target_names) if n.endswith("_pct")]
        if pct_cols:
            sums = pred[:, pct_cols].sum(axis=1, keepdims=True)
            nz = sums[:, 0] > 0
            pred[np.ix_(nz, pct_cols)] *= 100.0 / sums[nz]
    return pred


def autolabel(
    m: RidgeModel,
    features: np.ndarray,
    image_ids: list[str],
    species: tuple[str, ...],
    *,
    renormalize_pct: bool = False,
) -> LabelTable:
    """Predict labels for unlabeled rows and package them as a table
    (source ``automatic``), recording the model hash for provenance.

    Target order must be total_mass followed by the per-species
    percentages in ``species`` order.
    """
    expected = ["total_mass"] + [f"{s}_pct" for s in species]
    if list(m.target_names) != expected:
        raise ValueError(
            f"model targets {m.target_names} do not match expected {expected}"
        )
    X = np.asarray(features, dtype=float)
    if len(image_ids) != X.shape[0]:
        raise ValueError(f"{len(image_ids)} ids for {X.shape[0]} feature rows")
    pred = predict(m, X, renormalize_pct=renormalize_pct) if X.shape[0] else np.empty((0, len(expected)))
    rows = [
        LabelRow(
            image_id=image_ids[i],
            total_mass=float(pred[i, 0]),
            species_pct=pred[i, 1:].copy(),
            source="automatic",
        )
        for i in range(X.shape[0])
    ]
    return LabelTable(
        species=tuple(species),
        rows=rows,
        provenance={"model_hash": m.content_hash()},
    )
