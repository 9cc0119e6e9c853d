"""Per-image features from score maps: class coverage and mean height.

Two coverage flavors: hard (share of pixels whose argmax lands on each
class) and soft (mean softmax score per class).  Soil counts as a class
in both.  The optional height feature is the pixel mean of the
normalized height raster.  Feature modes select which blocks go into the
flattened vector: HL, SL, HL+SL, or HL+SL+H.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .species import SpeciesSet

MODES = ("HL", "SL", "HL+SL", "HL+SL+H")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown feature mode {mode!r}; choose from {MODES}")
    return mode


def mode_uses_height(mode: str) -> bool:
    return check_mode(mode) == "HL+SL+H"


@dataclass
class FeatureVector:
    """Coverage fractions plus mean height for one image."""

    hl: np.ndarray  # (C,) argmax shares, sums to 1
    sl: np.ndarray  # (C,) mean softmax scores
    mean_height: float | None
    mode: str

    def flatten(self) -> np.ndarray:
        """Feature blocks selected by mode: length C, C, 2C, or 2C+1."""
        check_mode(self.mode)
        if self.mode == "HL":
            return np.asarray(self.hl, dtype=float)
        if self.mode == "SL":
            return np.asarray(self.sl, dtype=float)
        flat = np.concatenate([self.hl, self.sl]).astype(float)
        if self.mode == "HL+SL":
            return flat
        if self.mean_height is None:
            raise ValueError("mode HL+SL+H needs a height raster")
        return np.concatenate([flat, [self.mean_height]])


def _fold_to_one(vec: np.ndarray) -> np.ndarray:
    """Absorb float rounding into the dominant entry so the sum is exactly 1.

    Fractions with a common denominator sum to 1 in exact arithmetic but
    each division rounds, leaving the float total a few ulps off.  The
    adjustment is bounded by those same ulps and keeps the vector
    non-negative because the dominant entry is at least 1/C.
    """
    s0 = float(vec.sum())
    if s0 == 1.0 or abs(1.0 - s0) > 1e-9:
        return vec  # already exact, or the input genuinely does not sum to 1
    # nudge one entry (largest first) by ulps until the float total lands
    # exactly on 1.0; an entry whose rounding lattice skips 1.0 is restored
    # and the next one tried
    for k in np.argsort(vec)[::-1]:
        saved = vec[k]
        vec[k] += 1.0 - float(vec.sum())
        for _ in range(8):
            s = float(vec.sum())
            if s == 1.0:
                return vec
            vec[k] = np.nextafter(vec[k], np.inf if s < 1.0 else -np.inf)
        vec[k] = saved
    vec[int(np.argmax(vec))] += 1.0 - float(vec.sum())
    return vec


def hard_coverage(scores: np.ndarray) -> np.ndarray:
    """Per-class fraction of pixels won at argmax (ties to lowest index).

    Entries sum to exactly 1.0.
    """
    s = np.asarray(scores)
    if s.ndim != 3 or s[0].size == 0:
        raise ValueError(f"score map must be non-empty (C, H, W), got {s.shape}")
    winners = np.argmax(s, axis=0)
    counts = np.bincount(winners.ravel(), minlength=s.shape[0])
    return _fold_to_one(counts / winners.size)


def soft_coverage(scores: np.ndarray) -> np.ndarray:
    """Per-class mean score over all pixels.

    Uses the same rounding-defect fold as :func:`hard_coverage`, which
    keeps ``hard == soft`` an exact identity on one-hot score maps.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 3 or s[0].size == 0:
        raise ValueError(f"score map must be non-empty (C, H, W), got {s.shape}")
    return _fold_to_one(s.mean(axis=(1, 2)))


def extract_features(
    scores: np.ndarray,
    height: np.ndarray | None,
    mode: str,
) -> FeatureVector:
    """Assemble the per-image feature vector for one score map.

    ``height`` is the normalized height raster and is required for
    height-aware modes.
    """
    check_mode(mode)
    if mode_uses_height(mode) and height is None:
        raise ValueError(f"mode {mode} requires a height raster")
    mean_height = float(np.asarray(height, dtype=np.float64).mean()) if height is not None else None
    return FeatureVector(
        hl=hard_coverage(scores),
        sl=soft_coverage(scores),
        mean_height=mean_height,
        mode=mode,
    )


def feature_names(mode: str, species: SpeciesSet) -> list[str]:
    """Column names for the flattened vector of a mode."""
    check_mode(mode)
    hl = [f"hl_{n}" for n in species.names]
    sl = [f"sl_{n}" for n in species.names]
    if mode == "HL":
        return hl
    if mode == "SL":
        return sl
    names = hl + sl
    if mode == "HL+SL+H":
        names.append("mean_height")
    return names


def n_classes_for(mode: str, n_columns: int) -> int:
    """Class count implied by a flattened feature width for a mode."""
    check_mode(mode)
    if mode in ("HL", "SL"):
        c = n_columns
    elif mode == "HL+SL":
        c, rem = divmod(n_columns, 2)
        if rem:
            raise ValueError(f"{n_columns} columns cannot be an HL+SL table")
    else:
        c, rem = divmod(n_columns - 1, 2)
        if rem:
            raise ValueError(f"{n_columns} columns cannot be an HL+SL+H table")
    if c < 1:
        raise ValueError(f"{n_columns} columns imply no classes for mode {mode}")
    return c


def mode_columns(from_mode: str, to_mode: str, n_classes: int) -> list[int]:
    """Column indices selecting ``to_mode`` features out of a ``from_mode``
    feature matrix; lets one full extraction drive the whole mode ablation."""
    check_mode(from_mode)
    check_mode(to_mode)
    blocks = {
        "HL": list(range(n_classes)),
        "SL": list(range(n_classes, 2 * n_classes)),
        "H": [2 * n_classes],
    }
    have = {"HL": ["HL"], "SL": ["SL"], "HL+SL": ["HL", "SL"], "HL+SL+H": ["HL", "SL", "H"]}
    offsets: dict[str, list[int]] = {}
    pos = 0
    for block in have[from_mode]:
        width = len(blocks[block])
        offsets[block] = list(range(pos, pos + width))
        pos += width
    needed = have[to_mode]
    if any(b not in offsets for b in needed):
        raise ValueError(f"cannot slice {to_mode} features out of a {from_mode} table")
    return [i for b in needed for i in offsets[b]]
