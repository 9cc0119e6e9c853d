"""Reference color-prototype segmenter.

Not a serious segmenter: it scores each pixel by RGB distance to a
per-class mean color and softmaxes the negated distances.  It exists so
the feature/regression stages can run end-to-end (and be tested) without
a neural network; any external segmenter can replace it by writing SMP1
score maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

DEFAULT_TEMPERATURE = 25.0  # softmax sharpness on the 8-bit RGB scale


@dataclass
class PrototypeModel:
    """Per-class mean colors (soil included) plus a softmax temperature."""

    prototypes: np.ndarray  # (C, 3) float64 mean RGB per class
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=float).reshape(-1, 3)
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {"prototypes": self.prototypes.tolist(), "temperature": self.temperature},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PrototypeModel":
        try:
            obj = json.loads(text)
            return cls(
                prototypes=np.array(obj["prototypes"], dtype=float),
                temperature=float(obj["temperature"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad prototype model JSON: {e}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "PrototypeModel":
        try:
            return cls.from_json(Path(path).read_text())
        except FileNotFoundError:
            raise FormatError(f"{path}: no such file") from None


def fit_prototypes(
    scenes,
    n_classes: int,
    temperature: float = DEFAULT_TEMPERATURE,
) -> PrototypeModel:
    """Mean RGB per class over a stream of labeled scenes.

    ``scenes`` yields SyntheticScene objects or (rgb, labels) pairs.
    Every class, soil included, must appear in at least one pixel.
    """
    sums = np.zeros((n_classes, 3), dtype=np.float64)
    counts = np.zeros(n_classes, dtype=np.int64)
    for item in scenes:
        rgb = getattr(item, "rgb", None)
        labels = getattr(item, "labels", None)
        if rgb is None:
            rgb, labels = item
        flat_labels = np.asarray(labels).ravel()
        flat_rgb = np.asarray(rgb, dtype=np.float64).reshape(-1, 3)
        if flat_labels.max(initial=0) >= n_classes:
            raise ConfigError(
                f"label {int(flat_labels.max())} out of range for {n_classes} classes"
            )
        for c in range(n_classes):
            mask = flat_labels == c
            counts[c] += int(mask.sum())
            if mask.any():
                sums[c] += flat_rgb[mask].sum(axis=0)
    missing = np.nonzero(counts == 0)[0]
    if missing.size:
        raise ConfigError(f"no pixels for class(es) {missing.tolist()}; cannot fit prototypes")
    return PrototypeModel(prototypes=sums / counts[:, None], temperature=temperature)


def segment(img: np.ndarray, m: PrototypeModel) -> np.ndarray:
    """Score map (C, H, W): softmax over classes of -distance/temperature.

    Per-pixel scores sum to 1; ordering of class planes follows the
    model's prototype order.
    """
    rgb = np.asarray(img, dtype=np.float64)
    h, w = rgb.shape[:2]
    diff = rgb.reshape(1, h, w, 3) - m.prototypes.reshape(-1, 1, 1, 3)
    dist = np.sqrt(np.sum(diff * diff, axis=-1))  # (C, H, W)
    logits = -dist / m.temperature
    logits -= logits.max(axis=0, keepdims=True)  # stability shift
    e = np.exp(logits)
    return (e / e.sum(axis=0, keepdims=True)).astype(np.float32)
