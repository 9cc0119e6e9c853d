"""Synthetic canopy scene composition.

A scene starts from a bare-soil background.  Species are drawn per paste
from a categorical distribution whose probabilities come from one
Dirichlet draw per image; each pasted cutout goes through random
rotation, Gaussian blur, brightness change, and resizing before being
placed at a uniform random center.  Three rasters are maintained
together: the RGB canvas, the class-label map, and a per-pixel count of
pasted elements (the un-normalized herbage height).  Heights are later
clipped at the dataset-wide 75th percentile and scaled to [0, 1].

Scene content is fully determined by (config, library, image_index):
each image owns an rng seeded from (master_seed, image_index), so worker
count and execution order never change the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageFilter

from .assets import ALPHA_THRESHOLD, AssetLibrary, SampleAsset, pick_background, pick_sample
from .errors import ConfigError, TransformDegenerateError
from .rng import image_rng

# attempts to re-draw a sample whose random transform degenerated
_MAX_REDRAWS = 100


@dataclass
class GenConfig:
    """Generation parameters; defaults follow the reference recipe."""

    canvas_size: tuple[int, int] = (2000, 2000)  # (width, height)
    n_images: int = 1000
    paste_count_range: tuple[int, int] = (400, 800)
    dirichlet_alpha: tuple[float, ...] = (9.0, 2.0, 1.0)  # per paste-able species
    rotation_range: float = 180.0  # +/- degrees
    blur_radius_range: tuple[float, float] = (0.0, 5.0)
    brightness_range: tuple[float, float] = (0.6, 1.0)
    resize_range: tuple[float, float] = (0.5, 1.5)
    master_seed: int = 0

    def validate(self) -> None:
        w, h = self.canvas_size
        if w < 1 or h < 1:
            raise ConfigError(f"canvas_size must be positive, got {self.canvas_size}")
        lo, hi = self.paste_count_range
        if lo < 1 or lo > hi:
            raise ConfigError(
                f"paste_count_range must satisfy 1 <= min <= max, got {self.paste_count_range}"
            )
        if len(self.dirichlet_alpha) == 0 or any(a <= 0 for a in self.dirichlet_alpha):
            raise ConfigError(
                f"dirichlet_alpha entries must be > 0, got {self.dirichlet_alpha}"
            )
        if self.rotation_range < 0:
            raise ConfigError("rotation_range must be >= 0")
        for name in ("blur_radius_range", "brightness_range", "resize_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or lo > hi:
                raise ConfigError(f"{name} must satisfy 0 <= min <= max, got {(lo, hi)}")
        if self.n_images < 0:
            raise ConfigError("n_images must be >= 0")


@dataclass
class SyntheticScene:
    """RGB canvas + class-label map + raw paste-count height raster."""

    rgb: np.ndarray  # (H, W, 3) uint8
    labels: np.ndarray  # (H, W) uint8 class indices, 0 = soil
    raw_height: np.ndarray  # (H, W) int32 paste counts

    def validate(self) -> None:
        h, w = self.labels.shape
        if self.rgb.shape != (h, w, 3) or self.raw_height.shape != (h, w):
            raise ValueError(
                f"raster shapes differ: rgb {self.rgb.shape}, labels "
                f"{self.labels.shape}, raw_height {self.raw_height.shape}"
            )
        if np.any(self.raw_height < 0):
            raise ValueError("raw_height must be >= 0")
        if np.any((self.raw_height == 0) & (self.labels != 0)):
            raise ValueError("pixels never pasted on must stay soil (label 0)")


@dataclass
class HeightNormalizer:
    """Dataset-wide height clip: the 75th percentile of raw heights,
    floored at 1 to keep the division sane on sparse data."""

    clip_value: float = 1.0


def draw_species_probs(alpha, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw via the standard Gamma-ratio construction.

    Returns p with p_i >= 0 and sum(p) == 1 (to float64 round-off).
    """
    a = np.asarray(alpha, dtype=float)
    if a.size == 0 or np.any(a <= 0):
        raise ValueError(f"dirichlet alpha must be positive, got {alpha}")
    for _ in range(_MAX_REDRAWS):
        g = rng.gamma(shape=a)
        s = g.sum()
        if s > 0:
            return g / s
    raise ValueError(f"gamma draws underflowed to zero for alpha={alpha}")


def draw_category(p: np.ndarray, rng: np.random.Generator) -> int:
    """Categorical draw by inverse CDF walk; returns an index into p."""
    u = rng.random()
    cum = np.cumsum(p)
    return min(int(np.searchsorted(cum, u, side="right")), len(p) - 1)


# ---------------------------------------------------------------------------
# Sample transforms


def apply_sample_transform(
    s: SampleAsset,
    angle: float,
    blur_radius: float,
    brightness: float,
    scale: float,
) -> SampleAsset:
    """Rotate, blur, brighten, resize a cutout with fixed parameters.

    Rotation expands the bounding box to contain the content; rgb and
    alpha go through the same geometric path (bilinear) while brightness
    touches rgb only.  Identity parameters return a bit-identical copy.
    Raises TransformDegenerateError when resizing collapses to 0 pixels.
    """
    rgb_im = Image.fromarray(s.rgb)
    alpha_im = Image.fromarray(s.alpha, mode="L")

    if angle != 0.0:
        rgb_im = rgb_im.rotate(angle, resample=Image.BILINEAR, expand=True)
        alpha_im = alpha_im.rotate(angle, resample=Image.BILINEAR, expand=True)
    if blur_radius > 0.0:
        flt = ImageFilter.GaussianBlur(radius=blur_radius)
        rgb_im = rgb_im.filter(flt)
        alpha_im = alpha_im.filter(flt)

    rgb = np.asarray(rgb_im)
    if brightness != 1.0:
        rgb = np.clip(np.rint(rgb.astype(np.float64) * brightness), 0, 255).astype(
            np.uint8
        )

    if scale != 1.0:
        w, h = rgb_im.size
        nw, nh = int(round(w * scale)), int(round(h * scale))
        if nw < 1 or nh < 1:
            raise TransformDegenerateError(
                f"sample {s.id!r}: resize x{scale:.3f} of {w}x{h} collapses to 0 pixels"
            )
        rgb = np.asarray(Image.fromarray(rgb).resize((nw, nh), Image.BILINEAR))
        alpha_im = alpha_im.resize((nw, nh), Image.BILINEAR)

    return SampleAsset(
        id=s.id, species=s.species, rgb=np.ascontiguousarray(rgb),
        alpha=np.ascontiguousarray(np.asarray(alpha_im)),
    )


def transform_sample(s: SampleAsset, cfg: GenConfig, rng: np.random.Generator) -> SampleAsset:
    """Random transform with parameters drawn uniformly from cfg ranges.

    Draw order (fixed for reproducibility): rotation angle, blur radius,
    brightness factor, resize scale.
    """
    angle = rng.uniform(-cfg.rotation_range, cfg.rotation_range)
    blur = rng.uniform(*cfg.blur_radius_range)
    brightness = rng.uniform(*cfg.brightness_range)
    scale = rng.uniform(*cfg.resize_range)
    return apply_sample_transform(s, angle, blur, brightness, scale)


# ---------------------------------------------------------------------------
# Pasting


def paste(scene: SyntheticScene, s: SampleAsset, center: tuple[int, int]) -> None:
    """Paste a cutout centered at (x, y); parts off the canvas are clipped.

    Where alpha > 127 the labels are overwritten with the sample species
    and the height count increments by 1; rgb is hard-replaced at alpha
    255 and alpha-blended in (127, 255).  Pixels at alpha <= 127 are
    untouched.
    """
    ch, cw = scene.labels.shape
    sh, sw = s.alpha.shape
    cx, cy = center
    top, left = cy - sh // 2, cx - sw // 2

    y0, y1 = max(top, 0), min(top + sh, ch)
    x0, x1 = max(left, 0), min(left + sw, cw)
    if y0 >= y1 or x0 >= x1:
        return

    a = s.alpha[y0 - top : y1 - top, x0 - left : x1 - left]
    src = s.rgb[y0 - top : y1 - top, x0 - left : x1 - left]
    covered = a > ALPHA_THRESHOLD

    region = scene.labels[y0:y1, x0:x1]
    region[covered] = s.species
    scene.raw_height[y0:y1, x0:x1][covered] += 1

    dst = scene.rgb[y0:y1, x0:x1]
    hard = a == 255
    dst[hard] = src[hard]
    soft = covered & ~hard
    if np.any(soft):
        w = a[soft, None].astype(np.float64) / 255.0
        blended = np.rint(w * src[soft] + (1.0 - w) * dst[soft])
        dst[soft] = blended.astype(np.uint8)


# ---------------------------------------------------------------------------
# Scene generation


def generate_scene(lib: AssetLibrary, cfg: GenConfig, image_index: int) -> SyntheticScene:
    """Compose one scene, fully determined by (cfg, lib, image_index)."""
    cfg.validate()
    if len(cfg.dirichlet_alpha) != lib.species.n_pasteable:
        raise ConfigError(
            f"dirichlet_alpha has {len(cfg.dirichlet_alpha)} entries but the "
            f"library has {lib.species.n_pasteable} paste-able species"
        )
    rng = image_rng(cfg.master_seed, image_index)
    w, h = cfg.canvas_size

    background = pick_background(lib, rng)
    scene = SyntheticScene(
        rgb=_fit_background(background, w, h),
        labels=np.zeros((h, w), dtype=np.uint8),
        raw_height=np.zeros((h, w), dtype=np.int32),
    )

    lo, hi = cfg.paste_count_range
    n_paste = int(rng.integers(lo, hi + 1))
    probs = draw_species_probs(cfg.dirichlet_alpha, rng)

    for _ in range(n_paste):
        species = draw_category(probs, rng) + 1  # paste-able species start at 1
        for _attempt in range(_MAX_REDRAWS):
            sample = pick_sample(lib, species, rng)
            try:
                transformed = transform_sample(sample, cfg, rng)
                break
            except TransformDegenerateError:
                continue
        else:
            raise TransformDegenerateError(
                f"species {species}: {_MAX_REDRAWS} consecutive degenerate transforms"
            )
        cx = int(rng.integers(w))
        cy = int(rng.integers(h))
        paste(scene, transformed, (cx, cy))
    return scene


def _fit_background(bg: np.ndarray, w: int, h: int) -> np.ndarray:
    """Copy a background onto the canvas, resizing when dimensions differ."""
    if bg.shape[:2] == (h, w):
        return bg.copy()
    im = Image.fromarray(bg).resize((w, h), Image.BILINEAR)
    return np.asarray(im).copy()


# ---------------------------------------------------------------------------
# Height normalization


def height_histogram(raw_height: np.ndarray) -> np.ndarray:
    """Exact integer-height counts for one raster (index = height value)."""
    arr = np.asarray(raw_height)
    if np.any(arr < 0):
        raise ValueError("raw heights must be >= 0")
    return np.bincount(arr.ravel())


def merge_histograms(histograms) -> np.ndarray:
    """Associatively merge per-scene count arrays (padding to max length)."""
    hists = [np.asarray(h, dtype=np.int64) for h in histograms]
    if not hists:
        raise ValueError("no histograms to merge")
    size = max(h.size for h in hists)
    total = np.zeros(size, dtype=np.int64)
    for h in hists:
        total[: h.size] += h
    return total


def percentile_from_counts(counts: np.ndarray, q: float) -> float:
    """Percentile of the values a count array summarizes.

    Definition: linear interpolation between order statistics (the
    inclusive method): with n values sorted ascending, the q-th
    percentile sits at position q/100 * (n - 1) and interpolates as
    a[lo] + frac * (a[hi] - a[lo]).
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if n == 0:
        raise ValueError("empty height distribution")
    pos = (q / 100.0) * (n - 1)
    lo = math.floor(pos)
    frac = pos - lo
    cum = np.cumsum(counts)
    v_lo = float(np.searchsorted(cum, lo, side="right"))
    if frac == 0.0:
        return v_lo
    v_hi = float(np.searchsorted(cum, lo + 1, side="right"))
    return v_lo + frac * (v_hi - v_lo)


def fit_height_normalizer(scenes) -> HeightNormalizer:
    """Pool every pixel of every scene and take the 75th height percentile.

    Accepts an iterable of SyntheticScene or bare height arrays; counting
    is exact (single histogram pass per scene, associative merge).
    """
    hists = [
        height_histogram(getattr(s, "raw_height", s)) for s in scenes
    ]
    if not hists:
        raise ValueError("fit_height_normalizer needs at least one scene")
    return normalizer_from_counts(merge_histograms(hists))


def normalizer_from_counts(counts: np.ndarray) -> HeightNormalizer:
    """Normalizer from a pre-merged height histogram (min clip is 1)."""
    p75 = percentile_from_counts(counts, 75.0)
    return HeightNormalizer(clip_value=max(1.0, p75))


def normalize_height(raw: np.ndarray, norm: HeightNormalizer) -> np.ndarray:
    """Clip at the normalizer value and scale to [0, 1] (float32)."""
    if norm.clip_value < 1.0:
        raise ValueError(f"clip_value must be >= 1, got {norm.clip_value}")
    scaled = np.asarray(raw, dtype=np.float64) / norm.clip_value
    return np.minimum(scaled, 1.0).astype(np.float32)
