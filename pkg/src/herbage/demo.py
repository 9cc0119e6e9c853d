"""Programmatic demo asset library.

No real plant cutouts ship with this package, so demos and tests build a
small library of procedurally drawn cutouts: each species gets a
distinct base color and silhouette (blades / leaf trios / ragged stars)
over noisy soil-toned backgrounds.  Colors are separated enough for the
prototype segmenter to tell species apart, which is all the reference
pipeline needs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .assets import AssetLibrary, SampleAsset
from .rng import make_rng
from .species import SpeciesSet

# base colors by class index (0 = soil); extended cyclically if needed
PALETTE = [
    (125, 100, 72),  # soil brown
    (72, 165, 58),  # grass green
    (24, 108, 96),  # clover blue-green
    (184, 172, 64),  # weeds yellow
    (150, 64, 120),  # extra species magenta
    (60, 72, 170),  # extra species blue
]


def species_color(index: int) -> tuple[int, int, int]:
    return PALETTE[index % len(PALETTE)]


def _jitter(rgb: np.ndarray, mask: np.ndarray, rng: np.random.Generator, spread: float = 14.0) -> np.ndarray:
    noise = rng.normal(0.0, spread, size=rgb.shape)
    out = np.clip(rgb.astype(np.float64) + noise, 0, 255).astype(np.uint8)
    out[~mask] = 0
    return out


def make_sample(
    species_index: int,
    rng: np.random.Generator,
    size: int = 36,
) -> tuple[np.ndarray, np.ndarray]:
    """One cutout (rgb, alpha) for a species; silhouette varies by class."""
    mask_im = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(mask_im)
    c = size // 2
    kind = (species_index - 1) % 3
    if kind == 0:  # thin blades
        for _ in range(4):
            ang = rng.uniform(0, np.pi)
            L = rng.uniform(0.55, 0.95) * c
            dx, dy = L * np.cos(ang), L * np.sin(ang)
            draw.line([c - dx, c - dy, c + dx, c + dy], fill=255, width=max(2, size // 12))
    elif kind == 1:  # leaf trio
        r = size // 5
        for ang in (0.5, 2.6, 4.7):
            x = c + int(0.8 * r * np.cos(ang + rng.uniform(-0.3, 0.3)))
            y = c + int(0.8 * r * np.sin(ang + rng.uniform(-0.3, 0.3)))
            draw.ellipse([x - r, y - r, x + r, y + r], fill=255)
    else:  # ragged star
        pts = []
        for i in range(10):
            ang = i * np.pi / 5
            rad = (0.9 if i % 2 == 0 else 0.45) * c * rng.uniform(0.8, 1.0)
            pts.append((c + rad * np.cos(ang), c + rad * np.sin(ang)))
        draw.polygon(pts, fill=255)
    alpha = np.asarray(mask_im)
    mask = alpha > 0
    base = np.zeros((size, size, 3), dtype=np.uint8)
    base[mask] = species_color(species_index)
    rgb = _jitter(base, mask, rng)
    return rgb, alpha.copy()


def make_background(rng: np.random.Generator, size: tuple[int, int] = (256, 256)) -> np.ndarray:
    w, h = size
    base = np.array(species_color(0), dtype=np.float64)
    noise = rng.normal(0.0, 10.0, size=(h, w, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def make_demo_library(
    species: SpeciesSet,
    *,
    samples_per_species: int = 4,
    n_backgrounds: int = 2,
    background_size: tuple[int, int] = (256, 256),
    sample_size: int = 36,
    seed: int = 7,
) -> AssetLibrary:
    """In-memory library, no disk I/O."""
    rng = make_rng(seed)
    samples: dict[int, list[SampleAsset]] = {}
    for idx in range(1, len(species)):
        samples[idx] = []
        for k in range(samples_per_species):
            rgb, alpha = make_sample(idx, rng, size=sample_size)
            samples[idx].append(
                SampleAsset(
                    id=f"{species.names[idx]}_{k:02d}", species=idx, rgb=rgb, alpha=alpha
                )
            )
    backgrounds = [make_background(rng, background_size) for _ in range(n_backgrounds)]
    return AssetLibrary(species=species, samples=samples, backgrounds=backgrounds)


def write_demo_library(
    directory: str | Path,
    species: SpeciesSet,
    **kwargs,
) -> Path:
    """Write a demo library (PNG cutouts, JPEG-free backgrounds, manifest);
    returns the manifest path suitable for ``assets.load_library``."""
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    (directory / "backgrounds").mkdir(parents=True, exist_ok=True)
    lib = make_demo_library(species, **kwargs)

    manifest: dict = {"species": list(species.names), "samples": {}, "backgrounds": []}
    for idx, assets_list in sorted(lib.samples.items()):
        for a in assets_list:
            rel = f"samples/{a.id}.png"
            rgba = np.dstack([a.rgb, a.alpha])
            Image.fromarray(rgba, mode="RGBA").save(directory / rel)
            manifest["samples"][a.id] = {"file": rel, "species": species.names[idx]}
    for i, bg in enumerate(lib.backgrounds):
        rel = f"backgrounds/soil_{i:02d}.png"
        Image.fromarray(bg).save(directory / rel)
        manifest["backgrounds"].append(rel)

    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path
