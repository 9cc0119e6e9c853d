"""Crop-sample library: plant cutouts with alpha masks plus soil backgrounds.

The library is described by a JSON manifest (paths relative to the
manifest file)::

    {
      "species": ["soil", "grass", "clover", "weeds"],
      "samples": {
        "g01": {"file": "samples/g01.png", "species": "grass"},
        "c01": {"file": "samples/c01.png", "species": "clover",
                "alpha": "samples/c01_alpha.png"}
      },
      "backgrounds": ["bg/soil1.jpg"]
    }

Cutout alpha is taken from the PNG's 4th channel when present, otherwise
from the sibling grayscale file named by ``alpha``.  The ``species`` list
is optional when the caller supplies a configured species set.

The loaded library is immutable and safe to share across workers; random
draws consume a caller-owned generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import AssetError
from .species import SpeciesSet

ALPHA_THRESHOLD = 127  # alpha above this counts as covered


@dataclass
class SampleAsset:
    """One cutout: RGB pixels, alpha mask, and the species it depicts."""

    id: str
    species: int  # class index, >= 1 (soil is never a sample)
    rgb: np.ndarray  # (H, W, 3) uint8
    alpha: np.ndarray  # (H, W) uint8

    def validate(self) -> None:
        if self.species < 1:
            raise AssetError(f"sample {self.id!r}: species index must be >= 1")
        if self.rgb.shape[:2] != self.alpha.shape:
            raise AssetError(
                f"sample {self.id!r}: rgb {self.rgb.shape[:2]} and alpha "
                f"{self.alpha.shape} dimensions differ"
            )
        if not np.any(self.alpha > ALPHA_THRESHOLD):
            raise AssetError(f"sample {self.id!r}: empty alpha mask (no pixel > {ALPHA_THRESHOLD})")


@dataclass
class AssetLibrary:
    """Validated cutout library, grouped by species, immutable after load."""

    species: SpeciesSet
    samples: dict[int, list[SampleAsset]]  # species index -> samples
    backgrounds: list[np.ndarray]  # each (H, W, 3) uint8

    def samples_for(self, species: int) -> list[SampleAsset]:
        if species == 0:
            raise AssetError("soil (species 0) has no paste-able samples")
        if species not in self.samples or not self.samples[species]:
            name = (
                self.species.names[species]
                if 0 <= species < len(self.species)
                else str(species)
            )
            raise AssetError(f"no samples for species {name!r}")
        return self.samples[species]

    @property
    def n_samples(self) -> int:
        return sum(len(v) for v in self.samples.values())


def load_library(manifest_path: str | Path, species: SpeciesSet | None = None) -> AssetLibrary:
    """Load and validate an asset library from its JSON manifest.

    Every referenced image is decoded up front so later stages never hit
    I/O surprises.  Errors name the offending asset id.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise AssetError(f"manifest {manifest_path} does not exist") from None
    except (OSError, json.JSONDecodeError) as e:
        raise AssetError(f"manifest {manifest_path}: {e}") from None

    if species is None:
        names = manifest.get("species")
        if not names:
            raise AssetError(
                f"manifest {manifest_path} has no 'species' list and no species "
                "set was configured"
            )
        species = SpeciesSet(tuple(names))

    root = manifest_path.parent
    samples: dict[int, list[SampleAsset]] = {i: [] for i in range(1, len(species))}
    for asset_id, entry in manifest.get("samples", {}).items():
        name = entry.get("species")
        if name not in species.names:
            raise AssetError(
                f"sample {asset_id!r}: unknown species {name!r}; configured set "
                f"is {list(species.names)}"
            )
        idx = species.index(name)
        if idx == 0:
            raise AssetError(f"sample {asset_id!r}: soil cannot be a paste sample")
        rgb, alpha = _load_cutout(root, asset_id, entry)
        asset = SampleAsset(id=asset_id, species=idx, rgb=rgb, alpha=alpha)
        asset.validate()
        samples[idx].append(asset)

    backgrounds = []
    for rel in manifest.get("backgrounds", []):
        backgrounds.append(_load_image(root / rel, f"background {rel!r}", mode="RGB"))
    if not backgrounds:
        raise AssetError(f"manifest {manifest_path}: no backgrounds")

    missing = [species.names[i] for i, lst in samples.items() if not lst]
    if missing:
        raise AssetError(f"species with no samples: {missing}")
    return AssetLibrary(species=species, samples=samples, backgrounds=backgrounds)


def pick_sample(lib: AssetLibrary, species: int, rng: np.random.Generator) -> SampleAsset:
    """Uniform draw over the given species' samples; advances rng."""
    pool = lib.samples_for(species)
    return pool[int(rng.integers(len(pool)))]


def pick_background(lib: AssetLibrary, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw over backgrounds; advances rng."""
    return lib.backgrounds[int(rng.integers(len(lib.backgrounds)))]


def _load_cutout(root: Path, asset_id: str, entry: dict) -> tuple[np.ndarray, np.ndarray]:
    rel = entry.get("file")
    if not rel:
        raise AssetError(f"sample {asset_id!r}: manifest entry has no 'file'")
    img = _load_image(root / rel, f"sample {asset_id!r}", mode=None)
    if img.ndim == 3 and img.shape[2] == 4:
        rgb, alpha = img[:, :, :3], img[:, :, 3]
    else:
        alpha_rel = entry.get("alpha")
        if not alpha_rel:
            raise AssetError(
                f"sample {asset_id!r}: image has no alpha channel and no "
                "sibling 'alpha' file is listed"
            )
        rgb = img[:, :, :3] if img.ndim == 3 else np.stack([img] * 3, axis=-1)
        alpha = _load_image(root / alpha_rel, f"sample {asset_id!r} alpha", mode="L")
    return np.ascontiguousarray(rgb), np.ascontiguousarray(alpha)


def _load_image(path: Path, what: str, mode: str | None) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if mode is not None and im.mode != mode:
                im = im.convert(mode)
            return np.asarray(im)
    except FileNotFoundError:
        raise AssetError(f"{what}: file {path} does not exist") from None
    except (UnidentifiedImageError, OSError) as e:
        raise AssetError(f"{what}: cannot decode {path}: {e}") from None
