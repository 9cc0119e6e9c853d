"""Pipeline configuration: JSON file + CLI override merging.

Precedence is flags > config file > built-in defaults.  The resolved
configuration is hashed (canonical JSON, sha256) and recorded in every
artifact's provenance so outputs can be traced to the exact settings
that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .species import SpeciesSet
from .synth import GenConfig
from .training import TrainConfig


@dataclass
class PipelineConfig:
    """Everything the CLI stages share."""

    species: SpeciesSet = field(default_factory=lambda: SpeciesSet.preset("irish"))
    assets_manifest: str | None = None
    seed: int = 0
    gen: GenConfig = field(default_factory=GenConfig)
    feature_mode: str = "HL+SL+H"
    ridge_lambda: float = 1.0
    ridge_standardize: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return {
            "species": list(self.species.names),
            "assets_manifest": self.assets_manifest,
            "seed": self.seed,
            "generate": asdict(self.gen),
            "feature_mode": self.feature_mode,
            "ridge": {"lambda": self.ridge_lambda, "standardize": self.ridge_standardize},
            "train": asdict(self.train),
        }

    def config_hash(self) -> str:
        return canonical_hash(self.to_dict())


def canonical_hash(obj) -> str:
    """sha256 of the canonical (sorted, compact) JSON of an object."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def provenance(cfg_hash: str, seed: int) -> dict[str, str]:
    """Standard provenance triple stamped into artifacts."""
    return {
        "tool_version": __version__,
        "config_hash": cfg_hash,
        "seed": str(seed),
    }


def _pair(value, name: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a two-element list, got {value!r}")
    return tuple(value)


def load_pipeline_config(path: str | Path | None) -> PipelineConfig:
    """Read a pipeline config JSON file; missing sections use defaults."""
    if path is None:
        return PipelineConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"config file {path}: {e}") from None

    if "species" in raw:
        species = SpeciesSet(tuple(raw["species"]))
    elif "species_preset" in raw:
        species = SpeciesSet.preset(raw["species_preset"])
    else:
        species = SpeciesSet.preset("irish")

    gen_raw = dict(raw.get("generate", {}))
    gen_kwargs = {}
    for key in (
        "canvas_size",
        "paste_count_range",
        "blur_radius_range",
        "brightness_range",
        "resize_range",
    ):
        if key in gen_raw:
            gen_kwargs[key] = _pair(gen_raw.pop(key), key)
    if "dirichlet_alpha" in gen_raw:
        gen_kwargs["dirichlet_alpha"] = tuple(gen_raw.pop("dirichlet_alpha"))
    for key in ("n_images", "rotation_range", "master_seed"):
        if key in gen_raw:
            gen_kwargs[key] = gen_raw.pop(key)
    if gen_raw:
        raise ConfigError(f"unknown generate config keys: {sorted(gen_raw)}")
    explicit_master_seed = "master_seed" in gen_kwargs
    gen = GenConfig(**gen_kwargs)

    ridge_raw = raw.get("ridge", {})
    train_raw = dict(raw.get("train", {}))
    if "lr_drop_epochs" in train_raw:
        train_raw["lr_drop_epochs"] = tuple(train_raw["lr_drop_epochs"])
    try:
        train = TrainConfig(**train_raw)
    except TypeError as e:
        raise ConfigError(f"bad train config: {e}") from None

    cfg = PipelineConfig(
        species=species,
        assets_manifest=raw.get("assets_manifest"),
        seed=int(raw.get("seed", 0)),
        gen=gen,
        feature_mode=raw.get("feature_mode", "HL+SL+H"),
        ridge_lambda=float(ridge_raw.get("lambda", 1.0)),
        ridge_standardize=bool(ridge_raw.get("standardize", True)),
        train=train,
    )
    # top-level seed is the master switch unless a stage pinned its own
    if "seed" in raw:
        if not explicit_master_seed:
            cfg.gen.master_seed = cfg.seed
        if "seed" not in train_raw:
            cfg.train.seed = cfg.seed
    return cfg
