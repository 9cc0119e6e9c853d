import numpy as np
import pytest

from herbage.demo import make_demo_library, write_demo_library
from herbage.species import SpeciesSet
from herbage.synth import GenConfig, generate_scene


@pytest.fixture(scope="session")
def irish() -> SpeciesSet:
    return SpeciesSet.preset("irish")


@pytest.fixture(scope="session")
def demo_lib(irish):
    """In-memory asset library with small procedural cutouts."""
    return make_demo_library(irish, background_size=(96, 96), seed=7)


@pytest.fixture(scope="session")
def asset_manifest(tmp_path_factory, irish):
    """Demo library written to disk; returns the manifest path."""
    root = tmp_path_factory.mktemp("assets")
    return write_demo_library(root, irish, background_size=(96, 96), seed=7)


@pytest.fixture(scope="session")
def tiny_cfg() -> GenConfig:
    return GenConfig(
        canvas_size=(96, 96),
        n_images=4,
        paste_count_range=(20, 40),
        master_seed=123,
    )


@pytest.fixture(scope="session")
def tiny_scenes(demo_lib, tiny_cfg):
    return [generate_scene(demo_lib, tiny_cfg, i) for i in range(tiny_cfg.n_images)]


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
