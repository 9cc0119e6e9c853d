"""Herbage: synthetic canopy scenes, segmentation features, and biomass regression.

The pipeline stages, in order:

1. ``assets``    - load a library of plant cutouts and soil backgrounds.
2. ``synth``     - compose synthetic canopy scenes with per-pixel species
                   labels and a pasted-element height raster.
3. ``formats``   - bit-exact readers/writers for every pipeline artifact.
4. ``protoseg``  - reference color-prototype segmenter (score maps).
5. ``features``  - reduce score maps to per-image coverage/height features.
6. ``ridge``     - ridge regression from features to biomass labels;
                   automatic labeling of unlabeled images.
7. ``training``  - noise-robust training on mixed trusted/automatic labels.
8. ``metrics``   - RMSE / HRMSE / HRAE evaluation reports.

``herbage.cli`` orchestrates all stages as subcommands of a single tool.
"""

__version__ = "0.1.0"
