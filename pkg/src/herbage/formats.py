"""Readers and writers for every pipeline artifact.

Formats:

* scene RGB        - ``{id}.jpg``          JPEG quality 95 (lossy).
* scene labels     - ``{id}_labels.png``   8-bit grayscale PNG, pixel value
                                           is the class index.
* height raster    - ``{id}_height.hht``   HHT1 container (below).
* score maps       - ``{id}.smp``          SMP1 container (below).
* label tables     - CSV, header ``image_id,total_mass,<species>_pct...,source``.
* feature tables   - CSV, header ``image_id,mode,<feature names...>``.

HHT1 layout: magic ``HHT1``, u32-LE width, u32-LE height, then the
row-major f32-LE payload zlib-compressed.  Values must be finite and >= 0.

SMP1 layout: magic ``SMP1``, u32-LE width, u32-LE height, u8 class count,
then C row-major f32-LE planes concatenated and zlib-compressed.
Per-pixel scores must sum to 1 within 1e-2; they are renormalized on read
when they deviate by more than storage precision.

Everything except JPEG round-trips losslessly (CSV at 6 significant
digits).  Readers raise :class:`FormatError` on malformed or truncated
input instead of propagating low-level exceptions.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError

HHT_MAGIC = b"HHT1"
SMP_MAGIC = b"SMP1"

# Max |per-pixel sum - 1| accepted by read_score_map; smaller deviations up
# to _SMP_STORAGE_TOL are treated as float32 storage noise and left alone so
# that well-formed files round-trip bit-exactly.
_SMP_REJECT_TOL = 1e-2
_SMP_STORAGE_TOL = 1e-6

PCT_SUM_TOL = 0.5
LABEL_SOURCES = ("trusted", "automatic")


# ---------------------------------------------------------------------------
# HHT1 height rasters


def write_height_raster(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D non-negative float raster as an HHT1 file."""
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError(f"height raster must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise FormatError("height raster values must be finite and >= 0")
    h, w = arr.shape
    payload = zlib.compress(arr.tobytes())
    with open(path, "wb") as f:
        f.write(HHT_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(payload)


def read_height_raster(path: str | Path) -> np.ndarray:
    """Read an HHT1 file back into a float32 (H, W) array."""
    data = _read_bytes(path)
    if len(data) < 12:
        raise FormatError(f"{path}: truncated HHT1 header ({len(data)} bytes)")
    if data[:4] != HHT_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {HHT_MAGIC!r}")
    w, h = struct.unpack("<II", data[4:12])
    raw = _decompress(path, data[12:])
    if len(raw) != 4 * w * h:
        raise FormatError(
            f"{path}: payload is {len(raw)} bytes, expected {4 * w * h} for {w}x{h}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(h, w)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise FormatError(f"{path}: height values must be finite and >= 0")
    return arr.copy()


# ---------------------------------------------------------------------------
# SMP1 score maps


def write_score_map(path: str | Path, scores: np.ndarray) -> None:
    """Write per-pixel class scores (C, H, W) as an SMP1 file."""
    arr = np.asarray(scores, dtype="<f4")
    if arr.ndim != 3:
        raise FormatError(f"score map must be (C, H, W), got shape {arr.shape}")
    c, h, w = arr.shape
    if c > 255:
        raise FormatError(f"score map has {c} classes, max is 255")
    with open(path, "wb") as f:
        f.write(SMP_MAGIC)
        f.write(struct.pack("<IIB", w, h, c))
        f.write(zlib.compress(arr.tobytes()))


def read_score_map(path: str | Path) -> np.ndarray:
    """Read an SMP1 file into a float32 (C, H, W) array with per-pixel
    scores summing to 1 (renormalized if slightly off, rejected beyond
    1e-2 deviation)."""
    data = _read_bytes(path)
    if len(data) < 13:
        raise FormatError(f"{path}: truncated SMP1 header ({len(data)} bytes)")
    if data[:4] != SMP_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {SMP_MAGIC!r}")
    w, h, c = struct.unpack("<IIB", data[4:13])
    raw = _decompress(path, data[13:])
    if len(raw) != 4 * c * w * h:
        raise FormatError(
            f"{path}: payload is {len(raw)} bytes, expected {4 * c * w * h} "
            f"for {c} planes of {w}x{h}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(c, h, w).copy()
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite scores")
    sums = arr.astype(np.float64).sum(axis=0)
    dev = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if dev > _SMP_REJECT_TOL:
        raise FormatError(
            f"{path}: per-pixel score sums deviate from 1 by {dev:.4g} "
            f"(max allowed {_SMP_REJECT_TOL})"
        )
    if dev > _SMP_STORAGE_TOL:
        arr = (arr.astype(np.float64) / sums).astype(np.float32)
    return arr


# ---------------------------------------------------------------------------
# Scene files


def scene_paths(directory: str | Path, image_id: str) -> dict[str, Path]:
    d = Path(directory)
    return {
        "rgb": d / f"{image_id}.jpg",
        "labels": d / f"{image_id}_labels.png",
        "height": d / f"{image_id}_height.hht",
    }


def write_scene_files(
    directory: str | Path,
    image_id: str,
    rgb: np.ndarray,
    labels: np.ndarray,
    normalized_height: np.ndarray,
) -> dict[str, Path]:
    """Write the three per-scene artifacts; returns their paths.

    The JPEG is lossy; labels PNG and HHT1 height round-trip exactly.
    """
    paths = scene_paths(directory, image_id)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(
        paths["rgb"], "JPEG", quality=95
    )
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(paths["labels"])
    write_height_raster(paths["height"], normalized_height)
    return paths


def read_rgb(path: str | Path) -> np.ndarray:
    """Read an RGB image file into a uint8 (H, W, 3) array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except OSError as e:
        raise FormatError(f"{path}: cannot decode image: {e}") from None


def read_labels(path: str | Path) -> np.ndarray:
    """Read a class-index label map from an 8-bit grayscale PNG."""
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                im = im.convert("L")
            return np.asarray(im)
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except OSError as e:
        raise FormatError(f"{path}: cannot decode image: {e}") from None


# ---------------------------------------------------------------------------
# Label tables


@dataclass
class LabelRow:
    image_id: str
    total_mass: float
    species_pct: np.ndarray  # over paste-able species, order = table.species
    source: str

    def species_masses(self) -> np.ndarray:
        """Per-species dry mass (kg DM/ha): total scaled by percentage."""
        return self.total_mass * np.asarray(self.species_pct, dtype=float) / 100.0


@dataclass
class LabelTable:
    """Biomass labels: total dry mass plus per-species percentages."""

    species: tuple[str, ...]  # paste-able species, defines pct column order
    rows: list[LabelRow] = field(default_factory=list)
    provenance: dict[str, str] = field(default_factory=dict)

    def ids(self) -> list[str]:
        return [r.image_id for r in self.rows]

    def by_id(self) -> dict[str, LabelRow]:
        return {r.image_id: r for r in self.rows}

    def target_matrix(self) -> np.ndarray:
        """(N, 1 + S) matrix of [total_mass, species_pct...] per row."""
        return np.array(
            [[r.total_mass, *r.species_pct] for r in self.rows], dtype=float
        ).reshape(len(self.rows), 1 + len(self.species))

    def target_names(self) -> list[str]:
        return ["total_mass"] + [f"{s}_pct" for s in self.species]

    def validate(self) -> None:
        for r in self.rows:
            _check_label_row(r, len(self.species))


def _check_label_row(r: LabelRow, n_species: int) -> None:
    pct = np.asarray(r.species_pct, dtype=float)
    if pct.shape != (n_species,):
        raise FormatError(
            f"row {r.image_id}: expected {n_species} percentage values, got {pct.shape}"
        )
    if not np.all(np.isfinite(pct)) or np.any(pct < 0):
        raise FormatError(f"row {r.image_id}: percentages must be finite and >= 0")
    s = float(pct.sum())
    if abs(s - 100.0) > PCT_SUM_TOL:
        raise FormatError(
            f"row {r.image_id}: percentages sum to {s:.4f}, expected 100 +/- {PCT_SUM_TOL}"
        )
    if not np.isfinite(r.total_mass) or r.total_mass < 0:
        raise FormatError(f"row {r.image_id}: total_mass must be finite and >= 0")
    if r.source not in LABEL_SOURCES:
        raise FormatError(
            f"row {r.image_id}: source {r.source!r} not in {LABEL_SOURCES}"
        )


def _fmt(v: float) -> str:
    return f"{float(v):.6g}"


def write_label_table(path: str | Path, table: LabelTable) -> None:
    """Write a label table CSV (6 significant digits, validated first)."""
    table.validate()
    with open(path, "w", newline="") as f:
        for k in sorted(table.provenance):
            f.write(f"# {k}={table.provenance[k]}\n")
        writer = csv.writer(f)
        writer.writerow(
            ["image_id", "total_mass"] + [f"{s}_pct" for s in table.species] + ["source"]
        )
        for r in table.rows:
            writer.writerow(
                [r.image_id, _fmt(r.total_mass)]
                + [_fmt(p) for p in r.species_pct]
                + [r.source]
            )


def read_label_table(path: str | Path) -> LabelTable:
    """Read and validate a label table CSV."""
    lines, provenance = _read_csv_lines(path)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty file, expected a header row") from None
    if (
        len(header) < 4
        or header[0] != "image_id"
        or header[1] != "total_mass"
        or header[-1] != "source"
        or not all(h.endswith("_pct") for h in header[2:-1])
    ):
        raise FormatError(
            f"{path}: bad header {header}, expected "
            "image_id,total_mass,<species>_pct...,source"
        )
    species = tuple(h[: -len("_pct")] for h in header[2:-1])
    table = LabelTable(species=species, provenance=provenance)
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise FormatError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}"
            )
        image_id = rec[0]
        try:
            total = float(rec[1])
            pct = np.array([float(v) for v in rec[2:-1]], dtype=float)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric value in row {image_id}") from None
        row = LabelRow(image_id=image_id, total_mass=total, species_pct=pct, source=rec[-1])
        _check_label_row(row, len(species))
        table.rows.append(row)
    return table


# ---------------------------------------------------------------------------
# Feature tables


def write_feature_table(
    path: str | Path,
    image_ids: list[str],
    features: np.ndarray,
    mode: str,
    feature_names: list[str],
    provenance: dict[str, str] | None = None,
) -> None:
    """Write per-image feature vectors as CSV: image_id, mode, features."""
    feats = np.asarray(features, dtype=float)
    if feats.shape != (len(image_ids), len(feature_names)):
        raise FormatError(
            f"feature matrix {feats.shape} does not match "
            f"{len(image_ids)} ids x {len(feature_names)} names"
        )
    with open(path, "w", newline="") as f:
        for k in sorted(provenance or {}):
            f.write(f"# {k}={provenance[k]}\n")
        writer = csv.writer(f)
        writer.writerow(["image_id", "mode"] + list(feature_names))
        for image_id, row in zip(image_ids, feats):
            writer.writerow([image_id, mode] + [_fmt(v) for v in row])


def read_feature_table(
    path: str | Path,
) -> tuple[list[str], np.ndarray, str, list[str]]:
    """Read a feature CSV; returns (image_ids, matrix, mode, feature_names).

    All rows must carry the same mode tag.
    """
    lines, _ = _read_csv_lines(path)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty file, expected a header row") from None
    if len(header) < 3 or header[0] != "image_id" or header[1] != "mode":
        raise FormatError(
            f"{path}: bad header {header}, expected image_id,mode,<features...>"
        )
    names = header[2:]
    ids: list[str] = []
    rows: list[list[float]] = []
    mode: str | None = None
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise FormatError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}"
            )
        if mode is None:
            mode = rec[1]
        elif rec[1] != mode:
            raise FormatError(
                f"{path}:{lineno}: mixed feature modes {mode!r} and {rec[1]!r}"
            )
        try:
            rows.append([float(v) for v in rec[2:]])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric feature value") from None
        ids.append(rec[0])
    matrix = np.array(rows, dtype=float).reshape(len(ids), len(names))
    return ids, matrix, mode if mode is not None else "", names


# ---------------------------------------------------------------------------
# shared helpers


def _read_bytes(path: str | Path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except OSError as e:
        raise FormatError(f"{path}: cannot read: {e}") from None


def _decompress(path: str | Path, blob: bytes) -> bytes:
    try:
        return zlib.decompress(blob)
    except zlib.error as e:
        raise FormatError(f"{path}: corrupt zlib payload: {e}") from None


def _read_csv_lines(path: str | Path) -> tuple[list[str], dict[str, str]]:
    """Split a CSV file into data lines and '# key=value' provenance lines."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except OSError as e:
        raise FormatError(f"{path}: cannot read: {e}") from None
    provenance: dict[str, str] = {}
    lines: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                k, v = body.split("=", 1)
                provenance[k.strip()] = v.strip()
        elif line.strip():
            lines.append(line)
    return lines, provenance
