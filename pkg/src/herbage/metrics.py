"""Evaluation metrics for biomass predictions.

Reported quantities: RMSE of total herbage mass and of per-species
masses (HRMSE, kg DM/ha), the mean relative absolute error of total mass
(HRAE, %), and RMSE of the per-species dry biomass percentages (%).
"Avg." entries are arithmetic means over the species columns.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .formats import LabelTable


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Root mean squared error between two equal-length vectors."""
    a = np.asarray(y, dtype=float).ravel()
    b = np.asarray(y_hat, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("rmse needs at least one value")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def hrae(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean relative absolute error |y - y_hat| / y, in percent.

    Undefined for non-positive reference masses; those raise.
    """
    a = np.asarray(y, dtype=float).ravel()
    b = np.asarray(y_hat, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("hrae needs at least one value")
    if np.any(a <= 0):
        raise ValueError("relative error undefined for reference mass <= 0")
    return float(np.mean(100.0 * np.abs(a - b) / a))


def species_mass(total: float | np.ndarray, pct: np.ndarray) -> np.ndarray:
    """Per-species dry mass: total mass scaled by biomass percentage."""
    return np.asarray(total, dtype=float) * np.asarray(pct, dtype=float) / 100.0


@dataclass
class EvalReport:
    species: tuple[str, ...]
    n: int
    hrmse_total: float
    hrmse_per_species: dict[str, float]
    hrmse_avg: float
    hrae: float
    rmse_per_species_pct: dict[str, float]
    rmse_avg: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "hrmse_total": self.hrmse_total,
                "hrmse_per_species": self.hrmse_per_species,
                "hrmse_avg": self.hrmse_avg,
                "hrae_pct": self.hrae,
                "rmse_per_species_pct": self.rmse_per_species_pct,
                "rmse_avg": self.rmse_avg,
            },
            indent=2,
        )

    def to_text(self) -> str:
        """Aligned table: HRMSE block, HRAE, then percentage-RMSE block."""
        sp = [s.capitalize() for s in self.species]
        headers = (
            ["HRMSE Total"]
            + [f"HRMSE {s}" for s in sp]
            + ["HRMSE Avg.", "HRAE %"]
            + [f"RMSE {s}" for s in sp]
            + ["RMSE Avg."]
        )
        values = (
            [self.hrmse_total]
            + [self.hrmse_per_species[s] for s in self.species]
            + [self.hrmse_avg, self.hrae]
            + [self.rmse_per_species_pct[s] for s in self.species]
            + [self.rmse_avg]
        )
        widths = [max(len(h), 8) for h in headers]
        head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
        body = "  ".join(f"{v:.2f}".rjust(w) for v, w in zip(values, widths))
        return f"{head}\n{body}  (n={self.n})"


def evaluate(pred: LabelTable, truth: LabelTable) -> EvalReport:
    """Full metric roster over two label tables matched by image id."""
    if tuple(pred.species) != tuple(truth.species):
        raise ValueError(
            f"species mismatch: predictions {pred.species} vs truth {truth.species}"
        )
    pred_by_id = pred.by_id()
    truth_by_id = truth.by_id()
    missing = sorted(set(truth_by_id) ^ set(pred_by_id))
    if missing:
        raise ValueError(f"image id sets differ; unmatched ids: {missing[:10]}")
    if not truth_by_id:
        raise ValueError("empty label tables")

    ids = sorted(truth_by_id)
    t_total = np.array([truth_by_id[i].total_mass for i in ids])
    p_total = np.array([pred_by_id[i].total_mass for i in ids])
    t_pct = np.array([truth_by_id[i].species_pct for i in ids], dtype=float)
    p_pct = np.array([pred_by_id[i].species_pct for i in ids], dtype=float)
    return evaluate_arrays(t_total, p_total, t_pct, p_pct, tuple(truth.species))


def evaluate_arrays(
    t_total: np.ndarray,
    p_total: np.ndarray,
    t_pct: np.ndarray,
    p_pct: np.ndarray,
    species: tuple[str, ...],
) -> EvalReport:
    """Same roster on raw matrices: totals (N,), percentages (N, S)."""
    t_total = np.asarray(t_total, dtype=float).ravel()
    p_total = np.asarray(p_total, dtype=float).ravel()
    t_pct = np.atleast_2d(np.asarray(t_pct, dtype=float))
    p_pct = np.atleast_2d(np.asarray(p_pct, dtype=float))
    t_mass = species_mass(t_total[:, None], t_pct)
    p_mass = species_mass(p_total[:, None], p_pct)

    positive = t_total > 0
    if not np.all(positive):
        warnings.warn(
            f"excluding {int((~positive).sum())} row(s) with zero true total "
            "mass from HRAE",
            stacklevel=2,
        )
    hrae_val = (
        hrae(t_total[positive], p_total[positive]) if np.any(positive) else float("nan")
    )

    hrmse_sp = {
        s: rmse(t_mass[:, j], p_mass[:, j]) for j, s in enumerate(species)
    }
    rmse_sp = {
        s: rmse(t_pct[:, j], p_pct[:, j]) for j, s in enumerate(species)
    }
    return EvalReport(
        species=tuple(species),
        n=int(t_total.shape[0]),
        hrmse_total=rmse(t_total, p_total),
        hrmse_per_species=hrmse_sp,
        hrmse_avg=float(np.mean(list(hrmse_sp.values()))),
        hrae=hrae_val,
        rmse_per_species_pct=rmse_sp,
        rmse_avg=float(np.mean(list(rmse_sp.values()))),
    )
