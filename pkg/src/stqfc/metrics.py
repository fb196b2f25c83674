"""Normalized SF photon numbers, selectivity, crosstalk matrices and visibility."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, ShapeError

# Zero-flux entries are reported at this level instead of -inf.
DB_FLOOR = -99.0


def normalized_counts(counts: Sequence[float], floor: float = DB_FLOOR) -> np.ndarray:
    """``10 log10(N_i / sum N)`` per entry; zero entries map to ``floor``.

    Raises:
        DegenerateInputError: empty, negative, non-finite or all-zero counts.
    """
    n = np.asarray(counts, dtype=float)
    if n.ndim != 1 or n.size == 0:
        raise DegenerateInputError("need a non-empty 1D count vector")
    if not np.all(np.isfinite(n)) or np.any(n < 0):
        raise DegenerateInputError("counts must be finite and >= 0")
    total = n.sum()
    if total <= 0:
        raise DegenerateInputError("all counts are zero")
    out = np.full(n.shape, floor)
    pos = n > 0
    with np.errstate(divide="ignore"):  # ratios that underflow land on the floor
        out[pos] = np.maximum(10.0 * np.log10(n[pos] / total), floor)
    return out


def floored(counts: Sequence[float], floor: float = DB_FLOOR) -> np.ndarray:
    """Boolean mask of entries reported at the zero-count floor."""
    nbar = normalized_counts(counts, floor)
    return nbar <= floor


def selectivity(nbar: Sequence[float], i: int, j: int) -> float:
    """``nbar[i] - nbar[j]`` in dB."""
    nbar = np.asarray(nbar, dtype=float)
    n = nbar.size
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"index {idx} out of range for {n} modes")
    if i == j:
        raise DegenerateInputError("selectivity of a mode against itself is trivially 0 dB")
    return float(nbar[i] - nbar[j])


def selectivity_matrix(nbar: Sequence[float]) -> np.ndarray:
    nbar = np.asarray(nbar, dtype=float)
    return nbar[:, None] - nbar[None, :]


@dataclass
class SelectivityReport:
    nbar: np.ndarray
    target: int
    counts: np.ndarray
    labels: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts, target, labels=None, provenance=None) -> "SelectivityReport":
        counts = np.asarray(counts, dtype=float)
        if not 0 <= target < counts.size:
            raise IndexError("target index out of range")
        return cls(normalized_counts(counts), target, counts,
                   list(labels or [f"S{k + 1}" for k in range(counts.size)]), dict(provenance or {}))

    @property
    def eta(self) -> np.ndarray:
        """Pairwise selectivities ``eta[i, j] = nbar[i] - nbar[j]``."""
        return selectivity_matrix(self.nbar)

    @property
    def target_eta(self) -> np.ndarray:
        """Selectivity of the target against every competitor (target entry excluded)."""
        return np.delete(self.eta[self.target], self.target)

    @property
    def min_eta(self) -> float:
        if self.nbar.size < 2:
            return 0.0
        return float(self.target_eta.min())

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "target": self.target,
            "counts": [float(c) for c in self.counts],
            "nbar_db": [float(v) for v in self.nbar],
            "floored": [bool(c == 0) for c in self.counts],
            "eta_vs_target_db": {lab: float(self.nbar[self.target] - self.nbar[k])
                                 for k, lab in enumerate(self.labels) if k != self.target},
            "min_eta_db": self.min_eta,
            "provenance": self.provenance,
        }


@dataclass
class TomographyMatrix:
    """Rows are pumps, columns signals; entries are row-normalized ``nbar`` in dB."""

    db: np.ndarray
    counts: np.ndarray
    row_labels: list
    col_labels: list

    def __post_init__(self):
        self.db = np.asarray(self.db, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.db.shape != (len(self.row_labels), len(self.col_labels)):
            raise ShapeError("label counts do not match the matrix shape")

    @classmethod
    def from_counts(cls, counts, row_labels, col_labels) -> "TomographyMatrix":
        counts = np.asarray(counts, dtype=float)
        db = np.vstack([normalized_counts(row) for row in counts])
        return cls(db, counts, list(row_labels), list(col_labels))

    def row_sums(self) -> np.ndarray:
        """``sum 10^(nbar/10)`` per row, counting floored entries as zero."""
        lin = np.where(self.counts > 0, 10.0 ** (self.db / 10.0), 0.0)
        return lin.sum(axis=1)

    def to_dict(self) -> dict:
        return {"rows": self.row_labels, "columns": self.col_labels,
                "nbar_db": self.db.tolist(), "counts": self.counts.tolist(),
                "floored": (self.counts == 0).tolist()}

    def write_csv(self, path, full_precision_path=None):
        """Two-decimal CSV; optionally a ``repr``-precision sidecar."""
        def dump(p, fmt):
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["pump\\signal"] + self.col_labels)
                for lab, row in zip(self.row_labels, self.db):
                    w.writerow([lab] + [fmt(v) for v in row])
        dump(path, lambda v: f"{v:.2f}")
        if full_precision_path is not None:
            dump(full_precision_path, lambda v: repr(float(v)))

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def tomography_matrix(signals: Sequence, pumps: Sequence,
                      detect: Callable[[object, object], float],
                      row_labels=None, col_labels=None, mapper=map) -> TomographyMatrix:
    """Measure every (pump row, signal column) pair and row-normalize.

    ``detect(signal, pump)`` returns the detected SF flux for one pair; it is
    supplied by the caller (usually ``Setup.detect``) so this
    module stays free of propagation details. ``mapper`` may be a parallel
    map; results are placed by index so evaluation order does not matter.

    Raises:
        RuntimeError: a cell failed, naming its (row, column).
    """
    signals, pumps = list(signals), list(pumps)
    if not signals or not pumps:
        raise DegenerateInputError("need at least one signal and one pump")
    cells = [(r, c) for r in range(len(pumps)) for c in range(len(signals))]

    def run(rc):
        r, c = rc
        try:
            return detect(signals[c], pumps[r])
        except Exception as exc:  # re-raised with the failing cell attached
            raise RuntimeError(f"tomography cell (row={r}, column={c}) failed: {exc}") from exc

    values = list(mapper(run, cells))
    counts = np.zeros((len(pumps), len(signals)))
    for (r, c), v in zip(cells, values):
        counts[r, c] = v
    return TomographyMatrix.from_counts(
        counts,
        row_labels or [getattr(p, "label", f"P{r + 1}") for r, p in enumerate(pumps)],
        col_labels or [getattr(s, "label", f"S{c + 1}") for c, s in enumerate(signals)])


def visibility(samples: Sequence[tuple[float, float]]) -> float:
    """``(C_max - C_min) / (C_max + C_min)`` over ``(angle, count)`` samples."""
    samples = list(samples)
    if len(samples) < 2:
        raise DegenerateInputError("visibility needs at least two samples")
    counts = np.array([c for _, c in samples], dtype=float)
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise DegenerateInputError("counts must be finite and >= 0")
    cmax, cmin = counts.max(), counts.min()
    if cmax + cmin == 0:
        raise DegenerateInputError("all counts are zero")
    return float((cmax - cmin) / (cmax + cmin))


def poisson_counts(fluxes, incident_photons: float, rng: np.random.Generator) -> np.ndarray:
    """Shot-noise sample of detected photons with mean ``flux * incident_photons``.

    ``fluxes`` should already be conversion probabilities (flux relative to the
    incident signal flux).
    """
    lam = np.asarray(fluxes, dtype=float) * incident_photons
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DegenerateInputError("Poisson means must be finite and >= 0")
    return rng.poisson(lam).astype(float)


def db(x: float) -> float:
    return 10.0 * math.log10(x)
