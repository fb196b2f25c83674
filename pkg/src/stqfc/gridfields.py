"""Computational grids, complex field containers and unitary spectral transforms.

Coordinates are sampled as ``(i - n/2) * d`` so that every axis contains the
origin (``t`` axes are shifted by the grid's temporal centre ``tc``).  Spectral
axes follow the ``numpy.fft`` ordering, with ``d_k = 2*pi/L``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ShapeError

Rank = Literal["spatial", "temporal", "spatiotemporal"]
RANKS = ("spatial", "temporal", "spatiotemporal")
CARRIERS = ("signal", "pump", "sf", "none")


def _is_pow2(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid3D:
    """Uniform (x, y, t) window. Lengths in metres, times in seconds."""

    nx: int
    ny: int
    nt: int
    lx: float
    ly: float
    lt: float
    tc: float = 0.0

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def dt(self) -> float:
        return self.lt / self.nt

    @property
    def dkx(self) -> float:
        return 2 * np.pi / self.lx

    @property
    def dky(self) -> float:
        return 2 * np.pi / self.ly

    @property
    def domega(self) -> float:
        return 2 * np.pi / self.lt

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    @cached_property
    def t(self) -> np.ndarray:
        return self.tc + (np.arange(self.nt) - self.nt // 2) * self.dt

    @cached_property
    def kx(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    @cached_property
    def ky(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)

    @cached_property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.nt, d=self.dt)

    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of transverse coordinates, ``indexing='ij'`` (shape ``(nx, ny)``)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def shape(self, rank: Rank) -> tuple[int, ...]:
        if rank == "spatial":
            return (self.nx, self.ny)
        if rank == "temporal":
            return (self.nt,)
        if rank == "spatiotemporal":
            return (self.nx, self.ny, self.nt)
        raise ShapeError(f"unknown rank {rank!r}")

    def cell(self, rank: Rank) -> float:
        """Volume element used by the Riemann-sum inner product."""
        if rank == "spatial":
            return self.dx * self.dy
        if rank == "temporal":
            return self.dt
        return self.dx * self.dy * self.dt

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "nt": self.nt,
                "lx": self.lx, "ly": self.ly, "lt": self.lt, "tc": self.tc}


def make_grid(nx, ny, nt, lx, ly, lt, tc=0.0) -> Grid3D:
    """Validate and build a :class:`Grid3D`.

    Raises:
        ConfigurationError: a count is not a power of two >= 8, or an extent
            is not strictly positive.
    """
    for name, n in (("nx", nx), ("ny", ny), ("nt", nt)):
        if not _is_pow2(n) or n < 8:
            raise ConfigurationError(f"{name}={n!r} must be a power of two >= 8")
    for name, ext in (("lx", lx), ("ly", ly), ("lt", lt)):
        if not np.isfinite(ext) or ext <= 0:
            raise ConfigurationError(f"{name}={ext!r} must be > 0")
    if not np.isfinite(tc):
        raise ConfigurationError("tc must be finite")
    return Grid3D(int(nx), int(ny), int(nt), float(lx), float(ly), float(lt), float(tc))


# Spatial window per waist. A 64-point axis resolves Hermite-Gauss functions
# up to order ~7 to better than 1e-9 when the half-window is ~7 waists.
SPATIAL_WINDOW_FACTOR = 14.0
TEMPORAL_WINDOW_FACTOR = 10.0


def default_grid(waist, tau0, max_delay=0.0, n=64, nt=None, drift=0.0,
                 spatial_factor=SPATIAL_WINDOW_FACTOR,
                 temporal_factor=TEMPORAL_WINDOW_FACTOR) -> Grid3D:
    """Grid sized from the largest waist, pulse width, delay and walk-off drift.

    The temporal window spans ``temporal_factor * tau0`` plus the delay range
    plus ``|drift|``, centred on the middle of the occupied interval.
    """
    lt = temporal_factor * tau0 + abs(max_delay) + abs(drift)
    tc = 0.5 * max_delay + 0.5 * drift
    return make_grid(n, n, nt or n, spatial_factor * waist, spatial_factor * waist, lt, tc)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex envelope sampled on ``grid``; ``data`` is stored read-only."""

    grid: Grid3D
    rank: Rank
    data: np.ndarray
    carrier: str = "none"
    domain: Literal["direct", "spectral"] = "direct"

    def __post_init__(self):
        if self.rank not in RANKS:
            raise ShapeError(f"unknown rank {self.rank!r}")
        if self.carrier not in CARRIERS:
            raise ShapeError(f"unknown carrier {self.carrier!r}")
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.shape != self.grid.shape(self.rank):
            raise ShapeError(
                f"{self.rank} field needs shape {self.grid.shape(self.rank)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("field contains non-finite samples")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.data) ** 2) * self.grid.cell(self.rank)))

    def normalized(self) -> "Field":
        nrm = self.norm()
        if nrm == 0:
            raise ShapeError("cannot normalize a zero field")
        return self.with_data(self.data / nrm)

    def with_data(self, data, **changes) -> "Field":
        kw = {"grid": self.grid, "rank": self.rank, "carrier": self.carrier, "domain": self.domain}
        kw.update(changes)
        return Field(data=data, **kw)

    def scaled(self, factor) -> "Field":
        return self.with_data(self.data * factor)

    def __repr__(self):
        return f"Field({self.rank}, {self.data.shape}, carrier={self.carrier!r}, domain={self.domain!r})"


def _check_pair(f: Field, g: Field):
    if f.grid != g.grid:
        raise ShapeError("fields live on different grids")
    if f.rank != g.rank:
        raise ShapeError(f"rank mismatch: {f.rank} vs {g.rank}")


def inner_product(f: Field, g: Field) -> complex:
    """Riemann approximation of the integral of ``conj(f) * g`` over the grid."""
    _check_pair(f, g)
    return complex(np.vdot(f.data, g.data) * f.grid.cell(f.rank))


def _axes(rank: Rank) -> tuple[int, ...]:
    if rank == "spatial":
        return (0, 1)
    if rank == "spatiotemporal":
        return (0, 1, 2)
    raise ShapeError("transform requires a spatial or spatiotemporal field")


def transform(f: Field, direction: Literal["forward", "inverse"] = "forward") -> Field:
    """Unitary DFT over the spatial axes (and time, for 3D fields)."""
    axes = _axes(f.rank)
    if direction == "forward":
        out = sfft.fftn(f.data, axes=axes, norm="ortho")
        return f.with_data(out, domain="spectral")
    if direction == "inverse":
        out = sfft.ifftn(f.data, axes=axes, norm="ortho")
        return f.with_data(out, domain="direct")
    raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")


def peak_spatial_slice(f: Field) -> Field:
    """Transverse slice of a 3D field at the time of its peak intensity."""
    if f.rank != "spatiotemporal":
        raise ShapeError("need a spatiotemporal field")
    it = int(np.argmax(np.sum(np.abs(f.data) ** 2, axis=(0, 1))))
    return Field(f.grid, "spatial", f.data[:, :, it], f.carrier)


def peak_temporal_profile(f: Field) -> Field:
    """Temporal profile of a 3D field at its transverse intensity peak."""
    if f.rank != "spatiotemporal":
        raise ShapeError("need a spatiotemporal field")
    fluence = np.sum(np.abs(f.data) ** 2, axis=2)
    ix, iy = np.unravel_index(int(np.argmax(fluence)), fluence.shape)
    return Field(f.grid, "temporal", f.data[ix, iy, :], f.carrier)


def field_to_csv(f: Field, path) -> None:
    """Write a 2D spatial (``x,y,re,im``) or 1D temporal (``t,re,im``) field.

    Values use ``repr`` formatting so they parse back to the identical double.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if f.rank == "spatial":
            w.writerow(["x", "y", "re", "im"])
            for i, xv in enumerate(f.grid.x):
                for j, yv in enumerate(f.grid.y):
                    v = f.data[i, j]
                    w.writerow([repr(float(xv)), repr(float(yv)), repr(float(v.real)), repr(float(v.imag))])
        elif f.rank == "temporal":
            w.writerow(["t", "re", "im"])
            for k, tv in enumerate(f.grid.t):
                v = f.data[k]
                w.writerow([repr(float(tv)), repr(float(v.real)), repr(float(v.imag))])
        else:
            raise ShapeError("only 2D spatial or 1D temporal slices are exported")


def field_from_csv(path, grid: Grid3D, carrier="none") -> Field:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    vals = np.array([[float(c) for c in r] for r in body])
    if header == ["x", "y", "re", "im"]:
        data = (vals[:, 2] + 1j * vals[:, 3]).reshape(grid.nx, grid.ny)
        return Field(grid, "spatial", data, carrier)
    if header == ["t", "re", "im"]:
        return Field(grid, "temporal", vals[:, 1] + 1j * vals[:, 2], carrier)
    raise ShapeError(f"unrecognised CSV header {header}")
