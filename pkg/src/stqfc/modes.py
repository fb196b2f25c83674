"""Spatial (LG, HG) and temporal (Hermite-Gauss) mode generators.

All spatial modes are evaluated at the waist plane. LG modes carry the
azimuthal factor ``exp(-i*l*phi)`` with ``phi = atan2(y, x)``.

HG modes ``HG_mn(theta)`` are built in the frame

    x' =  x cos(theta) - y sin(theta)
    y' = -x sin(theta) - y cos(theta)

with ``H_n`` along ``x'`` and ``H_m`` along ``y'``.  The second axis points
along ``-y`` (image/SLM row convention); it is the frame in which both
``LG_{+-1} = (HG_01 +- i HG_10)/sqrt(2)`` and
``HG_01(theta) = (LG_{+1} e^{-i theta} + LG_{-1} e^{i theta})/sqrt(2)``
hold exactly together with ``exp(-i*l*phi)``.  ``hg_mode(theta)`` equals
``hg_mode(0)`` evaluated at coordinates rotated by ``+theta``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import eval_genlaguerre

from .errors import AccuracyError, AccuracyWarning, ConfigurationError, DegenerateInputError, ShapeError
from .gridfields import Field, Grid3D

EDGE_TOLERANCE = 1e-3


@dataclass(frozen=True)
class LGSpec:
    l: int
    p: int
    w: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise ConfigurationError(f"LG radial index p={self.p} must be an integer >= 0")
        if int(self.l) != self.l:
            raise ConfigurationError(f"LG azimuthal index l={self.l} must be an integer")
        if not self.w > 0:
            raise ConfigurationError("waist must be > 0")

    @property
    def label(self) -> str:
        return f"LG(l={self.l:+d},p={self.p})"


@dataclass(frozen=True)
class HGSpec:
    m: int
    n: int
    w: float
    theta: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n or self.m < 0 or self.n < 0:
            raise ConfigurationError("HG indices must be integers >= 0")
        if not self.w > 0:
            raise ConfigurationError("waist must be > 0")

    @property
    def label(self) -> str:
        return f"HG{self.m}{self.n}(theta={math.degrees(self.theta):.1f}deg)"


@dataclass(frozen=True)
class TemporalSpec:
    tau0: float
    t0: float = 0.0
    order: int = 0

    def __post_init__(self):
        if not self.tau0 > 0:
            raise ConfigurationError("tau0 must be > 0")
        if int(self.order) != self.order or self.order < 0:
            raise ConfigurationError("temporal order must be an integer >= 0")

    @property
    def label(self) -> str:
        return f"T(order={self.order},t0={self.t0 * 1e12:.3g}ps)"


SpatialSpec = Union[LGSpec, HGSpec]


def _unit(coeffs) -> tuple[complex, ...]:
    c = np.asarray(coeffs, dtype=np.complex128)
    nrm = np.linalg.norm(c)
    if c.size == 0 or nrm == 0:
        raise DegenerateInputError("coefficient vector is empty or all zero")
    return tuple(complex(v) for v in c / nrm)


@dataclass(frozen=True)
class ModeSpec:
    """Weighted spatial and temporal term lists; coefficients are renormalized to unit L2 norm."""

    spatial: tuple[tuple[complex, SpatialSpec], ...]
    temporal: tuple[tuple[complex, TemporalSpec], ...]
    label: str = ""

    def __post_init__(self):
        sp = tuple(self.spatial)
        tp = tuple(self.temporal)
        sc = _unit([c for c, _ in sp])
        tc = _unit([c for c, _ in tp])
        object.__setattr__(self, "spatial", tuple(zip(sc, (s for _, s in sp))))
        object.__setattr__(self, "temporal", tuple(zip(tc, (s for _, s in tp))))
        if not self.label:
            object.__setattr__(self, "label", _auto_label(self))

    @classmethod
    def simple(cls, spatial: SpatialSpec, temporal: TemporalSpec, label: str = "") -> "ModeSpec":
        return cls(((1.0, spatial),), ((1.0, temporal),), label)

    def to_dict(self) -> dict:
        return {"label": self.label,
                "spatial": [spatial_term_to_dict(c, s) for c, s in self.spatial],
                "temporal": [temporal_term_to_dict(c, s) for c, s in self.temporal]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModeSpec":
        return cls(tuple(spatial_term_from_dict(t) for t in d["spatial"]),
                   tuple(temporal_term_from_dict(t) for t in d["temporal"]),
                   d.get("label", ""))


def _fmt_coeff(c: complex) -> str:
    if abs(c.imag) < 1e-12:
        return f"{c.real:.3g}"
    return f"({c.real:.3g}{c.imag:+.3g}j)"


def _auto_label(ms: ModeSpec) -> str:
    def part(terms):
        if len(terms) == 1:
            return terms[0][1].label
        return "+".join(f"{_fmt_coeff(c)}*{s.label}" for c, s in terms)
    return f"{part(ms.spatial)} x {part(ms.temporal)}"


def spatial_term_to_dict(c: complex, s: SpatialSpec) -> dict:
    c = complex(c)
    if isinstance(s, LGSpec):
        return {"basis": "lg", "l": s.l, "p": s.p, "w": s.w, "coeff_re": c.real, "coeff_im": c.imag}
    return {"basis": "hg", "m": s.m, "n": s.n, "w": s.w, "theta": s.theta,
            "coeff_re": c.real, "coeff_im": c.imag}


def spatial_term_from_dict(d: dict) -> tuple[complex, SpatialSpec]:
    c = complex(d.get("coeff_re", 1.0), d.get("coeff_im", 0.0))
    if d["basis"] == "lg":
        return c, LGSpec(int(d["l"]), int(d["p"]), float(d["w"]))
    if d["basis"] == "hg":
        return c, HGSpec(int(d["m"]), int(d["n"]), float(d["w"]), float(d.get("theta", 0.0)))
    raise ConfigurationError(f"unknown spatial basis {d['basis']!r}")


def temporal_term_to_dict(c: complex, s: TemporalSpec) -> dict:
    c = complex(c)
    return {"tau0": s.tau0, "t0": s.t0, "order": s.order, "coeff_re": c.real, "coeff_im": c.imag}


def temporal_term_from_dict(d: dict) -> tuple[complex, TemporalSpec]:
    c = complex(d.get("coeff_re", 1.0), d.get("coeff_im", 0.0))
    return c, TemporalSpec(float(d["tau0"]), float(d.get("t0", 0.0)), int(d.get("order", 0)))


# ---------------------------------------------------------------------------
# analytic profiles

def lg_profile(l: int, p: int, w: float, x, y) -> np.ndarray:
    """Continuum-normalized LG^p_l at the waist plane."""
    al = abs(l)
    r2 = x * x + y * y
    c_lp = math.sqrt(2.0 * math.factorial(p) / (math.pi * math.factorial(p + al)))
    rho = np.sqrt(2.0 * r2) / w
    radial = rho ** al * eval_genlaguerre(p, al, 2.0 * r2 / w**2) * np.exp(-r2 / w**2)
    phase = np.exp(-1j * l * np.arctan2(y, x))
    return (c_lp / w) * radial * phase


def _hermite_function(k: int, u) -> np.ndarray:
    """``H_k(u) exp(-u^2/2)`` divided by ``sqrt(2^k k! sqrt(pi))`` via the stable recurrence."""
    u = np.asarray(u, dtype=float)
    h0 = np.pi ** -0.25 * np.exp(-0.5 * u * u)
    if k == 0:
        return h0
    h1 = math.sqrt(2.0) * u * h0
    for j in range(1, k):
        h0, h1 = h1, math.sqrt(2.0 / (j + 1)) * u * h1 - math.sqrt(j / (j + 1)) * h0
    return h1


def hg_profile(m: int, n: int, w: float, theta: float, x, y) -> np.ndarray:
    """Continuum-normalized HG_mn in the rotated frame described in the module docstring."""
    xr = x * math.cos(theta) - y * math.sin(theta)
    yr = -x * math.sin(theta) - y * math.cos(theta)
    s = math.sqrt(2.0) / w
    # hermite functions are normalized in u = sqrt(2) x / w, hence the s factor
    return s * _hermite_function(n, s * xr) * _hermite_function(m, s * yr) + 0j


def temporal_profile(order: int, tau0: float, t0: float, t) -> np.ndarray:
    """Hermite-Gauss temporal function; order 0 is ``exp(-(t-t0)^2/tau0^2)`` up to normalization."""
    s = math.sqrt(2.0) / tau0
    return math.sqrt(s) * _hermite_function(order, s * (np.asarray(t) - t0)) + 0j


# ---------------------------------------------------------------------------
# sampled modes

def _check_window(data: np.ndarray, w: float, grid: Grid3D, what: str, strict: bool):
    if min(grid.lx, grid.ly) < 4 * w:
        msg = f"{what}: spatial window smaller than 4 waists"
        if strict:
            raise AccuracyError(msg)
        warnings.warn(msg, AccuracyWarning, stacklevel=3)
    amp = np.abs(data)
    edge = max(amp[0, :].max(), amp[-1, :].max(), amp[:, 0].max(), amp[:, -1].max())
    if edge > EDGE_TOLERANCE * amp.max():
        msg = f"{what}: edge amplitude {edge / amp.max():.2e} of peak exceeds {EDGE_TOLERANCE:g}"
        if strict:
            raise AccuracyError(msg)
        warnings.warn(msg, AccuracyWarning, stacklevel=3)


def _spatial_field(data, grid, carrier):
    return Field(grid, "spatial", data, carrier).normalized()


def lg_mode(spec: LGSpec, grid: Grid3D, carrier="none", strict=False) -> Field:
    """Sample LG^p_l on the grid, normalized so that ``inner_product(f, f) == 1``."""
    X, Y = grid.xy()
    data = lg_profile(spec.l, spec.p, spec.w, X, Y)
    _check_window(data, spec.w, grid, spec.label, strict)
    return _spatial_field(data, grid, carrier)


def hg_mode(spec: HGSpec, grid: Grid3D, carrier="none", strict=False) -> Field:
    X, Y = grid.xy()
    data = hg_profile(spec.m, spec.n, spec.w, spec.theta, X, Y)
    _check_window(data, spec.w, grid, spec.label, strict)
    return _spatial_field(data, grid, carrier)


def spatial_mode(spec: SpatialSpec, grid: Grid3D, carrier="none", strict=False) -> Field:
    if isinstance(spec, LGSpec):
        return lg_mode(spec, grid, carrier, strict)
    if isinstance(spec, HGSpec):
        return hg_mode(spec, grid, carrier, strict)
    raise ConfigurationError(f"not a spatial mode spec: {spec!r}")


def temporal_mode(spec: TemporalSpec, grid: Grid3D, carrier="none") -> Field:
    """Unit-normalized temporal Hermite-Gauss envelope.

    Raises:
        ConfigurationError: ``t0 +- 4*tau0`` falls outside the temporal window.
    """
    t_lo = grid.t[0]
    t_hi = grid.t[-1]
    if spec.t0 - 4 * spec.tau0 < t_lo or spec.t0 + 4 * spec.tau0 > t_hi:
        raise ConfigurationError(
            f"{spec.label}: envelope t0 +- 4 tau0 leaves the window [{t_lo:.3e}, {t_hi:.3e}] s")
    data = temporal_profile(spec.order, spec.tau0, spec.t0, grid.t)
    return Field(grid, "temporal", data, carrier).normalized()


def superpose(terms: Sequence[tuple[complex, Field]]) -> Field:
    """Coefficient-weighted sum of same-rank fields, renormalized to unit norm."""
    terms = list(terms)
    if not terms:
        raise DegenerateInputError("no terms to superpose")
    first = terms[0][1]
    for _, f in terms[1:]:
        if f.grid != first.grid or f.rank != first.rank:
            raise ShapeError("superposed fields must share grid and rank")
    if all(c == 0 for c, _ in terms):
        raise DegenerateInputError("all superposition coefficients are zero")
    acc = np.zeros_like(first.data)
    for c, f in terms:
        acc = acc + complex(c) * f.data
    out = first.with_data(acc)
    if out.norm() == 0:
        raise DegenerateInputError("superposition cancels to zero")
    return out.normalized()


def compose(spatial: Field, temporal: Field, carrier=None, normalize=True) -> Field:
    """Separable space-time field ``E_r(x, y) * E_t(t)``."""
    if spatial.rank != "spatial" or temporal.rank != "temporal":
        raise ShapeError("compose needs a spatial and a temporal field")
    if spatial.grid != temporal.grid:
        raise ShapeError("fields live on different grids")
    data = spatial.data[:, :, None] * temporal.data[None, None, :]
    out = Field(spatial.grid, "spatiotemporal", data, carrier or spatial.carrier)
    return out.normalized() if normalize else out


def build_spatial(ms: ModeSpec, grid: Grid3D, carrier="none", strict=False) -> Field:
    return superpose([(c, spatial_mode(s, grid, carrier, strict)) for c, s in ms.spatial])


def build_temporal(ms: ModeSpec, grid: Grid3D, carrier="none") -> Field:
    return superpose([(c, temporal_mode(s, grid, carrier)) for c, s in ms.temporal])


def build_mode(ms: ModeSpec, grid: Grid3D, carrier="none", strict=False) -> Field:
    """Unit-normalized spatio-temporal field for a :class:`ModeSpec`."""
    return compose(build_spatial(ms, grid, carrier, strict), build_temporal(ms, grid, carrier), carrier)
