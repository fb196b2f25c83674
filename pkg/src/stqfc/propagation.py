"""Adaptive split-step Fourier integration of the three coupled SFG envelopes.

The envelope equations, written as ``d/dz`` in the frame co-moving with the
sum-frequency (SF) pulse, read

    dA_s/dz = L_s A_s + i kappa_s conj(A_p) A_f exp(+i dk z)
    dA_p/dz = L_p A_p + i kappa_p conj(A_s) A_f exp(+i dk z)
    dA_f/dz = L_f A_f + i kappa_f A_p A_s exp(-i dk z)

with ``kappa_i = omega_i chi / (n_i c)`` and the linear operator ``L_i``
diagonal in the (kx, ky, omega) domain:

    L_i = -i (kx^2 + ky^2) / (2 k_i) - i omega (beta_i - beta_f)

Photon fluxes ``N_i = n_i ||A_i||^2 / (hbar omega_i)`` obey the Manley-Rowe
relations exactly for these equations; they are reported in relative units.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft
from scipy.constants import c as C_LIGHT, hbar

from .errors import ConfigurationError, ConvergenceError, NumericBlowupError, ShapeError
from .gridfields import Field, Grid3D, field_to_csv, peak_spatial_slice, peak_temporal_profile

AXES = (1, 2, 3)

# Default crystal: 5% MgO:PPLN, 10 mm, first-order QPM.
DEFAULT_LAMBDA_S = 1558e-9
DEFAULT_LAMBDA_P = 1545e-9
DEFAULT_POLING_PERIOD = 19.36e-6
DEFAULT_LENGTH = 10e-3
DEFAULT_N_S = 2.1379
DEFAULT_N_P = 2.1381
DEFAULT_GROUP_INDEX = 2.18
# 2 * d_eff * (2/pi) with d_33 = 25 pm/V
DEFAULT_CHI = 2 * 25e-12 * 2 / math.pi


@dataclass(frozen=True)
class CrystalParams:
    """Nonlinear medium constants.

    ``chi`` is the effective coupling already including the first-order QPM
    factor; ``poling_period`` enters only through ``delta_k``.
    """

    chi: float
    poling_period: float
    length: float
    n_s: float
    n_p: float
    n_f: float
    beta_s: float
    beta_p: float
    beta_f: float
    omega_s: float
    omega_p: float
    omega_f: float

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigurationError("crystal length must be > 0")
        if not self.poling_period > 0:
            raise ConfigurationError("poling period must be > 0")
        for name in ("n_s", "n_p", "n_f"):
            if not getattr(self, name) >= 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("omega_s", "omega_p", "omega_f"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        if not math.isclose(self.omega_f, self.omega_s + self.omega_p, rel_tol=1e-12):
            raise ConfigurationError("omega_f must equal omega_s + omega_p")

    @classmethod
    def from_wavelengths(cls, lambda_s=DEFAULT_LAMBDA_S, lambda_p=DEFAULT_LAMBDA_P,
                         poling_period=DEFAULT_POLING_PERIOD, length=DEFAULT_LENGTH,
                         chi=DEFAULT_CHI, n_s=DEFAULT_N_S, n_p=DEFAULT_N_P, n_f=None,
                         beta_s=None, beta_p=None, beta_f=None) -> "CrystalParams":
        """Build from vacuum wavelengths; ``n_f=None`` picks the index giving ``delta_k = 0``.

        Inverse group velocities default to a common group index, i.e. no
        relative temporal walk-off.
        """
        w_s = 2 * math.pi * C_LIGHT / lambda_s
        w_p = 2 * math.pi * C_LIGHT / lambda_p
        w_f = w_s + w_p
        if n_f is None:
            n_f = phase_matched_index(w_s, w_p, n_s, n_p, poling_period)
        b0 = DEFAULT_GROUP_INDEX / C_LIGHT
        return cls(chi, poling_period, length, n_s, n_p, n_f,
                   b0 if beta_s is None else beta_s,
                   b0 if beta_p is None else beta_p,
                   b0 if beta_f is None else beta_f,
                   w_s, w_p, w_f)

    @property
    def k_s(self) -> float:
        return self.n_s * self.omega_s / C_LIGHT

    @property
    def k_p(self) -> float:
        return self.n_p * self.omega_p / C_LIGHT

    @property
    def k_f(self) -> float:
        return self.n_f * self.omega_f / C_LIGHT

    @property
    def delta_k(self) -> float:
        return self.k_s + self.k_p - self.k_f - 2 * math.pi / self.poling_period

    @property
    def kappa(self) -> np.ndarray:
        """Coupling rates (1/V) for signal, pump and SF."""
        n = np.array([self.n_s, self.n_p, self.n_f])
        w = np.array([self.omega_s, self.omega_p, self.omega_f])
        return w * self.chi / (n * C_LIGHT)

    @property
    def k(self) -> np.ndarray:
        return np.array([self.k_s, self.k_p, self.k_f])

    @property
    def walkoff(self) -> np.ndarray:
        """Inverse group velocities relative to the SF frame (s/m)."""
        return np.array([self.beta_s - self.beta_f, self.beta_p - self.beta_f, 0.0])

    @property
    def flux_weights(self) -> np.ndarray:
        """``n_i / (hbar omega_i)``: converts ``||A_i||^2`` into photon flux."""
        return np.array([self.n_s / (hbar * self.omega_s),
                         self.n_p / (hbar * self.omega_p),
                         self.n_f / (hbar * self.omega_f)])

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["delta_k"] = self.delta_k
        return d


def phase_matched_index(omega_s, omega_p, n_s, n_p, poling_period) -> float:
    """SF refractive index that zeroes ``k_s + k_p - k_f - 2 pi / Lambda``."""
    k_f = (n_s * omega_s + n_p * omega_p) / C_LIGHT - 2 * math.pi / poling_period
    return k_f * C_LIGHT / (omega_s + omega_p)


@dataclass(frozen=True)
class SolverParams:
    h0: float = 0.5e-3
    tol: float = 1e-6
    h_min: float = 1e-7
    h_max: float = 2.5e-3
    max_steps: int = 10_000

    def validate(self, length: float):
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be > 0")
        if not (0 < self.h_min <= self.h0 <= self.h_max):
            raise ConfigurationError("need 0 < h_min <= h0 <= h_max")
        if self.h_max > length * (1 + 1e-12):
            raise ConfigurationError("h_max must not exceed the crystal length")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")

    def for_length(self, length: float) -> "SolverParams":
        """Clamp step bounds so they fit a crystal of ``length``."""
        h_max = min(self.h_max, length)
        h0 = min(self.h0, h_max)
        return replace(self, h_max=h_max, h0=h0, h_min=min(self.h_min, h0))


@dataclass
class PropagationResult:
    signal: Field
    pump: Field
    sf: Field
    z: np.ndarray
    steps: np.ndarray
    fluxes: np.ndarray          # (n_accepted, 3): signal, pump, sf
    initial_fluxes: np.ndarray  # (3,)
    accepted: int
    rejected: int
    crystal: CrystalParams = field(repr=False)

    def manley_rowe_drift(self) -> tuple[float, float]:
        """Max relative drift of ``N_s + N_f`` and ``N_p + N_f`` along z."""
        f = np.vstack([self.initial_fluxes, self.fluxes])
        out = []
        for i in (0, 1):
            s = f[:, i] + f[:, 2]
            out.append(float(np.max(np.abs(s - s[0])) / s[0]) if s[0] > 0 else 0.0)
        return out[0], out[1]

    def energy_drift(self) -> float:
        f = np.vstack([self.initial_fluxes, self.fluxes])
        w = np.array([self.crystal.omega_s, self.crystal.omega_p, self.crystal.omega_f])
        e = f @ (hbar * w)
        return float(np.max(np.abs(e - e[0])) / e[0]) if e[0] > 0 else 0.0

    def summary(self) -> dict:
        mr_s, mr_p = self.manley_rowe_drift()
        return {
            "final_flux": {"signal": float(self.fluxes[-1, 0]), "pump": float(self.fluxes[-1, 1]),
                           "sf": float(self.fluxes[-1, 2])},
            "initial_flux": {"signal": float(self.initial_fluxes[0]),
                             "pump": float(self.initial_fluxes[1]),
                             "sf": float(self.initial_fluxes[2])},
            "accepted_steps": self.accepted,
            "rejected_steps": self.rejected,
            "min_step": float(self.steps.min()),
            "max_step": float(self.steps.max()),
            "manley_rowe_drift": {"signal_sf": mr_s, "pump_sf": mr_p},
            "energy_drift": self.energy_drift(),
        }

    def write_flux_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "step", "N_s", "N_p", "N_f"])
            for z, h, (ns, npp, nf) in zip(self.z, self.steps, self.fluxes):
                w.writerow([repr(float(z)), repr(float(h)), repr(float(ns)), repr(float(npp)), repr(float(nf))])

    def export(self, outdir, prefix="") -> list:
        """Write summary JSON, flux table and SF slices; returns the written paths."""
        from pathlib import Path
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        p = outdir / f"{prefix}propagation.json"
        p.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        paths.append(p)
        p = outdir / f"{prefix}flux_vs_z.csv"
        self.write_flux_csv(p)
        paths.append(p)
        if self.sf.norm() > 0:
            p = outdir / f"{prefix}sf_spatial.csv"
            field_to_csv(peak_spatial_slice(self.sf), p)
            paths.append(p)
            p = outdir / f"{prefix}sf_temporal.csv"
            field_to_csv(peak_temporal_profile(self.sf), p)
            paths.append(p)
        return paths


class _LinearStep:
    """Spectral-domain propagators ``exp(L_i h)`` for the three envelopes."""

    def __init__(self, grid: Grid3D, crystal: CrystalParams):
        kx, ky = np.meshgrid(grid.kx, grid.ky, indexing="ij")
        self.k2 = kx * kx + ky * ky
        self.omega = grid.omega
        self.k = crystal.k
        self.walkoff = crystal.walkoff
        self._cache = {}

    def factors(self, h: float) -> np.ndarray:
        f = self._cache.get(h)
        if f is None:
            spat = np.exp(-1j * self.k2[None] * h / (2 * self.k[:, None, None]))
            temp = np.exp(-1j * self.omega[None] * self.walkoff[:, None] * h)
            f = spat[:, :, :, None] * temp[:, None, None, :]
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[h] = f
        return f


def _nonlinear_rhs(a: np.ndarray, z: float, kappa, dk) -> np.ndarray:
    ps = np.exp(1j * dk * z)
    out = np.empty_like(a)
    out[0] = (1j * kappa[0] * ps) * np.conj(a[1]) * a[2]
    out[1] = (1j * kappa[1] * ps) * np.conj(a[0]) * a[2]
    out[2] = (1j * kappa[2] * np.conj(ps)) * a[1] * a[0]
    return out


def _rk4(a: np.ndarray, z: float, h: float, kappa, dk) -> np.ndarray:
    k1 = _nonlinear_rhs(a, z, kappa, dk)
    k2 = _nonlinear_rhs(a + 0.5 * h * k1, z + 0.5 * h, kappa, dk)
    k3 = _nonlinear_rhs(a + 0.5 * h * k2, z + 0.5 * h, kappa, dk)
    k4 = _nonlinear_rhs(a + h * k3, z + h, kappa, dk)
    return a + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _fwd(a):
    return sfft.fftn(a, axes=AXES, norm="ortho")


def _inv(a):
    return sfft.ifftn(a, axes=AXES, norm="ortho")


def _check_inputs(signal: Field, pump: Field):
    for f in (signal, pump):
        if f.rank != "spatiotemporal":
            raise ShapeError("propagate needs spatiotemporal signal and pump fields")
        if f.domain != "direct":
            raise ShapeError("fields must be in the direct domain")
    if signal.grid != pump.grid:
        raise ShapeError("signal and pump live on different grids")


def propagate(signal: Field, pump: Field, crystal: CrystalParams,
              solver: SolverParams = SolverParams(), sf: Field | None = None) -> PropagationResult:
    """Integrate signal, pump and SF envelopes from ``z = 0`` to ``z = L``.

    Each step is a Strang splitting: linear half step in the spectral domain,
    RK4 over the nonlinear terms, linear half step. Step size is controlled by
    step doubling on the SF field with relative tolerance ``solver.tol``.

    Raises:
        ConvergenceError: ``max_steps`` exhausted or the step fell below ``h_min``.
        NumericBlowupError: a non-finite value appeared.
    """
    _check_inputs(signal, pump)
    L = crystal.length
    solver.validate(L)
    grid = signal.grid
    lin = _LinearStep(grid, crystal)
    kappa, dk = crystal.kappa, crystal.delta_k
    cell = grid.cell("spatiotemporal")
    weights = crystal.flux_weights * cell

    a = np.empty((3,) + grid.shape("spatiotemporal"), dtype=np.complex128)
    a[0] = signal.data
    a[1] = pump.data
    a[2] = 0.0 if sf is None else sf.data
    spec = _fwd(a)

    def fluxes(arr):
        with np.errstate(over="ignore"):
            return weights * np.sum(np.abs(arr) ** 2, axis=AXES)

    initial = fluxes(a)
    zs, hs, recs = [], [], []
    z, h = 0.0, solver.h0
    accepted = rejected = 0
    with np.errstate(over="ignore", invalid="ignore"):  # blow-ups are caught below
        while L - z > 1e-12 * L:
            if accepted + rejected >= solver.max_steps:
                raise ConvergenceError(f"max_steps={solver.max_steps} exhausted at z={z:.6e} m")
            h = min(h, L - z)
            # coarse: one step of h; fine: two of h/2 with the middle linear halves merged
            coarse = _inv(spec * lin.factors(h / 2))
            coarse = _rk4(coarse, z, h, kappa, dk)
            coarse_spec = _fwd(coarse) * lin.factors(h / 2)
            fine = _inv(spec * lin.factors(h / 4))
            fine = _rk4(fine, z, h / 2, kappa, dk)
            fine = _inv(_fwd(fine) * lin.factors(h / 2))
            fine = _rk4(fine, z + h / 2, h / 2, kappa, dk)
            fine_spec = _fwd(fine) * lin.factors(h / 4)

            if not (np.all(np.isfinite(fine_spec)) and np.all(np.isfinite(coarse_spec))):
                raise NumericBlowupError("non-finite field during propagation", z)
            # unitary transforms: spectral L2 difference equals the direct-space one
            ref = np.linalg.norm(fine_spec[2])
            diff = np.linalg.norm(fine_spec[2] - coarse_spec[2])
            if ref > 0:
                err = diff / ref
            else:
                err = 0.0 if diff == 0 else math.inf

            if err <= solver.tol:
                spec = fine_spec
                z += h
                accepted += 1
                zs.append(z)
                hs.append(h)
                recs.append(fluxes(spec))  # Parseval: spectral sums equal direct ones
                fac = 2.0 if err == 0 else min(2.0, max(0.5, 0.9 * (solver.tol / err) ** (1 / 3)))
                h = min(solver.h_max, max(solver.h_min, h * fac))
            else:
                rejected += 1
                if h <= solver.h_min * (1 + 1e-12):
                    raise ConvergenceError(f"step fell to h_min={solver.h_min:.3e} m at z={z:.6e} m")
                fac = max(0.5, 0.9 * (solver.tol / err) ** (1 / 3))
                h = max(solver.h_min, h * fac)

    out = _inv(spec)
    return PropagationResult(
        signal=Field(grid, "spatiotemporal", out[0], "signal"),
        pump=Field(grid, "spatiotemporal", out[1], "pump"),
        sf=Field(grid, "spatiotemporal", out[2], "sf"),
        z=np.array(zs), steps=np.array(hs), fluxes=np.array(recs),
        initial_fluxes=initial, accepted=accepted, rejected=rejected, crystal=crystal)


def perturbative_sfg(signal: Field, pump: Field, crystal: CrystalParams, nz: int = 128) -> Field:
    """First-order SF field at ``z = L`` by trapezoid quadrature of the source term.

    Signal and pump are propagated linearly (undepleted) to each of ``nz``
    nodes, multiplied, and the product is carried to ``z = L`` by the SF
    linear propagator. Independent of :func:`propagate`'s stepping.
    """
    _check_inputs(signal, pump)
    if nz < 64:
        raise ConfigurationError("perturbative_sfg needs nz >= 64")
    grid = signal.grid
    L = crystal.length
    kx, ky = np.meshgrid(grid.kx, grid.ky, indexing="ij")
    k2 = (kx * kx + ky * ky)[:, :, None]
    om = grid.omega[None, None, :]

    def rate(k, rel_beta):
        return -1j * k2 / (2 * k) - 1j * om * rel_beta

    r_s = rate(crystal.k_s, crystal.beta_s - crystal.beta_f)
    r_p = rate(crystal.k_p, crystal.beta_p - crystal.beta_f)
    r_f = rate(crystal.k_f, 0.0)
    s0 = sfft.fftn(signal.data, norm="ortho")
    p0 = sfft.fftn(pump.data, norm="ortho")
    kappa_f = crystal.kappa[2]

    zn = np.linspace(0.0, L, nz + 1)
    wq = np.full(zn.size, L / nz)
    wq[0] = wq[-1] = 0.5 * L / nz
    acc = np.zeros_like(s0)
    for zj, wj in zip(zn, wq):
        s = sfft.ifftn(s0 * np.exp(r_s * zj), norm="ortho")
        p = sfft.ifftn(p0 * np.exp(r_p * zj), norm="ortho")
        src = 1j * kappa_f * np.exp(-1j * crystal.delta_k * zj) * s * p
        acc += wj * sfft.fftn(src, norm="ortho") * np.exp(r_f * (L - zj))
    return Field(grid, "spatiotemporal", sfft.ifftn(acc, norm="ortho"), "sf")


def free_diffraction(f: Field, k: float, dz: float) -> Field:
    """Paraxial free propagation by ``dz`` (negative = backwards) in a medium of wavenumber ``k``."""
    if f.rank not in ("spatial", "spatiotemporal"):
        raise ShapeError("diffraction needs a spatial or spatiotemporal field")
    kx, ky = np.meshgrid(f.grid.kx, f.grid.ky, indexing="ij")
    ph = np.exp(-1j * (kx * kx + ky * ky) * dz / (2 * k))
    if f.rank == "spatiotemporal":
        ph = ph[:, :, None]
    data = sfft.ifft2(sfft.fft2(f.data, axes=(0, 1)) * ph, axes=(0, 1))
    return f.with_data(data)


@dataclass(frozen=True)
class Detector:
    """SF detection model.

    ``fiber``: time-integrated power coupled into a fundamental Gaussian mode
    of waist ``waist`` whose focus lies at ``z_ref`` inside the crystal (a
    single-mode fibre imaged onto the crystal). ``bucket``: total SF flux.
    """

    kind: str = "fiber"
    waist: float | None = None
    z_ref: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fiber", "bucket"):
            raise ConfigurationError(f"unknown detector kind {self.kind!r}")
        if self.kind == "fiber" and not (self.waist and self.waist > 0):
            raise ConfigurationError("fiber detector needs a waist > 0")

    def counts(self, sf: Field, crystal: CrystalParams) -> float:
        """Detected SF photon flux (relative units)."""
        grid = sf.grid
        wt = crystal.flux_weights[2]
        if self.kind == "bucket":
            return float(wt * np.sum(np.abs(sf.data) ** 2) * grid.cell("spatiotemporal"))
        back = free_diffraction(sf, crystal.k_f, self.z_ref - crystal.length)
        X, Y = grid.xy()
        g = np.exp(-(X * X + Y * Y) / self.waist**2)
        g /= math.sqrt(np.sum(g * g) * grid.dx * grid.dy)  # discrete unit norm, so counts <= bucket
        amp = np.tensordot(g, back.data, axes=([0, 1], [0, 1])) * grid.dx * grid.dy
        return float(wt * np.sum(np.abs(amp) ** 2) * grid.dt)


def matched_detector_waist(w_signal: float, w_pump: float) -> float:
    """Waist of the product of two Gaussians: ``1/w^2 = 1/w_s^2 + 1/w_p^2``."""
    return 1.0 / math.sqrt(1.0 / w_signal**2 + 1.0 / w_pump**2)


def focused_waist(wavelength: float, focal_length: float, fwhm: float) -> float:
    """Focused 1/e^2 intensity waist of a collimated Gaussian of intensity FWHM ``fwhm``."""
    w_in = fwhm / math.sqrt(2 * math.log(2))
    return wavelength * focal_length / (math.pi * w_in)
