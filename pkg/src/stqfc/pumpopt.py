"""Pump parameterization as a superposition of LG x temporal modes, and a
seeded random-walk optimizer that maximizes the worst-pair selectivity of a
target signal mode.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, STQFCError
from .experiment import Setup
from .gridfields import Field, Grid3D
from .metrics import SelectivityReport
from .modes import LGSpec, ModeSpec, TemporalSpec, compose, lg_mode, temporal_mode


@dataclass(frozen=True)
class PumpBasis:
    """Ordered LG spatial basis and temporal basis; fixed for an optimization run."""

    spatial: tuple[LGSpec, ...]
    temporal: tuple[TemporalSpec, ...]

    def __post_init__(self):
        if not self.spatial or not self.temporal:
            raise ConfigurationError("pump basis must have at least one spatial and one temporal mode")

    @classmethod
    def lg_range(cls, l_values: Sequence[int], p_values: Sequence[int], waist: float,
                 temporal: Sequence[TemporalSpec]) -> "PumpBasis":
        return cls(tuple(LGSpec(l, p, waist) for p in p_values for l in l_values), tuple(temporal))

    @staticmethod
    def hermite_orders(tau0: float, t0: float, n_orders: int) -> tuple[TemporalSpec, ...]:
        return tuple(TemporalSpec(tau0, t0, j) for j in range(n_orders))

    @staticmethod
    def delays(tau0: float, delays: Sequence[float]) -> tuple[TemporalSpec, ...]:
        return tuple(TemporalSpec(tau0, d, 0) for d in delays)

    def to_dict(self) -> dict:
        return {"spatial": [{"l": s.l, "p": s.p, "w": s.w} for s in self.spatial],
                "temporal": [{"tau0": s.tau0, "t0": s.t0, "order": s.order} for s in self.temporal]}

    @classmethod
    def from_dict(cls, d: dict) -> "PumpBasis":
        return cls(tuple(LGSpec(int(s["l"]), int(s["p"]), float(s["w"])) for s in d["spatial"]),
                   tuple(TemporalSpec(float(s["tau0"]), float(s["t0"]), int(s["order"]))
                         for s in d["temporal"]))


def _unit_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).ravel()
    nrm = np.linalg.norm(v)
    if v.size == 0 or nrm == 0:
        raise DegenerateInputError("coefficient vector is empty or zero")
    # already-unit vectors are kept bit for bit so reloads and frozen parts are exact
    return v if abs(nrm - 1) <= 8 * np.finfo(float).eps else v / nrm


@dataclass(frozen=True, eq=False)
class PumpCoefficients:
    spatial: np.ndarray
    temporal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spatial", _unit_vector(self.spatial))
        object.__setattr__(self, "temporal", _unit_vector(self.temporal))
        self.spatial.flags.writeable = False
        self.temporal.flags.writeable = False

    @classmethod
    def uniform(cls, basis: PumpBasis) -> "PumpCoefficients":
        return cls(np.ones(len(basis.spatial)), np.ones(len(basis.temporal)))

    @classmethod
    def single(cls, basis: PumpBasis, spatial_index: int, temporal_index: int = 0) -> "PumpCoefficients":
        s = np.zeros(len(basis.spatial), complex)
        t = np.zeros(len(basis.temporal), complex)
        s[spatial_index] = 1
        t[temporal_index] = 1
        return cls(s, t)

    def to_dict(self) -> dict:
        return {"spatial": [[float(c.real), float(c.imag)] for c in self.spatial],
                "temporal": [[float(c.real), float(c.imag)] for c in self.temporal]}

    @classmethod
    def from_dict(cls, d: dict) -> "PumpCoefficients":
        return cls(np.array([complex(a, b) for a, b in d["spatial"]]),
                   np.array([complex(a, b) for a, b in d["temporal"]]))

    def __eq__(self, other):
        return (isinstance(other, PumpCoefficients)
                and np.array_equal(self.spatial, other.spatial)
                and np.array_equal(self.temporal, other.temporal))


class _BasisCache:
    """Sampled basis fields for one (basis, grid) pair."""

    def __init__(self, basis: PumpBasis, grid: Grid3D, strict=False):
        self.spatial = np.array([lg_mode(s, grid, "pump", strict).data for s in basis.spatial])
        self.temporal = np.array([temporal_mode(s, grid, "pump").data for s in basis.temporal])
        self.grid = grid


_CACHE: dict = {}


def _cache_for(basis: PumpBasis, grid: Grid3D, strict=False) -> _BasisCache:
    key = (basis, grid)
    if key not in _CACHE:
        if len(_CACHE) > 16:
            _CACHE.clear()
        _CACHE[key] = _BasisCache(basis, grid, strict)
    return _CACHE[key]


def build_pump(coeffs: PumpCoefficients, basis: PumpBasis, grid: Grid3D) -> Field:
    """Unit-normalized ``(sum C_pl LG^p_l) x (sum tau_j Phi_j)``."""
    if len(coeffs.spatial) != len(basis.spatial) or len(coeffs.temporal) != len(basis.temporal):
        raise ConfigurationError("coefficient vectors do not match the pump basis")
    cache = _cache_for(basis, grid)
    sp = np.tensordot(coeffs.spatial, cache.spatial, axes=1)
    tp = np.tensordot(coeffs.temporal, cache.temporal, axes=1)
    spatial = Field(grid, "spatial", sp, "pump")
    temporal = Field(grid, "temporal", tp, "pump")
    if spatial.norm() == 0 or temporal.norm() == 0:
        raise DegenerateInputError("pump superposition cancels to zero")
    return compose(spatial.normalized(), temporal.normalized(), "pump")


@dataclass
class OptProblem:
    target: int
    signals: list
    setup: Setup
    basis: PumpBasis
    labels: list = field(default_factory=list)
    optimize_temporal: bool = True
    mapper: Callable = map

    def __post_init__(self):
        self.signals = list(self.signals)
        if len(self.signals) < 2:
            raise ConfigurationError("need at least two signal modes")
        if not 0 <= self.target < len(self.signals):
            raise ConfigurationError("target index out of range")
        keys = [json.dumps(s.to_dict(), sort_keys=True) if isinstance(s, ModeSpec) else id(s)
                for s in self.signals]
        if len(set(keys)) != len(keys):
            raise ConfigurationError("signal modes must be pairwise distinct")
        if not self.labels:
            self.labels = [getattr(s, "label", "") or f"S{k + 1}" for k, s in enumerate(self.signals)]
        self._launched = None

    def launched_signals(self) -> list:
        if self._launched is None:
            self._launched = [self.setup.signal_field(s) for s in self.signals]
        return self._launched


@dataclass(frozen=True)
class OptParams:
    iterations: int = 500
    sigma: float = 0.1
    seed: int = 0
    patience: int = 25
    sigma_floor: float = 1e-3

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if not self.sigma > 0 or not self.sigma_floor > 0:
            raise ConfigurationError("sigma and sigma_floor must be > 0")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")


class ObjectiveError(STQFCError):
    def __init__(self, signal_index, cause):
        super().__init__(f"propagation failed for signal {signal_index}: {cause}")
        self.signal_index = signal_index


def signal_counts(coeffs: PumpCoefficients, problem: OptProblem) -> np.ndarray:
    """Detected SF flux for every signal under the pump built from ``coeffs``."""
    setup = problem.setup
    pump = setup.pump_field(build_pump(coeffs, problem.basis, setup.grid))
    signals = problem.launched_signals()

    def one(k):
        try:
            return setup.detect(signals[k], pump)
        except Exception as exc:
            raise ObjectiveError(k, exc) from exc

    return np.array(list(problem.mapper(one, range(len(signals)))), dtype=float)


def evaluate_objective(coeffs: PumpCoefficients, problem: OptProblem,
                       provenance: dict | None = None) -> tuple[float, SelectivityReport]:
    """Worst-case selectivity (dB) of the target against every other signal."""
    counts = signal_counts(coeffs, problem)
    report = SelectivityReport.from_counts(counts, problem.target, problem.labels, provenance)
    return report.min_eta, report


@dataclass
class OptimizationResult:
    best: PumpCoefficients
    best_objective: float
    trace: np.ndarray
    accepted: int
    report: SelectivityReport | None
    basis: PumpBasis
    seed: int
    initial_objective: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {"basis": self.basis.to_dict(),
                "best_coefficients": self.best.to_dict(),
                "best_objective_db": float(self.best_objective),
                "initial_objective_db": float(self.initial_objective),
                "trace_db": [float(v) for v in self.trace],
                "accepted_moves": int(self.accepted),
                "seed": int(self.seed),
                "final_report": self.report.to_dict() if self.report is not None else None,
                "error": self.error}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load_pump(cls, d: dict) -> tuple[PumpBasis, PumpCoefficients]:
        """Basis and best coefficients from a serialized result."""
        return PumpBasis.from_dict(d["basis"]), PumpCoefficients.from_dict(d["best_coefficients"])


def _perturb(v: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(v.size) + 1j * rng.standard_normal(v.size)
    return v + sigma * noise / math.sqrt(2)


def random_walk_optimize(problem: OptProblem, params: OptParams,
                         initial: PumpCoefficients | None = None,
                         objective: Callable | None = None,
                         callback: Callable | None = None) -> OptimizationResult:
    """Greedy random walk over the pump coefficients.

    Every iteration adds complex Gaussian noise of scale ``sigma`` to all
    coefficients (temporal ones only if ``problem.optimize_temporal``),
    renormalizes, and keeps the candidate iff the objective strictly improves.
    After ``patience`` consecutive rejections ``sigma`` halves, down to
    ``sigma_floor``. ``objective(coeffs) -> (dB, report)`` defaults to
    :func:`evaluate_objective` on ``problem``.

    A failing evaluation stops the walk; the best point so far is returned
    with ``error`` set.
    """
    if objective is None:
        prov = {"seed": params.seed}

        def objective(c):
            return evaluate_objective(c, problem, prov)

    rng = np.random.default_rng(params.seed)
    current = initial or PumpCoefficients.uniform(problem.basis)
    best_obj, best_report = objective(current)
    initial_obj = best_obj
    sigma = params.sigma
    stall = accepted = 0
    trace = []
    error = None
    for it in range(params.iterations):
        spatial = _perturb(current.spatial, sigma, rng)
        temporal = (_perturb(current.temporal, sigma, rng) if problem.optimize_temporal
                    else current.temporal)
        try:
            cand = PumpCoefficients(spatial, temporal)
            obj, report = objective(cand)
        except Exception as exc:
            error = f"iteration {it}: {exc}"
            break
        if obj > best_obj:
            current, best_obj, best_report = cand, obj, report
            accepted += 1
            stall = 0
        else:
            stall += 1
            if stall >= params.patience:
                sigma = max(0.5 * sigma, params.sigma_floor)
                stall = 0
        trace.append(best_obj)
        if callback is not None:
            callback(it, best_obj, sigma)
    return OptimizationResult(current, best_obj, np.array(trace), accepted, best_report,
                              problem.basis, params.seed, initial_obj, error)


STRATEGIES = {"random_walk": random_walk_optimize}
