"""Scenario config loading, validation and object construction.

Config files are YAML. Every file is checked against
``schema/scenario.schema.json`` (unknown keys are errors) and then against the
cross-block rules in :func:`semantic_problems`. All problems are collected
before :class:`~stqfc.errors.ValidationError` is raised.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml
from scipy.constants import c as C_LIGHT

from .errors import ValidationError
from .experiment import Setup
from .gridfields import Grid3D, make_grid
from .modes import HGSpec, ModeSpec, TemporalSpec
from .propagation import CrystalParams, Detector, SolverParams, matched_detector_waist
from .pumpopt import OptParams, PumpBasis

REQUIRED_BLOCKS = {
    "simulate": ("signals", "pumps"),
    "optimize": ("signals", "optimizer"),
    "tomography": ("signals", "pumps"),
    "rotate": ("rotation",),
}


def schema() -> dict:
    text = resources.files("stqfc").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package (e.g. ``"fig1b.cfg"``)."""
    p = Path(str(resources.files("stqfc").joinpath("scenarios", name)))
    if not p.exists():
        raise FileNotFoundError(name)
    return p


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def semantic_problems(cfg: dict) -> list[str]:
    problems = []
    kind = cfg.get("scenario")
    for block in REQUIRED_BLOCKS.get(kind, ()):
        if block not in cfg:
            problems.append(f"{block}: required for scenario '{kind}'")
    if kind == "optimize" and "seed" not in cfg:
        problems.append("seed: required for scenario 'optimize'")
    if kind == "simulate":
        for block in ("signals", "pumps"):
            if block in cfg and len(cfg[block]) != 1:
                problems.append(f"{block}: simulate takes exactly one entry")
    if kind == "optimize" and "signals" in cfg:
        if len(cfg["signals"]) < 2:
            problems.append("signals: optimize needs at least two signals")
        opt = cfg.get("optimizer", {})
        if "target" in opt and opt["target"] >= len(cfg["signals"]):
            problems.append("optimizer/target: index out of range")
        tb = opt.get("basis", {}).get("temporal", {})
        if tb.get("kind") == "orders" and "orders" not in tb:
            problems.append("optimizer/basis/temporal/orders: required for kind 'orders'")
        if tb.get("kind") == "delays" and "delays" not in tb:
            problems.append("optimizer/basis/temporal/delays: required for kind 'delays'")
    grid = cfg.get("grid", {})
    for key in ("nx", "ny", "nt"):
        n = grid.get(key)
        if isinstance(n, int) and n & (n - 1):
            problems.append(f"grid/{key}: {n} is not a power of two")
    crystal = cfg.get("crystal", {})
    focus = cfg.get("beam", {}).get("focus")
    if focus is not None and "length" in crystal and focus > crystal["length"]:
        problems.append("beam/focus: must lie inside the crystal")
    solver = cfg.get("solver", {})
    if "h_max" in solver and "length" in crystal and solver["h_max"] > crystal["length"]:
        problems.append("solver/h_max: exceeds crystal length")
    return problems


def validate(cfg) -> dict:
    """Return ``cfg`` if valid, else raise :class:`ValidationError` listing every problem."""
    if not isinstance(cfg, dict):
        raise ValidationError(["<root>: config must be a mapping"])
    validator = jsonschema.Draft202012Validator(schema())
    problems = [f"{_path(e)}: {e.message}"
                for e in sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))]
    problems += semantic_problems(cfg)
    if problems:
        raise ValidationError(problems)
    return cfg


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e5`` / ``1.0e6`` as floats (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                    |[-+]?\.(?:inf|Inf|INF)
                    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def load(path) -> dict:
    """Parse and validate a config file.

    Raises:
        ValidationError: unparsable YAML or schema/semantic violations.
        OSError: the file cannot be read.
    """
    text = Path(path).read_text()
    try:
        cfg = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ValidationError([f"<root>: YAML parse error: {exc}"]) from exc
    return validate(cfg)


def digest(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# builders

def build_grid(cfg: dict) -> Grid3D:
    g = cfg["grid"]
    return make_grid(g["nx"], g["ny"], g["nt"], g["lx"], g["ly"], g["lt"], g.get("tc", 0.0))


def build_crystal(cfg: dict) -> CrystalParams:
    c = cfg["crystal"]

    def beta(key):
        return c[key] / C_LIGHT if key in c else None

    return CrystalParams.from_wavelengths(
        lambda_s=c["lambda_s"], lambda_p=c["lambda_p"], poling_period=c["poling_period"],
        length=c["length"], chi=c["chi"], n_s=c["n_s"], n_p=c["n_p"], n_f=c.get("n_f"),
        beta_s=beta("group_index_s"), beta_p=beta("group_index_p"), beta_f=beta("group_index_f"))


def build_solver(cfg: dict, length: float) -> SolverParams:
    s = SolverParams(**cfg.get("solver", {}))
    if "h_max" not in cfg.get("solver", {}):
        s = s.for_length(length)
    s.validate(length)
    return s


def signal_specs(cfg: dict) -> list[ModeSpec]:
    return [ModeSpec.from_dict(m) for m in cfg.get("signals", [])]


def pump_specs(cfg: dict) -> list[ModeSpec]:
    return [ModeSpec.from_dict(m) for m in cfg.get("pumps", [])]


def _first_waist(ms: ModeSpec) -> float:
    return ms.spatial[0][1].w


def build_basis(cfg: dict) -> PumpBasis:
    b = cfg["optimizer"]["basis"]
    tb = b["temporal"]
    if tb["kind"] == "orders":
        temporal = PumpBasis.hermite_orders(tb["tau0"], tb.get("t0", 0.0), tb["orders"])
    else:
        temporal = PumpBasis.delays(tb["tau0"], tb["delays"])
    return PumpBasis.lg_range(b["l"], b["p"], b["waist"], temporal)


def build_opt_params(cfg: dict, seed: int) -> OptParams:
    o = cfg["optimizer"]
    kw = {k: o[k] for k in ("iterations", "sigma", "patience", "sigma_floor") if k in o}
    return OptParams(seed=seed, **kw)


def detector_waist_guess(cfg: dict) -> float:
    """Matched fibre-mode waist from the first signal and pump (or basis / rotation beams)."""
    kind = cfg["scenario"]
    if kind == "rotate":
        r = cfg["rotation"]
        return matched_detector_waist(r["signal"]["w"], r["pump"]["w"])
    ws = _first_waist(signal_specs(cfg)[0])
    if kind == "optimize":
        wp = cfg["optimizer"]["basis"]["waist"]
    else:
        wp = _first_waist(pump_specs(cfg)[0])
    return matched_detector_waist(ws, wp)


def build_setup(cfg: dict, strict: bool = False) -> Setup:
    grid = build_grid(cfg)
    crystal = build_crystal(cfg)
    solver = build_solver(cfg, crystal.length)
    beam = cfg["beam"]
    focus = beam.get("focus", 0.5 * crystal.length)
    d = cfg["detector"]
    waist = d.get("waist") if d["kind"] == "fiber" else None
    if d["kind"] == "fiber" and waist is None:
        waist = detector_waist_guess(cfg)
    detector = Detector(d["kind"], waist, focus)
    return Setup(grid, crystal, solver, detector, beam["signal_amplitude"], beam["pump_peak"],
                 focus, strict)


def rotation_modes(cfg: dict):
    """Signal/pump HG beam factories and the two angle grids (radians)."""
    r = cfg["rotation"]

    def factory(b):
        def make(theta):
            return ModeSpec.simple(HGSpec(b["m"], b["n"], b["w"], theta),
                                   TemporalSpec(b["tau0"], b.get("t0", 0.0)))
        return make

    def angles(a):
        return np.deg2rad(np.linspace(a["start"], a["stop"], a["num"]))

    return (factory(r["signal"]), factory(r["pump"]),
            angles(r["theta_signal_deg"]), angles(r["theta_pump_deg"]))


def with_overrides(cfg: dict, seed=None, out=None) -> dict:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg.setdefault("output", {})["dir"] = str(out)
    return cfg
