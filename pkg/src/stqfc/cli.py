"""Command-line scenario runner.

    stqfc simulate   --config fig1b.cfg --out out/fig1b
    stqfc optimize   --config fig2.cfg --seed 3
    stqfc tomography --config oamgrid.cfg
    stqfc rotate     --config rotation.cfg
    stqfc validate   --config any.cfg

Bundled scenarios can be named without a path (``--config fig2.cfg``).
Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__, config as cfgmod
from .errors import (AccuracyError, ConfigurationError, ConvergenceError, NumericBlowupError,
                     ValidationError)
from .gridfields import field_to_csv, peak_spatial_slice, peak_temporal_profile
from .metrics import tomography_matrix, visibility
from .pumpopt import STRATEGIES, ObjectiveError, OptProblem

log = logging.getLogger("stqfc")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
NUMERIC_ERRORS = (ConvergenceError, NumericBlowupError, AccuracyError, ObjectiveError,
                  FloatingPointError)


class ScenarioFailure(Exception):
    def __init__(self, code, record):
        super().__init__(record.get("message", ""))
        self.code = code
        self.record = record


@contextmanager
def _mapper(jobs: int):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            yield pool.map
    else:
        yield map


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def resolve_config(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    try:
        return cfgmod.bundled_scenario(str(path))
    except FileNotFoundError:
        return p  # let the loader raise the I/O error


# ---------------------------------------------------------------------------
# scenarios

def _simulate(cfg, setup, outdir: Path, mapper):
    signal_ms = cfgmod.signal_specs(cfg)[0]
    pump_ms = cfgmod.pump_specs(cfg)[0]
    signal = setup.signal_field(signal_ms)
    pump = setup.pump_field(pump_ms)
    res = setup.run(signal, pump)
    files = res.export(outdir)
    for name, ms, carrier in (("signal", signal_ms, "signal"), ("pump", pump_ms, "pump")):
        u = setup.unit_field(ms, carrier)
        p = outdir / f"{name}_spatial.csv"
        field_to_csv(peak_spatial_slice(u), p)
        q = outdir / f"{name}_temporal.csv"
        field_to_csv(peak_temporal_profile(u), q)
        files += [p, q]
    sf = res.sf
    results = {"signal": signal_ms.label, "pump": pump_ms.label,
               "propagation": res.summary(),
               "detected_sf_flux": setup.detector.counts(sf, setup.crystal)}
    if sf.norm() > 0:
        g = sf.grid
        tprof = np.sum(np.abs(sf.data) ** 2, axis=(0, 1))
        fluence = np.sum(np.abs(sf.data) ** 2, axis=2)
        ix, iy = np.unravel_index(int(np.argmax(fluence)), fluence.shape)
        results["sf_temporal_peak_s"] = float(g.t[int(np.argmax(tprof))])
        results["sf_temporal_centroid_s"] = float(np.sum(g.t * tprof) / np.sum(tprof))
        results["sf_spatial_peak_m"] = [float(g.x[ix]), float(g.y[iy])]
    return results, files


def _optimize(cfg, setup, outdir: Path, mapper):
    opt = cfg["optimizer"]
    problem = OptProblem(opt["target"], cfgmod.signal_specs(cfg), setup, cfgmod.build_basis(cfg),
                         optimize_temporal=opt.get("optimize_temporal", True), mapper=mapper)
    params = cfgmod.build_opt_params(cfg, cfg["seed"])
    strategy = STRATEGIES[opt.get("strategy", "random_walk")]

    def progress(it, best, sigma):
        if it % 10 == 0:
            log.info("iteration %d: best %.3f dB (sigma %.3g)", it, best, sigma)

    result = strategy(problem, params, callback=progress)
    files = [_dump(outdir / "optimization.json", result.to_dict())]
    p = outdir / "trace.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "best_objective_db"])
        for i, v in enumerate(result.trace):
            w.writerow([i, repr(float(v))])
    files.append(p)
    results = {"best_objective_db": result.best_objective,
               "initial_objective_db": result.initial_objective,
               "accepted_moves": result.accepted,
               "iterations": len(result.trace),
               "report": result.report.to_dict(),
               "min_selectivity_db": result.report.min_eta}
    if result.error:
        raise ScenarioFailure(EXIT_NUMERIC, {"error": "ObjectiveError", "message": result.error,
                                             "partial_results": results,
                                             "partial_outputs": [f.name for f in files]})
    return results, files


def _tomography(cfg, setup, outdir: Path, mapper):
    signals = cfgmod.signal_specs(cfg)
    pumps = cfgmod.pump_specs(cfg)
    sig_fields = [setup.signal_field(s) for s in signals]
    pump_fields = [setup.pump_field(p) for p in pumps]
    tm = tomography_matrix(sig_fields, pump_fields, setup.detect,
                           [p.label for p in pumps], [s.label for s in signals], mapper=mapper)
    files = [outdir / "tomography.csv", outdir / "tomography_full.csv", outdir / "tomography.json"]
    tm.write_csv(files[0], files[1])
    tm.write_json(files[2])
    return {"matrix": tm.to_dict(), "row_sums": tm.row_sums().tolist()}, files


def sweep_rotation(setup, make_signal, make_pump, theta_s, theta_p, mapper=map) -> np.ndarray:
    """Detected SF flux on the (theta_signal, theta_pump) grid; rows index theta_signal."""
    sig = [setup.signal_field(make_signal(t)) for t in theta_s]
    pmp = [setup.pump_field(make_pump(t)) for t in theta_p]
    cells = [(i, j) for i in range(len(theta_s)) for j in range(len(theta_p))]
    vals = list(mapper(lambda ij: setup.detect(sig[ij[0]], pmp[ij[1]]), cells))
    out = np.zeros((len(theta_s), len(theta_p)))
    for (i, j), v in zip(cells, vals):
        out[i, j] = v
    return out


def rotation_summary(flux: np.ndarray, theta_s, theta_p) -> dict:
    norm = flux / flux.max()
    ds = np.rad2deg(theta_s)[:, None] - np.rad2deg(theta_p)[None, :]
    ortho = np.isclose(np.abs(ds), 90.0)
    matched = np.isclose(ds, 0.0)
    cuts = [visibility(list(zip(theta_s, flux[:, j]))) for j in range(flux.shape[1])]
    out = {"max_flux": float(flux.max()), "min_visibility_fixed_pump": float(min(cuts)),
           "visibility_fixed_pump": [float(v) for v in cuts]}
    if ortho.any() and matched.any():
        out["orthogonal_max_normalized"] = float(norm[ortho].max())
        out["matched_min_normalized"] = float(norm[matched].min())
        out["extinction_db"] = float(10 * np.log10(norm[matched].min() / max(norm[ortho].max(), 1e-300)))
    return out


def _rotate(cfg, setup, outdir: Path, mapper):
    make_s, make_p, th_s, th_p = cfgmod.rotation_modes(cfg)
    flux = sweep_rotation(setup, make_s, make_p, th_s, th_p, mapper)
    p = outdir / "rotation.csv"
    write_rotation_csv(p, flux, th_s, th_p)
    return rotation_summary(flux, th_s, th_p), [p]


def write_rotation_csv(path, flux, theta_s, theta_p):
    norm = flux / flux.max()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_signal_deg", "theta_pump_deg", "flux", "normalized"])
        for i, ts in enumerate(theta_s):
            for j, tp in enumerate(theta_p):
                w.writerow([repr(float(np.rad2deg(ts))), repr(float(np.rad2deg(tp))),
                            repr(float(flux[i, j])), repr(float(norm[i, j]))])


SCENARIOS = {"simulate": _simulate, "optimize": _optimize,
             "tomography": _tomography, "rotate": _rotate}


def _versions() -> dict:
    return {"stqfc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def execute(cfg: dict, outdir: Path, strict=False, jobs=1) -> dict:
    """Run a validated config, write outputs plus ``report.json``; returns the report."""
    setup = cfgmod.build_setup(cfg, strict)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    with _mapper(jobs) as mapper:
        results, files = SCENARIOS[cfg["scenario"]](cfg, setup, outdir, mapper)
    report = {"scenario": cfg["scenario"], "inputs_digest": cfgmod.digest(cfg), "config": cfg,
              "results": results, "versions": _versions(),
              "outputs": {f.name: _sha256(f) for f in sorted(files)}}
    _dump(outdir / "report.json", report)
    _dump(outdir / "run_metadata.json",
          {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "wall_seconds": time.time() - t0,
           "jobs": jobs})
    return report


def run_scenario(config_path, out=None, seed=None, strict=False, jobs=1, expect=None) -> tuple[int, Path | None]:
    """Load, validate and run a scenario. Returns ``(exit_code, output_dir)``.

    On failure a JSON error record goes to stderr; runtime failures also leave
    ``error.json`` next to whatever partial outputs were written. Validation
    failures write nothing.
    """
    outdir = None
    try:
        try:
            cfg = cfgmod.load(resolve_config(config_path))
        except OSError as exc:
            raise ScenarioFailure(EXIT_IO, {"error": "IOError", "message": str(exc)})
        cfg = cfgmod.with_overrides(cfg, seed=seed, out=out)
        if expect is not None and cfg["scenario"] != expect:
            raise ValidationError([f"scenario: config is '{cfg['scenario']}' but command is '{expect}'"])
        cfgmod.validate(cfg)
        outdir = Path(cfg.get("output", {}).get("dir") or f"out/{Path(str(config_path)).stem}")
        try:
            execute(cfg, outdir, strict, jobs)
        except ScenarioFailure:
            raise
        except NUMERIC_ERRORS as exc:
            raise ScenarioFailure(EXIT_NUMERIC, {"error": type(exc).__name__, "message": str(exc)})
        except ConfigurationError as exc:
            raise ScenarioFailure(EXIT_VALIDATION, {"error": type(exc).__name__, "message": str(exc),
                                                    "problems": [str(exc)]})
        except OSError as exc:
            raise ScenarioFailure(EXIT_IO, {"error": "IOError", "message": str(exc)})
        return EXIT_OK, outdir
    except ValidationError as exc:
        _emit_error(EXIT_VALIDATION, {"error": "ValidationError", "message": "config validation failed",
                                      "problems": exc.problems}, None)
        return EXIT_VALIDATION, None
    except ScenarioFailure as exc:
        _emit_error(exc.code, exc.record, outdir if exc.code != EXIT_VALIDATION else None)
        return exc.code, outdir


def _emit_error(code, record, outdir):
    record = dict(record, exit_code=code)
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if outdir is not None:
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            _dump(outdir / "error.json", record)
        except OSError:
            pass


def rotation_sweep(config_path, out=None, strict=False, jobs=1) -> Path:
    """Run a rotate scenario and return the path of its CSV (raises on failure)."""
    code, outdir = run_scenario(config_path, out=out, strict=strict, jobs=jobs, expect="rotate")
    if code != EXIT_OK:
        raise RuntimeError(f"rotation sweep failed with exit code {code}")
    return outdir / "rotation.csv"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stqfc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "optimize", "tomography", "rotate", "validate", "run"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="scenario file or bundled scenario name")
        if name != "validate":
            sp.add_argument("--out", help="output directory (overrides output.dir)")
            sp.add_argument("--seed", type=int, help="RNG seed override (u64)")
            sp.add_argument("--strict", action="store_true", help="promote accuracy warnings to errors")
            sp.add_argument("--jobs", type=int, default=1, help="max worker threads")
        sp.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "validate":
        try:
            cfg = cfgmod.load(resolve_config(args.config))
        except ValidationError as exc:
            _emit_error(EXIT_VALIDATION, {"error": "ValidationError", "message": "config validation failed",
                                          "problems": exc.problems}, None)
            return EXIT_VALIDATION
        except OSError as exc:
            _emit_error(EXIT_IO, {"error": "IOError", "message": str(exc)}, None)
            return EXIT_IO
        print(json.dumps({"valid": True, "scenario": cfg["scenario"], "digest": cfgmod.digest(cfg)}))
        return EXIT_OK

    if args.seed is not None and not 0 <= args.seed < 2**64:
        _emit_error(EXIT_VALIDATION, {"error": "ValidationError", "message": "seed must be a u64",
                                      "problems": ["--seed: out of range"]}, None)
        return EXIT_VALIDATION
    expect = None if args.command == "run" else args.command
    code, outdir = run_scenario(args.config, args.out, args.seed, args.strict, args.jobs, expect)
    if code == EXIT_OK:
        print(json.dumps({"ok": True, "output_dir": str(outdir)}))
    return code


if __name__ == "__main__":
    sys.exit(main())
