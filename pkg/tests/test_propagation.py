import json
import math

import numpy as np
import pytest
from scipy.constants import c as C_LIGHT

from conftest import TAU0, W_P, W_S, make_setup
from stqfc.errors import ConfigurationError, ConvergenceError, NumericBlowupError, ShapeError
from stqfc.gridfields import Field, make_grid
from stqfc.modes import LGSpec, ModeSpec, TemporalSpec, build_mode
from stqfc.propagation import (CrystalParams, Detector, SolverParams, free_diffraction,
                               matched_detector_waist, perturbative_sfg, phase_matched_index, propagate)


def gaussian_pair(setup, delay=0.0, sig_l=0, pump_l=0):
    s = ModeSpec.simple(LGSpec(sig_l, 0, W_S), TemporalSpec(TAU0, 0.0))
    p = ModeSpec.simple(LGSpec(pump_l, 0, W_P), TemporalSpec(TAU0, delay))
    return setup.signal_field(s), setup.pump_field(p)


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# ---------------------------------------------------------------------------
# parameters

def test_default_crystal_is_phase_matched(crystal):
    assert abs(crystal.delta_k) * crystal.length < 1e-9
    assert crystal.omega_f == pytest.approx(crystal.omega_s + crystal.omega_p, rel=1e-15)
    assert np.all(crystal.walkoff == 0)
    assert crystal.k_s == pytest.approx(crystal.n_s * crystal.omega_s / C_LIGHT)
    json.dumps(crystal.to_dict())


@pytest.mark.parametrize("change", [dict(omega_f=1.0), dict(n_s=0.9), dict(length=0.0),
                                    dict(poling_period=-1.0)])
def test_crystal_invariants(crystal, change):
    kw = dict(crystal.to_dict())
    kw.pop("delta_k")
    kw.update(change)
    with pytest.raises(ConfigurationError):
        CrystalParams(**kw)


@pytest.mark.parametrize("kw", [dict(tol=0), dict(h0=1e-2), dict(h_min=1e-3, h0=5e-4),
                                dict(h_max=2e-2, h0=1e-3), dict(max_steps=0)])
def test_solver_invariants(kw):
    with pytest.raises(ConfigurationError):
        SolverParams(**kw).validate(10e-3)


def test_solver_for_length():
    s = SolverParams().for_length(1e-3)
    s.validate(1e-3)
    assert s.h_max == 1e-3


def test_focused_waists():
    assert W_S == pytest.approx(44.9e-6, rel=2e-3)
    assert W_P == pytest.approx(41.4e-6, rel=2e-3)
    assert matched_detector_waist(1.0, 1.0) == pytest.approx(1 / math.sqrt(2))


# ---------------------------------------------------------------------------
# linear behaviour

def test_free_diffraction_matches_gaussian_optics(thin_grid, crystal):
    g = make_grid(128, 128, 8, 30 * W_S, 30 * W_S, 12 * TAU0)
    f = build_mode(ModeSpec.simple(LGSpec(0, 0, W_S), TemporalSpec(TAU0)), g)
    z_r = crystal.k_s * W_S**2 / 2
    out = free_diffraction(f, crystal.k_s, 2 * z_r)
    peak = np.abs(out.data).max() / np.abs(f.data).max()
    # on-axis amplitude falls as w0 / w(z) = 1 / sqrt(1 + (z/zR)^2)
    assert peak == pytest.approx(1 / math.sqrt(5), rel=1e-6)
    back = free_diffraction(out, crystal.k_s, -2 * z_r)
    assert np.max(np.abs(back.data - f.data)) <= 1e-12 * np.abs(f.data).max()


def test_zero_pump_gives_no_sf(small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=0.0)
    s, p = gaussian_pair(setup)
    res = setup.run(s, p)
    assert np.all(res.sf.data == 0)
    ref = free_diffraction(s, crystal.k_s, crystal.length)
    assert np.max(np.abs(res.signal.data - ref.data)) <= 1e-12 * np.abs(ref.data).max()


# ---------------------------------------------------------------------------
# nonlinear behaviour

def test_manley_rowe_and_energy(small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=2e6, tol=1e-6)
    s, p = gaussian_pair(setup)
    res = setup.run(s, p)
    conversion = res.fluxes[-1, 2] / res.initial_fluxes[0]
    assert conversion > 1e-3  # a real test of conservation, not of nothing happening
    assert max(res.manley_rowe_drift()) <= 1e-4
    assert res.energy_drift() <= 1e-4
    assert res.z[-1] == pytest.approx(crystal.length, rel=1e-12)
    assert len(res.fluxes) == res.accepted == len(res.z)


def test_matches_perturbative_oracle(small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=1e4, tol=1e-6)
    s, p = gaussian_pair(setup, delay=0.3e-12)
    res = setup.run(s, p)
    depletion = 1 - res.fluxes[-1, 0] / res.initial_fluxes[0]
    assert depletion < 1e-4
    oracle = perturbative_sfg(s, p, crystal, nz=128)
    assert rel_l2(res.sf.data, oracle.data) <= 0.01


def test_step_size_self_consistency(small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=1e6, tol=1e-4)
    s, p = gaussian_pair(setup)
    coarse = propagate(s, p, crystal, SolverParams(h0=2.5e-3, tol=1e-4))
    fine = propagate(s, p, crystal, SolverParams(h0=2.5e-3, tol=5e-5))
    assert abs(coarse.fluxes[-1, 2] / fine.fluxes[-1, 2] - 1) < 1e-4


def test_oam_selection_rule(thin_grid, crystal):
    setup = make_setup(thin_grid, crystal)
    s_minus, p_plus = gaussian_pair(setup, sig_l=-1, pump_l=1)
    s_plus, _ = gaussian_pair(setup, sig_l=1, pump_l=1)
    matched = setup.detect(s_minus, p_plus)
    mismatched = setup.detect(s_plus, p_plus)
    assert matched > 0
    assert 10 * math.log10(matched / max(mismatched, 1e-300)) >= 40


def test_export(tmp_path, small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=1e5)
    res = setup.run(*gaussian_pair(setup))
    paths = res.export(tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["flux_vs_z.csv", "propagation.json", "sf_spatial.csv", "sf_temporal.csv"]
    summary = json.loads((tmp_path / "propagation.json").read_text())
    assert summary["accepted_steps"] == res.accepted
    rows = (tmp_path / "flux_vs_z.csv").read_text().splitlines()
    assert rows[0] == "z,step,N_s,N_p,N_f" and len(rows) == res.accepted + 1


# ---------------------------------------------------------------------------
# oracle examples

def wide_beams(crystal, dk_target):
    """Beams with Rayleigh range >> L on a coarse grid, and a crystal with the requested mismatch."""
    g = make_grid(16, 16, 8, 14e-3, 14e-3, 12 * TAU0)
    w = 1e-3
    n_f0 = phase_matched_index(crystal.omega_s, crystal.omega_p, crystal.n_s, crystal.n_p,
                               crystal.poling_period)
    n_f = n_f0 - dk_target * C_LIGHT / crystal.omega_f
    cr = CrystalParams(**{**{k: v for k, v in crystal.to_dict().items() if k != "delta_k"}, "n_f": n_f})
    s = build_mode(ModeSpec.simple(LGSpec(0, 0, w), TemporalSpec(TAU0)), g).scaled(1e3)
    p = build_mode(ModeSpec.simple(LGSpec(0, 0, w), TemporalSpec(TAU0)), g).scaled(1e3)
    return cr, s, p


def test_oracle_phase_mismatch_sinc(crystal):
    x = 7.5  # dk L / 2
    cr, s, p = wide_beams(crystal, 2 * x / crystal.length)
    assert cr.delta_k * cr.length / 2 == pytest.approx(x, rel=1e-6)
    cr0, _, _ = wide_beams(crystal, 0.0)
    bucket = Detector("bucket")
    ratio = bucket.counts(perturbative_sfg(s, p, cr), cr) / bucket.counts(perturbative_sfg(s, p, cr0), cr0)
    assert ratio == pytest.approx((math.sin(x) / x) ** 2, rel=0.01)


def test_oracle_oam_mismatch(thin_grid, crystal):
    setup = make_setup(thin_grid, crystal)
    s_plus, p_plus = gaussian_pair(setup, sig_l=1, pump_l=1)
    s_minus, _ = gaussian_pair(setup, sig_l=-1, pump_l=1)
    det = setup.detector
    bad = det.counts(perturbative_sfg(s_plus, p_plus, crystal, 64), crystal)
    good = det.counts(perturbative_sfg(s_minus, p_plus, crystal, 64), crystal)
    assert bad < 1e-6 * good


def test_oracle_linear_in_signal(small_grid, crystal):
    setup = make_setup(small_grid, crystal)
    s, p = gaussian_pair(setup)
    a = perturbative_sfg(s, p, crystal, 64).data
    b = perturbative_sfg(s.scaled(2.0), p, crystal, 64).data
    assert np.max(np.abs(b - 2 * a)) <= 1e-12 * np.abs(b).max()


# ---------------------------------------------------------------------------
# errors

def test_convergence_errors(small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=1e6)
    s, p = gaussian_pair(setup)
    with pytest.raises(ConvergenceError):
        propagate(s, p, crystal, SolverParams(max_steps=2))
    with pytest.raises(ConvergenceError):
        propagate(s, p, crystal, SolverParams(h0=1e-4, h_min=1e-4, tol=1e-14))


def test_numeric_blowup(small_grid, crystal):
    setup = make_setup(small_grid, crystal, pump_peak=1e200, signal_amplitude=1e100)
    s, p = gaussian_pair(setup)
    with pytest.raises(NumericBlowupError) as info:
        propagate(s, p, crystal, SolverParams(h0=1e-3))
    assert info.value.last_good_z == 0.0


def test_shape_errors(small_grid, thin_grid, crystal):
    setup = make_setup(small_grid, crystal)
    s, p = gaussian_pair(setup)
    other = Field(thin_grid, "spatiotemporal", np.zeros(thin_grid.shape("spatiotemporal")))
    with pytest.raises(ShapeError):
        propagate(s, other, crystal)
    with pytest.raises(ShapeError):
        perturbative_sfg(s, Field(small_grid, "spatial", np.zeros((32, 32))), crystal)
    with pytest.raises(ConfigurationError):
        perturbative_sfg(s, p, crystal, nz=10)


def test_detector_models(small_grid, crystal):
    with pytest.raises(ConfigurationError):
        Detector("fiber")
    with pytest.raises(ConfigurationError):
        Detector("camera", 1e-5)
    setup = make_setup(small_grid, crystal, pump_peak=1e5)
    res = setup.run(*gaussian_pair(setup))
    bucket = Detector("bucket").counts(res.sf, crystal)
    assert bucket == pytest.approx(res.fluxes[-1, 2], rel=1e-12)
    fiber = setup.detector.counts(res.sf, crystal)
    assert 0 < fiber <= bucket
