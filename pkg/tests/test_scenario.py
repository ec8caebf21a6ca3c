import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coexqkd import scenario as S
from coexqkd.linkmodel import ClassicalChannel, ClassicalPlan
from coexqkd.temporal import JitterModel


def test_evaluate_is_pure(sc95):
    a, b = S.evaluate(sc95), S.evaluate(sc95)
    assert a == b


def test_evaluate_calibrated_operating_point(sc95):
    r = S.evaluate(sc95)
    assert r.launch_power_dbm == 8.9
    assert r.received_power_dbm == pytest.approx(-12.095)
    assert r.line_loss_db == pytest.approx(34.8002)
    assert r.acceptance == pytest.approx(10 ** -0.19, rel=1e-6)
    assert r.spectral_transmission == pytest.approx(10 ** -0.22, rel=1e-6)
    assert 14 <= r.skr_bps <= 126
    assert r.skr_bps == pytest.approx(41.99925, rel=1e-5)
    assert 0 <= r.qber_z <= 0.5


def test_signal_transmission_composition(sc95):
    r = S.evaluate(sc95)
    # line, CWDM 1-3, spool, FBG floor and mismatch
    static = 34.8002 + 0.8 + 0.6 + 0.8 + 1.0 + 1.8 + 2.2
    assert r.signal_transmission == pytest.approx(10 ** (-static / 10), rel=1e-6)


def test_no_classical_light(sc95):
    r = S.evaluate(sc95.with_launch_power(None))
    assert r.noise_power_w == 0.0 and r.noise_rate_z_hz == 0.0
    assert math.isinf(r.launch_power_dbm)
    assert r.skr_bps == pytest.approx(1694.22, rel=1e-5)


def test_empty_plan_gets_grid(sc95):
    empty = sc95.with_launch_power(None)
    back = empty.with_launch_power(8.9)
    assert len(back.plan.channels) == 13
    assert S.evaluate(back).skr_bps == pytest.approx(S.evaluate(sc95).skr_bps, rel=1e-12)


def test_model_errors_carry_context(sc95):
    bad = replace(sc95, plan=ClassicalPlan((ClassicalChannel(1550.0, 0.0, -1.0),)))
    with pytest.raises(S.ModelError, match="95.5 km"):
        S.evaluate(bad)


def test_grid():
    assert S.grid(-1.0, 1.0, 0.5) == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert S.grid(8.9, 8.9, 1.0) == [8.9]
    assert len(S.grid(-20, 15, 0.1)) == 351
    with pytest.raises(ValueError):
        S.grid(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        S.grid(0.0, 1.0, 0.0)


def test_sweep_single_point_equals_evaluate(sc95):
    assert S.sweep(sc95, "launch_power", [8.9]) == [S.evaluate(sc95.with_launch_power(8.9))]
    with pytest.raises(ValueError):
        S.sweep(sc95, "launch_power", [])
    with pytest.raises(ValueError):
        S.sweep(sc95, "temperature", [1.0])


def test_parallel_sweep_preserves_order(sc95):
    grid = S.grid(0.0, 12.0, 1.5)
    assert S.sweep(sc95, "launch_power", grid, workers=3) == S.sweep(sc95, "launch_power", grid)


def test_sweep_crosses_zero_between_measured_and_12_dbm(sc95):
    res = S.sweep(sc95, "launch_power", S.grid(-20.0, 15.0, 0.5))
    skr = [r.skr_bps for r in res]
    assert all(b <= a for a, b in zip(skr, skr[1:]))
    first_zero = next(r.launch_power_dbm for r in res if r.skr_bps == 0)
    assert 8.9 < first_zero <= 12.0


def test_boundary_matches_sweep_sign_change(sc95):
    b = S.max_tolerable_launch_power(sc95)
    assert b.status == "bounded" and b.is_finite
    assert b.power_dbm == pytest.approx(9.006, abs=0.01)
    step = 0.25
    res = S.sweep(sc95, "launch_power", S.grid(5.0, 12.0, step))
    last_positive = max(r.launch_power_dbm for r in res if r.key_length_real >= 1.0)
    assert abs(last_positive - b.power_dbm) <= step


def test_boundary_unbounded_without_noise(sc95):
    quiet = replace(sc95, raman_coefficient=0.0)
    quiet = replace(quiet, receiver=replace(quiet.receiver, detector=replace(
        quiet.receiver.detector, dark_count_rate_z_hz=0.0, dark_count_rate_x_hz=0.0)))
    b = S.max_tolerable_launch_power(quiet)
    assert b.status == "unbounded" and b.power_dbm == 35.0


def test_boundary_no_key(sc95):
    b = S.max_tolerable_launch_power(sc95.with_fiber_length(200.0))
    assert b.status == "no_key" and b.power_dbm is None


def test_short_lossy_link_tolerates_more_power(sc95, sc51):
    d = (S.max_tolerable_launch_power(sc51).power_dbm -
         S.max_tolerable_launch_power(sc95).power_dbm)
    assert 6.0 <= d <= 10.0


def test_positive_key_region(sc95):
    lengths = list(S.grid(25.0, 95.0, 10.0)) + [100.0]
    region = S.boundary_vs_length(sc95, lengths)
    powers = [b.power_dbm for _, b in region]
    assert all(b.status == "bounded" for _, b in region)
    assert all(q < p for p, q in zip(powers, powers[1:]))
    b50 = S.max_tolerable_launch_power(sc95.with_fiber_length(50.0)).power_dbm
    assert region[-1][1].power_dbm < b50


def _real_skr(sc):
    r = S.evaluate(sc)
    return r.key_length_real / r.acquisition_time_s


def test_calibration_round_trip(sc95):
    truth = replace(sc95, raman_coefficient=5e-14,
                    protocol=replace(sc95.protocol, e_opt_z=0.008, e_opt_x=0.008))
    targets = S.CalibrationTargets((
        S.CalibrationTarget("base", None, _real_skr(truth.with_launch_power(None)), "baseline"),
        S.CalibrationTarget("noisy", 5.0, _real_skr(truth.with_launch_power(5.0)), "noise"),
    ))
    report, fitted = S.calibrate(sc95, targets)
    assert report.rho == pytest.approx(5e-14, rel=1e-6)
    assert report.e_opt_z == pytest.approx(0.008, rel=1e-6)
    assert report.broadened_fwhm_ps == pytest.approx(sc95.receiver.pulse.broadened_fwhm_ps,
                                                     rel=1e-6)
    assert fitted.raman_coefficient == report.rho
    assert [r[0] for r in report.residuals] == ["base", "noisy"]


def test_calibration_on_measured_points(cfg95):
    report, fitted = S.calibrate(cfg95.scenario, cfg95.targets)
    assert report.rho == pytest.approx(2.37629e-14, rel=1e-5)
    assert report.e_opt_z == pytest.approx(0.0061055, rel=1e-4)
    for name, role, target, model, dlog in report.residuals:
        assert abs(dlog) < 1e-4
    assert S.apply_calibration(cfg95.scenario, report) == fitted


def test_calibration_without_noise_target(cfg95):
    targets = S.CalibrationTargets(cfg95.targets.by_role("baseline"))
    report, _ = S.calibrate(cfg95.scenario, targets)
    assert not report.rho_fitted and "raman_unfitted" in report.flags
    assert report.rho == cfg95.scenario.raman_coefficient


def test_calibration_failures(cfg95):
    with pytest.raises(S.CalibrationError):
        S.calibrate(cfg95.scenario, S.CalibrationTargets(cfg95.targets.by_role("noise")))
    impossible = S.CalibrationTargets((S.CalibrationTarget("b", None, 1e7, "baseline"),))
    with pytest.raises(S.CalibrationError) as info:
        S.calibrate(cfg95.scenario, impossible)
    assert info.value.state["parameter"] == "e_opt_z"
    with pytest.raises(ValueError):
        S.CalibrationTarget("x", 0.0, -1.0)


def test_ideal_variants(sc95):
    front = S.ideal_front_end(sc95)
    rx = front.receiver
    assert rx.jitter == JitterModel(0.0, 0.0)
    assert rx.detector.dark_count_rate_z_hz == 0.0
    assert not rx.pulse.chirped and rx.pulse.family == "sech2"
    assert rx.gate == sc95.receiver.gate
    lossless = S.lossless_filter_block(front)
    block = [f for f in lossless.link.filters if f.in_filter_block]
    assert all(f.insertion_loss_db == 0.0 for f in block)
    assert [f.noise_db for f in block] == [0.8, 1.0, 1.8]
    physical = S.lossless_filter_block(front, noise_referenced_at_detector=False)
    assert all(f.noise_db == 0.0 for f in physical.link.filters if f.in_filter_block)
    assert S.ideal_front_end(sc95, window_ps=50.0).receiver.gate.window_ps == 50.0


def test_ideal_comparison_report(sc95):
    rep = S.ideal_comparison(sc95)
    d = rep.as_dict()
    assert rep.gain_total_db == pytest.approx(rep.gain_front_end_db + rep.gain_filter_block_db)
    assert rep.gain_front_end_db > 0 and rep.gain_filter_block_db > 0
    assert 1.0 <= rep.gain_snspd_db <= 2.0
    assert 2.6 <= rep.gain_filter_block_db <= 4.6
    # removing the block loss from both signal and noise barely helps
    assert rep.gain_filter_block_physical_db < 0.5
    assert d["ideal_filter"]["shape"] in ("gaussian", "sech2", "rect")


@given(st.floats(-20.0, 15.0))
@settings(max_examples=30, deadline=None)
def test_result_invariants(p):
    from coexqkd.config import load_config
    sc = load_config("bundled:link_95p5km.cfg").scenario
    r = S.evaluate(sc.with_launch_power(p))
    assert r.skr_bps >= 0 and 0 <= r.qber_z <= 0.5 and 0 <= r.phi_x <= 0.5
    assert r.key_length_bits == max(0, math.floor(r.key_length_real))


def test_poisson_mode_is_seeded(sc95):
    a = S.evaluate(sc95, "poisson", np.random.default_rng(1))
    b = S.evaluate(sc95, "poisson", np.random.default_rng(1))
    assert a == b
