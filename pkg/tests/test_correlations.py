import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavityg2.correlations import (
    CONDITIONAL,
    CorrelationSeries,
    UnderSamplingError,
    ZeroFluxError,
    bin_average,
    compare_series,
    extract_frequencies,
    g2_conditional,
    g2_from_jumps,
)
from cavityg2.dynamics import NORM_THRESHOLD, TrajectoryConfig
from cavityg2.models import (
    EIT_DASHED,
    EIT_SOLID,
    JC_DASHED,
    JC_SOLID,
    build_driven_cavity,
    build_eit,
    build_jc,
    build_jc_effective,
    derive_eit_effective,
    rephase,
)


def synthetic(f, tau_max=40.0, n=2048):
    tau = np.linspace(0, tau_max, n)
    return CorrelationSeries(tau, f(tau), np.zeros(n), "synthetic")


def test_series_invariants():
    with pytest.raises(ValueError):
        CorrelationSeries(np.array([0.1, 0.2]), np.ones(2), np.zeros(2), "x")
    with pytest.raises(ValueError):
        CorrelationSeries(np.array([0.0, 0.2]), np.array([1.0, -0.1]), np.zeros(2), "x")
    with pytest.raises(ValueError):
        CorrelationSeries(np.array([0.0, 0.2, 0.1]), np.ones(3), np.zeros(3), "x")


def test_coherent_light_is_flat():
    s = g2_conditional(build_driven_cavity(0.2, n_max=15))
    assert s.method == CONDITIONAL
    assert np.max(np.abs(s.g2 - 1)) < 1e-6
    assert not s.stderr.any()


def test_zero_flux_is_an_error_naming_the_model():
    with pytest.raises(ZeroFluxError, match="cavity"):
        g2_conditional(build_driven_cavity(0.0, n_max=4))


@pytest.mark.parametrize("system", [build_jc_effective(JC_SOLID), derive_eit_effective(EIT_DASHED)[1],
                                    derive_eit_effective(EIT_SOLID)[1]], ids=["jc", "eit-dashed", "eit-solid"])
def test_effective_models_have_exact_zero_at_origin(system):
    assert g2_conditional(system, n_tau=64).g2_zero == 0.0


@pytest.mark.parametrize("level", [1, 2, 3])
def test_gauge_invariance_of_effective_eit(level):
    s = derive_eit_effective(EIT_DASHED)[1]
    ref = g2_conditional(s, n_tau=512)
    for phase in (-1.0, np.exp(0.9j)):
        other = g2_conditional(rephase(s, level, phase), n_tau=512)
        assert np.max(np.abs(other.g2 - ref.g2)) < 1e-10


def test_gauge_invariance_of_exact_jc():
    s = build_jc(JC_DASHED)
    ref = g2_conditional(s, n_tau=256)
    other = g2_conditional(rephase(s, s.space.index(1, 1), 1j), n_tau=256)
    assert np.max(np.abs(other.g2 - ref.g2)) < 1e-10


def test_synthetic_damped_cosine():
    rep = extract_frequencies(synthetic(lambda t: np.exp(-t / 2) * np.cos(5 * t) + 1))
    assert len(rep.peaks) == 1
    assert rep.dominant.frequency == pytest.approx(5.0, rel=0.02)
    assert rep.dc_removed


def test_flat_series_has_no_peaks():
    rep = extract_frequencies(synthetic(lambda t: np.ones_like(t)))
    assert rep.peaks == []


def test_short_series_rejected():
    with pytest.raises(ValueError):
        extract_frequencies(synthetic(np.cos, n=32))


@settings(max_examples=30, deadline=None)
@given(st.floats(2.0, 30.0), st.floats(0.005, 0.1))
def test_extracted_frequency_tracks_input(w, damping):
    # at least ten periods in the record; decay rate at most a tenth of the frequency
    rate = damping * w
    rep = extract_frequencies(synthetic(lambda t: 1 + 0.5 * np.exp(-rate * t) * np.cos(w * t)))
    assert rep.dominant.frequency == pytest.approx(w, rel=0.02)
    assert all(p.frequency <= rep.nyquist for p in rep.peaks)
    amps = [p.amplitude for p in rep.peaks]
    assert amps == sorted(amps, reverse=True)


def test_compare_with_itself_is_zero():
    s = g2_conditional(build_jc(JC_DASHED))
    c = compare_series(s, s)
    assert c.max_abs == 0 and c.rms == 0 and c.g2_zero_diff == 0
    assert c.dominant_rel_diff == 0
    assert all(d["rel_diff"] == 0 for d in c.peak_diffs)


def test_compare_disjoint_ranges_rejected():
    a = synthetic(lambda t: 1 + np.cos(t))
    with pytest.raises(ValueError):
        compare_series(a, CorrelationSeries(np.array([0.0]), np.ones(1), np.zeros(1), "x"))
    b = CorrelationSeries(np.array([0.0, 1e-3]), np.ones(2), np.zeros(2), "x")
    assert compare_series(a, b).tau_range == (0.0, 1e-3)


def test_bin_average_of_linear_function():
    s = synthetic(lambda t: 1 + t)
    edges = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(bin_average(s, edges), [1.5, 3.0], rtol=1e-12)


def test_recovery_time_interpolates():
    s = synthetic(lambda t: 1 - np.exp(-t), tau_max=10.0)
    assert s.recovery_time(0.5) == pytest.approx(math.log(2), abs=1e-4)
    assert s.recovery_time(2.0) == math.inf


def test_jump_pairs_on_coherent_light_are_flat():
    # alpha = 0.4: the n_max = 5 truncation error is far below the statistical error
    s = build_driven_cavity(0.2, n_max=5)
    cfg = TrajectoryConfig(dt=0.01, t_max=80.0, n_traj=2000, seed=4, jump_method=NORM_THRESHOLD, n_out=2)
    series = g2_from_jumps(s, cfg, tau_max=5.0, n_bins=10, t_burn=10.0)
    assert np.all(np.abs(series.g2 - 1) <= 3 * series.stderr)
    assert series.meta["flux"] == pytest.approx(0.16, rel=0.05)


def test_jump_pairs_first_bin_of_effective_eit_is_empty():
    s = derive_eit_effective(EIT_DASHED)[1]
    cfg = TrajectoryConfig(dt=0.01, t_max=40.0, n_traj=2000, seed=8, jump_method=NORM_THRESHOLD, n_out=2)
    series = g2_from_jumps(s, cfg, tau_max=5.0, n_bins=100, t_burn=20.0)
    assert series.g2[0] <= 3 * series.stderr[0]


def test_under_sampling_reports_the_flux():
    s = build_driven_cavity(1e-4, n_max=3)
    cfg = TrajectoryConfig(dt=0.01, t_max=3.0, n_traj=5, seed=0, n_out=2)
    with pytest.raises(UnderSamplingError, match="flux"):
        g2_from_jumps(s, cfg, tau_max=1.0, n_bins=4, t_burn=0.5)


def test_exact_jc_solid_jump_pairs_match_conditional():
    s = build_jc(JC_SOLID)
    cfg = TrajectoryConfig(dt=0.01, t_max=50.0, n_traj=4000, seed=12, jump_method=NORM_THRESHOLD, n_out=2)
    jumps = g2_from_jumps(s, cfg, tau_max=6.0, n_bins=12, t_burn=20.0)
    w = jumps.meta["bin_width"]
    ref = bin_average(g2_conditional(s, 12 * w, 4096), np.arange(13) * w)
    counts = np.array(jumps.meta["pair_counts"])
    used = counts >= 100
    assert used.sum() >= 8
    assert np.all(np.abs(jumps.g2[used] - ref[used]) <= 3 * jumps.stderr[used])


def test_exact_eit_modulation_frequency():
    rep = extract_frequencies(g2_conditional(build_eit(EIT_DASHED)))
    target = math.hypot(EIT_DASHED.g1, EIT_DASHED.omega_c)
    assert rep.has_peak_near(target, 0.05)
