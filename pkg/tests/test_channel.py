"""Hit statistics and their discretization into channel taps.

Reference values were computed independently with 30-digit mpmath
arithmetic on the closed-form density and CDF.
"""

import numpy as np
import pytest

from mcderiv.channel import (
    ChannelVector,
    SlotGrid,
    Topology,
    channel_vector,
    grid_from_rate,
    hit_cdf,
    hit_density,
    peak_time,
)

# (15, 5, 100) geometry, evaluated at t = t_p = 1/6 s
F_HIT_AT_PEAK = 0.027754838887850134
DENSITY_AT_PEAK = 0.30836065960753855
# h[5] for ts = 1/60 s (half-peak-time symbols, N=5)
H5 = 2.7119930383e-3


def test_topology_validation():
    with pytest.raises(ValueError):
        Topology(radius_rx=15.0, distance_tx=5.0, diffusion=100.0)
    with pytest.raises(ValueError):
        Topology(radius_rx=0.0, distance_tx=5.0, diffusion=100.0)
    with pytest.raises(ValueError):
        Topology(radius_rx=5.0, distance_tx=15.0, diffusion=0.0)


def test_slot_grid_validation():
    with pytest.raises(ValueError):
        SlotGrid(ts=0.0, n_samples=5, memory=10)
    with pytest.raises(ValueError):
        SlotGrid(ts=0.1, n_samples=0, memory=10)
    with pytest.raises(ValueError):
        SlotGrid(ts=0.1, n_samples=5, memory=0)
    grid = SlotGrid(ts=0.25, n_samples=4, memory=3)
    assert grid.symbol_duration == 1.0
    assert grid.total_slots == 12


def test_peak_time(topo):
    assert peak_time(topo) == pytest.approx(1.0 / 6.0, rel=1e-15)
    # quadratic in the gap
    wide = Topology(radius_rx=5.0, distance_tx=25.0, diffusion=100.0)
    assert peak_time(wide) == pytest.approx(4.0 * peak_time(topo), rel=1e-15)


def test_hit_density_values(topo):
    tp = peak_time(topo)
    assert hit_density(tp, topo) == pytest.approx(DENSITY_AT_PEAK, rel=1e-12)
    # vanishes toward t -> 0+ instead of overflowing
    assert hit_density(1e-12, topo) == 0.0
    assert np.all(hit_density(np.linspace(1e-3, 10.0, 200), topo) > 0.0)
    with pytest.raises(ValueError):
        hit_density(0.0, topo)
    with pytest.raises(ValueError):
        hit_density(-1.0, topo)


def test_hit_density_peaks_at_peak_time(topo):
    tp = peak_time(topo)
    ts = np.linspace(tp / 4, 4 * tp, 4001)
    best = ts[np.argmax(hit_density(ts, topo))]
    assert abs(best - tp) <= ts[1] - ts[0]


def test_hit_density_integrates_to_hit_fraction(topo):
    from scipy.integrate import quad

    total, err = quad(lambda t: hit_density(t, topo), 0.0, np.inf, limit=200)
    assert err < 1e-7
    assert total == pytest.approx(topo.hit_fraction, abs=1e-8)
    assert topo.hit_fraction == pytest.approx(1.0 / 3.0, rel=1e-15)


def test_hit_cdf_values(topo):
    assert hit_cdf(0.0, topo) == 0.0
    assert hit_cdf(1.0 / 6.0, topo) == pytest.approx(F_HIT_AT_PEAK, rel=1e-12)
    # tail converges as O(1/sqrt(t)), so the horizon has to be huge
    assert hit_cdf(1e18, topo) == pytest.approx(1.0 / 3.0, abs=1e-9)
    with pytest.raises(ValueError):
        hit_cdf(-1e-9, topo)


def test_hit_cdf_monotone_and_bounded(topo):
    ts = np.linspace(0.0, 20.0, 2000)
    vals = hit_cdf(ts, topo)
    assert np.all(np.diff(vals) >= 0.0)
    assert np.all(vals <= topo.hit_fraction + 1e-15)


def test_cdf_derivative_matches_density(topo):
    tp = peak_time(topo)
    ts = np.linspace(tp / 10, 10 * tp, 500)
    dt = 1e-7
    numeric = (hit_cdf(ts + dt, topo) - hit_cdf(ts - dt, topo)) / (2 * dt)
    assert np.allclose(numeric, hit_density(ts, topo), rtol=1e-5)


def test_grid_from_rate(topo):
    grid = grid_from_rate(topo, 0.5, 5, 10)
    assert grid.symbol_duration == pytest.approx(1.0 / 12.0, rel=1e-15)
    assert grid.ts == pytest.approx(1.0 / 60.0, rel=1e-15)
    assert grid_from_rate(topo, 0.25, 5, 10).symbol_duration == pytest.approx(1.0 / 24.0)
    assert grid_from_rate(topo, 1.0, 5, 10).symbol_duration == pytest.approx(peak_time(topo))
    with pytest.raises(ValueError):
        grid_from_rate(topo, 0.0, 5, 10)


def test_channel_vector_matches_cdf_increments(topo, slow_channel):
    taps = slow_channel.taps
    assert taps.shape == (50,)
    assert np.all(taps >= 0.0)
    assert taps[4] == pytest.approx(H5, rel=1e-9)
    # cumulative sums telescope back to the CDF
    edges = np.arange(1, 51) * slow_channel.grid.ts
    assert np.allclose(np.cumsum(taps), hit_cdf(edges, topo), atol=1e-12)
    assert taps.sum() < topo.hit_fraction


def test_partial_sums_approach_hit_fraction_from_below(topo):
    short = channel_vector(topo, SlotGrid(ts=0.05, n_samples=5, memory=20))
    long = channel_vector(topo, SlotGrid(ts=0.05, n_samples=5, memory=400))
    assert short.taps.sum() < long.taps.sum() < topo.hit_fraction
    # the sum telescopes to the CDF at the horizon, which is all of the
    # fraction that has arrived by then
    assert long.taps.sum() == pytest.approx(hit_cdf(100.0, topo), abs=1e-12)


def test_halving_slot_width_preserves_symbol_sums(topo):
    coarse = channel_vector(topo, grid_from_rate(topo, 0.5, 5, 10))
    fine = channel_vector(topo, grid_from_rate(topo, 0.5, 10, 10))
    assert fine.taps.size == 2 * coarse.taps.size
    per_sym_coarse = coarse.taps.reshape(10, 5).sum(axis=1)
    per_sym_fine = fine.taps.reshape(10, 10).sum(axis=1)
    assert np.allclose(per_sym_coarse, per_sym_fine, atol=1e-13)


def test_channel_vector_validation(topo):
    grid = SlotGrid(ts=0.1, n_samples=2, memory=2)
    with pytest.raises(ValueError):
        ChannelVector(taps=np.zeros(3), grid=grid)
    with pytest.raises(ValueError):
        ChannelVector(taps=np.array([0.1, -0.1, 0.0, 0.0]), grid=grid)
    with pytest.raises(ValueError):
        ChannelVector(taps=np.full(4, 0.3), grid=grid)
    ch = ChannelVector(taps=np.array([0.05, 0.1, 0.02, 0.01]), grid=grid)
    assert ch.n_samples == 2
    assert ch.memory == 2
    assert np.array_equal(ch.first_symbol(), [0.05, 0.1])
