import numpy as np
import pytest

from bhdos import BoseHubbardModel, DensityGrid, find_orbit
from bhdos import freefield as ff
from bhdos import semiclassics as sc

SQRT2 = np.sqrt(2.0)


def free_dimer():
    return BoseHubbardModel(L=2, H=np.diag([1.0, SQRT2]))


def dimer_grid(N, sigma, bins=400):
    n_shell = N + 1.0
    shift = (1 + SQRT2) / 2
    return DensityGrid(n_shell - shift - 6 * sigma, n_shell * SQRT2 - shift + 6 * sigma, bins)


def test_smooth_term_normalization_two_modes():
    # two modes: the curve integrates to N + L/2 for a covering grid
    N, sigma = 10, 0.2
    est = sc.weyl_dos(free_dimer(), N, dimer_grid(N, sigma), sigma, n_samples=400_000, seed=1)
    assert est.integral() == pytest.approx(N + 1.0, rel=2e-3)


def test_smooth_term_is_flat_between_the_band_edges():
    # incommensurate dimer: the microcanonical density is constant inside the band
    N, sigma = 10, 0.1
    est = sc.weyl_dos(free_dimer(), N, dimer_grid(N, sigma, bins=800), sigma,
                      n_samples=1_000_000, seed=2)
    c = est.grid.centers
    n_shell = N + 1.0
    inner = (c > n_shell * 1.0 - (1 + SQRT2) / 2 + 6 * sigma) & (
        c < n_shell * SQRT2 - (1 + SQRT2) / 2 - 6 * sigma
    )
    flat = n_shell / (n_shell * (SQRT2 - 1.0))
    assert np.max(np.abs(est.grid.values[inner] - flat)) < 0.05 * flat


def test_stderr_shrinks_with_sample_count():
    N, sigma = 6, 0.3
    grid = dimer_grid(N, sigma)
    a = sc.weyl_dos(free_dimer(), N, grid, sigma, n_samples=20_000, seed=3)
    b = sc.weyl_dos(free_dimer(), N, grid, sigma, n_samples=320_000, seed=3)
    mask = a.grid.values > 0.1
    ratio = np.median(a.stderr[mask] / b.stderr[mask])
    assert 2.0 < ratio < 8.0  # expect 4x for 16x the samples


def test_weyl_is_deterministic_for_fixed_seed():
    N, sigma = 5, 0.3
    grid = dimer_grid(N, sigma)
    a = sc.weyl_dos(free_dimer(), N, grid, sigma, n_samples=30_000, seed=9)
    b = sc.weyl_dos(free_dimer(), N, grid, sigma, n_samples=30_000, seed=9)
    assert np.array_equal(a.grid.values, b.grid.values)
    assert np.array_equal(a.stderr, b.stderr)


def test_orbit_family_interpolates_action_with_period_slope():
    m = free_dimer()
    data = ff.FreeFieldData.from_model(m)
    orbits = []
    for n_shell in (2.6, 2.8, 3.0, 3.2, 3.4):
        seed = ff.enumerate_orbits(data, 2, k_max=1)[0]
        psi0 = seed.psi0 * np.sqrt(n_shell / 3.0)
        orbits.append(find_orbit(m, (psi0, seed.T, seed.alpha), n_target=n_shell))
    fam = sc.OrbitFamily(orbits)
    e_mid = orbits[2].energy
    de = 1e-4
    slope = (fam.action(e_mid + de) - fam.action(e_mid - de)) / (2 * de)
    assert slope == pytest.approx(fam.period(e_mid), rel=1e-4)


def test_empty_orbit_sum_returns_smooth_term_only():
    N, sigma = 5, 0.3
    grid = dimer_grid(N, sigma)
    est = sc.weyl_dos(free_dimer(), N, grid, sigma, n_samples=20_000, seed=0)
    osc = sc.oscillatory_dos([], grid, sigma)
    assert np.all(osc.values == 0.0)
    total = sc.total_dos(est, osc)
    assert np.array_equal(total.values, est.grid.values)


def test_time_spectrum_peaks_at_inverse_level_spacing():
    gap = 0.8
    energies = np.arange(12) * gap
    ts, amp = sc.time_spectrum(energies, 20.0, n_t=8192)
    peaks, _ = sc.spectrum_peaks(ts, amp)
    expect = 2 * np.pi / gap
    assert np.min(np.abs(peaks - expect)) < 0.02


def test_hann_weights_vanish_outside_window():
    e = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    w = sc.hann_weights(e, 0.0, 1.0)
    assert w[0] == 0.0 and w[4] == 0.0
    assert w[2] == pytest.approx(1.0)


def test_total_dos_rejects_mismatched_grids():
    N, sigma = 5, 0.3
    est = sc.weyl_dos(free_dimer(), N, dimer_grid(N, sigma), sigma, n_samples=5_000)
    other = DensityGrid(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        sc.total_dos(est, other)
