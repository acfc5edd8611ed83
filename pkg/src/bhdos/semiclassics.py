"""Semiclassical density of states: smooth Weyl term and orbit sum.

The smooth part is a Monte Carlo phase-space average over the fixed-norm
shell; the oscillatory part sums cosine contributions of pseudo-periodic
orbit families with energy-interpolated actions.  A time-domain spectrum
of the exact levels is provided for locating orbit periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.signal import find_peaks

from . import meanfield as mf
from .grids import DensityGrid, gaussian_kernel
from .model import BoseHubbardModel

DET_EXCLUSION = 1e-8


@dataclass
class WeylEstimate:
    """Smooth density curve with a per-bin Monte Carlo standard error."""

    grid: DensityGrid
    stderr: np.ndarray
    n_samples: int
    seed: int

    def integral(self) -> float:
        return self.grid.integral()


def shell_radius(N: int, L: int) -> float:
    return math.sqrt(N + L / 2.0)


def weyl_dos(
    model: BoseHubbardModel,
    N: int,
    grid: DensityGrid,
    sigma_e: float,
    n_samples: int = 200_000,
    seed: int = 0,
    chunk: int = 65_536,
) -> WeylEstimate:
    """Monte Carlo estimate of the smooth level density.

    Points are drawn uniformly on the shell sum(q^2 + p^2) = N + L/2 in the
    2L-dimensional phase space; each contributes a Gaussian of width sigma_e
    at its mean-field energy.  The overall weight is fixed so that the curve
    integrates to (N + L/2)^(L-1) / (L-1)! when the grid covers the support.
    Sampled energies are accumulated on an internal fine histogram and
    convolved with the kernel, which keeps the cost linear in n_samples.
    """
    if sigma_e <= 0:
        raise ValueError("sigma_e must be positive")
    L = model.L
    R = shell_radius(N, L)
    prefactor = R ** (2 * L - 2) / math.factorial(L - 1)

    pad = 8.0 * sigma_e
    delta = min(grid.bin_width, sigma_e / 8.0)
    lo = grid.e_min - pad
    n_fine = int(math.ceil((grid.e_max + pad - lo) / delta)) + 1
    edges = lo + delta * np.arange(n_fine + 1)
    counts = np.zeros(n_fine)

    rng = np.random.default_rng(seed)
    done = 0
    n_below = 0
    n_above = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        x = rng.standard_normal((m, 2 * L))
        x *= (R / np.linalg.norm(x, axis=1))[:, None]
        psis = x[:, :L] + 1j * x[:, L:]
        energies = mf.mf_hamiltonian_batch(model, psis)
        n_below += int(np.sum(energies < edges[0]))
        n_above += int(np.sum(energies >= edges[-1]))
        c, _ = np.histogram(energies, bins=edges)
        counts += c
        done += m

    half = int(math.ceil(6.0 * sigma_e / delta))
    offs = delta * np.arange(-half, half + 1)
    ker = gaussian_kernel(offs, sigma_e)
    ker2 = ker**2
    mean_g = np.convolve(counts, ker, mode="same") / n_samples
    mean_g2 = np.convolve(counts, ker2, mode="same") / n_samples
    var = np.maximum(mean_g2 - mean_g**2, 0.0)
    stderr_fine = np.sqrt(var / n_samples)

    fine_centers = 0.5 * (edges[:-1] + edges[1:])
    vals = prefactor * np.interp(grid.centers, fine_centers, mean_g)
    stderr = prefactor * np.interp(grid.centers, fine_centers, stderr_fine)
    est = WeylEstimate(grid=grid.with_values(vals), stderr=stderr, n_samples=n_samples, seed=seed)
    est.n_outside = n_below + n_above
    return est


@dataclass
class OrbitFamily:
    """A pseudo-periodic orbit continued in energy at fixed repetition.

    Members provide the action interpolation S(E) with dS/dE = T, the
    amplitude and the (constant) phase index used by the orbit sum.
    """

    orbits: list
    label: str = ""
    _s_spline: object = field(default=None, repr=False)
    _t_spline: object = field(default=None, repr=False)
    _a_spline: object = field(default=None, repr=False)

    def __post_init__(self):
        if not self.orbits:
            raise ValueError("family needs at least one orbit")
        self.orbits = sorted(self.orbits, key=lambda o: o.energy)
        es = np.array([o.energy for o in self.orbits])
        if len(es) > 1 and np.any(np.diff(es) <= 0):
            raise ValueError("family energies must be strictly increasing")
        sigmas = {o.maslov for o in self.orbits if o.maslov is not None}
        if len(sigmas) > 1:
            raise ValueError(f"phase index changes along the family: {sorted(sigmas)}")
        reps = {o.repetition for o in self.orbits}
        if len(reps) > 1:
            raise ValueError(f"repetition changes along the family: {sorted(reps)}")
        ss = np.array([o.action for o in self.orbits])
        ts = np.array([o.T for o in self.orbits])
        amps = np.array([self._amplitude(o) for o in self.orbits])
        if len(es) > 1:
            self._s_spline = CubicHermiteSpline(es, ss, ts)
            kind = "cubic" if len(es) > 3 else "linear"
            if kind == "cubic":
                self._t_spline = CubicSpline(es, ts)
                self._a_spline = CubicSpline(es, amps)
            else:
                self._t_spline = lambda e: np.interp(e, es, ts)
                self._a_spline = lambda e: np.interp(e, es, amps)
        else:
            self._s_spline = lambda e: np.full_like(np.asarray(e, dtype=float), ss[0])
            self._t_spline = lambda e: np.full_like(np.asarray(e, dtype=float), ts[0])
            self._a_spline = lambda e: np.full_like(np.asarray(e, dtype=float), amps[0])

    @staticmethod
    def _amplitude(o) -> float:
        det = o.det_m_minus_one
        if det < DET_EXCLUSION:
            return np.nan
        return o.T_primitive / (np.pi * math.sqrt(det))

    @property
    def maslov(self) -> int:
        for o in self.orbits:
            if o.maslov is not None:
                return o.maslov
        raise ValueError("no orbit in the family carries a phase index")

    @property
    def e_min(self) -> float:
        return self.orbits[0].energy

    @property
    def e_max(self) -> float:
        return self.orbits[-1].energy

    @property
    def excluded(self) -> bool:
        """True when the stability determinant is below the isolation cutoff."""
        return any(o.det_m_minus_one < DET_EXCLUSION for o in self.orbits)

    def action(self, e):
        return self._s_spline(e)

    def period(self, e):
        return self._t_spline(e)

    def amplitude(self, e):
        return self._a_spline(e)


def oscillatory_dos(
    families: list,
    grid: DensityGrid,
    sigma_e: float,
    clip_to_family_range: bool = True,
) -> DensityGrid:
    """Sum of orbit-family cosine contributions on the grid.

    Each family contributes A(E) cos(S(E) - sigma pi/2) damped by
    exp(-(T(E) sigma_e)^2 / 2), the exact effect of evaluating the smoothed
    density at resolution sigma_e.  Families whose stability determinant
    falls below the isolation cutoff are skipped (their stationary-phase
    weight is undefined).
    """
    e = grid.centers
    total = np.zeros_like(e)
    for fam in families:
        if fam.excluded:
            continue
        s = np.asarray(fam.action(e), dtype=float)
        t = np.asarray(fam.period(e), dtype=float)
        a = np.asarray(fam.amplitude(e), dtype=float)
        contrib = a * np.cos(s - fam.maslov * np.pi / 2.0)
        contrib *= np.exp(-0.5 * (t * sigma_e) ** 2)
        if clip_to_family_range:
            mask = (e >= fam.e_min - 1e-12) & (e <= fam.e_max + 1e-12)
            contrib = np.where(mask, contrib, 0.0)
        total += contrib
    return grid.with_values(total)


def total_dos(weyl: WeylEstimate, osc: DensityGrid) -> DensityGrid:
    if not weyl.grid.same_layout(osc):
        raise ValueError("grids do not match")
    return osc.with_values(weyl.grid.values + osc.values)


def hann_weights(energies: np.ndarray, e_min: float, e_max: float) -> np.ndarray:
    """Smooth window over [e_min, e_max], zero at both edges."""
    x = (np.asarray(energies, dtype=float) - e_min) / (e_max - e_min)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.clip(x, 0.0, 1.0))
    w[(x < 0) | (x > 1)] = 0.0
    return w


def time_spectrum(energies, t_max: float, n_t: int = 4096, weights=None):
    """|sum_n w_n exp(-i E_n t)| on a uniform time grid.

    Peaks of this quantity mark recurrence times of the level structure and
    line up with periods of the mean-field orbits.  Default weights are a
    smooth window over the level span.
    """
    energies = np.asarray(energies, dtype=float)
    if weights is None:
        weights = hann_weights(energies, energies.min(), energies.max())
    ts = np.linspace(0.0, t_max, n_t)
    phase = np.exp(-1j * np.outer(ts, energies))
    amp = np.abs(phase @ weights)
    return ts, amp


def spectrum_peaks(ts, amp, t_min: float = 0.5, rel_height: float = 0.05):
    """Peak times of the time spectrum, ignoring the t=0 pile-up."""
    amp = np.asarray(amp, dtype=float)
    idx, _ = find_peaks(amp, height=rel_height * amp.max())
    times = np.asarray(ts)[idx]
    keep = times > t_min
    return times[keep], amp[idx][keep]
