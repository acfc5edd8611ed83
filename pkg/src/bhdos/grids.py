"""Uniform energy grids used as carriers for density-of-states curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DensityGrid:
    """Uniform energy grid with a density value per bin (density per unit energy)."""

    e_min: float
    e_max: float
    n_bins: int
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")
        if not self.e_max > self.e_min:
            raise ValueError("e_max must exceed e_min")
        if self.values is None:
            self.values = np.zeros(self.n_bins)
        else:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.shape != (self.n_bins,):
                raise ValueError("values length must equal n_bins")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def bin_width(self) -> float:
        return (self.e_max - self.e_min) / self.n_bins

    @property
    def centers(self) -> np.ndarray:
        return self.e_min + (np.arange(self.n_bins) + 0.5) * self.bin_width

    def with_values(self, values: np.ndarray) -> "DensityGrid":
        return DensityGrid(self.e_min, self.e_max, self.n_bins, np.asarray(values, dtype=float))

    def same_layout(self, other: "DensityGrid") -> bool:
        return (
            self.n_bins == other.n_bins
            and np.isclose(self.e_min, other.e_min)
            and np.isclose(self.e_max, other.e_max)
        )

    def integral(self) -> float:
        """Quadrature of the curve over the grid (midpoint rule)."""
        return float(np.sum(self.values) * self.bin_width)


def windowed_rel_l2(test: np.ndarray, ref: np.ndarray, centers: np.ndarray,
                    e_lo: float, e_hi: float) -> float:
    """Relative L2 distance between two curves restricted to [e_lo, e_hi]."""
    test = np.asarray(test, dtype=float)
    ref = np.asarray(ref, dtype=float)
    mask = (centers >= e_lo) & (centers <= e_hi)
    if not np.any(mask):
        raise ValueError("window contains no grid points")
    denom = np.linalg.norm(ref[mask])
    if denom == 0:
        raise ValueError("reference curve vanishes on the window")
    return float(np.linalg.norm(test[mask] - ref[mask]) / denom)


def central_window(e_min: float, e_max: float, fraction: float = 0.8):
    """Sub-interval of the given span, centered, covering `fraction` of it."""
    mid = 0.5 * (e_min + e_max)
    half = 0.5 * fraction * (e_max - e_min)
    return mid - half, mid + half


def gaussian_kernel(x: np.ndarray, sigma: float) -> np.ndarray:
    """Unit-mass Gaussian of standard deviation sigma."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
