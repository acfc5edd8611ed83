"""Bose-Hubbard lattice models and the exact fixed-N quantum oracle.

A model is a single-particle matrix H plus a sparse two-body coupling
table U.  The N-particle sector is enumerated as occupation vectors,
the Hamiltonian is built with standard ladder-operator algebra and
diagonalized densely.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grids import DensityGrid, gaussian_kernel

DEFAULT_BASIS_CAP = 2_000_000


class BasisSizeError(RuntimeError):
    """Requested sector exceeds the configured state-count cap."""


def _symmetrize_couplings(raw: dict) -> dict:
    """Enforce U[l1,l2,l3,l4] = U[l2,l1,l4,l3] by averaging the pair."""
    out = {}
    for key, val in raw.items():
        l1, l2, l3, l4 = key
        partner = (l2, l1, l4, l3)
        if key in out:
            continue
        v = 0.5 * (val + raw.get(partner, val))
        out[key] = v
        out[partner] = v
    return {k: v for k, v in out.items() if v != 0.0}


@dataclass
class BoseHubbardModel:
    """Problem definition: site count L, hermitian hopping matrix, sparse couplings.

    `U` maps 0-based index quadruples (l1, l2, l3, l4) to real couplings of the
    normal-ordered two-body term (1/2) U a+_{l1} a+_{l2} a_{l3} a_{l4}.
    """

    L: int
    H: np.ndarray
    U: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.shape != (self.L, self.L):
            raise ValueError("H must be an L x L matrix")
        if not np.all(np.isfinite(self.H.view(float))):
            raise ValueError("H entries must be finite")
        if not np.allclose(self.H, self.H.conj().T, rtol=0, atol=1e-13 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be hermitian")
        clean = {}
        for key, val in dict(self.U).items():
            key = tuple(int(i) for i in key)
            if len(key) != 4 or any(i < 0 or i >= self.L for i in key):
                raise ValueError(f"bad coupling index {key}")
            val = float(val)
            if not math.isfinite(val):
                raise ValueError(f"non-finite coupling at {key}")
            clean[key] = clean.get(key, 0.0) + val
        self.U = _symmetrize_couplings(clean)

    @property
    def is_free(self) -> bool:
        return len(self.U) == 0

    @classmethod
    def free_field(cls, energies, label: str = "") -> "BoseHubbardModel":
        """Diagonal non-interacting model with the given single-particle energies."""
        e = np.asarray(energies, dtype=float)
        return cls(L=len(e), H=np.diag(e).astype(complex), U={}, label=label)

    @classmethod
    def from_dict(cls, data: dict) -> "BoseHubbardModel":
        L = int(data["L"])
        H = np.array(
            [[complex(re, im) for re, im in row] for row in data["H"]], dtype=complex
        )
        U = {}
        for l1, l2, l3, l4, val in data.get("U", []):
            U[(l1 - 1, l2 - 1, l3 - 1, l4 - 1)] = float(val)
        return cls(L=L, H=H, U=U, label=data.get("label", ""))

    def to_dict(self) -> dict:
        data = {
            "L": self.L,
            "H": [[[z.real, z.imag] for z in row] for row in self.H],
            "U": [
                [l1 + 1, l2 + 1, l3 + 1, l4 + 1, v]
                for (l1, l2, l3, l4), v in sorted(self.U.items())
            ],
        }
        if self.label:
            data["label"] = self.label
        return data

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class FockBasis:
    """Ordered enumeration of occupation vectors of the fixed-N sector."""

    L: int
    N: int
    states: list
    index: dict = field(default=None)

    def __post_init__(self):
        if self.index is None:
            self.index = {s: i for i, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)


def sector_dimension(L: int, N: int) -> int:
    return math.comb(N + L - 1, L - 1)


def build_basis(L: int, N: int, cap: int = DEFAULT_BASIS_CAP) -> FockBasis:
    """Enumerate all occupation vectors with sum N, lexicographically descending."""
    if L < 1 or N < 0:
        raise ValueError("need L >= 1 and N >= 0")
    dim = sector_dimension(L, N)
    if dim > cap:
        raise BasisSizeError(f"sector dimension {dim} exceeds cap {cap}")
    states = []

    def fill(prefix, remaining, sites_left):
        if sites_left == 1:
            states.append(tuple(prefix) + (remaining,))
            return
        for n in range(remaining, -1, -1):
            fill(prefix + [n], remaining - n, sites_left - 1)

    fill([], N, L)
    assert len(states) == dim
    return FockBasis(L=L, N=N, states=states)


def build_hamiltonian(model: BoseHubbardModel, basis: FockBasis) -> np.ndarray:
    """Matrix of the Hamiltonian on the fixed-N sector spanned by `basis`."""
    if model.L != basis.L:
        raise ValueError("model and basis disagree on L")
    dim = len(basis)
    mat = np.zeros((dim, dim), dtype=complex)
    states = basis.states
    index = basis.index

    for col, n in enumerate(states):
        # one-body term: H_{ab} a+_a a_b
        for b in range(model.L):
            if n[b] == 0:
                continue
            for a in range(model.L):
                amp = model.H[a, b]
                if amp == 0:
                    continue
                if a == b:
                    mat[col, col] += amp * n[b]
                    continue
                new = list(n)
                factor = math.sqrt(new[b])
                new[b] -= 1
                factor *= math.sqrt(new[a] + 1)
                new[a] += 1
                mat[index[tuple(new)], col] += amp * factor
        # two-body term: (1/2) U_{abcd} a+_a a+_b a_c a_d
        for (a, b, c, d), u in model.U.items():
            new = list(n)
            if new[d] == 0:
                continue
            factor = math.sqrt(new[d])
            new[d] -= 1
            if new[c] == 0:
                continue
            factor *= math.sqrt(new[c])
            new[c] -= 1
            factor *= math.sqrt(new[b] + 1)
            new[b] += 1
            factor *= math.sqrt(new[a] + 1)
            new[a] += 1
            mat[index[tuple(new)], col] += 0.5 * u * factor

    defect = np.abs(mat - mat.conj().T).max()
    scale = max(1.0, np.abs(mat).max())
    if defect > 1e-12 * scale:
        raise RuntimeError(f"sector matrix not hermitian, defect {defect:.3e}")
    return 0.5 * (mat + mat.conj().T)


@dataclass
class Spectrum:
    """Sorted eigenvalues of the Hamiltonian restricted to one N-sector."""

    energies: np.ndarray
    N: int

    def __post_init__(self):
        self.energies = np.sort(np.asarray(self.energies, dtype=float))

    @property
    def span(self) -> float:
        return float(self.energies[-1] - self.energies[0])

    def __len__(self) -> int:
        return len(self.energies)


def exact_spectrum(model: BoseHubbardModel, N: int, cap: int = DEFAULT_BASIS_CAP) -> Spectrum:
    """All eigenvalues on the N-sector via dense hermitian diagonalization."""
    if N == 0:
        return Spectrum(energies=np.array([0.0]), N=0)
    basis = build_basis(model.L, N, cap=cap)
    mat = build_hamiltonian(model, basis)
    try:
        energies = np.linalg.eigvalsh(mat)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed on sector of size {len(basis)}") from exc
    return Spectrum(energies=energies, N=N)


def smoothed_dos(spectrum: Spectrum, grid: DensityGrid, sigma_e: float) -> DensityGrid:
    """Sum of unit-mass Gaussians of width sigma_e centered on the levels."""
    if sigma_e <= 0:
        raise ValueError("sigma_e must be positive")
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    centers = grid.centers
    vals = np.zeros_like(centers)
    for e_n in spectrum.energies:
        vals += gaussian_kernel(centers - e_n, sigma_e)
    return grid.with_values(vals)
