"""Closed-form treatment of non-interacting lattices.

With U = 0 the mean-field flow is linear and every pseudo-periodic orbit
lives on an eigenvector of the hopping matrix.  Orbit data (period, action,
stability, phase index) is available analytically, and the oscillatory
density of states reduces to a residue sum evaluated by quadrature over the
global phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .grids import DensityGrid, gaussian_kernel
from .model import BoseHubbardModel
from .orbits import PseudoPeriodicOrbit

RESONANCE_TOL = 1e-12
COMMENSURATE_MAX_DEN = 64
COMMENSURATE_TOL = 1e-9


@dataclass
class FreeFieldData:
    """Eigendecomposition of the hopping matrix plus commensurability flags."""

    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    commensurate_pairs: list = field(default_factory=list)

    @classmethod
    def from_model(cls, model: BoseHubbardModel) -> "FreeFieldData":
        if not model.is_free:
            raise ValueError("model has interactions; closed forms do not apply")
        e, v = np.linalg.eigh(model.H)
        pairs = []
        for i in range(len(e)):
            for j in range(i + 1, len(e)):
                if e[j] == 0:
                    continue
                frac = Fraction(e[i] / e[j]).limit_denominator(COMMENSURATE_MAX_DEN)
                if frac.denominator <= COMMENSURATE_MAX_DEN and abs(
                    e[i] / e[j] - float(frac)
                ) < COMMENSURATE_TOL:
                    pairs.append((i, j, frac.numerator, frac.denominator))
        return cls(energies=e, vectors=v, commensurate_pairs=pairs)

    @property
    def L(self) -> int:
        return len(self.energies)

    @property
    def incommensurable(self) -> bool:
        return len(self.commensurate_pairs) == 0

    def e_shift(self) -> float:
        """Half the trace of the hopping matrix; offsets E in the actions."""
        return 0.5 * float(np.sum(self.energies))


def stability_angles(data: FreeFieldData, chi: int, k: int, alpha: float) -> np.ndarray:
    """Half rotation angles of the transverse blocks over the orbit."""
    e = data.energies
    t_tot = (alpha + 2 * np.pi * k) / e[chi]
    others = np.array([e[c] for c in range(data.L) if c != chi])
    return 0.5 * t_tot * others - 0.5 * alpha


def stability_factor(data: FreeFieldData, chi: int, k: int, alpha: float):
    """Product of 2|sin(theta/2)| over the transverse rotation blocks.

    Returns (factor, block rotation angles theta, resonant); a vanishing
    factor marks a resonance where the orbit is not isolated and the
    stationary-phase weight diverges.
    """
    x = stability_angles(data, chi, k, alpha)
    sines = 2.0 * np.abs(np.sin(x))
    resonant = bool(np.any(sines < RESONANCE_TOL))
    return float(np.prod(sines)), 2.0 * x, resonant


def maslov_free(data: FreeFieldData, chi: int, k: int, alpha: float) -> int:
    """Phase index of the k-th traversal of the eigenorbit chi."""
    e = data.energies
    total = 2 * k
    for c in range(data.L):
        if c == chi:
            continue
        total += 2 * math.floor((k + alpha / (2 * np.pi)) * e[c] / e[chi] - alpha / (2 * np.pi))
    return total + 1


def identify_family(data: FreeFieldData, orbit: PseudoPeriodicOrbit):
    """Map an orbit onto its eigenvector family and traversal count."""
    overlaps = np.abs(data.vectors.conj().T @ orbit.psi0)
    chi = int(np.argmax(overlaps))
    norm = np.linalg.norm(orbit.psi0)
    if overlaps[chi] < (1 - 1e-6) * norm:
        raise ValueError("orbit is not aligned with a single eigenvector")
    k = (orbit.T * data.energies[chi] - orbit.alpha) / (2 * np.pi)
    k_int = int(round(k))
    if abs(k - k_int) > 1e-6:
        raise ValueError(f"period is not consistent with a traversal count (k={k:.6g})")
    return chi, k_int


def enumerate_orbits(
    data: FreeFieldData,
    N: int,
    k_max: int = 5,
    alpha: float = 0.0,
    force: bool = False,
) -> list:
    """Analytic pseudo-periodic orbits on the shell |psi|^2 = N + L/2.

    Each eigenvector family contributes one orbit per traversal count; the
    count runs over both signs so that negative mode energies still give a
    positive period.  Orbit records carry analytic action, windings and
    phase index; stability is attached by the generic machinery on demand.
    Commensurable spectra have non-isolated orbits and are refused unless
    `force` is set.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if not data.incommensurable and not force:
        raise ValueError(
            "commensurable mode energies, orbits are not isolated: "
            f"{data.commensurate_pairs}"
        )
    n_gamma = N + data.L / 2.0
    orbits = []
    for chi in range(data.L):
        w = data.energies[chi]
        if w == 0:
            continue
        energy = w * n_gamma - data.e_shift()
        psi0 = math.sqrt(n_gamma) * data.vectors[:, chi]
        for k in range(-k_max, k_max + 1):
            t_tot = (alpha + 2 * np.pi * k) / w
            if t_tot <= 0:
                continue
            windings = [k if c == chi else 0 for c in range(data.L)]
            orb = PseudoPeriodicOrbit(
                psi0=psi0,
                T=t_tot,
                alpha=float(alpha % (2 * np.pi)),
                energy=energy,
                n_gamma=n_gamma,
                repetition=abs(k) if k != 0 else 1,
                T_primitive=2 * np.pi / abs(w),
                alpha_primitive=0.0,
                action=(alpha + 2 * np.pi * k) * n_gamma,
                windings=windings,
                residual=0.0,
                flags=["gauge-degenerate-recurrence"],
            )
            if w > 0 and k >= 1:
                orb.maslov = maslov_free(data, chi, k, alpha)
            orbits.append(orb)
    return orbits


def enumerate_orbits_at_energy(
    data: FreeFieldData, energy: float, k_max: int = 5, alpha: float = 0.0,
    force: bool = False,
) -> list:
    """Analytic orbits at fixed mean-field energy instead of fixed shell.

    Families whose shell norm would be non-positive at this energy have no
    realizable orbit and are skipped.
    """
    out = []
    for orb in enumerate_orbits(data, 0, k_max=k_max, alpha=alpha, force=force):
        chi, _ = identify_family(data, orb)
        w = data.energies[chi]
        n_gamma = (energy + data.e_shift()) / w
        if n_gamma <= 0:
            continue
        scale = math.sqrt(n_gamma / orb.n_gamma)
        orb.psi0 = orb.psi0 * scale
        orb.n_gamma = n_gamma
        orb.energy = energy
        k_signed = int(round((orb.T * w - orb.alpha) / (2 * np.pi)))
        orb.action = (orb.alpha + 2 * np.pi * k_signed) * n_gamma
        out.append(orb)
    return out


def free_levels(data: FreeFieldData, N: int) -> np.ndarray:
    """All N-particle energies sum(n_chi e_chi), one entry per occupation."""
    out = []

    def rec(mode, remaining, acc):
        if mode == data.L - 1:
            out.append(acc + remaining * data.energies[mode])
            return
        for n in range(remaining + 1):
            rec(mode + 1, remaining - n, acc + n * data.energies[mode])

    rec(0, N, 0.0)
    return np.sort(np.array(out))


def _residue_terms(data, e_grid, alphas, k_lo, k_hi, sigma_e, n_phase):
    """Sum over families and traversal counts of the pole contributions.

    Returns a complex array over (alphas, e_grid) holding
    sum_{chi} sum_{k=k_lo..k_hi} exp(i[(alpha+2 pi k) Et/e - L alpha/2 - k pi])
    / (e Prod 2 i sin x) damped by the smoothing factor exp(-(T sigma)^2/2),
    already multiplied by exp(-i alpha n_phase).
    """
    L = data.L
    es = data.energies
    e_t = np.asarray(e_grid, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    total = np.zeros((len(alphas), len(e_t)), dtype=complex)
    ks = np.arange(k_lo, k_hi + 1)
    if len(ks) == 0:
        return total
    for chi in range(L):
        w = es[chi]
        # coefficient per (k, alpha): denominator, Maslov-free phase, damping
        tt = (alphas[None, :] + 2 * np.pi * ks[:, None]) / w  # (k, alpha)
        coeff = np.exp(-1j * (L * alphas[None, :] / 2 + np.pi * ks[:, None]))
        coeff = coeff * np.exp(-0.5 * (tt * sigma_e) ** 2) / w
        for c in range(L):
            if c == chi:
                continue
            x = 0.5 * tt * es[c] - 0.5 * alphas[None, :]
            coeff = coeff / (2j * np.sin(x))
        coeff = coeff * np.exp(-1j * alphas[None, :] * n_phase)
        # energy dependence factors through exp(i alpha Et/w) and powers of
        # exp(2 pi i Et/w); contract the k axis with a matrix product
        p_mat = np.exp(1j * np.outer(alphas, e_t) / w)  # (alpha, E)
        q = np.exp(2j * np.pi * e_t / w)  # (E,)
        qk = q[None, :] ** ks[:, None]  # (k, E)
        # total_{a,E} += sum_k coeff[k,a] qk[k,E] p_mat[a,E]
        total += (coeff.T @ qk) * p_mat
    return total


def _node_angles(n_alpha: int, offset: float) -> np.ndarray:
    h = 2 * np.pi / n_alpha
    return -np.pi + (np.arange(n_alpha) + offset) * h


def _nodes_resonant(data, alphas, k_hi) -> bool:
    for chi in range(data.L):
        w = data.energies[chi]
        ks = np.arange(0, k_hi + 1)
        tt = (alphas[None, :] + 2 * np.pi * ks[:, None]) / w
        for c in range(data.L):
            if c == chi:
                continue
            x = 0.5 * tt * data.energies[c] - 0.5 * alphas[None, :]
            if np.any(np.abs(np.sin(x)) < 1e-7):
                return True
    return False


def freefield_osc_dos(
    data: FreeFieldData,
    N: int,
    grid: DensityGrid,
    sigma_e: float,
    k_max: int | None = None,
    n_alpha: int = 64,
    include_smooth: bool = False,
    eps_trunc: float = 1e-6,
    quad_tol: float = 1e-4,
    n_alpha_max: int = 8192,
) -> DensityGrid:
    """Oscillatory density of states of a free lattice at resolution sigma_e.

    Evaluates the exact pole sum of the resolvent: orbits appear as poles of
    the gauge-resolved density in the time domain, and Gaussian smoothing in
    energy truncates the traversal sum at T about sqrt(2 ln(1/eps))/sigma.
    The global-phase integral restricting to N particles is done by midpoint
    quadrature with node doubling until two refinements agree.  With
    `include_smooth` the zero-traversal poles are kept as well, producing
    the full smoothed density instead of only the oscillation.
    """
    es = data.energies
    if np.any(es <= 0):
        raise ValueError("closed-form density needs strictly positive mode energies")
    if sigma_e <= 0:
        raise ValueError("sigma_e must be positive")
    if n_alpha < 64:
        raise ValueError("need at least 64 phase quadrature nodes")
    if k_max is None:
        t_max = math.sqrt(2.0 * math.log(1.0 / eps_trunc)) / sigma_e
        k_hi = int(math.ceil(t_max * es.max() / (2 * np.pi))) + 1
    else:
        k_hi = int(k_max)
    e_t = grid.centers + data.e_shift()

    def evaluate(n_alpha, offset):
        alphas = _node_angles(n_alpha, offset)
        h = 2 * np.pi / n_alpha
        osc = _residue_terms(data, e_t, alphas, 1, k_hi, sigma_e, N)
        vals = (1.0 / np.pi) * np.real(np.sum(osc, axis=0)) * h
        if include_smooth:
            sm = _residue_terms(data, e_t, alphas, 0, 0, sigma_e, N)
            vals += (1.0 / (2 * np.pi)) * np.real(np.sum(sm, axis=0)) * h
        return vals

    offset = 0.5
    while _nodes_resonant(data, _node_angles(n_alpha, offset), k_hi):
        offset += 0.5 * (math.sqrt(5) - 1) * 0.123  # nudge off the resonance set
        offset -= math.floor(offset)
    prev = evaluate(n_alpha, offset)
    while n_alpha < n_alpha_max:
        n_alpha *= 2
        while _nodes_resonant(data, _node_angles(n_alpha, offset), k_hi):
            offset += 0.5 * (math.sqrt(5) - 1) * 0.123
            offset -= math.floor(offset)
        cur = evaluate(n_alpha, offset)
        scale = max(1.0, np.abs(cur).max())
        if np.abs(cur - prev).max() < quad_tol * scale:
            return grid.with_values(cur)
        prev = cur
    raise RuntimeError(
        f"phase quadrature did not settle below {quad_tol} with {n_alpha_max} nodes"
    )


def residue_identity_check(
    data: FreeFieldData,
    N: int,
    energy: float,
    alpha: float,
    sigma_e: float,
    k_max: int = 200,
):
    """Gap between the pole sum and a direct occupation sum at fixed phase.

    The left side smooths delta peaks at n . e with weight exp(i alpha sum n)
    over all occupations; the total number is unconstrained, so N does not
    enter (it is fixed only by the later phase integral).  The right side is
    the two-sided traversal sum of the pole terms.  Returns (lhs, rhs, gap).
    """
    es = data.energies
    if np.any(es <= 0):
        raise ValueError("identity holds for strictly positive mode energies")
    cutoff = energy + 10.0 * sigma_e
    lhs = 0.0 + 0.0j

    def rec(mode, acc_e, acc_n):
        nonlocal lhs
        if mode == data.L:
            lhs += gaussian_kernel(np.array([energy - acc_e]), sigma_e)[0] * np.exp(
                1j * alpha * acc_n
            )
            return
        n = 0
        while acc_e + n * es[mode] <= cutoff:
            rec(mode + 1, acc_e + n * es[mode], acc_n + n)
            n += 1

    rec(0, 0.0, 0)

    e_t = np.array([energy + data.e_shift()])
    terms = _residue_terms(data, e_t, np.array([alpha]), -k_max, k_max, sigma_e, 0)
    rhs = complex(terms[0, 0])
    return complex(lhs), rhs, abs(lhs - rhs)


def ebk_levels(data: FreeFieldData, N: int) -> np.ndarray:
    """Torus-quantized N-particle energies; exact for the harmonic flow."""
    return free_levels(data, N)
