"""Mean-field (discrete Gross-Pitaevskii) limit of a Bose-Hubbard model.

The classical phase space is C^L with psi_l = q_l + i p_l.  The mean-field
Hamiltonian follows from the replacement a+_l a_l' -> psi*_l psi_l' - delta/2,
the flow is i dpsi/dt = dH/dpsi* (hbar = 1), and the tangent flow is the
analytic linearization of that equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .model import BoseHubbardModel


class IntegrationError(RuntimeError):
    pass


def omega_matrix(L: int) -> np.ndarray:
    """Standard antisymmetric unit on (Re psi, Im psi) coordinates."""
    O = np.zeros((2 * L, 2 * L))
    O[:L, L:] = np.eye(L)
    O[L:, :L] = -np.eye(L)
    return O


def to_real(psi: np.ndarray) -> np.ndarray:
    return np.concatenate([psi.real, psi.imag])


def to_complex(x: np.ndarray) -> np.ndarray:
    L = len(x) // 2
    return x[:L] + 1j * x[L:]


def rotation_real(alpha: float, L: int) -> np.ndarray:
    """Real 2L x 2L representation of multiplication by exp(i alpha)."""
    c, s = np.cos(alpha), np.sin(alpha)
    R = np.zeros((2 * L, 2 * L))
    R[:L, :L] = c * np.eye(L)
    R[:L, L:] = -s * np.eye(L)
    R[L:, :L] = s * np.eye(L)
    R[L:, L:] = c * np.eye(L)
    return R


def effective_hopping(model: BoseHubbardModel) -> np.ndarray:
    """One-body matrix h - (1/2) sum_l3 U_{l1 l3 l3 l2} entering the symbol."""
    h = model.H.astype(complex).copy()
    for (l1, l2, l3, l4), u in model.U.items():
        if l2 == l3:
            h[l1, l4] -= 0.5 * u
    return h


def mf_hamiltonian(model: BoseHubbardModel, psi: np.ndarray) -> float:
    """Classical energy of a field configuration."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (model.L,):
        raise ValueError("state length must equal model.L")
    h = effective_hopping(model)
    rho = np.outer(psi.conj(), psi) - 0.5 * np.eye(model.L)
    val = np.einsum("ab,ab->", h, rho)
    for (l1, l2, l3, l4), u in model.U.items():
        val += 0.5 * u * rho[l1, l3] * rho[l2, l4]
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise RuntimeError(f"mean-field energy picked up imaginary part {val.imag:.3e}")
    return float(val.real)


def mf_hamiltonian_batch(model: BoseHubbardModel, psis: np.ndarray) -> np.ndarray:
    """Vectorized classical energy for an (n, L) batch of field configurations."""
    psis = np.asarray(psis, dtype=complex)
    h = effective_hopping(model)
    # rho[n, a, b] = psi*_a psi_b - delta_ab / 2, contracted without materializing it
    vals = np.einsum("ab,na,nb->n", h, psis.conj(), psis) - 0.5 * np.trace(h)
    for (l1, l2, l3, l4), u in model.U.items():
        r13 = psis[:, l1].conj() * psis[:, l3] - (0.5 if l1 == l3 else 0.0)
        r24 = psis[:, l2].conj() * psis[:, l4] - (0.5 if l2 == l4 else 0.0)
        vals = vals + 0.5 * u * r13 * r24
    return vals.real


def _wirtinger_grad(model: BoseHubbardModel, psi: np.ndarray, h: np.ndarray) -> np.ndarray:
    g = h @ psi
    for (a, b, c, d), u in model.U.items():
        r24 = psi[b].conj() * psi[d] - (0.5 if b == d else 0.0)
        r13 = psi[a].conj() * psi[c] - (0.5 if a == c else 0.0)
        g[a] += 0.5 * u * psi[c] * r24
        g[b] += 0.5 * u * psi[d] * r13
    return g


def eom_rhs(model: BoseHubbardModel, psi: np.ndarray) -> np.ndarray:
    """dpsi/dt = -i dH/dpsi*, analytic Wirtinger gradient."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (model.L,):
        raise ValueError("state length must equal model.L")
    return -1j * _wirtinger_grad(model, psi, effective_hopping(model))


def _second_derivatives(model: BoseHubbardModel, psi: np.ndarray, h: np.ndarray):
    """A = d2H/dpsi* dpsi (hermitian) and B = d2H/dpsi* dpsi* (symmetric)."""
    L = model.L
    A = h.astype(complex).copy()
    B = np.zeros((L, L), dtype=complex)
    for (a, b, c, d), u in model.U.items():
        r24 = psi[b].conj() * psi[d] - (0.5 if b == d else 0.0)
        r13 = psi[a].conj() * psi[c] - (0.5 if a == c else 0.0)
        A[a, c] += 0.5 * u * r24
        A[a, d] += 0.5 * u * psi[c] * psi[b].conj()
        A[b, d] += 0.5 * u * r13
        A[b, c] += 0.5 * u * psi[d] * psi[a].conj()
        B[a, b] += 0.5 * u * psi[c] * psi[d]
        B[b, a] += 0.5 * u * psi[c] * psi[d]
    return A, B


def flow_jacobian_real(model: BoseHubbardModel, psi: np.ndarray) -> np.ndarray:
    """Jacobian of the real-coordinate flow field at a state."""
    h = effective_hopping(model)
    A, B = _second_derivatives(model, psi, h)
    C = A + B
    D = A - B
    L = model.L
    Df = np.empty((2 * L, 2 * L))
    Df[:L, :L] = C.imag
    Df[:L, L:] = D.real
    Df[L:, :L] = -C.real
    Df[L:, L:] = D.imag
    return Df


def rhs_real(model: BoseHubbardModel, x: np.ndarray) -> np.ndarray:
    psi = to_complex(x)
    dpsi = -1j * _wirtinger_grad(model, psi, effective_hopping(model))
    return to_real(dpsi)


def conserved_N(psi: np.ndarray) -> float:
    psi = np.asarray(psi, dtype=complex)
    return float(np.sum(np.abs(psi) ** 2))


def mode_occupations(model: BoseHubbardModel, psi: np.ndarray) -> np.ndarray:
    """Occupations |<v_chi, psi>|^2 in the eigenbasis of H (free-field constants)."""
    _, V = np.linalg.eigh(model.H)
    amps = V.conj().T @ np.asarray(psi, dtype=complex)
    return np.abs(amps) ** 2


@dataclass
class Diagnostics:
    """Conservation monitors accumulated by one integration call."""

    n_drift: float = 0.0
    e_drift: float = 0.0
    symplectic_defect: float = 0.0


def integrate(
    model: BoseHubbardModel,
    psi0: np.ndarray,
    t: float,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    diagnostics: Diagnostics | None = None,
    dense: bool = False,
):
    """Propagate psi0 over time t with an adaptive high-order Runge-Kutta scheme.

    Returns psi(t), or the solver's dense-output object when dense=True.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if not np.all(np.isfinite(psi0.view(float))):
        raise IntegrationError("non-finite initial state")
    if t == 0 and not dense:
        return psi0.copy()
    h = effective_hopping(model)

    def rhs(_, y):
        return -1j * _wirtinger_grad(model, y, h)

    sol = solve_ivp(
        rhs, (0.0, t), psi0, method="DOP853", rtol=rtol, atol=atol, dense_output=dense
    )
    if not sol.success:
        raise IntegrationError(f"integration stopped at t={sol.t[-1]:.6g}: {sol.message}")
    psi_t = sol.y[:, -1]
    if not np.all(np.isfinite(psi_t.view(float))):
        raise IntegrationError("NaN encountered during integration")
    if diagnostics is not None:
        diagnostics.n_drift = abs(conserved_N(psi_t) - conserved_N(psi0))
        diagnostics.e_drift = abs(mf_hamiltonian(model, psi_t) - mf_hamiltonian(model, psi0))
    if dense:
        return sol
    return psi_t


def integrate_with_tangent(
    model: BoseHubbardModel,
    psi0: np.ndarray,
    t: float,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    diagnostics: Diagnostics | None = None,
    t_eval: np.ndarray | None = None,
):
    """Co-integrate the trajectory and the 2L x 2L variational system.

    Returns (psi_t, J) where J is the real Jacobian of the flow map; with
    t_eval an array, returns (psis, Js) sampled at those times instead.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    L = model.L
    n = 2 * L
    h = effective_hopping(model)

    def rhs(_, y):
        x = y[:n]
        J = y[n:].reshape(n, n)
        psi = to_complex(x)
        dpsi = -1j * _wirtinger_grad(model, psi, h)
        A, B = _second_derivatives(model, psi, h)
        C = A + B
        D = A - B
        Df = np.empty((n, n))
        Df[:L, :L] = C.imag
        Df[:L, L:] = D.real
        Df[L:, :L] = -C.real
        Df[L:, L:] = D.imag
        return np.concatenate([to_real(dpsi), (Df @ J).ravel()])

    y0 = np.concatenate([to_real(psi0), np.eye(n).ravel()])
    if t == 0 and t_eval is None:
        return psi0.copy(), np.eye(n)
    sol = solve_ivp(
        rhs,
        (0.0, t),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
    )
    if not sol.success:
        raise IntegrationError(f"tangent integration stopped at t={sol.t[-1]:.6g}: {sol.message}")

    def unpack(col):
        x = sol.y[:n, col]
        J = sol.y[n:, col].reshape(n, n)
        return to_complex(x), J

    if t_eval is not None:
        psis, Js = zip(*(unpack(i) for i in range(sol.y.shape[1])))
        return np.array(psis), np.array(Js)
    psi_t, J = unpack(-1)
    if diagnostics is not None:
        O = omega_matrix(L)
        diagnostics.symplectic_defect = float(np.abs(J.T @ O @ J - O).max())
        diagnostics.n_drift = abs(conserved_N(psi_t) - conserved_N(psi0))
        diagnostics.e_drift = abs(mf_hamiltonian(model, psi_t) - mf_hamiltonian(model, psi0))
    return psi_t, J


def aligned_distance(psi_a: np.ndarray, psi_b: np.ndarray) -> tuple[float, float]:
    """Distance between states after optimal global-phase alignment.

    Returns (distance, beta) with beta the phase such that
    |psi_b - psi_a exp(-i beta)| is minimal.
    """
    overlap = np.vdot(psi_a, psi_b)
    beta = -np.angle(overlap) if overlap != 0 else 0.0
    return float(np.linalg.norm(psi_b - psi_a * np.exp(-1j * beta))), float(beta)


@dataclass
class FixedPoint:
    psi: np.ndarray
    mu: float
    residual: float
    energy: float = 0.0
    eigenvalues: np.ndarray = field(default=None)
    n_stable: int = 0
    n_unstable: int = 0


def find_fixed_points(
    model: BoseHubbardModel,
    seeds: list | None = None,
    n_shell: float | None = None,
    n_random_seeds: int = 8,
    seed: int = 0,
    tol: float = 1e-10,
) -> list[FixedPoint]:
    """Relative equilibria dH/dpsi* = mu psi on the shell sum|psi|^2 = n_shell.

    Newton-converged roots are deduplicated up to global phase; each root is
    tagged with the eigenvalues of the gauge-reduced linearization.
    """
    L = model.L
    h = effective_hopping(model)
    if n_shell is None:
        n_shell = float(L)
    if seeds is None:
        rng = np.random.default_rng(seed)
        seeds = []
        for _ in range(n_random_seeds):
            z = rng.normal(size=L) + 1j * rng.normal(size=L)
            seeds.append(z * np.sqrt(n_shell) / np.linalg.norm(z))

    roots: list[FixedPoint] = []
    for psi_seed in seeds:
        psi_seed = np.asarray(psi_seed, dtype=complex)
        mu0 = float((np.vdot(psi_seed, _wirtinger_grad(model, psi_seed, h)) / np.vdot(psi_seed, psi_seed)).real)
        x0 = np.concatenate([to_real(psi_seed), [mu0]])
        ref = psi_seed / np.linalg.norm(psi_seed)

        def resid(z):
            psi = to_complex(z[:-1])
            mu = z[-1]
            r = _wirtinger_grad(model, psi, h) - mu * psi
            return np.concatenate(
                [to_real(r), [conserved_N(psi) - n_shell, np.vdot(ref, psi).imag]]
            )

        try:
            res = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except Exception:
            continue
        r_final = resid(res.x)
        rnorm = float(np.linalg.norm(r_final[: 2 * L]))
        if rnorm > tol or abs(r_final[2 * L]) > tol:
            continue
        psi = to_complex(res.x[:-1])
        mu = float(res.x[-1])
        if conserved_N(psi) < 1e-8:
            continue
        if any(aligned_distance(fp.psi, psi)[0] < 1e-6 for fp in roots):
            continue
        # reduced linearization: flow of H - mu*N about the root
        shifted = BoseHubbardModel(
            L=model.L, H=model.H - mu * np.eye(L), U=dict(model.U), label=model.label
        )
        eig = np.linalg.eigvals(flow_jacobian_real(shifted, psi))
        n_unstable = int(np.sum(eig.real > 1e-8))
        n_stable = int(np.sum(eig.real < -1e-8))
        roots.append(
            FixedPoint(
                psi=psi,
                mu=mu,
                residual=rnorm,
                energy=mf_hamiltonian(model, psi),
                eigenvalues=eig,
                n_stable=n_stable,
                n_unstable=n_unstable,
            )
        )
    return roots
