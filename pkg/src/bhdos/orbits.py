"""Pseudo-periodic orbits of the mean-field flow and their invariants.

An orbit satisfies psi(T) = psi(0) exp(-i alpha).  The solver is a bordered
Newton iteration on (psi0, T, alpha) with a particle-number (or energy)
constraint and two gauge-fixing rows; post-processing attaches the action,
the reduced monodromy, the primitive decomposition and the Maslov index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import linear_sum_assignment

from . import meanfield as mf
from .model import BoseHubbardModel


class OrbitSearchError(RuntimeError):
    """Newton iteration failed; carries the best iterate for diagnosis."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class PseudoPeriodicOrbit:
    """One pseudo-periodic mean-field solution with its trace-formula data."""

    psi0: np.ndarray
    T: float
    alpha: float
    energy: float
    n_gamma: float
    repetition: int = 1
    T_primitive: float = None
    alpha_primitive: float = 0.0
    action: float = None
    windings: list = None
    monodromy_reduced: np.ndarray = None
    maslov: int = None
    residual: float = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.psi0 = np.asarray(self.psi0, dtype=complex)
        if self.T_primitive is None:
            self.T_primitive = self.T

    @property
    def det_m_minus_one(self) -> float:
        if self.monodromy_reduced is None:
            return 1.0
        m = self.monodromy_reduced
        return abs(float(np.linalg.det(m - np.eye(m.shape[0]))))

    def to_dict(self) -> dict:
        return {
            "psi0": [[z.real, z.imag] for z in self.psi0],
            "T": self.T,
            "alpha": self.alpha,
            "energy": self.energy,
            "n_gamma": self.n_gamma,
            "repetition": self.repetition,
            "T_primitive": self.T_primitive,
            "alpha_primitive": self.alpha_primitive,
            "action": self.action,
            "windings": self.windings,
            "monodromy_reduced": None
            if self.monodromy_reduced is None
            else self.monodromy_reduced.tolist(),
            "maslov": self.maslov,
            "residual": self.residual,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoPeriodicOrbit":
        psi0 = np.array([complex(re, im) for re, im in d["psi0"]])
        mono = d.get("monodromy_reduced")
        return cls(
            psi0=psi0,
            T=d["T"],
            alpha=d["alpha"],
            energy=d["energy"],
            n_gamma=d["n_gamma"],
            repetition=d.get("repetition", 1),
            T_primitive=d.get("T_primitive"),
            alpha_primitive=d.get("alpha_primitive", 0.0),
            action=d.get("action"),
            windings=d.get("windings"),
            monodromy_reduced=None if mono is None else np.array(mono),
            maslov=d.get("maslov"),
            residual=d.get("residual"),
            flags=list(d.get("flags", [])),
        )


def pseudo_residual(model: BoseHubbardModel, psi0, T, alpha, rtol=1e-12, atol=1e-14):
    """Components of psi(T) - psi0 exp(-i alpha) in (Re, Im) split, plus the norm."""
    psi0 = np.asarray(psi0, dtype=complex)
    psi_T = mf.integrate(model, psi0, T, rtol=rtol, atol=atol)
    diff = psi_T - psi0 * np.exp(-1j * alpha)
    vec = mf.to_real(diff)
    return vec, float(np.linalg.norm(vec))


def find_orbit(
    model: BoseHubbardModel,
    seed,
    n_target: float | None = None,
    e_target: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 60,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    postprocess: bool = True,
) -> PseudoPeriodicOrbit:
    """Solve psi(T) = psi0 exp(-i alpha) with a shell constraint.

    `seed` is a (psi0, T, alpha) triple.  Exactly the constraints requested
    via n_target / e_target are active; the Newton system is solved in
    least-squares sense with a Poincare section and a phase anchor pinning
    the time-translation and gauge freedoms.
    """
    psi0, T, alpha = seed
    psi0 = np.asarray(psi0, dtype=complex).copy()
    L = model.L
    if T <= 0:
        raise ValueError("seed period must be positive")
    if n_target is None and e_target is None:
        raise ValueError("need at least one of n_target, e_target")

    best = None
    for iteration in range(max_iter):
        x0 = mf.to_real(psi0)
        psi_T, J = mf.integrate_with_tangent(model, psi0, T, rtol=rtol, atol=atol)
        rot = np.exp(-1j * alpha)
        r_per = mf.to_real(psi_T - psi0 * rot)
        res_norm = float(np.linalg.norm(r_per))

        rows = [np.hstack([J - mf.rotation_real(-alpha, L), np.zeros((2 * L, 2))])]
        rows[0][:, -2] = mf.to_real(mf.eom_rhs(model, psi_T))
        rows[0][:, -1] = mf.to_real(1j * psi0 * rot)
        rhs = [-r_per]
        cons_viol = 0.0
        if n_target is not None:
            r_n = mf.conserved_N(psi0) - n_target
            cons_viol = max(cons_viol, abs(r_n))
            row = np.zeros(2 * L + 2)
            row[: 2 * L] = 2.0 * x0
            rows.append(row[None, :])
            rhs.append([-r_n])
        if e_target is not None:
            r_e = mf.mf_hamiltonian(model, psi0) - e_target
            cons_viol = max(cons_viol, abs(r_e))
            row = np.zeros(2 * L + 2)
            grad = mf._wirtinger_grad(model, psi0, mf.effective_hopping(model))
            row[:L] = 2.0 * grad.real
            row[L:2 * L] = 2.0 * grad.imag
            rows.append(row[None, :])
            rhs.append([-r_e])
        # anchors: no step along the flow or the gauge direction
        f0 = mf.rhs_real(model, x0)
        g0 = mf.to_real(1j * psi0)
        for v in (f0, g0):
            row = np.zeros(2 * L + 2)
            nv = np.linalg.norm(v)
            row[: 2 * L] = v / nv if nv > 0 else v
            rows.append(row[None, :])
            rhs.append([0.0])

        if best is None or res_norm + cons_viol < best[0]:
            best = (res_norm + cons_viol, psi0.copy(), T, alpha)
        if res_norm < tol and cons_viol < tol:
            n_gamma = mf.conserved_N(psi0)
            if n_gamma < 1e-6:
                raise OrbitSearchError("converged to a zero-norm orbit", best=best)
            orbit = PseudoPeriodicOrbit(
                psi0=psi0,
                T=T,
                alpha=float(alpha % (2 * np.pi)),
                energy=mf.mf_hamiltonian(model, psi0),
                n_gamma=n_gamma,
                residual=res_norm,
            )
            if postprocess:
                _postprocess(model, orbit, rtol=rtol, atol=atol)
            return orbit

        A = np.vstack(rows)
        b = np.concatenate([np.atleast_1d(np.asarray(r, dtype=float)) for r in rhs])
        step, *_ = np.linalg.lstsq(A, b, rcond=None)
        # damped update with halving on residual growth
        lam = 1.0
        for _ in range(8):
            psi_new = mf.to_complex(x0 + lam * step[: 2 * L])
            T_new = T + lam * step[-2]
            alpha_new = alpha + lam * step[-1]
            if T_new <= 0:
                lam *= 0.5
                continue
            _, rn = pseudo_residual(model, psi_new, T_new, alpha_new, rtol=rtol, atol=atol)
            if rn < res_norm or res_norm < 1e-8:
                break
            lam *= 0.5
        psi0, T, alpha = psi_new, T_new, alpha_new

    raise OrbitSearchError(
        f"no convergence after {max_iter} iterations (best residual {best[0]:.3e})",
        best=best,
    )


def _postprocess(model, orbit, rtol=1e-12, atol=1e-14):
    orbit.action, orbit.windings, flag = orbit_action(model, orbit, rtol=rtol, atol=atol)
    if flag:
        orbit.flags.append(flag)
    T_p, m, alpha_p, degenerate = primitive_decomposition(model, orbit, rtol=rtol, atol=atol)
    orbit.T_primitive, orbit.repetition, orbit.alpha_primitive = T_p, m, alpha_p
    if degenerate:
        orbit.flags.append("gauge-degenerate-recurrence")
    orbit.monodromy_reduced, mono_flags = reduced_monodromy(model, orbit, rtol=rtol, atol=atol)
    orbit.flags.extend(mono_flags)
    try:
        orbit.maslov = maslov_index(model, orbit, n_shift=0, rtol=rtol, atol=atol)
    except RuntimeError as exc:
        orbit.flags.append(f"maslov-failed: {exc}")


def orbit_action(model, orbit, n_samples=4097, rtol=1e-12, atol=1e-14):
    """Classical action S = int theta . dn/dt dt + sum_l n_l(0) dtheta_l.

    Uses the smooth gauge where each mode phase is unwrapped continuously;
    per-mode winding integers are reported alongside.  If some amplitude
    passes too close to zero the phase is ill defined and the endpoint form
    is used with a flag.
    """
    sol = mf.integrate(model, orbit.psi0, orbit.T, rtol=rtol, atol=atol, dense=True)
    ts = np.linspace(0.0, orbit.T, n_samples)
    psis = sol.sol(ts).T  # (n_samples, L)
    n_t = np.abs(psis) ** 2
    flag = None
    if n_t.min() < 1e-10 * max(1.0, n_t.max()):
        flag = "phase-undefined-near-zero-amplitude"
    theta = np.unwrap(np.angle(psis), axis=0)
    ndot = np.gradient(n_t, ts, axis=0)
    integral = float(simpson(np.sum(theta * ndot, axis=1), x=ts))
    dtheta = theta[0] - theta[-1]
    boundary = float(np.sum(n_t[0] * dtheta))
    windings = [int(round((d - orbit.alpha) / (2 * np.pi))) for d in dtheta]
    return integral + boundary, windings, flag


def primitive_decomposition(model, orbit, n_scan=2048, tol=1e-8, rtol=1e-12, atol=1e-14):
    """Earliest phase-aligned recurrence and the repetition count.

    Returns (T_primitive, m, alpha_primitive, degenerate).  Orbits whose
    trajectory is a pure gauge rotation (free-field eigenorbits) recur at
    every time after phase alignment; for those the primitive period is the
    first full cycle psi(t) = psi(0) and `degenerate` is True.
    """
    psi0 = orbit.psi0
    scale = np.linalg.norm(psi0)
    sol = mf.integrate(model, psi0, orbit.T, rtol=rtol, atol=atol, dense=True)
    ts = np.linspace(0.0, orbit.T, n_scan + 1)[1:]
    psis = sol.sol(ts).T

    def aligned_dist(t):
        p = sol.sol(t)
        return mf.aligned_distance(psi0, p)[0]

    dists = np.array([mf.aligned_distance(psi0, p)[0] for p in psis])
    degenerate = bool(np.all(dists < tol * max(1.0, scale)))
    if degenerate:
        # pure gauge rotation psi(t) = psi0 exp(-i mu t): phase-aligned
        # recurrence is continuous, so split T by the number of full phase
        # turns; m copies of the primitive then rebuild (T, alpha) exactly.
        n_tot = float(np.vdot(psi0, psi0).real)
        mu_est = float(np.real(np.vdot(psi0, 1j * mf.eom_rhs(model, psi0))) / n_tot)
        k = int(round((mu_est * orbit.T - orbit.alpha) / (2 * np.pi)))
        if k < 1:
            return orbit.T, 1, orbit.alpha, True
        mu = (orbit.alpha + 2 * np.pi * k) / orbit.T
        t_p = orbit.T / k
        alpha_p = float((mu * t_p) % (2 * np.pi))
        return t_p, k, alpha_p, True

    t_p = _first_recurrence(aligned_dist, ts, dists, tol * max(1.0, scale))
    if t_p is None:
        return orbit.T, 1, orbit.alpha, False
    m_float = orbit.T / t_p
    m = int(round(m_float))
    if m < 1 or abs(m_float - m) > 1e-6 * m:
        raise RuntimeError(
            f"recurrence at t={t_p:.9g} is not an integer divisor of T={orbit.T:.9g}"
        )
    _, alpha_p = mf.aligned_distance(psi0, sol.sol(t_p))
    gap = (orbit.alpha - m * alpha_p) % (2 * np.pi)
    gap = min(gap, 2 * np.pi - gap)
    if gap > 1e-6:
        raise RuntimeError(
            f"phase of recurrence inconsistent: alpha={orbit.alpha:.9g}, "
            f"m*alpha_p mod 2pi differs by {gap:.3e}"
        )
    return t_p, m, float(alpha_p % (2 * np.pi)), False


def _first_recurrence(fun, ts, samples, thresh):
    """Earliest time where the refined local minimum of `fun` drops below thresh.

    Grid samples alone can straddle a narrow recurrence dip, so every local
    minimum of the sampled curve is sharpened by ternary search before the
    threshold test.
    """
    interior = np.nonzero(
        (samples[1:-1] <= samples[:-2]) & (samples[1:-1] <= samples[2:])
    )[0] + 1
    candidates = list(interior)
    if len(samples) > 1 and samples[-1] <= samples[-2]:
        candidates.append(len(samples) - 1)
    for idx in candidates:
        t = _refine_minimum(fun, ts, idx)
        if fun(t) < thresh:
            return t
    return None


def _refine_minimum(fun, ts, idx, iters=60):
    lo = ts[max(idx - 1, 0)]
    hi = ts[min(idx + 1, len(ts) - 1)]
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if fun(m1) < fun(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def _shell_directions(model, psi0):
    """Flow, gauge, grad E and grad N directions at a point, as real vectors."""
    x0 = mf.to_real(psi0)
    f = mf.rhs_real(model, x0)
    g = mf.to_real(1j * psi0)
    grad = mf._wirtinger_grad(model, psi0, mf.effective_hopping(model))
    grad_e = np.concatenate([2 * grad.real, 2 * grad.imag])
    grad_n = 2 * x0
    return np.column_stack([f, g, grad_e, grad_n])


def perpendicular_basis(model, psi0, rank_tol=1e-8):
    """Orthonormal basis of the symplectic complement of the symmetry directions.

    The span of {flow, gauge, grad E, grad N} is closed under the symplectic
    unit, so its symplectic complement coincides with the orthogonal one.  A
    rank-revealing SVD handles the free-field degeneracy where flow || gauge
    and grad E || grad N.
    """
    W = _shell_directions(model, psi0)
    U, s, _ = np.linalg.svd(W, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0]))
    flags = []
    if rank < 4:
        flags.append("degenerate-symmetry-directions")
    C = U[:, rank:]
    return C, flags


def _symplectic_normalize(C, O):
    """Rotate an orthonormal complement basis into symplectic pairs."""
    k = C.shape[1] // 2

    def omega(x, y):
        return float(x @ (O @ y))

    us, vs = [], []
    remaining = C.copy()
    for _ in range(k):
        u = remaining[:, 0]
        w = remaining.T @ (O @ u)
        j = int(np.argmax(np.abs(w)))
        v = remaining[:, j] / (-w[j])  # omega(u, v) = 1
        us.append(u)
        vs.append(v)
        cols = []
        for i in range(1, remaining.shape[1]):
            if i == j:
                continue
            c = remaining[:, i]
            c = c - omega(c, v) * u + omega(c, u) * v
            cols.append(c)
        if cols:
            Q, _ = np.linalg.qr(np.column_stack(cols))
            remaining = Q
        else:
            remaining = np.zeros((C.shape[0], 0))
    return np.column_stack(us + vs)


def reduced_monodromy(model, orbit, rtol=1e-12, atol=1e-14):
    """Tangent map over one pseudo-period, rotated by alpha and projected
    onto the symplectic complement of the symmetry directions."""
    L = model.L
    _, J = mf.integrate_with_tangent(model, orbit.psi0, orbit.T, rtol=rtol, atol=atol)
    M_full = mf.rotation_real(orbit.alpha, L) @ J
    C, flags = perpendicular_basis(model, orbit.psi0)
    if C.shape[1] == 0:
        return np.zeros((0, 0)), flags
    O = mf.omega_matrix(L)
    B = _symplectic_normalize(C, O)
    # re-orthogonalize against the symmetry directions (numerical hygiene)
    M_red = np.linalg.solve(B.T @ B, B.T @ M_full @ B)
    return M_red, flags


def _eigphase_windings(model, orbit, psi_start, rtol=1e-12, atol=1e-14, n_t=None):
    """Signed per-pair winding numbers of the rotated tangent flow.

    Eigenvalues of Rot(alpha t / T) J(t) are tracked continuously in t; each
    conjugate pair accumulates a rotation angle whose floor over 2 pi is the
    pair's winding.  The orientation is fixed by the symplectic (Krein) sign
    of the eigenvector, calibrated so free-field orbits reproduce the
    closed-form repetition count.
    """
    L = model.L
    T = orbit.T
    if n_t is None:
        Df = mf.flow_jacobian_real(model, psi_start)
        freq = max(1.0, np.abs(np.linalg.eigvals(Df)).max())
        n_t = int(min(40000, max(600, 25 * freq * T)))
    ts = np.linspace(0.0, T, n_t + 1)
    _, Js = mf.integrate_with_tangent(model, psi_start, T, rtol=rtol, atol=atol, t_eval=ts)

    G = 1j * mf.omega_matrix(L)
    prev = np.ones(2 * L, dtype=complex)
    prev2 = None
    prev_vec = None
    acc = np.zeros(2 * L)
    krein = np.zeros(2 * L)
    for i, t in enumerate(ts):
        K = mf.rotation_real(orbit.alpha * t / T, L) @ Js[i]
        lam, vec = np.linalg.eig(K)
        vec = vec / np.linalg.norm(vec, axis=0)
        if prev_vec is None:
            order = np.arange(2 * L)
        else:
            # conjugate partners collide on the real axis; eigenvector overlap
            # plus phase-velocity extrapolation carries tracks through the
            # crossing instead of letting them swap there
            if prev2 is None:
                pred = prev
            else:
                pred = prev * (prev / prev2)
            cost = np.abs(lam[None, :] - pred[:, None])
            cost += 1.0 - np.abs(prev_vec.conj().T @ vec)
            _, order = linear_sum_assignment(cost)
        lam = lam[order]
        vec = vec[:, order]
        if prev_vec is not None:
            acc += np.angle(lam / prev)
            krein += np.real(np.einsum("ij,jk,ki->i", vec.conj().T, G, vec))
        prev2 = prev
        prev = lam
        prev_vec = vec
    # conjugate partners accumulate opposite phase; the signed rotation angle
    # of a pair is read off its Krein-positive member, which keeps windings
    # negative when a transverse pair turns against the flow orientation
    used = np.zeros(2 * L, dtype=bool)
    windings = []
    order_idx = np.argsort(acc)
    i, j = 0, 2 * L - 1
    pairs = []
    while i < j:
        pairs.append((order_idx[i], order_idx[j]))
        i += 1
        j -= 1
    for a, b in pairs:
        if used[a] or used[b]:
            continue
        used[a] = used[b] = True
        chosen = a if krein[a] > krein[b] else b
        windings.append(int(math.floor((-acc[chosen] + 1e-6) / (2 * np.pi))))
    return windings


def maslov_index(model, orbit, n_shift=8, force_generic=False, rtol=1e-12, atol=1e-14):
    """Integer phase index of the orbit.

    Free-field models use the closed-form repetition formula; otherwise the
    index is obtained from the accumulated rotation (winding) of the tangent
    flow eigenphases, which reproduces the closed form on free fields.  With
    n_shift > 0 the count is repeated from shifted initial points along the
    orbit and required to be invariant.
    """
    if model.is_free and not force_generic:
        from . import freefield

        data = freefield.FreeFieldData.from_model(model)
        chi, k = freefield.identify_family(data, orbit)
        return freefield.maslov_free(data, chi, k, orbit.alpha)

    windings = _eigphase_windings(model, orbit, orbit.psi0, rtol=rtol, atol=atol)
    sigma = 1 + 2 * sum(windings)
    if n_shift > 0:
        sol = mf.integrate(model, orbit.psi0, orbit.T, rtol=rtol, atol=atol, dense=True)
        for s in np.linspace(0, orbit.T, n_shift + 2)[1:-1]:
            w = _eigphase_windings(model, orbit, sol.sol(s), rtol=rtol, atol=atol)
            sigma_s = 1 + 2 * sum(w)
            if sigma_s != sigma:
                raise RuntimeError(
                    f"index not invariant under initial-point shift: {sigma} vs {sigma_s} at t={s:.4g}"
                )
    return sigma


def deduplicate(orbits, tol=1e-6):
    """Drop orbits matching a stored one after phase and time alignment."""
    kept = []
    for orb in orbits:
        dup = False
        for ref in kept:
            if abs(orb.T - ref.T) < tol * max(1.0, ref.T) and (
                mf.aligned_distance(ref.psi0, orb.psi0)[0] < tol
            ):
                dup = True
                break
        if not dup:
            kept.append(orb)
    return kept


def continue_family(model, orbit0, e_values, n_target, **solver_kwargs):
    """Continue an orbit along its energy family on the fixed-N shell.

    Returns the list of converged orbits sorted by energy; family members
    provide the S(E) interpolation used by the trace evaluation.
    """
    out = []
    current = orbit0
    for e in e_values:
        seed = (current.psi0, current.T, current.alpha)
        current = find_orbit(model, seed, n_target=n_target, e_target=e, **solver_kwargs)
        out.append(current)
    return sorted(out, key=lambda o: o.energy)


def continue_in_coupling(model_factory, u_values, orbit_seed, n_target, **solver_kwargs):
    """Continue an orbit while ramping the interaction strength.

    `model_factory(u)` builds the model at coupling u; `orbit_seed` is a
    (psi0, T, alpha) triple valid at the first coupling value.  When a ramp
    step fails to converge it is bisected, up to `max_refine` levels.
    """
    max_refine = solver_kwargs.pop("max_refine", 6)
    current = orbit_seed
    orbit = None
    u_prev = None
    pending = list(u_values)[::-1]
    depth = 0
    while pending:
        u = pending.pop()
        try:
            orbit = find_orbit(model_factory(u), current, n_target=n_target, **solver_kwargs)
        except OrbitSearchError:
            if u_prev is None or depth >= max_refine:
                raise
            pending.append(u)
            pending.append(0.5 * (u_prev + u))
            depth += 1
            continue
        depth = 0
        u_prev = u
        current = (orbit.psi0, orbit.T, orbit.alpha)
    return orbit
