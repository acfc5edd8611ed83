"""End-to-end checks tying the three density estimates together.

Each test prints one PASS/FAIL line; libraries of refined orbits are shared
with the recurrence-scan test at the bottom.
"""

import time

import numpy as np
import pytest

from bhdos import (
    BoseHubbardModel,
    DensityGrid,
    central_window,
    cli,
    exact_spectrum,
    find_orbit,
    sector_dimension,
    smoothed_dos,
    windowed_rel_l2,
)
from bhdos import freefield as ff
from bhdos import meanfield as mf
from bhdos import orbits as orb
from bhdos import reporting
from bhdos import semiclassics as sc

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

# orbit libraries built along the way, re-scanned for recurrences at the end
ORBIT_LIBRARIES: dict = {}


def _report(tag: str, ok: bool, detail: str):
    print(f"[{tag}] {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    assert ok, f"{tag}: {detail}"


def free_model(energies):
    return BoseHubbardModel(L=len(energies), H=np.diag(energies))


# ---------------------------------------------------------------- criterion 1

CROSS_CASES = [
    ((1.0, SQRT2), 2),
    ((1.0, SQRT2), 5),
    ((1.0, SQRT2), 10),
    ((1.0, SQRT2, SQRT3), 2),
    ((1.0, SQRT2, SQRT3), 5),
    ((1.0, SQRT2, SQRT3), 10),
]


@pytest.mark.parametrize(
    "energies,N", CROSS_CASES,
    ids=[f"L{len(e)}N{n}" for e, n in CROSS_CASES],
)
def test_cross_validation_weyl_plus_orbit_sum(energies, N):
    """Smooth term plus closed-form orbit sum against the smoothed exact comb."""
    t0 = time.time()
    model = free_model(energies)
    data = ff.FreeFieldData.from_model(model)
    spec = exact_spectrum(model, N)
    dim = sector_dimension(model.L, N)
    sigma = 0.05 * spec.span / dim
    grid = DensityGrid(spec.energies.min() - 4 * sigma,
                       spec.energies.max() + 4 * sigma, 2000)
    exact = smoothed_dos(spec, grid, sigma)
    weyl = sc.weyl_dos(model, N, grid, sigma, n_samples=1_000_000, seed=12345)
    osc = ff.freefield_osc_dos(data, N, grid, sigma)
    total = weyl.grid.values + osc.values
    lo, hi = central_window(spec.energies.min(), spec.energies.max())
    err = windowed_rel_l2(total, exact.values, grid.centers, lo, hi)
    elapsed = time.time() - t0
    ok = err < 0.05 and elapsed < 120.0
    _report("acceptance 1", ok,
            f"L={model.L} N={N}: windowed rel L2 = {err:.4f} (tol 0.05), "
            f"{elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 2

def test_pole_sum_identity_spot_checks():
    data = ff.FreeFieldData.from_model(free_model((1.0, SQRT2)))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10):
        energy = float(rng.uniform(0.5, 3 * (1 + SQRT2)))
        alpha = float(rng.uniform(0.1, 2 * np.pi - 0.1))
        _, _, gap = ff.residue_identity_check(data, 0, energy, alpha, 0.1, k_max=200)
        worst = max(worst, gap)
    ok = worst < 1e-3
    _report("acceptance 2", ok, f"10 random (E, alpha): worst gap = {worst:.3e} (tol 1e-3)")


# ---------------------------------------------------------------- criterion 3

def test_orbit_machinery_on_random_three_mode_lattice():
    """Newton, stability determinant, and phase index against closed forms."""
    t0 = time.time()
    rng = np.random.default_rng(42)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = (A + A.conj().T) / 2
    H = H + (abs(np.linalg.eigvalsh(H).min()) + 0.5) * np.eye(3)
    model = BoseHubbardModel(L=3, H=H)
    data = ff.FreeFieldData.from_model(model)
    library = []
    worst_ray, worst_det, maslov_ok = 0.0, 0.0, True
    for seed_orbit in ff.enumerate_orbits(data, 5, k_max=3):
        chi, k = ff.identify_family(data, seed_orbit)
        noise = 1e-3 * (rng.normal(size=3) + 1j * rng.normal(size=3))
        sol = find_orbit(model, (seed_orbit.psi0 + noise, seed_orbit.T * 1.001,
                                 seed_orbit.alpha),
                         n_target=mf.conserved_N(seed_orbit.psi0))
        library.append(sol)
        v = data.vectors[:, chi]
        ray_dist = np.linalg.norm(sol.psi0 - v * (v.conj() @ sol.psi0))
        worst_ray = max(worst_ray, ray_dist)
        fac, _, _ = ff.stability_factor(data, chi, k, sol.alpha)
        det_gap = abs(np.sqrt(abs(sol.det_m_minus_one)) - fac)
        worst_det = max(worst_det, det_gap)
        generic = orb.maslov_index(model, sol, force_generic=True)
        closed = ff.maslov_free(data, chi, k, sol.alpha)
        if generic != closed:
            maslov_ok = False
    ORBIT_LIBRARIES["random_three_mode"] = (model, library)
    elapsed = time.time() - t0
    ok = worst_ray < 1e-8 and worst_det < 1e-6 and maslov_ok and elapsed < 60.0
    _report("acceptance 3", ok,
            f"{len(library)} orbits: ray dist {worst_ray:.2e} (tol 1e-8), "
            f"det gap {worst_det:.2e} (tol 1e-6), "
            f"phase index {'all match' if maslov_ok else 'MISMATCH'}, {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 4

def test_smooth_term_sum_rule_three_modes():
    N = 20
    model = free_model((1.0, SQRT2, SQRT3))
    spec = exact_spectrum(model, N)
    sigma = 0.1
    grid = DensityGrid(spec.energies.min() - 8 * sigma,
                       spec.energies.max() + 8 * sigma, 1500)
    est = sc.weyl_dos(model, N, grid, sigma, n_samples=1_000_000, seed=77)
    integral = est.integral()
    # (N + L/2)^(L-1) / (L-1)! and the sector dimension it approximates
    mass = (N + 1.5) ** 2 / 2.0
    dim = sector_dimension(3, N)
    stderr_int = float(np.sqrt(np.sum((est.stderr * grid.bin_width) ** 2)))
    ok = abs(integral - mass) <= 3 * max(stderr_int, 1e-12) + 1e-9
    ok = ok and abs(integral - dim) / dim < 0.01
    _report("acceptance 4", ok,
            f"integral {integral:.4f} vs {mass} (3 sigma = {3 * stderr_int:.2e}) "
            f"and vs dim {dim} ({abs(integral - dim) / dim:.2%})")


# ---------------------------------------------------------------- criterion 5

def test_interacting_dimer_orbits_mark_recurrence_peaks():
    """Orbit periods from coupling continuation line up with |C(t)| peaks."""
    t0 = time.time()
    N = 40
    u = 4.0 / N
    H = np.array([[0.0, -1.0], [-1.0, 0.0]])

    def make(uv):
        return BoseHubbardModel(L=2, H=H, U={(0, 0, 0, 0): uv, (1, 1, 1, 1): uv})

    model = make(u)
    data = ff.FreeFieldData.from_model(BoseHubbardModel(L=2, H=H))
    found = []
    for seed_orbit in ff.enumerate_orbits(data, N, k_max=3, force=True):
        chi, k = ff.identify_family(data, seed_orbit)
        if chi != 1 or k < 1:
            continue  # the low branch drifts to very long periods; out of window
        sol = orb.continue_in_coupling(
            make, np.linspace(5e-4, u, 24),
            (seed_orbit.psi0, seed_orbit.T, seed_orbit.alpha),
            n_target=N + 1.0, postprocess=False)
        found.append(sol)
    ORBIT_LIBRARIES["interacting_dimer"] = (model, found)

    t_max = 30.0
    spec = exact_spectrum(model, N)
    ts, amp = sc.time_spectrum(spec.energies, t_max, n_t=16384)
    peaks, _ = sc.spectrum_peaks(ts, amp)
    bin_width = 2 * np.pi / spec.span
    in_window = [o for o in found if o.T < t_max]
    dists = [float(np.min(np.abs(peaks - o.T))) for o in in_window]
    periods = {round(o.T, 6) for o in in_window}
    elapsed = time.time() - t0
    ok = (len(periods) >= 3 and all(d < bin_width for d in dists)
          and elapsed < 300.0)
    _report("acceptance 5", ok,
            f"{len(periods)} distinct periods, peak offsets "
            f"{['%.3f' % d for d in dists]} vs bin {bin_width:.3f}, {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 6

def test_integrator_invariants_on_interacting_trimer():
    H = np.zeros((3, 3))
    for l in range(3):
        H[l, (l + 1) % 3] = H[(l + 1) % 3, l] = -1.0
    model = BoseHubbardModel(L=3, H=H, U={(l, l, l, l): 0.1 for l in range(3)})
    rng = np.random.default_rng(7)
    psi0 = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi0 *= np.sqrt(3.0) / np.linalg.norm(psi0)

    psi_t = mf.integrate(model, psi0, 100.0)
    drift_e = abs(mf.mf_hamiltonian(model, psi_t) - mf.mf_hamiltonian(model, psi0))
    drift_n = abs(mf.conserved_N(psi_t) - mf.conserved_N(psi0))

    _, J = mf.integrate_with_tangent(model, psi0, 100.0)
    om = mf.omega_matrix(3)
    defect = float(np.max(np.abs(J.T @ om @ J - om)))

    t_fd, eps = 10.0, 1e-5
    _, J_fd = mf.integrate_with_tangent(model, psi0, t_fd)
    x0 = mf.to_real(psi0)
    fd_err = 0.0
    for i in range(6):
        dx = np.zeros(6)
        dx[i] = eps
        fp = mf.to_real(mf.integrate(model, mf.to_complex(x0 + dx), t_fd))
        fm = mf.to_real(mf.integrate(model, mf.to_complex(x0 - dx), t_fd))
        fd_err = max(fd_err, float(np.max(np.abs((fp - fm) / (2 * eps) - J_fd[:, i]))))

    ok = drift_e < 1e-9 and drift_n < 1e-9 and defect < 1e-8 and fd_err < 1e-6
    _report("acceptance 6", ok,
            f"energy drift {drift_e:.2e}, norm drift {drift_n:.2e} (tol 1e-9), "
            f"symplectic defect {defect:.2e} (tol 1e-8), tangent vs FD {fd_err:.2e} (tol 1e-6)")


# ---------------------------------------------------------------- criterion 7

def _recurrence_times(model, orbit, degenerate, n_scan=2000):
    """Refined times in (0, T] where the orbit revisits its start up to a phase.

    Eigenmode orbits of a free lattice are phase-aligned with the start at
    every instant; for those the recurrence is defined by the full state
    instead of the phase-quotiented one.
    """
    dense = mf.integrate(model, orbit.psi0, orbit.T, dense=True).sol

    if degenerate:
        def dist(t):
            return float(np.linalg.norm(dense(t).view(complex) - orbit.psi0))
    else:
        def dist(t):
            return mf.aligned_distance(orbit.psi0, dense(t).view(complex))[0]

    ts = np.linspace(0.0, orbit.T, n_scan + 1)[1:]
    d = np.array([dist(t) for t in ts])
    thresh = 1e-6 * np.linalg.norm(orbit.psi0)
    idxs = list(np.nonzero((d[1:-1] <= d[:-2]) & (d[1:-1] <= d[2:]))[0] + 1)
    if d[-1] <= d[-2]:
        idxs.append(len(d) - 1)
    times = []
    for i in idxs:
        t_ref = orb._refine_minimum(dist, ts, i)
        if dist(t_ref) < thresh:
            times.append(t_ref)
    return times, dense


def test_recurrences_only_at_primitive_multiples():
    if not ORBIT_LIBRARIES:
        pytest.skip("orbit libraries were not built")
    worst_t, worst_alpha, n_checked = 0.0, 0.0, 0
    for model, library in ORBIT_LIBRARIES.values():
        for orbit in library:
            t_p, m, alpha_p, degenerate = orb.primitive_decomposition(model, orbit)
            times, dense = _recurrence_times(model, orbit, degenerate)
            # gauge circles psi(t) = psi0 exp(-i mu t) recur in the full state
            # every 2 pi / mu; phase-aligned recurrence is continuous for them,
            # so the spacing check uses the full cycle as reference there
            t_ref = 2 * np.pi * t_p / (alpha_p + 2 * np.pi) if degenerate else t_p
            for t in times:
                mult = t / t_ref
                worst_t = max(worst_t, abs(mult - round(mult)) * t_ref)
            gap = (orbit.alpha - m * alpha_p) % (2 * np.pi)
            worst_alpha = max(worst_alpha, min(gap, 2 * np.pi - gap))
            # every multiple must in turn be a phase-aligned recurrence
            for j in range(1, m + 1):
                dd, _ = mf.aligned_distance(orbit.psi0, dense(j * t_p).view(complex))
                worst_t = max(worst_t, 0.0 if dd < 1e-8 else dd)
            n_checked += 1
    ok = worst_t < 1e-8 and worst_alpha < 1e-8
    _report("acceptance 7", ok,
            f"{n_checked} orbits: recurrence offset {worst_t:.2e}, "
            f"phase mismatch {worst_alpha:.2e} (tol 1e-8)")


# ---------------------------------------------------------------- criterion 8

def test_repeated_runs_are_byte_identical(tmp_path):
    dimer = BoseHubbardModel(
        L=2, H=np.array([[0.0, -1.0], [-1.0, 0.0]]),
        U={(0, 0, 0, 0): 0.1, (1, 1, 1, 1): 0.1})
    free = free_model((1.0, SQRT2))
    reporting.save_model(tmp_path / "dimer.json", dimer)
    reporting.save_model(tmp_path / "free.json", free)
    runs = [
        (["ed", "--model", str(tmp_path / "dimer.json"), "--N", "6"], "dos_ed.csv"),
        (["weyl", "--model", str(tmp_path / "free.json"), "--N", "5",
          "--samples", "20000", "--seed", "3"], "dos_weyl.csv"),
        (["freefield-dos", "--model", str(tmp_path / "free.json"), "--N", "4",
          "--samples", "20000", "--seed", "3"], "dos.csv"),
    ]
    ok = True
    for argv, fname in runs:
        blobs = []
        for tag in ("one", "two"):
            out = tmp_path / (argv[0] + tag)
            cli.main(argv + ["--out", str(out)])
            blobs.append((out / fname).read_bytes())
        if blobs[0] != blobs[1]:
            ok = False
    _report("acceptance 8", ok, "ed / weyl / freefield-dos data files byte-identical" if ok
            else "output files differ between repeated runs")
