"""Command line interface.

Every report subcommand writes delimited tables, a PNG figure and a JSON
run manifest into the output directory.  Numeric output depends only on
the configuration and the seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import freefield, meanfield, orbits, plotting, reporting, semiclassics
from .grids import DensityGrid, central_window, windowed_rel_l2
from .model import (
    build_basis,
    exact_spectrum,
    sector_dimension,
    smoothed_dos,
)


def _add_model(p):
    p.add_argument("--model", required=True, help="model definition JSON")


def _add_grid(p):
    p.add_argument("--emin", type=float, default=None)
    p.add_argument("--emax", type=float, default=None)
    p.add_argument("--bins", type=int, default=400)
    p.add_argument("--sigma", type=float, default=None, help="smoothing width")


def _add_out(p):
    p.add_argument("--out", default=".", help="output directory")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_grid(args, spectrum=None):
    sigma = args.sigma
    if sigma is None:
        if spectrum is None:
            raise SystemExit("--sigma is required when no exact spectrum is computed")
        sigma = 0.05 * spectrum.span / max(len(spectrum), 2)
    e_min, e_max = args.emin, args.emax
    if e_min is None or e_max is None:
        if spectrum is None:
            raise SystemExit("--emin/--emax are required when no exact spectrum is computed")
        pad = 4.0 * sigma
        e_min = spectrum.energies[0] - pad if e_min is None else e_min
        e_max = spectrum.energies[-1] + pad if e_max is None else e_max
    return DensityGrid(e_min, e_max, args.bins), sigma


def _parse_psi(text: str) -> np.ndarray:
    """State given as 're,im;re,im;...' or a JSON file of [re, im] pairs."""
    path = Path(text)
    if path.exists():
        pairs = json.loads(path.read_text())
        return np.array([complex(re, im) for re, im in pairs])
    comps = []
    for part in text.split(";"):
        re_s, _, im_s = part.partition(",")
        comps.append(complex(float(re_s), float(im_s or 0.0)))
    return np.array(comps)


def cmd_basis(args):
    dim = sector_dimension(args.L, args.N)
    print(f"L={args.L} N={args.N} dimension={dim}")
    if args.list:
        basis = build_basis(args.L, args.N)
        for state in basis.states:
            print(" ".join(str(n) for n in state))
    return 0


def cmd_ed(args):
    started = time.time()
    model = reporting.load_model(args.model)
    spectrum = exact_spectrum(model, args.N)
    grid, sigma = _resolve_grid(args, spectrum)
    dos = smoothed_dos(spectrum, grid, sigma)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "N": args.N, "bins": grid.n_bins,
              "emin": grid.e_min, "emax": grid.e_max, "sigma": sigma}
    meta = reporting.table_meta("ed", config)
    reporting.write_table(out / "levels.csv", {"E": spectrum.energies}, meta)
    reporting.write_table(
        out / "dos_ed.csv",
        {"E": grid.centers, "rho_exact_smoothed": dos.values},
        meta,
    )
    plotting.plot_dos(out / "dos_ed.png", grid.centers,
                      {"exact smoothed": dos.values}, title=model.label or "exact")
    plotting.plot_levels(out / "levels.png", spectrum.energies)
    reporting.write_manifest(out / "manifest_ed.json", "ed", config, started,
                             {"n_levels": len(spectrum)})
    print(f"levels: {len(spectrum)}  span: {spectrum.span:.6g}  sigma: {sigma:.6g}")
    return 0


def cmd_weyl(args):
    started = time.time()
    model = reporting.load_model(args.model)
    spectrum = None
    if args.emin is None or args.emax is None or args.sigma is None:
        spectrum = exact_spectrum(model, args.N)
    grid, sigma = _resolve_grid(args, spectrum)
    est = semiclassics.weyl_dos(model, args.N, grid, sigma,
                                n_samples=args.samples, seed=args.seed)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "N": args.N, "bins": grid.n_bins,
              "emin": grid.e_min, "emax": grid.e_max, "sigma": sigma,
              "samples": args.samples, "seed": args.seed}
    meta = reporting.table_meta("weyl", config)
    reporting.write_table(
        out / "dos_weyl.csv",
        {"E": grid.centers, "rho_weyl": est.grid.values, "rho_weyl_stderr": est.stderr},
        meta,
    )
    plotting.plot_dos(out / "dos_weyl.png", grid.centers,
                      {"smooth term": est.grid.values},
                      stderr={"smooth term": est.stderr})
    reporting.write_manifest(out / "manifest_weyl.json", "weyl", config, started,
                             {"integral": est.integral()})
    print(f"integral of smooth term: {est.integral():.8g}")
    return 0


def cmd_evolve(args):
    started = time.time()
    model = reporting.load_model(args.model)
    psi0 = _parse_psi(args.psi0)
    diag = meanfield.Diagnostics()
    sol = meanfield.integrate(model, psi0, args.tmax, diagnostics=diag, dense=True)
    ts = np.linspace(0.0, args.tmax, args.nt)
    psis = sol.sol(ts).T
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "tmax": args.tmax, "nt": args.nt,
              "psi0": [[z.real, z.imag] for z in psi0]}
    meta = reporting.table_meta("evolve", config)
    cols = {"t": ts}
    for l in range(model.L):
        cols[f"q{l + 1}"] = psis[:, l].real
        cols[f"p{l + 1}"] = psis[:, l].imag
    reporting.write_table(out / "trajectory.csv", cols, meta)
    plotting.plot_trajectory(out / "trajectory.png", ts, psis)
    reporting.write_manifest(out / "manifest_evolve.json", "evolve", config, started,
                             {"n_drift": diag.n_drift, "e_drift": diag.e_drift})
    print(f"norm drift: {diag.n_drift:.3e}  energy drift: {diag.e_drift:.3e}")
    return 0


def cmd_fixed_points(args):
    started = time.time()
    model = reporting.load_model(args.model)
    n_shell = args.nshell if args.nshell is not None else args.N + model.L / 2.0
    points = meanfield.find_fixed_points(model, seeds=None, n_shell=n_shell,
                                         n_random_seeds=args.nseeds, seed=args.seed)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "n_shell": n_shell,
              "nseeds": args.nseeds, "seed": args.seed}
    payload = [
        {
            "psi": [[z.real, z.imag] for z in fp.psi],
            "mu": fp.mu,
            "energy": fp.energy,
            "n_unstable": fp.n_unstable,
            "eigenvalues": [[z.real, z.imag] for z in fp.eigenvalues],
        }
        for fp in points
    ]
    (out / "fixed_points.json").write_text(json.dumps(payload, indent=2) + "\n")
    reporting.write_manifest(out / "manifest_fixed_points.json", "fixed-points",
                             config, started, {"n_found": len(points)})
    for fp in points:
        print(f"E={fp.energy:.8g}  mu={fp.mu:.8g}  unstable directions={fp.n_unstable}")
    return 0


def cmd_orbit_find(args):
    started = time.time()
    model = reporting.load_model(args.model)
    n_target = args.ntarget if args.ntarget is not None else args.N + model.L / 2.0
    if args.seed_file:
        d = json.loads(Path(args.seed_file).read_text())
        seed = (np.array([complex(re, im) for re, im in d["psi0"]]), d["T"], d["alpha"])
    elif args.chi is not None:
        if args.energy is None:
            raise SystemExit("--energy is required with --chi")
        data = freefield.FreeFieldData.from_model(
            reporting.load_model(args.model_free or args.model))
        cands = [o for o in freefield.enumerate_orbits_at_energy(
                     data, args.energy, alpha=args.alpha, k_max=abs(args.k) + 1)
                 if freefield.identify_family(data, o) == (args.chi, args.k)]
        if not cands:
            raise SystemExit("no analytic orbit for the requested family")
        o = cands[0]
        seed = (o.psi0, o.T, o.alpha)
    else:
        raise SystemExit("need --seed-file or --chi/--k/--energy")
    orbit = orbits.find_orbit(model, seed, n_target=n_target)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "n_target": n_target}
    (out / "orbit.json").write_text(json.dumps(orbit.to_dict(), indent=2) + "\n")
    reporting.write_manifest(out / "manifest_orbit.json", "orbit-find", config, started)
    print(f"T={orbit.T:.10g} alpha={orbit.alpha:.10g} E={orbit.energy:.10g} "
          f"S={orbit.action:.10g} sigma={orbit.maslov}")
    return 0


def _families_from_file(path):
    payload = json.loads(Path(path).read_text())
    fams = []
    for group in payload["families"]:
        members = [orbits.PseudoPeriodicOrbit.from_dict(d) for d in group]
        fams.append(semiclassics.OrbitFamily(orbits=members))
    return fams


def cmd_trace(args):
    started = time.time()
    model = reporting.load_model(args.model)
    spectrum = None
    if args.with_exact or args.emin is None or args.emax is None or args.sigma is None:
        spectrum = exact_spectrum(model, args.N)
    grid, sigma = _resolve_grid(args, spectrum)
    families = _families_from_file(args.orbits)
    est = semiclassics.weyl_dos(model, args.N, grid, sigma,
                                n_samples=args.samples, seed=args.seed)
    osc = semiclassics.oscillatory_dos(families, grid, sigma)
    total = semiclassics.total_dos(est, osc)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "N": args.N, "bins": grid.n_bins,
              "emin": grid.e_min, "emax": grid.e_max, "sigma": sigma,
              "samples": args.samples, "seed": args.seed,
              "n_families": len(families)}
    meta = reporting.table_meta("trace", config)
    cols = {"E": grid.centers}
    curves = {}
    if spectrum is not None:
        exact = smoothed_dos(spectrum, grid, sigma)
        cols["rho_exact_smoothed"] = exact.values
        curves["exact smoothed"] = exact.values
    cols.update({"rho_weyl": est.grid.values, "rho_weyl_stderr": est.stderr,
                 "rho_osc": osc.values, "rho_total": total.values})
    curves.update({"smooth term": est.grid.values, "orbit sum total": total.values})
    reporting.write_table(out / "dos.csv", cols, meta)
    plotting.plot_dos(out / "dos.png", grid.centers, curves)
    reporting.write_manifest(out / "manifest_trace.json", "trace", config, started)
    if spectrum is not None:
        lo, hi = central_window(grid.e_min, grid.e_max)
        err = windowed_rel_l2(total.values, exact.values, grid.centers, lo, hi)
        print(f"windowed relative L2 error vs exact: {err:.4f}")
    return 0


def cmd_freefield_dos(args):
    started = time.time()
    model = reporting.load_model(args.model)
    data = freefield.FreeFieldData.from_model(model)
    levels = freefield.free_levels(data, args.N)
    span = float(levels[-1] - levels[0]) if len(levels) > 1 else 1.0
    sigma = args.sigma if args.sigma is not None else 0.05 * span / max(len(levels), 2)
    e_min = args.emin if args.emin is not None else levels[0] - 4 * sigma
    e_max = args.emax if args.emax is not None else levels[-1] + 4 * sigma
    grid = DensityGrid(e_min, e_max, args.bins)
    exact = np.zeros(grid.n_bins)
    from .grids import gaussian_kernel

    for e_n in levels:
        exact += gaussian_kernel(grid.centers - e_n, sigma)
    est = semiclassics.weyl_dos(model, args.N, grid, sigma,
                                n_samples=args.samples, seed=args.seed)
    osc = freefield.freefield_osc_dos(data, args.N, grid, sigma)
    total = est.grid.values + osc.values
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "N": args.N, "bins": grid.n_bins,
              "emin": grid.e_min, "emax": grid.e_max, "sigma": sigma,
              "samples": args.samples, "seed": args.seed}
    meta = reporting.table_meta("freefield-dos", config)
    reporting.write_table(
        out / "dos.csv",
        {"E": grid.centers, "rho_exact_smoothed": exact,
         "rho_weyl": est.grid.values, "rho_weyl_stderr": est.stderr,
         "rho_osc": osc.values, "rho_total": total},
        meta,
    )
    plotting.plot_dos(out / "dos.png", grid.centers,
                      {"exact smoothed": exact, "smooth term": est.grid.values,
                       "smooth + oscillation": total})
    reporting.write_manifest(out / "manifest_freefield_dos.json", "freefield-dos",
                             config, started)
    lo, hi = central_window(grid.e_min, grid.e_max)
    err = windowed_rel_l2(total, exact, grid.centers, lo, hi)
    print(f"windowed relative L2 error vs exact: {err:.4f}")
    return 0


def cmd_freefield_check(args):
    started = time.time()
    model = reporting.load_model(args.model)
    data = freefield.FreeFieldData.from_model(model)
    rng = np.random.default_rng(args.seed)
    e_top = float(np.sum(data.energies)) * 3.0
    results = []
    for _ in range(args.trials):
        energy = float(rng.uniform(0.5, e_top))
        alpha = float(rng.uniform(0.1, 2 * np.pi - 0.1))
        lhs, rhs, gap = freefield.residue_identity_check(
            data, 0, energy, alpha, args.sigma, k_max=args.kmax)
        results.append({"E": energy, "alpha": alpha, "gap": gap,
                        "lhs": [lhs.real, lhs.imag], "rhs": [rhs.real, rhs.imag]})
        print(f"E={energy:8.4f} alpha={alpha:7.4f} gap={gap:.3e}")
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "sigma": args.sigma,
              "kmax": args.kmax, "trials": args.trials, "seed": args.seed}
    (out / "identity_check.json").write_text(json.dumps(results, indent=2) + "\n")
    reporting.write_manifest(out / "manifest_freefield_check.json", "freefield-check",
                             config, started,
                             {"max_gap": max(r["gap"] for r in results)})
    return 0


def cmd_time_spectrum(args):
    started = time.time()
    model = reporting.load_model(args.model)
    spectrum = exact_spectrum(model, args.N)
    ts, amp = semiclassics.time_spectrum(spectrum.energies, args.tmax, n_t=args.nt)
    peaks, heights = semiclassics.spectrum_peaks(ts, amp)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "N": args.N,
              "tmax": args.tmax, "nt": args.nt}
    meta = reporting.table_meta("time-spectrum", config)
    reporting.write_table(out / "time_spectrum.csv", {"t": ts, "amplitude": amp}, meta)
    reporting.write_table(out / "peaks.csv", {"t": peaks, "amplitude": heights}, meta)
    plotting.plot_time_spectrum(out / "time_spectrum.png", ts, amp, marks=peaks)
    reporting.write_manifest(out / "manifest_time_spectrum.json", "time-spectrum",
                             config, started, {"n_peaks": len(peaks)})
    print("peak times: " + " ".join(f"{t:.4f}" for t in peaks[:12]))
    return 0


def cmd_compare(args):
    started = time.time()
    model = reporting.load_model(args.model)
    spectrum = exact_spectrum(model, args.N)
    grid, sigma = _resolve_grid(args, spectrum)
    exact = smoothed_dos(spectrum, grid, sigma)
    est = semiclassics.weyl_dos(model, args.N, grid, sigma,
                                n_samples=args.samples, seed=args.seed)
    if model.is_free:
        data = freefield.FreeFieldData.from_model(model)
        osc = freefield.freefield_osc_dos(data, args.N, grid, sigma)
    elif args.orbits:
        osc = semiclassics.oscillatory_dos(_families_from_file(args.orbits), grid, sigma)
    else:
        raise SystemExit("interacting model: provide an orbit library with --orbits")
    total = est.grid.values + osc.values
    lo, hi = central_window(grid.e_min, grid.e_max)
    err_total = windowed_rel_l2(total, exact.values, grid.centers, lo, hi)
    err_smooth = windowed_rel_l2(est.grid.values, exact.values, grid.centers, lo, hi)
    out = _outdir(args)
    config = {"model_hash": model.content_hash(), "N": args.N, "bins": grid.n_bins,
              "emin": grid.e_min, "emax": grid.e_max, "sigma": sigma,
              "samples": args.samples, "seed": args.seed}
    meta = reporting.table_meta("compare", config)
    reporting.write_table(
        out / "dos.csv",
        {"E": grid.centers, "rho_exact_smoothed": exact.values,
         "rho_weyl": est.grid.values, "rho_weyl_stderr": est.stderr,
         "rho_osc": osc.values, "rho_total": total},
        meta,
    )
    plotting.plot_dos(out / "dos.png", grid.centers,
                      {"exact smoothed": exact.values, "smooth term": est.grid.values,
                       "smooth + oscillation": total})
    summary = {"rel_l2_total": err_total, "rel_l2_smooth_only": err_smooth,
               "window": [lo, hi]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    reporting.write_manifest(out / "manifest_compare.json", "compare", config, started,
                             summary)
    print(f"relative L2 (central window): smooth only {err_smooth:.4f}, "
          f"with oscillation {err_total:.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bhdos",
        description="Many-body density of states of Bose-Hubbard lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="size of a fixed-N sector")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("ed", help="exact levels and smoothed density")
    _add_model(p)
    p.add_argument("--N", type=int, required=True)
    _add_grid(p)
    _add_out(p)
    p.set_defaults(func=cmd_ed)

    p = sub.add_parser("weyl", help="smooth phase-space density term")
    _add_model(p)
    p.add_argument("--N", type=int, required=True)
    _add_grid(p)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_weyl)

    p = sub.add_parser("evolve", help="integrate the mean-field flow")
    _add_model(p)
    p.add_argument("--psi0", required=True, help="'re,im;re,im;...' or JSON file")
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--nt", type=int, default=1000)
    _add_out(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("fixed-points", help="relative equilibria on the shell")
    _add_model(p)
    p.add_argument("--N", type=int, default=0)
    p.add_argument("--nshell", type=float, default=None)
    p.add_argument("--nseeds", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_fixed_points)

    p = sub.add_parser("orbit-find", help="refine a pseudo-periodic orbit")
    _add_model(p)
    p.add_argument("--N", type=int, default=0)
    p.add_argument("--ntarget", type=float, default=None)
    p.add_argument("--seed-file", default=None, help="orbit JSON used as seed")
    p.add_argument("--model-free", default=None,
                   help="free model supplying the analytic seed (defaults to --model)")
    p.add_argument("--chi", type=int, default=None)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--energy", type=float, default=None)
    _add_out(p)
    p.set_defaults(func=cmd_orbit_find)

    p = sub.add_parser("trace", help="orbit-sum density from a family library")
    _add_model(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--orbits", required=True, help="family library JSON")
    p.add_argument("--with-exact", action="store_true")
    _add_grid(p)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("freefield-dos", help="closed-form density of a free lattice")
    _add_model(p)
    p.add_argument("--N", type=int, required=True)
    _add_grid(p)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_freefield_dos)

    p = sub.add_parser("freefield-check", help="pole-sum identity spot checks")
    _add_model(p)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--kmax", type=int, default=200)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_freefield_check)

    p = sub.add_parser("time-spectrum", help="recurrence amplitude of the levels")
    _add_model(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--nt", type=int, default=4096)
    _add_out(p)
    p.set_defaults(func=cmd_time_spectrum)

    p = sub.add_parser("compare", help="cross-validate the density estimates")
    _add_model(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--orbits", default=None, help="family library JSON")
    _add_grid(p)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
