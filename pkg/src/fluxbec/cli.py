"""Command-line front end.

    fluxbec {field,trap,sweep,evolve,tof,report} [--config PATH] [--out DIR]
            [--seed INT] [--threads INT]

Every command writes data files (CSV/JSON) into the output directory and
updates ``manifest.json`` there. Exit codes: 0 success, 2 configuration
error, 3 numerical or physics failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import constants
from .chip import profiles, solve_trap, sweep_distance
from .config import config_hash, load_config, setup_from, species_from
from .constants import GAUSS, MILLIGAUSS, MS, UM
from .entanglement import (CompositeState, apply_cnot, branch_overlap, cross_term_coefficients,
                           density_shift, entanglement_entropy, fringe_spacing, free_expand,
                           measured_fringe_period, noon_fringe_spacing, perturbation_distinguishability_check,
                           phase_budget, sample_outcomes, tof_density)
from .errors import ConfigError, FluxBecError, NoLocalExtrema, ZeroProbabilityBranch
from .fluxloop import LoopCircuit, bias_field_for_half_quantum
from .magnetostatics import GridSpec, field_grid, normalized_divergence
from .quantum_dynamics import (Grid1D, RampSchedule, Wavefunction1D, adiabatic_criterion,
                               evolve_branches, export_timeseries, g1d, ground_state,
                               relative_phase, thomas_fermi_mu)
from .trap import fit_axial_model, perturbation_amplitude

log = logging.getLogger("fluxbec")

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS = 0, 2, 3
ADIABATIC_FIDELITY = 0.99


# ---------------------------------------------------------------------------
# run context and manifest


class Run:
    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg["output_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash(cfg)
        self.species = species_from(cfg)
        self.setup = setup_from(cfg)
        self.threads = cfg["threads"]
        self.seed = cfg["seed"]
        self.files = []
        self.t0 = time.perf_counter()

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def write_json(self, name, obj):
        obj = dict(obj, config_hash=self.hash)
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self):
        mpath = self.out / "manifest.json"
        manifest = {}
        if mpath.exists():
            try:
                manifest = json.loads(mpath.read_text())
            except json.JSONDecodeError:
                manifest = {}
        if manifest.get("config_hash") != self.hash:
            manifest = {"commands": {}}
        manifest["config_hash"] = self.hash
        manifest["constants_version"] = constants.CONSTANTS_VERSION
        manifest["constants"] = constants.table()
        manifest["commands"][self.command] = {
            "files": sorted(set(self.files)),
            "wall_s": round(time.perf_counter() - self.t0, 3),
        }
        # everything in the directory, so stale files from other runs show up too
        manifest["files"] = {
            p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(self.out.iterdir()) if p.is_file() and p.name != "manifest.json"
        }
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def _trap_summary(solved):
    tc = solved.trap
    f = tc.frequencies_hz
    return {"minimum_um": tc.minimum / UM, "height_um": tc.minimum[2] / UM,
            "bottom_field_G": tc.bottom_field / GAUSS,
            "frequencies_hz": {"radial_x": f[0], "axial": f[1], "radial_z": f[2]},
            "bias_x_G": solved.bias_x / GAUSS, "bias_y_G": solved.bias_y / GAUSS}


# ---------------------------------------------------------------------------
# commands


def cmd_field(run: Run, args):
    setup = run.setup
    solved = solve_trap(setup)
    c = run.cfg["field"]
    hx, hy = (v * UM for v in c["half_width_um"])
    nx, ny = c["counts"]
    grid = GridSpec.centered(solved.trap.minimum, (hx, hy, 0.0), (nx, ny, 1))
    current = setup.loop_current()
    maps = {"fig3.csv": field_grid(solved.with_loop(current), grid),
            "fig4.csv": field_grid(solved.assembly, grid)}
    pts = grid.points().reshape(-1, 3)
    summary = {}
    for name, fmap in maps.items():
        fmap.to_csv(run.path(name))
        i = int(np.argmin(fmap.intensity))
        asm = solved.with_loop(current) if name == "fig3.csv" else solved.assembly
        summary[name] = {
            "loop_current_uA": (current if name == "fig3.csv" else 0.0) / 1e-6,
            "grid_minimum_um": pts[i] / UM,
            "grid_minimum_mG": fmap.intensity.reshape(-1)[i] / MILLIGAUSS,
            "nodes": int(fmap.intensity.size),
            "max_normalized_divergence": float(normalized_divergence(asm, pts, grid.spacing[:2].max()).max()),
        }
    run.write_json("field_report.json", {"trap": _trap_summary(solved), "maps": summary,
                                         "direction": setup.direction})


def _amplitude_or_none(profile):
    try:
        return perturbation_amplitude(profile)
    except NoLocalExtrema as exc:
        warnings.warn(f"{profile.branch}: {exc}; no perturbation amplitude")
        return None


def cmd_trap(run: Run, args):
    setup, sp = run.setup, run.species
    pc = run.cfg["profile"]
    window, samples = pc["window_um"] * UM, pc["samples"]
    solved = solve_trap(setup)
    ff = setup.flux_fraction
    circuit = LoopCircuit(setup.loop_geometry(), setup.wire_radius)
    report = {"trap": _trap_summary(solved),
              "flux_bias_G": bias_field_for_half_quantum(setup.loop_geometry()) / GAUSS,
              "inductance_H": circuit.self_inductance,
              "loop_current_uA": abs(setup.loop_current()) / 1e-6,
              "flux_fraction": ff, "amplitude_mG": {}, "fit": {}}
    for direction, fig in (("clockwise", "fig2a.csv"), ("anticlockwise", "fig2b.csv")):
        bare, full = profiles(solved, window, samples, ff, direction)
        _, half = profiles(solved, window, samples, ff / 2, direction)
        np.savetxt(run.path(fig), np.column_stack([bare.y_um, bare.intensity_mG,
                                                   half.intensity_mG, full.intensity_mG]),
                   delimiter=",", comments="", fmt="%.12g",
                   header="y_um,B_bare_mG,B_half_flux_fraction_mG,B_flux_fraction_mG")
        amp = _amplitude_or_none(full)
        report["amplitude_mG"][direction] = {"flux_fraction": amp,
                                             "half_flux_fraction": _amplitude_or_none(half)}
        if amp is None:
            report["fit"][direction] = None
            continue
        report["fit"][direction] = fit_axial_model(full).to_dict()
    fit_cw = report["fit"]["clockwise"]
    mu = thomas_fermi_mu(sp, solved.trap.frequencies, 1)
    report["tf_mu_coefficient_mG"] = mu.mG
    if fit_cw is not None:
        amp = report["amplitude_mG"]["clockwise"]["flux_fraction"]
        dist = perturbation_distinguishability_check(amp, sp, coefficient=mu.mG,
                                                     N=run.cfg["tof"]["N_check"])
        report["distinguishability"] = dist.to_dict()
    run.write_json("trap_report.json", report)
    return report


def cmd_sweep(run: Run, args):
    d_um = args.d if args.d else run.cfg["sweep"]["d_um"]
    pc = run.cfg["profile"]
    pts = sweep_distance(run.setup, [d * UM for d in d_um], window=pc["window_um"] * UM,
                         samples=pc["samples"], threads=run.threads)
    with open(run.path("fig5.csv"), "w") as fh:
        fh.write("d_um,amplitude_mG,extremum_amplitude_mG,status\n")
        for p in pts:
            fh.write(f"{p.d / UM:.9g},{p.amplitude_mG:.12g},{p.extremum_amplitude_mG:.12g},"
                     f"{'ok' if p.error is None else 'error: ' + p.error}\n")
    amps = {round(p.d / UM, 9): p.amplitude_mG for p in pts if p.error is None}
    inner = [amps[d] for d in sorted(amps) if 8 <= d <= 30]
    report = {"points": len(pts), "failed": sum(p.error is not None for p in pts),
              "strictly_decreasing_8_30um": bool(len(inner) > 1 and np.all(np.diff(inner) < 0)),
              "ratio_20_over_10": amps[20.0] / amps[10.0] if 10.0 in amps and 20.0 in amps else None}
    run.write_json("sweep_report.json", report)


def _evolve(run: Run, args):
    cfg, sp, setup = run.cfg, run.species, run.setup
    d = cfg["dynamics"]
    pc = cfg["profile"]
    solved = solve_trap(replace(setup, direction="clockwise"))
    wx, wy, wz = solved.trap.frequencies
    _, full = profiles(solved, pc["window_um"] * UM, pc["samples"], setup.flux_fraction, "clockwise")
    fit = fit_axial_model(full)
    T = (args.duration_ms if args.duration_ms is not None else d["ramp_duration_ms"]) * MS
    shape = args.shape or d["ramp_shape"]
    schedule = RampSchedule(T, fit.a, wy, shape, wy * d["omega_final_factor"])
    grid = Grid1D.centered(d["grid_half_width_um"] * UM, d["grid_n"])
    N = d["N"]
    g = g1d(sp, wx, wz) if d["interactions"] else 0.0
    psi0 = ground_state(grid, 0.5 * sp.mass * wy ** 2 * grid.y ** 2, sp, g, N)
    dt = d["dt_us"] * 1e-6 if d["dt_us"] else None
    snaps = [t * MS for t in d["snapshot_times_ms"] if t * MS <= T]
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        r0, r1 = evolve_branches(psi0, schedule, fit, sp, threads=min(run.threads, 2), dt=dt,
                                 g1d_value=g, sample_every=d["sample_every"], snapshot_times=snaps)
    phase = relative_phase(r0, r1, N)
    export_timeseries(run.path("dynamics.csv"), r0, r1, phase, sp)
    for b, r in ((0, r0), (1, r1)):
        for ts, psi in sorted(r.snapshots.items()):
            psi.to_csv(run.path(f"snapshot_branch{b}_t{ts / MS:g}ms.csv"))
        r.final.to_csv(run.path(f"branch{b}_final.csv"), fmt="%.17g")
    adi = adiabatic_criterion(schedule)
    mu1 = thomas_fermi_mu(sp, solved.trap.frequencies, 1)
    report = {
        "ramp": {"duration_ms": T / MS, "shape": shape, "a_final_mG_um": fit.a,
                 "omega_axial_hz": wy / (2 * np.pi), "dt_us": r0.dt / 1e-6},
        "grid": {"y_min_um": grid.y_min / UM, "y_max_um": grid.y_max / UM, "n": grid.n},
        "N": N, "g1d_J_m": g,
        "fit": fit.to_dict(), "fit_amplitude_mG": fit.amplitude(),
        "trap_frequencies_rad_s": [wx, wy, wz], "tf_mu_coefficient_mG": mu1.mG,
        "phi_final_rad": phase.final, "phi_final_wrapped_rad": float(phase.wrapped[-1]),
        "min_fidelity": {"branch0": r0.min_fidelity, "branch1": r1.min_fidelity},
        "final_fidelity": {"branch0": r0.final_fidelity, "branch1": r1.final_fidelity},
        "non_adiabatic": bool(min(r0.min_fidelity, r1.min_fidelity) < ADIABATIC_FIDELITY),
        "adiabatic_criterion": adi.to_dict(),
        "mu_final_mG": {"branch0": r0.mu[-1] / sp.moment / MILLIGAUSS,
                        "branch1": r1.mu[-1] / sp.moment / MILLIGAUSS},
        "geometric_phase_rad": 0.0,
    }
    run.write_json("evolve_report.json", report)
    return report


def cmd_evolve(run: Run, args):
    _evolve(run, args)


def _load_evolve(run: Run, args):
    rpath = run.out / "evolve_report.json"
    if rpath.exists():
        rep = json.loads(rpath.read_text())
        if rep.get("config_hash") == run.hash and all(
                (run.out / f"branch{b}_final.csv").exists() for b in (0, 1)):
            return rep
    log.info("no matching evolve outputs; running evolve first")
    return _evolve(run, argparse.Namespace(duration_ms=None, shape=None))


def cmd_tof(run: Run, args):
    sp = run.species
    rep = _load_evolve(run, args)
    g = rep["grid"]
    grid = Grid1D(g["y_min_um"] * UM, g["y_max_um"] * UM, g["n"])
    N = rep["N"]
    phi0 = Wavefunction1D.from_csv(run.out / "branch0_final.csv", grid, N)
    phi1 = Wavefunction1D.from_csv(run.out / "branch1_final.csv", grid, N)
    state = CompositeState.symmetric(phi0, phi1, N, rep["phi_final_rad"])
    t = (args.t_ms if args.t_ms is not None else run.cfg["tof"]["expansion_time_ms"]) * MS
    conds = args.conditioning or run.cfg["tof"]["conditionings"]
    expanded = free_expand(state, t, sp)
    dens = {}
    path = run.path("tof_density.csv")
    first = True
    for c in conds:
        try:
            dens[c] = tof_density(expanded, c, t)
        except ZeroProbabilityBranch as exc:
            warnings.warn(str(exc))
            continue
        dens[c].to_csv(path, append=not first)
        first = False

    # analytic fringe spacing from the in-trap branch geometry
    sigma0 = np.sqrt(2) * 0.5 * (phi0.width() + phi1.width())
    sep = abs(phi1.mean() - phi0.mean())
    lam = fringe_spacing(sigma0, sep, sp, t) if sep > 0 else None
    measured = None
    if "plus" in dens and "minus" in dens:
        try:
            measured, _ = measured_fringe_period(dens["plus"], dens["minus"])
        except ValueError as exc:
            log.info("fringe period not measurable: %s", exc)
    dist = perturbation_distinguishability_check(rep["fit_amplitude_mG"], sp,
                                                 coefficient=rep["tf_mu_coefficient_mG"],
                                                 N=run.cfg["tof"]["N_check"])
    ov = branch_overlap(state)
    outcomes = sample_outcomes(state, 1000, seed=run.seed)
    report = {
        "overlap_abs": abs(ov.overlap), "contrast_N": ov.contrast_N,
        "entropy_bits": entanglement_entropy(state), "phi_rad": state.Phi,
        "max_distinguishable_N": dist.max_N,
        "entropy_after_cnot_bits": entanglement_entropy(apply_cnot(state)),
        "expansion_time_ms": t / MS,
        "fringe_spacing_um": lam / UM if lam else None,
        "measured_fringe_period_um": measured / UM if measured else None,
        "noon_fringe_spacing_um": noon_fringe_spacing(lam, N) / UM if lam else None,
        "phase_budget_rad": phase_budget(N),
        "outcome_probabilities": {c: d.p_outcome for c, d in dens.items()},
        "unconditional_cross_term": (cross_term_coefficients(dens["none"], expanded)
                                     if "none" in dens else None),
        "plus_shift_um": density_shift(expanded, "plus") if "plus" in dens else None,
        "sampled_plus_fraction": float(np.mean(outcomes == 0)),
        "distinguishability": dist.to_dict(),
    }
    run.write_json("entanglement_report.json", report)


def cmd_report(run: Run, args):
    summaries = {}
    for p in sorted(run.out.glob("*_report.json")):
        summaries[p.stem] = json.loads(p.read_text())
    mpath = run.out / "manifest.json"
    manifest = json.loads(mpath.read_text()) if mpath.exists() else None
    run.write_json("report.json", {"manifest": manifest, "reports": summaries})
    for name, rep in summaries.items():
        stale = "" if rep.get("config_hash") == run.hash else " (other config)"
        print(f"{name}{stale}")


COMMANDS = {"field": cmd_field, "trap": cmd_trap, "sweep": cmd_sweep, "evolve": cmd_evolve,
            "tof": cmd_tof, "report": cmd_report}


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (merged over defaults)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="worker cap")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fluxbec", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("field", parents=[common], help="field maps through the trap minimum")
    sub.add_parser("trap", parents=[common], help="trap characterization and axial fits")
    p = sub.add_parser("sweep", parents=[common], help="perturbation amplitude versus distance")
    p.add_argument("--d", type=float, nargs="+", metavar="UM", help="distances in um")
    p = sub.add_parser("evolve", parents=[common], help="branch dynamics and relative phase")
    p.add_argument("--duration-ms", type=float)
    p.add_argument("--shape", choices=["linear", "smoothstep"])
    p = sub.add_parser("tof", parents=[common], help="time-of-flight densities")
    p.add_argument("--conditioning", action="append",
                   choices=["none", "loop0", "loop1", "plus", "minus"])
    p.add_argument("--t-ms", type=float)
    sub.add_parser("report", parents=[common], help="aggregate manifest and reports")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: v for k, v in (("output_dir", args.out), ("seed", args.seed),
                                       ("threads", args.threads)) if v is not None}
        cfg = load_config(args.config, overrides)
        run = Run(cfg, args.command)
        COMMANDS[args.command](run, args)
        run.finish()
    except ConfigError as exc:
        print(f"fluxbec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FluxBecError as exc:
        print(f"fluxbec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except Exception as exc:   # never a traceback to the shell
        print(f"fluxbec: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
