"""``boundary-ctrl`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from ..control import (PerturbationSpec, PiecewiseConstantControl, assemble_boundary_run,
                       auxiliary_system, check_chambrion_conditions, check_normal_system,
                       reconstruct_vector_potential, synthesize_control)
from ..exceptions import BoundaryCtrlError, CertificationError, ConfigError, NonConvergenceError
from ..gauge import boundary_coefficients, quasi_periodic_residuals
from ..propagator import evolve
from .certify import run_trials
from .config import ExperimentConfig, load_config, resolve_state
from .io import write_binary_trajectory, write_csv, write_json, write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_NOT_CONVERGED, EXIT_CERTIFICATION = 0, 1, 2, 3, 4
ENVELOPE_SAMPLES = 64
CERTIFY_SLACK = 1e-8


def _system(cfg: ExperimentConfig):
    pert = PerturbationSpec(cfg.mu0, cfg.mu1, cfg.coupling_indices)
    return auxiliary_system(cfg.a, cfg.basis, pert)


# --------------------------------------------------------------------------
# commands; each returns (files, verdicts, exit code)


def cmd_spectrum(cfg: ExperimentConfig, out: Path, **_):
    sysm = _system(cfg)
    spec = sysm.spectrum
    lam = spec.eigenvalues
    gaps = list(spec.gaps) + [""]
    rows = [(k, int(m), lam[k], gaps[k]) for k, m in enumerate(spec.dominant_modes)]
    files = [write_csv(out / "spectrum.csv", ["index", "mode", "eigenvalue", "gap"], rows)]
    summary = {"dimension": spec.dim, "lowest": lam[0], "highest": lam[-1],
               "min_gap": float(np.min(spec.gaps)), "perturbed": cfg.mu0 != 0 or cfg.mu1 != 0}
    files.append(write_json(out / "spectrum.json", summary))
    return files, summary, EXIT_OK


def load_envelope(path, cfg: ExperimentConfig) -> PiecewiseConstantControl:
    """Read a ``window,u`` CSV as written by ``synthesize``."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "u" not in reader.fieldnames:
                raise ConfigError(f"envelope {path}: expected a header with a 'u' column", "envelope")
            values = [float(row["u"]) for row in reader]
    except OSError as exc:
        raise ConfigError(f"cannot read envelope {path}: {exc}", "envelope") from None
    except ValueError as exc:
        raise ConfigError(f"envelope {path}: {exc}", "envelope") from None
    return PiecewiseConstantControl(np.array(values), cfg.tau, cfg.c, strict=False)


def _zero_control(cfg: ExperimentConfig) -> PiecewiseConstantControl:
    n = int(round(cfg.horizon / cfg.tau))
    return PiecewiseConstantControl(np.zeros(n), cfg.tau, cfg.c, strict=False)


def run_evolution(cfg: ExperimentConfig, control: PiecewiseConstantControl, out: Path,
                  binary: bool = False):
    """Propagate the boundary run for ``control`` and write the trajectory files."""
    sysm = _system(cfg)
    basis = sysm.basis
    psi0 = resolve_state(cfg.initial, basis, sysm.spectrum, "initial")
    target = resolve_state(cfg.target, basis, sysm.spectrum, "target")
    env = reconstruct_vector_potential(control, cfg.a)
    path = assemble_boundary_run(env, basis, extra=(sysm.H0p, sysm.H1p))
    if path.duration == 0:
        traj = evolve(path, psi0, cfg.tolerance, k=1)
        traj_times, traj_states = traj.times[:1], traj.states[:1]
    else:
        traj = evolve(path, psi0, cfg.tolerance, rule=cfg.rule, max_k=cfg.max_k)
        traj_times, traj_states = traj.times, traj.states
    modes = [int(m) for m in basis.modes]
    header = ["t", "norm", "fidelity", "residual"] + [f"mag_pop_{m}" for m in modes] \
        + [f"bnd_pop_{m}" for m in modes]
    A = env(traj_times) if control.n_windows else np.full(len(traj_times), cfg.a)
    bnd = boundary_coefficients(traj_states, A, basis)
    numeric = np.column_stack([
        traj_times, np.linalg.norm(traj_states, axis=1), np.abs(traj_states @ target.conj()) ** 2,
        quasi_periodic_residuals(traj_states, A, basis, picture="magnetic"),
        np.abs(traj_states) ** 2, np.abs(bnd) ** 2])
    files = [write_csv(out / "trajectory.csv", header, numeric)]
    if binary:
        files.append(write_binary_trajectory(out / "trajectory.bct1", numeric))
    verdicts = {"k": traj.k, "gap": traj.gap, "final_fidelity": numeric[-1, 2],
                "max_norm_drift": float(np.max(np.abs(numeric[:, 1] - 1))),
                "max_residual": float(np.max(numeric[:, 3])), "horizon": control.horizon}
    files.append(write_json(out / "evolution.json", verdicts))
    return files, verdicts


def cmd_evolve(cfg: ExperimentConfig, out: Path, envelope=None, binary=False, **_):
    control = load_envelope(envelope, cfg) if envelope else _zero_control(cfg)
    files, verdicts = run_evolution(cfg, control, out, binary)
    return files, verdicts, EXIT_OK


def cmd_check(cfg: ExperimentConfig, out: Path, **_):
    sysm = _system(cfg)
    normal = check_normal_system(sysm.H0, sysm.H1)
    report = check_chambrion_conditions(sysm.spectrum, sysm.H1, cfg.Q)
    report.a1_self_adjoint = normal.a1_self_adjoint
    report.a2_eigenbasis = normal.a2_eigenbasis
    report.a3_domain = normal.a3_domain
    for key, value in normal.witnesses.items():
        if key == "notes":
            report.witnesses.setdefault("notes", []).extend(value)
        else:
            report.witnesses[key] = value
    payload = report.to_dict()
    files = [write_json(out / "check.json", payload)]
    return files, {"passed": report.passed}, EXIT_OK if report.passed else EXIT_CHECK


def cmd_synthesize(cfg: ExperimentConfig, out: Path, binary=False, force=False, **_):
    sysm = _system(cfg)
    psi0 = resolve_state(cfg.initial, sysm.basis, sysm.spectrum, "initial")
    target = resolve_state(cfg.target, sysm.basis, sysm.spectrum, "target")
    result = synthesize_control(sysm.H0, sysm.H1, psi0, target, cfg.c, cfg.horizon,
                                cfg.fidelity_target, tau=cfg.tau, seed=cfg.seed, force=force)
    control = result.control
    files = [write_csv(out / "control.csv", ["window", "u"], list(enumerate(control.values)))]
    env = reconstruct_vector_potential(control, cfg.a)
    env_rows = []
    for k in range(control.n_windows):
        ts = np.linspace(k * control.tau, (k + 1) * control.tau, ENVELOPE_SAMPLES, endpoint=False)
        env_rows += [(t, float(env(t)), float(env.derivative(t))) for t in ts]
    files.append(write_csv(out / "envelope.csv", ["t", "A", "dA"], env_rows))
    evo_files, evo = run_evolution(cfg, control, out, binary)
    files += evo_files
    summary = {"fidelity": result.fidelity, "converged": result.converged, "start": result.start,
               "windows": control.n_windows, "tau": control.tau, "horizon": control.horizon,
               "history": result.history, "boundary_run_fidelity": evo["final_fidelity"],
               "screening": result.report.to_dict() if result.report is not None else None}
    files.append(write_json(out / "synthesis.json", summary))
    verdicts = {"fidelity": result.fidelity, "converged": result.converged}
    return files, verdicts, EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_certify(cfg: ExperimentConfig, out: Path, **_):
    reports = run_trials(cfg.basis, cfg.seed, cfg.trials, cfg.noise)
    rows = [(i, r.bound, r.measured, r.margin, r.k) for i, r in enumerate(reports)]
    files = [write_csv(out / "certify.csv", ["trial", "bound", "measured", "margin", "k"], rows)]
    margins = np.array([r.margin for r in reports])
    worst = int(np.argmin(margins))
    ok = bool(np.all(margins >= -CERTIFY_SLACK))
    summary = {"trials": len(reports), "all_certified": ok, "worst_trial": worst,
               "worst_margin": float(margins[worst])}
    files.append(write_json(out / "certify.json", summary))
    if not ok:
        r = reports[worst]
        raise _CertifyFailed(files, summary, f"trial {worst} violates the bound: "
                                             f"measured {r.measured:.6e} > bound {r.bound:.6e}")
    return files, summary, EXIT_OK


class _CertifyFailed(Exception):
    def __init__(self, files, summary, message):
        super().__init__(message)
        self.files, self.summary = files, summary


COMMANDS = {"spectrum": cmd_spectrum, "evolve": cmd_evolve, "check": cmd_check,
            "synthesize": cmd_synthesize, "certify": cmd_certify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boundary-ctrl",
                                description="Boundary-controlled Schrodinger evolution on an interval.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value file, or .json")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--envelope", help="control CSV (window,u) for evolve")
    p.add_argument("--binary", action="store_true", help="also write a BCT1 binary trajectory")
    p.add_argument("--force", action="store_true", help="synthesize even if screening fails")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    start = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        files, verdicts, code = COMMANDS[args.command](
            cfg, out, envelope=args.envelope, binary=args.binary, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"not converged: {exc} (k = {exc.k}, last gap = {exc.gap})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (_CertifyFailed, CertificationError) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        if isinstance(exc, _CertifyFailed):
            write_manifest(out, args.command, cfg.to_dict(), exc.files, exc.summary,
                           time.perf_counter() - start)
        return EXIT_CERTIFICATION
    except BoundaryCtrlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK if args.command in ("check", "synthesize") else EXIT_CONFIG
    write_manifest(out, args.command, cfg.to_dict(), files, verdicts, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
