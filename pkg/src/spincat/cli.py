"""Command-line front end: ``spincat <subcommand> --scenario <path|preset:name> --out <dir>``.

Every subcommand writes CSV tables (header row with units, LF line endings,
shortest round-trip floats), an optional gnuplot script and a
``manifest.json`` holding the resolved scenario.  Exit status is 0 on
success, 2 for configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .catastrophe import bifurcation_branch, locate_triple_point, maxwell_branches, maxwell_oracle
from .dynamics import (
    PhononEnvironment,
    SweepSchedule,
    build_rate_matrix,
    equilibrium_state,
    hysteresis_loop,
    relaxation_time,
)
from .errors import ConfigError, SpincatError
from .probes import bloch_grid, fidelity, fidelity_susceptibility
from .scenario import Scenario, load_scenario
from .semiclassic import critical_points_circle, potential_full, potential_reduced, reduce_params
from .spinops import eigensystem
from .trajectory import field_at, minimum_gap, scan_trajectory

THREADS_ENV = "SPINCAT_THREADS"


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write an RFC 4180 table with LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_gnuplot(path: Path, data: str, xcol: int, ycols: Sequence[int], xlabel: str, ylabel: str) -> Path:
    plots = ", ".join(f"'{data}' using {xcol}:{c} with lines notitle" for c in ycols)
    text = (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        f"set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"
        f"plot {plots}\n"
    )
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_manifest(out: Path, command: str, scenario: Scenario, options: dict, files: List[Path]) -> Path:
    manifest = {
        "tool": "spincat",
        "version": __version__,
        "command": command,
        "scenario": scenario.name,
        "resolved": _jsonable(scenario.source),
        "model": _jsonable(
            {k: getattr(scenario.model, k) for k in ("S", "D", "E", "B40", "B42", "B43", "B44", "B", "g", "ref_spin")}
        ),
        "options": _jsonable(options),
        "files": sorted(p.name for p in files),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return path


def thread_count() -> int:
    """Worker cap from ``SPINCAT_THREADS`` (default: all cores)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def pmap(fn: Callable, items: Sequence) -> list:
    """Ordered map over ``items`` using up to :func:`thread_count` threads."""
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _field_model(model, axis: str, b: float):
    return model.with_field(**{axis: b})


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_spectrum(sc: Scenario, out: Path, opts) -> List[Path]:
    """Energy levels along the field scan or trajectory."""
    files = []
    if sc.scan is not None:
        xs = sc.scan.values(opts.steps)
        E = np.array(pmap(lambda b: eigensystem(_field_model(sc.model, sc.scan.axis, b)).energies, list(xs)))
        header = [f"{sc.scan.axis}_T"] + [f"E{k}_K" for k in range(E.shape[1])]
        files.append(write_csv(out / "spectrum.csv", header, (np.r_[x, e] for x, e in zip(xs, E))))
        files.append(write_gnuplot(out / "spectrum.gp", "spectrum.csv", 1, range(2, E.shape[1] + 2), "B (T)", "E (K)"))
        return files
    sc.require("trajectory")
    tr = sc.trajectory
    res = scan_trajectory(tr.trajectory, sc.model, n_steps=opts.steps or tr.steps, S=tr.S)
    n = res.energies.shape[1]
    header = ["wt_rad", "Bx_T", "Bz_T", "r1_K", "r2_K", "Vmin_K", "minima"] + [f"E{k}_K" for k in range(n)]
    rows = (
        [w, B[0], B[2], r[0], r[1], v, c] + list(e)
        for w, B, r, v, c, e in zip(res.wt, res.fields, res.r, res.global_value, res.census, res.energies)
    )
    files.append(write_csv(out / "spectrum.csv", header, rows))
    files.append(
        write_csv(
            out / "events.csv",
            ["kind", "wt_rad", "gap_K", "residual_K"],
            ([e.kind, e.location, e.gap if e.gap is not None else "", e.residual if e.residual is not None else ""] for e in res.events),
        )
    )
    files.append(write_gnuplot(out / "spectrum.gp", "spectrum.csv", 1, range(8, n + 8), "wt (rad)", "E (K)"))
    return files


def cmd_potential(sc: Scenario, out: Path, opts) -> List[Path]:
    """Reduced and full potential along both meridians."""
    n = opts.steps or 721
    theta = np.linspace(0.0, math.pi, n)
    rp0, rppi = reduce_params(sc.model)
    rows = zip(
        theta,
        potential_reduced(theta, rp0),
        potential_reduced(theta, rppi),
        potential_full(theta, 0.0, sc.model),
        potential_full(theta, math.pi, sc.model),
    )
    files = [write_csv(out / "potential.csv", ["theta_rad", "V0_K", "Vpi_K", "Vfull0_K", "Vfullpi_K"], rows)]
    cps = critical_points_circle(rp0)
    files.append(
        write_csv(
            out / "critical_points.csv",
            ["theta_rad", "phi_c_rad", "kind", "V_K", "d2V_K"],
            ([c.theta, c.phi_c, c.kind, c.value, c.second_derivative] for c in cps),
        )
    )
    files.append(write_gnuplot(out / "potential.gp", "potential.csv", 1, (2, 3), "theta (rad)", "V (K)"))
    return files


def cmd_separatrix(sc: Scenario, out: Path, opts) -> List[Path]:
    """Bifurcation set, Maxwell curves and the raster check."""
    sc.require("separatrix")
    sp = sc.separatrix
    rp = reduce_params(sc.model.with_field(0.0, 0.0, 0.0))[0]
    r3, r4, r5 = rp.r3, rp.r4, rp.r5
    rows = []
    for phi_c in (0.0, math.pi):
        br = bifurcation_branch(r3, r4, r5, phi_c)
        rows += [[phi_c, i, p[0], p[1]] for i, p in enumerate(br.points)]
    files = [write_csv(out / "bifurcation.csv", ["phi_c_rad", "index", "r1_K", "r2_K"], rows)]
    rows = []
    for cid, curve in enumerate(maxwell_branches(r3, r4, r5, grid=sp.grid)):
        phi = "" if curve.phi_c is None else curve.phi_c
        flags = curve.is_global if curve.is_global is not None else np.zeros(len(curve), bool)
        rows += [[cid, curve.kind, phi, int(f), p[0], p[1]] for p, f in zip(curve.points, flags)]
    files.append(write_csv(out / "maxwell.csv", ["curve", "kind", "phi_c_rad", "global", "r1_K", "r2_K"], rows))
    res = opts.resolution or sp.resolution
    pm = maxwell_oracle(r3, r4, r5, (sp.r1[0], sp.r1[1], sp.r2[0], sp.r2[1]), resolution=res)
    pts = pm.boundary_points()
    files.append(write_csv(out / "oracle_boundary.csv", ["r1_K", "r2_K"], pts))
    return files


def _require_env(sc: Scenario) -> PhononEnvironment:
    sc.require("environment")
    return sc.environment


def cmd_relax(sc: Scenario, out: Path, opts) -> List[Path]:
    """Relaxation time and rate along the field scan."""
    env = _require_env(sc)
    sc.require("scan")
    xs = sc.scan.values(opts.steps)

    def tau(b):
        return relaxation_time(build_rate_matrix(eigensystem(_field_model(sc.model, sc.scan.axis, b)), env))

    t = np.array(pmap(tau, list(xs)))
    files = [write_csv(out / "relax.csv", [f"{sc.scan.axis}_T", "tau_s", "Gamma_per_s"], zip(xs, t, 1.0 / t))]
    files.append(write_gnuplot(out / "relax.gp", "relax.csv", 1, (2,), "B (T)", "tau (s)"))
    return files


def cmd_hyst(sc: Scenario, out: Path, opts) -> List[Path]:
    """Hysteresis loops for each sweep."""
    env = _require_env(sc)
    sc.require("sweeps")
    files = []
    model = sc.model
    for sw in sc.sweeps:
        e = env if sw.gamma_t is None else env.replace(gamma_t=sw.gamma_t)
        sch = SweepSchedule(
            sw.schedule.rate,
            sw.schedule.b_min,
            sw.schedule.b_max,
            direction=sw.schedule.direction,
            offset=model.B,
            pattern=sw.schedule.pattern,
        )
        if sw.start == "saturated":
            p0 = np.zeros(model.dim)
            p0[0 if sch.segments()[0][1] > sch.b_start else -1] = 1.0
        else:
            p0 = equilibrium_state(model, e, sch.field(sch.b_start))
        n_out = opts.steps or sw.outputs
        loop = hysteresis_loop(model, e, sch, p0=p0, n_out=n_out, max_field_step=sw.field_step)
        tag = f"{sch.rate:g}".replace(".", "p")
        name = f"hyst_{tag}Tps.csv"
        rows = zip(loop.t, loop.b, loop.B[:, 0], loop.B[:, 1], loop.B[:, 2], loop.leg, loop.m)
        files.append(write_csv(out / name, ["t_s", "b_T", "Bx_T", "By_T", "Bz_T", "leg", "M_over_S"], rows))
    return files


def cmd_fidelity(sc: Scenario, out: Path, opts) -> List[Path]:
    """Fidelity and fidelity susceptibility along the field scan."""
    sc.require("scan")
    xs = list(sc.scan.values(opts.steps))
    states = (opts.state,) if opts.state is not None else sc.scan.states
    dB = opts.dB or sc.scan.dB
    axis = sc.scan.axis[-1].lower()

    def row(b):
        m = _field_model(sc.model, sc.scan.axis, b)
        eig = eigensystem(m)
        vals = []
        for k in states:
            vals.append(fidelity(m, k, dB, axis=axis).F)
            vals.append(fidelity_susceptibility(eig, k))
        return [b] + vals

    header = [f"{sc.scan.axis}_T"]
    for k in states:
        header += [f"F{k}", f"chi{k}_per_K2"]
    files = [write_csv(out / "fidelity.csv", header, pmap(row, xs))]
    files.append(write_gnuplot(out / "fidelity.gp", "fidelity.csv", 1, (2,), "B (T)", "F"))
    return files


def _parse_resolution(text: Optional[str]):
    if text is None:
        return None
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--resolution must look like WxH, got {text!r}") from None
    return (w, h)


def cmd_bloch(sc: Scenario, out: Path, opts) -> List[Path]:
    """Coherent-state maps of eigenstates."""
    res = opts.resolution or (128, 64)  # W = phi nodes, H = theta nodes
    if res[0] < 64 or res[1] < 32:
        raise ConfigError(f"bloch --resolution must be at least 64x32, got {res[0]}x{res[1]}")
    files = []
    if sc.trajectory is not None and sc.trajectory.bloch_wt:
        tr = sc.trajectory
        model = sc.model if tr.S is None else sc.model.at_spin(tr.S)
        points = [(f"wt{w:.4f}", model.replace(B=tuple(field_at(tr.trajectory, w)))) for w in tr.bloch_wt]
        states = tr.states
    else:
        points = [("field", sc.model)]
        states = (0,)
    if opts.state is not None:
        states = (opts.state,)
    for tag, m in points:
        eig = eigensystem(m)
        for k in states:
            g = bloch_grid(eig, k, (res[1], res[0]))
            name = f"bloch_{tag}_k{k}.csv"
            rows = (
                [t, p, g.weights[i, j], g.quad[i, j]]
                for i, t in enumerate(g.theta)
                for j, p in enumerate(g.phi)
            )
            files.append(write_csv(out / name, ["theta_rad", "phi_rad", "weight", "quad_sr"], rows))
    return files


def cmd_triple(sc: Scenario, out: Path, opts) -> List[Path]:
    """Triple-point search and the nearby gap minimum."""
    sc.require("triple")
    tp_spec = sc.triple
    rp = reduce_params(sc.model.with_field(0.0, 0.0, 0.0))[0]
    tp = locate_triple_point(rp.r3, rp.r4, rp.r5, tp_spec.seed)
    rows = [["r1_K", tp.r1], ["r2_K", tp.r2], ["depth_K", tp.depth], ["residual_K", tp.residual], ["iterations", tp.iterations]]
    for i, (theta, phi_c) in enumerate(tp.wells):
        rows += [[f"well{i}_theta_rad", theta], [f"well{i}_phi_c_rad", phi_c]]
    if tp_spec.gap_bracket is not None:
        model = sc.model.with_field(Bx=0.0) if tp_spec.gap_axis in ("r1", "r2") else sc.model
        ev = minimum_gap(model, tp_spec.gap_axis, tp_spec.gap_bracket, upper=tp_spec.gap_upper, S=tp_spec.gap_S)
        rows += [[f"gap_{tp_spec.gap_axis}", ev.location], ["gap_K", ev.gap], ["gap_upper_level", tp_spec.gap_upper]]
    return [write_csv(out / "triple.csv", ["quantity", "value"], rows)]


COMMANDS = {
    "spectrum": cmd_spectrum,
    "potential": cmd_potential,
    "separatrix": cmd_separatrix,
    "relax": cmd_relax,
    "hyst": cmd_hyst,
    "fidelity": cmd_fidelity,
    "bloch": cmd_bloch,
    "triple": cmd_triple,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spincat", description="Spin-Hamiltonian landscapes, separatrices and dynamics")
    p.add_argument("--version", action="version", version=f"spincat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=COMMANDS[name].__doc__)
        s.add_argument("--scenario", required=True, help="TOML file or preset:<name>")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--steps", type=int, default=None, help="override the number of grid points")
        s.add_argument("--resolution", default=None, help="raster size WxH")
        s.add_argument("--state", type=int, default=None, help="eigenstate index (energy order)")
        s.add_argument("--dB", type=float, default=None, help="fidelity field step (T)")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return the exit status."""
    args = build_parser().parse_args(argv)
    try:
        thread_count()
        sc = load_scenario(args.scenario)
        args.resolution = _parse_resolution(args.resolution)
        if args.steps is not None and args.steps < 2:
            raise ConfigError("--steps must be at least 2")
        if args.dB is not None and not args.dB > 0:
            raise ConfigError("--dB must be positive")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](sc, out, args)
        options = {k: getattr(args, k) for k in ("steps", "resolution", "state", "dB")}
        write_manifest(out, args.command, sc, options, files)
    except ConfigError as exc:
        print(f"spincat: config error: {exc}", file=sys.stderr)
        return 2
    except (SpincatError, ArithmeticError, np.linalg.LinAlgError) as exc:
        context = f"{args.command} on {args.scenario}"
        extra = ""
        residual = getattr(exc, "residual", None)
        if residual is not None:
            extra = f" (residual {residual:.3e})"
        print(f"spincat: numerical failure in {context}: {type(exc).__name__}: {exc}{extra}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
