"""Command line front end.

Subcommands: ``run`` (integrate one configured scenario), ``convergence``
(refinement study against the manufactured solution), ``check-mesh`` (angle
and uniformity audit), and ``scenarios`` (list the built-in setups).

Exit codes: 0 on success, 2 for configuration problems (bad config text,
unreadable or malformed mesh files, inconsistent parameters), 3 for solver
failures or policy refusals (iteration caps, obtuse meshes, aborted checks).

Heavy imports happen inside the handlers so ``--threads`` can pin the BLAS
thread pools through the environment before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys

#: maps --threads to the knobs the common BLAS backends actually read
_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_limit(argv) -> None:
    for k, arg in enumerate(argv):
        if arg == "--threads" and k + 1 < len(argv):
            value = argv[k + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
        else:
            continue
        if value.isdigit() and int(value) >= 1:
            for var in _THREAD_VARS:
                os.environ[var] = value
        return


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdglfem",
        description="finite-element solver for 2D superconductivity dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configured scenario")
    p_run.add_argument("--config", required=True, help="path to a config file")
    p_run.add_argument("--out", help="output directory (overrides the config)")
    p_run.add_argument("--threads", type=int, help="cap BLAS threads")
    p_run.add_argument(
        "--strict-acute", action="store_true", help="refuse weakly acute meshes too"
    )
    p_run.set_defaults(func=_cmd_run)

    p_conv = sub.add_parser("convergence", help="refinement study, manufactured solution")
    p_conv.add_argument("--config", help="optional config (kappa/sigma/T overrides)")
    p_conv.add_argument(
        "--resolutions", default="8,16,32,64", help="comma-separated subdivisions per unit"
    )
    p_conv.add_argument("--out", help="output directory for the study table")
    p_conv.add_argument("--threads", type=int, help="cap BLAS threads")
    p_conv.set_defaults(func=_cmd_convergence)

    p_check = sub.add_parser("check-mesh", help="angle and uniformity audit")
    src = p_check.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", help="mesh file (Gmsh ASCII v2 or native format)")
    src.add_argument("--config", help="config whose scenario mesh is audited")
    p_check.add_argument(
        "--strict-acute", action="store_true", help="fail on weakly acute meshes too"
    )
    p_check.set_defaults(func=_cmd_check_mesh)

    p_list = sub.add_parser("scenarios", help="list built-in scenarios")
    p_list.set_defaults(func=_cmd_scenarios)
    return parser


def _read_config(path):
    from .config import parse_config

    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        from .config import ConfigError

        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def _cmd_run(args) -> int:
    from .config import materialize
    from .output import ensure_dir, write_timeseries_csv, write_vtk_snapshot
    from .stepper import run

    cfg = _read_config(args.config)
    if args.out:
        cfg.out = args.out
    if args.strict_acute:
        cfg.strict_acute = True
    prepared = materialize(cfg)
    out_dir = ensure_dir(prepared.output.out or "out")

    snap_counter = [0]

    def on_snapshot(state, t_nominal):
        name = f"snapshot_{snap_counter[0]:03d}.vtk"
        write_vtk_snapshot(os.path.join(out_dir, name), state.mesh, state.A, state.psi, state.t)
        print(f"snapshot {name} (t={state.t:g}, requested {t_nominal:g})")
        snap_counter[0] += 1

    state = run(
        prepared.mesh,
        prepared.params,
        snapshot_times=prepared.output.snapshots,
        on_snapshot=on_snapshot,
    )

    write_timeseries_csv(
        os.path.join(out_dir, "series.csv"), state.history, prepared.output.series_cadence
    )
    write_vtk_snapshot(os.path.join(out_dir, "final.vtk"), state.mesh, state.A, state.psi, state.t)

    final = state.history[-1]
    print(f"scenario {cfg.scenario}: {state.n} steps to t={state.t:g}")
    print(
        f"energy {final.total:.10g} (covariant {final.covariant:.4g}, "
        f"magnetic {final.magnetic:.4g}, potential {final.potential:.4g})"
    )
    print(f"max |psi| = {final.max_psi:.12g}")
    if state.energy_violations or state.mbp_violations:
        print(
            f"violations: energy {len(state.energy_violations)}, "
            f"modulus bound {len(state.mbp_violations)}"
        )
    print(f"wrote {out_dir}/series.csv and {out_dir}/final.vtk")
    return 0


def _cmd_convergence(args) -> int:
    from .config import ConfigError
    from .output import ensure_dir, write_convergence_csv
    from .scenarios import run_manufactured_convergence

    kappa, sigma, T = 1.0, 1.0, 1.0
    out = args.out
    if args.config:
        cfg = _read_config(args.config)
        if cfg.scenario != "manufactured":
            raise ConfigError("convergence study requires scenario = manufactured")
        kappa = cfg.kappa if cfg.kappa is not None else kappa
        sigma = cfg.sigma if cfg.sigma is not None else sigma
        T = cfg.T if cfg.T is not None else T
        out = out or cfg.out
    try:
        resolutions = [int(tok) for tok in args.resolutions.split(",")]
    except ValueError:
        raise ConfigError(f"bad --resolutions value {args.resolutions!r}") from None
    if len(resolutions) < 2:
        raise ConfigError("need at least two resolutions for rates")

    reports, rates = run_manufactured_convergence(resolutions, kappa, sigma, T)

    header = f"{'1/h':>6} {'err A':>12} {'rate':>6} {'err curlA':>12} {'rate':>6} " \
             f"{'err psi':>12} {'rate':>6} {'err gradpsi':>12} {'rate':>6}"
    print(header)
    for k, rep in enumerate(reports):
        cells = [f"{round(1 / rep.h):>6}"]
        for name in ("A", "curl_A", "psi", "grad_psi"):
            cells.append(f"{getattr(rep, 'err_' + name):>12.4e}")
            cells.append(f"{rates[name][k - 1]:>6.2f}" if k else f"{'':>6}")
        print(" ".join(cells))

    if out:
        out_dir = ensure_dir(out)
        path = os.path.join(out_dir, "convergence.csv")
        write_convergence_csv(path, reports, rates)
        print(f"wrote {path}")
    return 0


def _cmd_check_mesh(args) -> int:
    from .config import materialize
    from .mesh import audit_mesh, load_mesh_file

    if args.mesh:
        mesh = load_mesh_file(args.mesh)
    else:
        mesh = materialize(_read_config(args.config)).mesh

    audit = audit_mesh(mesh)
    print(f"vertices {mesh.num_vertices}, edges {mesh.num_edges}, cells {mesh.num_cells}")
    print(f"mesh size h = {mesh.h:.6g}")
    print(f"angles: min {audit.min_angle_deg:.4f} deg, max {audit.max_angle_deg:.4f} deg")
    print(f"strictly acute: {audit.strictly_acute}")
    print(f"weakly acute:   {audit.weakly_acute}")
    print(f"quasi-uniformity ratio: {audit.quasi_uniformity_ratio:.4g}")

    if not audit.weakly_acute:
        print("REJECT: obtuse angles present; the solver will refuse this mesh")
        return 3
    if args.strict_acute and not audit.strictly_acute:
        print("REJECT: right angles present and --strict-acute was requested")
        return 3
    if not audit.strictly_acute:
        print("OK with warning: right angles present; bound checks stay on at runtime")
    else:
        print("OK: strictly acute")
    return 0


def _cmd_scenarios(args) -> int:
    from .scenarios import SCENARIO_NAMES, scenario_defaults
    from .stepper import AdaptiveTau

    for name in SCENARIO_NAMES:
        d = scenario_defaults(name)
        print(f"{name}: {d['description']}")
        for key in ("M", "kappa", "sigma", "T", "mu", "tau", "H", "psi0"):
            value = d[key]
            if isinstance(value, AdaptiveTau):
                value = (
                    f"adaptive (alpha={value.alpha:g}, tau_min={value.tau_min:g}, "
                    f"tau_max={value.tau_max:g})"
                )
            print(f"    {key} = {value}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_limit(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)

    from .config import ConfigError
    from .linalg import ConvergenceError
    from .mesh import EmptyMeshError, MalformedFileError, UnsupportedFormatError
    from .stepper import BoundViolationError, EnergyViolationError

    try:
        return args.func(args)
    except (ConfigError, UnsupportedFormatError, MalformedFileError, EmptyMeshError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, EnergyViolationError, BoundViolationError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
