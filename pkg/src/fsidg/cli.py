"""Command-line entry point: ``fsidg {mesh,run,converge,check}``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical
failure, 3 failed property check. ``OUTPUT_DIR`` in the environment
overrides the configured output directory; ``--output`` overrides both.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .assembly import DofMap, assemble_system, write_matrix_market
from .checks import check_matrices
from .config import ConfigError, load_config, serialize_config, with_overrides
from .diagnostics import convergence_study
from .experiment import EnergyWriter, VtkWriter, build_mesh, simulate
from .fem import make_basis
from .geometry import MeshError, write_msh
from .timestepper import NumericalError

log = logging.getLogger("fsidg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


def _output_dir(cfg):
    path = cfg.resolve_path(cfg.output.dir)
    os.makedirs(path, exist_ok=True)
    return path


def cmd_mesh(cfg, args):
    mesh = build_mesh(cfg)
    out = _output_dir(cfg)
    write_msh(mesh, os.path.join(out, "mesh.msh"))
    summary = mesh.summary()
    with open(os.path.join(out, "mesh_manifest.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_run(cfg, args):
    out = _output_dir(cfg)
    mesh = build_mesh(cfg)
    writers = {}

    def observers(mesh, basis, dofmap):
        writers["energy"] = EnergyWriter(mesh, basis, dofmap, cfg.physics)
        writers["vtk"] = VtkWriter(mesh, basis, dofmap, out, cfg.output.snapshot_stride)
        return (writers["energy"], writers["vtk"])

    sol = simulate(cfg, mesh, observers, threads=args.threads, check_stability=True)
    writers["energy"].write(os.path.join(out, "energy.csv"))
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(serialize_config(cfg))
    t, E, F = writers["energy"].rows[-1][:3]
    print(f"t = {t:.6g}  E(T) = {E:.17g}  F(T) = {F:.17g}")
    print(f"steps: {sol.params.n_steps}, l = {sol.params.l:.6g}, outputs in {out}")
    return EXIT_OK


def cmd_converge(cfg, args):
    out = _output_dir(cfg)
    report = convergence_study(cfg, cfg.levels, progress=lambda i, m, s: log.info(
        "level %d: h=%.4g, %d triangles done", i, m.h, m.n_triangles))
    path = os.path.join(out, "convergence.csv")
    report.write_csv(path)
    print(report.table())
    print(f"written {path}")
    return EXIT_OK


def cmd_check(cfg, args, tamper=None):
    """Matrix property report; ``tamper`` lets tests alter A before checking."""
    mesh = build_mesh(cfg)
    basis = make_basis(cfg.degree)
    dofmap = DofMap(mesh, basis)
    system = assemble_system(mesh, basis, dofmap, cfg.physics, cfg.penalty, threads=args.threads)
    A = system.A if tamper is None else tamper(system.A)
    results = check_matrices(mesh, dofmap, system.M, system.N, A)
    for r in results:
        print(r.line())
    if args.output is not None:
        out = _output_dir(cfg)
        for name, mat in (("M", system.M), ("N", system.N), ("A", A)):
            write_matrix_market(os.path.join(out, f"{name}.mtx"), mat)
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "some checks FAILED")
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {"mesh": cmd_mesh, "run": cmd_run, "converge": cmd_converge, "check": cmd_check}


def build_parser():
    p = argparse.ArgumentParser(prog="fsidg", description="Interior penalty DG solver for "
                                "time-domain acoustic/elastic interaction.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", default="builtin:example1",
                   help="config file, or builtin:example1 / builtin:example2 (default %(default)s)")
    p.add_argument("--threads", type=int, default=1, help="assembly threads (default 1)")
    p.add_argument("--output", help="output directory (overrides OUTPUT_DIR and the config)")
    p.add_argument("--levels", type=int, help="refinement levels for converge")
    p.add_argument("--snapshot-stride", type=int, help="VTK snapshot every N steps (0 = off)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        output = args.output if args.output is not None else os.environ.get("OUTPUT_DIR")
        cfg = with_overrides(cfg, output_dir=output, levels=args.levels,
                             snapshot_stride=args.snapshot_stride)
        if args.command == "converge" and cfg.levels < 3:
            raise ConfigError(f"converge needs at least 3 levels, got {cfg.levels}")
        return COMMANDS[args.command](cfg, args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, MeshError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
