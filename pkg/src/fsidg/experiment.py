"""Pipeline glue: config -> mesh -> matrices -> time integration."""
import csv
import logging
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .assembly import DofMap, LoadAssembler, assemble_system
from .diagnostics import DiscreteField, energy_monitor
from .fem import l2_project, make_basis
from .geometry import ELASTIC, FLUID, build_annulus_mesh, read_msh, refine
from .timestepper import NewmarkParams, integrate, max_stable_step
from .waves import ZeroWave, plane_wave, pulse_wave

log = logging.getLogger(__name__)


def builtin_mesh_path(name):
    return str(resources.files("fsidg") / "data" / f"{name}.msh")


def build_mesh(cfg):
    g = cfg.geometry
    if g.kind == "annulus":
        mesh = build_annulus_mesh(g.R0, g.R, g.n_radial, g.n_angular)
    else:
        path = cfg.resolve_path(g.path)
        if path.startswith("builtin:"):
            path = builtin_mesh_path(path.split(":", 1)[1])
        mesh = read_msh(path)
    return refine(mesh, g.refine)


def make_wave(cfg):
    w = cfg.wave
    if w.kind == "plane":
        return plane_wave(w.direction)
    if w.kind == "pulse":
        return pulse_wave(w.source, w.mode, cfg.physics.c)
    return ZeroWave()


def smooth_random_fields(seed, n_modes=4):
    """A few random low-frequency Fourier modes as (displacement, potential) callables."""
    rng = np.random.default_rng(seed)
    k = rng.normal(size=(3, n_modes, 2)) * 1.5
    ph = rng.uniform(0, 2 * np.pi, size=(3, n_modes))
    amp = rng.normal(size=(3, n_modes)) / n_modes

    def scalar(i):
        def f(x):
            return np.sum(amp[i] * np.sin(x @ k[i].T + ph[i]), axis=-1)
        return f

    fu1, fu2, fp = scalar(0), scalar(1), scalar(2)

    def disp(x):
        return np.stack([fu1(x), fu2(x)], axis=-1)

    return disp, fp


def random_initial_data(mesh, basis, dofmap, seed):
    """Projected smooth random U0 and V0."""
    out = []
    for s in (seed, seed + 1):
        disp, pot = smooth_random_fields(s)
        u = l2_project(mesh, basis, disp, ELASTIC)
        p = l2_project(mesh, basis, pot, FLUID)
        out.append(dofmap.pack(u, p))
    return out


def standing_wave(R0, R):
    """Radial mode cos(pi (r - R0) / (R - R0)); its normal derivative vanishes on both circles."""
    def f(x):
        r = np.linalg.norm(x, axis=-1)
        return np.cos(np.pi * (r - R0) / (R - R0))

    return f


def standing_initial_data(mesh, basis, dofmap, R0, R):
    """Fluid standing wave at rest; the solid starts undeformed.

    The data satisfy the interface and absorbing conditions at t = 0, so the
    solution stays smooth.
    """
    u = l2_project(mesh, basis, lambda x: np.zeros(x.shape[:-1] + (2,)), ELASTIC)
    p = l2_project(mesh, basis, standing_wave(R0, R), FLUID)
    return dofmap.pack(u, p), np.zeros(dofmap.size)


@dataclass
class Solution:
    field: DiscreteField
    state: object
    params: NewmarkParams
    system: object = None


def simulate(cfg, mesh, observers_factory=None, keep_system=False, threads=1,
             check_stability=False):
    """Run the configured experiment on ``mesh`` up to T."""
    basis = make_basis(cfg.degree)
    dofmap = DofMap(mesh, basis)
    system = assemble_system(mesh, basis, dofmap, cfg.physics, cfg.penalty, threads=threads)
    params = NewmarkParams(cfg.time.step(mesh.h), cfg.time.T, cfg.time.gamma, cfg.time.delta)
    U0 = V0 = None
    if cfg.initial.kind == "random":
        U0, V0 = random_initial_data(mesh, basis, dofmap, cfg.initial.seed)
    elif cfg.initial.kind == "standing":
        U0, V0 = standing_initial_data(mesh, basis, dofmap, cfg.geometry.R0, cfg.geometry.R)
    load = LoadAssembler(mesh, basis, dofmap, make_wave(cfg))
    observers = observers_factory(mesh, basis, dofmap) if observers_factory else ()
    log.info("mesh h=%.4g, %d dofs, %d steps", mesh.h, dofmap.size, params.n_steps)
    if check_stability and params.delta == 0.0:
        l_max = max_stable_step(system.M, system.A)
        if params.l >= l_max:
            log.warning("explicit step l=%.4g exceeds the stability limit %.4g (h/%.1f); "
                        "expect blow-up", params.l, l_max, mesh.h / l_max)
    state = integrate(system, load, params, U0, V0, observers, cfg.output.energy_stride)
    return Solution(DiscreteField(mesh, basis, dofmap, state.U), state, params.fitted(),
                    system if keep_system else None)


class EnergyWriter:
    """Collects t, E(t), F(t), solver iterations and residual; writes CSV."""

    def __init__(self, mesh, basis, dofmap, params):
        self.args = (mesh, basis, dofmap, params)
        self.rows = []

    def __call__(self, state):
        E = energy_monitor(state, *self.args, which="E")
        F = energy_monitor(state, *self.args, which="F")
        self.rows.append((state.t, E, F, state.iterations, state.residual))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E", "F", "iterations", "residual"])
            for t, E, F, it, res in self.rows:
                w.writerow([f"{t:.17g}", f"{E:.17g}", f"{F:.17g}", it, f"{res:.17g}"])


class VtkWriter:
    """Legacy VTK ASCII snapshots with per-element (discontinuous) vertex values."""

    def __init__(self, mesh, basis, dofmap, directory, stride):
        self.mesh, self.basis, self.dofmap = mesh, basis, dofmap
        self.directory = directory
        self.stride = stride
        self.written = []
        self._vert_vals = basis.values(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))

    def __call__(self, state):
        if self.stride <= 0 or state.step % self.stride:
            return
        path = os.path.join(self.directory, f"snapshot_{state.step:06d}.vtk")
        write_vtk(path, self.mesh, self.dofmap, state.U, self._vert_vals, state.t)
        self.written.append(path)


def write_vtk(path, mesh, dofmap, U, vert_vals, t=0.0):
    nt = mesh.n_triangles
    u, phi = dofmap.split(U)
    uu = np.zeros((nt, 3, 2))
    pp = np.zeros((nt, 3))
    if len(dofmap.elastic_elements):
        uu[dofmap.elastic_elements] = np.einsum("vi,nai->nva", vert_vals, u)
    if len(dofmap.fluid_elements):
        pp[dofmap.fluid_elements] = np.einsum("vi,ni->nv", vert_vals, phi)
    pts = mesh.corners().reshape(-1, 2)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\nfsidg t={t:.17g}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        for x, y in pts:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for e in range(nt):
            fh.write(f"3 {3 * e} {3 * e + 1} {3 * e + 2}\n")
        fh.write(f"CELL_TYPES {nt}\n" + "5\n" * nt)
        fh.write(f"CELL_DATA {nt}\nSCALARS subdomain int 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(str(int(v)) for v in mesh.tags) + "\n")
        fh.write(f"POINT_DATA {len(pts)}\nVECTORS u double\n")
        for a, b in uu.reshape(-1, 2):
            fh.write(f"{a:.17g} {b:.17g} 0\n")
        fh.write("SCALARS phi double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(f"{v:.17g}" for v in pp.ravel()) + "\n")
