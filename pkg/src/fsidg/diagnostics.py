"""Norms, energy functionals and convergence measurements for DG fields."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import FULL_JUMP, NORMAL_JUMP, DofMap, elastic_volume_blocks, fluid_volume_blocks
from .fem import affine_maps, to_physical, to_reference
from .geometry import (ELASTIC, FLUID, INTERFACE, INTERIOR_ELASTIC, INTERIOR_FLUID,
                       edge_parents, locate_points)


@dataclass
class DiscreteField:
    """A global coefficient vector together with the space it lives in."""

    mesh: object
    basis: object
    dofmap: DofMap
    U: np.ndarray

    @classmethod
    def on(cls, mesh, basis, U):
        return cls(mesh, basis, DofMap(mesh, basis), np.asarray(U, dtype=float))

    def coefficients(self):
        """Per-triangle coefficient arrays: elastic (nt, 2, nl), fluid (nt, nl).

        Rows of triangles with the other tag are zero.
        """
        u, phi = self.dofmap.split(self.U)
        nt, nl = self.mesh.n_triangles, self.basis.n_local
        cu = np.zeros((nt, 2, nl))
        cp = np.zeros((nt, nl))
        cu[self.dofmap.elastic_elements] = u
        cp[self.dofmap.fluid_elements] = phi
        return cu, cp

    def evaluate(self, elems, pts):
        """Values and gradients at physical points ``pts`` (n, q, 2) in triangles ``elems`` (n,).

        Returns (u, grad_u, phi, grad_phi) shaped (n, q, 2), (n, q, 2, 2),
        (n, q), (n, q, 2); grad_u[..., a, d] = d u_a / d x_d.
        """
        cu, cp = self.coefficients()
        corners = self.mesh.corners(elems)
        _, _, inv = affine_maps(corners)
        ref = to_reference(corners, pts)
        vals = self.basis.values(ref)
        grads = np.einsum("nqic,ncd->nqid", self.basis.gradients(ref), inv)
        u = np.einsum("nqi,nai->nqa", vals, cu[elems])
        gu = np.einsum("nqid,nai->nqad", grads, cu[elems])
        p = np.einsum("nqi,ni->nq", vals, cp[elems])
        gp = np.einsum("nqid,ni->nqd", grads, cp[elems])
        return u, gu, p, gp


def _elastic_energy_density(gu, params):
    eps = 0.5 * (gu + np.swapaxes(gu, -1, -2))
    div = gu[..., 0, 0] + gu[..., 1, 1]
    return (2 * params.mu / params.rho1) * np.sum(eps**2, axis=(-1, -2)) + (params.lam / params.rho1) * div**2


def l2_norms(mesh, basis, dofmap, U):
    """(elastic, fluid) L2 norms of the displacement and the potential."""
    u, phi = dofmap.split(U)
    M = basis.mass
    out = []
    for elems, c in ((dofmap.elastic_elements, u), (dofmap.fluid_elements, phi)):
        if len(elems) == 0:
            out.append(0.0)
            continue
        _, det, _ = affine_maps(mesh.corners(elems))
        c = c.reshape(len(elems), -1, basis.n_local)
        s = np.einsum("n,nai,ij,naj->", np.abs(det), c, M, c)
        out.append(math.sqrt(max(s, 0.0)))
    return tuple(out)


def l2_norm(mesh, basis, dofmap, U):
    e, f = l2_norms(mesh, basis, dofmap, U)
    return math.hypot(e, f)


def _edge_quadrature(mesh, basis, edges):
    rule = basis.edge_rule
    ev = mesh.edge_vertices[edges]
    p0 = mesh.vertices[ev[:, 0]]
    p1 = mesh.vertices[ev[:, 1]]
    pts = p0[:, None, :] + rule.points[None, :, None] * (p1 - p0)[:, None, :]
    w = rule.weights[None, :] * mesh.edge_lengths[edges][:, None]
    return pts, w


def _vector_jump_sq(du, normals, vector_jump):
    if vector_jump == NORMAL_JUMP:
        return np.einsum("nqc,nc->nq", du, normals) ** 2
    return np.sum(du**2, axis=-1)


def dg_energy_norms(mesh, basis, dofmap, U, params, vector_jump=FULL_JUMP, interface_jumps=True):
    """Squared-norm pieces of the DG energy norm as a dict.

    Keys: elastic_volume, elastic_jumps, fluid_volume, fluid_jumps (squared).
    Jump terms carry the global 1/h weight. Interior edges use the jump
    between neighbours; interface edges use the trace from the elastic side
    for u and from the fluid side for phi.
    """
    fld = DiscreteField(mesh, basis, dofmap, U)
    rule = basis.vol_rule
    out = {}
    # squared gradients at quadrature points: no cancellation for fields in the kernel
    for key, elems in (("elastic_volume", dofmap.elastic_elements), ("fluid_volume", dofmap.fluid_elements)):
        if len(elems) == 0:
            out[key] = 0.0
            continue
        corners = mesh.corners(elems)
        _, det, _ = affine_maps(corners)
        w = np.abs(det)[:, None] * rule.weights[None, :]
        _, gu, _, gp = fld.evaluate(elems, to_physical(corners, rule.points))
        if key == "elastic_volume":
            out[key] = float(np.sum(w * _elastic_energy_density(gu, params)))
        else:
            out[key] = float(np.sum(w * np.sum(gp**2, axis=-1)))

    inv_h = 1.0 / mesh.h
    ej = 0.0
    fj = 0.0
    for kind in (INTERIOR_ELASTIC, INTERIOR_FLUID):
        edges = mesh.edges_of_kind(kind)
        if len(edges) == 0:
            continue
        pts, w = _edge_quadrature(mesh, basis, edges)
        el = mesh.edge_elements[edges]
        a = fld.evaluate(el[:, 0], pts)
        b = fld.evaluate(el[:, 1], pts)
        if kind == INTERIOR_ELASTIC:
            ej += np.sum(w * _vector_jump_sq(a[0] - b[0], mesh.edge_normals[edges], vector_jump))
        else:
            fj += np.sum(w * (a[2] - b[2]) ** 2)
    if interface_jumps:
        edges = mesh.edges_of_kind(INTERFACE)
        if len(edges):
            pts, w = _edge_quadrature(mesh, basis, edges)
            el = mesh.edge_elements[edges]
            a = fld.evaluate(el[:, 0], pts)
            b = fld.evaluate(el[:, 1], pts)
            ej += np.sum(w * _vector_jump_sq(a[0], mesh.edge_normals[edges], vector_jump))
            fj += np.sum(w * b[2] ** 2)
    out["elastic_jumps"] = inv_h * float(ej)
    out["fluid_jumps"] = inv_h * float(fj)
    return out


def dg_energy_norm(mesh, basis, dofmap, U, params, vector_jump=FULL_JUMP, interface_jumps=True):
    parts = dg_energy_norms(mesh, basis, dofmap, U, params, vector_jump, interface_jumps)
    return math.sqrt(max(sum(parts.values()), 0.0))


def energy_monitor(state, mesh, basis, dofmap, params, which="E"):
    """Energy E(t) from (V, U), or F(t) from (W, V).

    E = |sqrt(rho2/rho1) u_t|^2 + |sqrt(lam/rho1) div u|^2 + |sqrt(2mu/rho1) eps(u)|^2
        + |phi_t / c|^2 + |grad phi|^2
    """
    if which == "E":
        rate, field_ = state.V, state.U
    elif which == "F":
        rate, field_ = state.W, state.V
    else:
        raise ValueError(f"unknown energy {which!r}")
    u_r, p_r = dofmap.split(rate)
    u, p = dofmap.split(field_)
    M = basis.mass
    total = 0.0
    ee, fe = dofmap.elastic_elements, dofmap.fluid_elements
    if len(ee):
        _, det, inv = affine_maps(mesh.corners(ee))
        total += (params.rho2 / params.rho1) * np.einsum("n,nai,ij,naj->", np.abs(det), u_r, M, u_r)
        K = elastic_volume_blocks(basis, inv, det, params)
        c = u.reshape(len(ee), -1)
        total += np.einsum("ni,nij,nj->", c, K, c)
    if len(fe):
        _, det, inv = affine_maps(mesh.corners(fe))
        total += np.einsum("n,ni,ij,nj->", np.abs(det), p_r, M, p_r) / params.c**2
        K = fluid_volume_blocks(basis, inv, det)
        total += np.einsum("ni,nij,nj->", p, K, p)
    return float(total)


def newmark_energy(state, M, A, l):
    """Energy the explicit Newmark step (gamma = 1/2, delta = 0) dissipates exactly.

    That scheme is central differencing, U_{n+1} - U_{n-1} = 2 l V_n. With
    D = (U_{n+1} - U_n) / l = V + l W / 2 the quantity
    D^T M D + U_{n+1}^T A U_n never grows when the load is zero and N + N^T
    is positive semidefinite; it is positive while l < 2 / omega_max.
    Uses the same factor convention as ``energy_monitor`` (no 1/2).
    """
    D = state.V + 0.5 * l * state.W
    U1 = state.U + l * D
    return float(D @ (M @ D) + U1 @ (A @ state.U))


@dataclass
class ErrorRecord:
    h: float
    energy_error: float
    l2_error: float
    energy_elastic: float = 0.0
    energy_fluid: float = 0.0
    l2_elastic: float = 0.0
    l2_fluid: float = 0.0

    def __post_init__(self):
        vals = (self.h, self.energy_error, self.l2_error, self.energy_elastic,
                self.energy_fluid, self.l2_elastic, self.l2_fluid)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"error record entries must be finite and nonnegative: {vals}")


def observed_order(e0, e1, h0, h1):
    return math.log(e0 / e1) / math.log(h0 / h1)


@dataclass
class ConvergenceReport:
    records: list = field(default_factory=list)

    def orders(self, attr):
        out = [None]
        for a, b in zip(self.records, self.records[1:]):
            ea, eb = getattr(a, attr), getattr(b, attr)
            if a.h > b.h and ea > 0 and eb > 0:
                out.append(observed_order(ea, eb, a.h, b.h))
            else:
                out.append(None)
        return out

    @property
    def energy_orders(self):
        return self.orders("energy_error")

    @property
    def l2_orders(self):
        return self.orders("l2_error")

    def rows(self):
        for r, eo, lo in zip(self.records, self.energy_orders, self.l2_orders):
            yield r.h, r.energy_error, eo, r.l2_error, lo

    def write_csv(self, path):
        def fmt(v):
            return "" if v is None else f"{v:.17g}"

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "energy_error", "energy_order", "l2_error", "l2_order"])
            for row in self.rows():
                w.writerow([fmt(v) for v in row])

    def table(self):
        lines = [f"{'h':>10} {'energy error':>14} {'order':>7} {'L2 error':>12} {'order':>7}"]
        for h, ee, eo, le, lo in self.rows():
            lines.append(f"{h:>10.4g} {ee:>14.4e} {'-' if eo is None else f'{eo:.2f}':>7} "
                         f"{le:>12.4e} {'-' if lo is None else f'{lo:.2f}':>7}")
        return "\n".join(lines)


def _volume_errors(coarse, ref, params, fine_elems, anc, pts, w):
    """Accumulate squared L2 and energy volume errors at given points."""
    rc = coarse.evaluate(anc, pts)
    rf = ref.evaluate(fine_elems, pts)
    du = rf[0] - rc[0]
    dgu = rf[1] - rc[1]
    dp = rf[2] - rc[2]
    dgp = rf[3] - rc[3]
    is_el = coarse.mesh.tags[anc] == ELASTIC
    wel = w * is_el[:, None]
    wfl = w * (~is_el)[:, None]
    return {
        "l2_elastic": np.sum(wel * np.sum(du**2, axis=-1)),
        "l2_fluid": np.sum(wfl * dp**2),
        "energy_elastic": np.sum(wel * _elastic_energy_density(dgu, params)),
        "energy_fluid": np.sum(wfl * np.sum(dgp**2, axis=-1)),
    }


def cross_mesh_error(coarse, ref, params, vector_jump=FULL_JUMP):
    """Error between a coarse DG solution and a finer reference solution.

    When the reference mesh refines the coarse one, integrals run over the
    reference triangles (each inside one coarse ancestor) so the integrand is
    polynomial on every cell; jumps are taken on the reference edges lying
    on coarse edges, weighted by 1/h of the coarse mesh. Otherwise both
    fields are compared at coarse quadrature points located in the
    reference mesh.
    """
    cm, fm = coarse.mesh, ref.mesh
    nested = fm.depth_below(cm) is not None
    basis_q = ref.basis if nested else coarse.basis
    rule = basis_q.vol_rule
    if nested:
        fine_elems = np.arange(fm.n_triangles)
        anc = fm.ancestors(cm)
        corners = fm.corners(fine_elems)
        pts = to_physical(corners, rule.points)
        _, det, _ = affine_maps(corners)
    else:
        anc = np.arange(cm.n_triangles)
        corners = cm.corners(anc)
        pts = to_physical(corners, rule.points)
        _, det, _ = affine_maps(corners)
        fine_elems, _ = locate_points(fm, pts.reshape(-1, 2))
        fine_elems = fine_elems.reshape(pts.shape[:2])
    w = np.abs(det)[:, None] * rule.weights[None, :]

    if nested:
        acc = _volume_errors(coarse, ref, params, fine_elems, anc, pts, w)
    else:
        acc = {k: 0.0 for k in ("l2_elastic", "l2_fluid", "energy_elastic", "energy_fluid")}
        nq = rule.size
        for q in range(nq):
            part = _volume_errors(coarse, ref, params, fine_elems[:, q], anc,
                                  pts[:, q:q + 1], w[:, q:q + 1])
            for k in acc:
                acc[k] += part[k]

    ej, fj = _jump_errors(coarse, ref, vector_jump, nested)
    inv_h = 1.0 / cm.h
    e_el = acc["energy_elastic"] + inv_h * ej
    e_fl = acc["energy_fluid"] + inv_h * fj
    return ErrorRecord(
        h=cm.h,
        energy_error=math.sqrt(max(e_el + e_fl, 0.0)),
        l2_error=math.sqrt(max(acc["l2_elastic"] + acc["l2_fluid"], 0.0)),
        energy_elastic=math.sqrt(max(e_el, 0.0)),
        energy_fluid=math.sqrt(max(e_fl, 0.0)),
        l2_elastic=math.sqrt(max(acc["l2_elastic"], 0.0)),
        l2_fluid=math.sqrt(max(acc["l2_fluid"], 0.0)),
    )


def _jump_errors(coarse, ref, vector_jump, nested):
    cm, fm = coarse.mesh, ref.mesh
    kinds = (INTERIOR_ELASTIC, INTERIOR_FLUID, INTERFACE)
    if nested:
        parents = edge_parents(fm, cm)
        anc = fm.ancestors(cm)
        sel = np.flatnonzero((parents >= 0))
        sel = sel[np.isin(cm.edge_kinds[parents[sel]], kinds)]
        mesh_q, basis_q = fm, ref.basis
    else:
        sel = np.flatnonzero(np.isin(cm.edge_kinds, kinds))
        mesh_q, basis_q = cm, coarse.basis
    if len(sel) == 0:
        return 0.0, 0.0
    pts, w = _edge_quadrature(mesh_q, basis_q, sel)
    normals = mesh_q.edge_normals[sel]
    el = mesh_q.edge_elements[sel]
    kind = cm.edge_kinds[parents[sel]] if nested else cm.edge_kinds[sel]

    def diff(side):
        e = el[:, side]
        has = e >= 0
        out = [np.zeros(pts.shape), np.zeros(pts.shape[:2])]
        if not has.any():
            return out
        if nested:
            fe, ce = e[has], anc[e[has]]
            p = pts[has]
        else:
            ce = e[has]
            cent = cm.vertices[cm.triangles[ce]].mean(axis=1)
            # locate slightly inside the side's triangle (well beyond the location
            # tolerance), then evaluate on the edge itself
            p = pts[has]
            inside = p + 1e-6 * (cent[:, None, :] - p)
            fe, _ = locate_points(fm, inside.reshape(-1, 2))
            fe = fe.reshape(p.shape[:2])
        rc = coarse.evaluate(ce, p)
        if nested:
            rf = ref.evaluate(fe, p)
            du, dp = rf[0] - rc[0], rf[2] - rc[2]
        else:
            du = np.empty_like(rc[0])
            dp = np.empty_like(rc[2])
            for q in range(p.shape[1]):
                rf = ref.evaluate(fe[:, q], p[:, q:q + 1])
                du[:, q] = rf[0][:, 0] - rc[0][:, q]
                dp[:, q] = rf[2][:, 0] - rc[2][:, q]
        out[0][has] = du
        out[1][has] = dp
        return out

    a = diff(0)
    b = diff(1)
    ej = fj = 0.0
    m = kind == INTERIOR_ELASTIC
    ej += np.sum(w[m] * _vector_jump_sq(a[0][m] - b[0][m], normals[m], vector_jump))
    m = kind == INTERIOR_FLUID
    fj += np.sum(w[m] * (a[1][m] - b[1][m]) ** 2)
    m = kind == INTERFACE
    ej += np.sum(w[m] * _vector_jump_sq(a[0][m], normals[m], vector_jump))
    fj += np.sum(w[m] * b[1][m] ** 2)
    return float(ej), float(fj)


def convergence_study(config, levels=None, progress=None):
    """Errors at t = T on ``levels`` meshes against one extra refinement."""
    from .experiment import build_mesh, simulate

    levels = config.levels if levels is None else levels
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    meshes = [build_mesh(config)]
    for _ in range(levels):
        from .geometry import refine_uniform
        meshes.append(refine_uniform(meshes[-1]))
    results = []
    for i, mesh in enumerate(meshes):
        sol = simulate(config, mesh)
        results.append(sol)
        if progress:
            progress(i, mesh, sol)
    ref = results[-1].field
    report = ConvergenceReport()
    for sol in results[:-1]:
        report.records.append(cross_mesh_error(sol.field, ref, config.physics, config.penalty.vector_jump))
    return report
