"""Assembly of the semidiscrete system M U'' + N U' + A U = f(t).

Unknowns are element-local P_k coefficients: two displacement components on
every elastic triangle, then the velocity potential on every fluid
triangle. Matrices are scipy CSR built from triplets by a sorted,
order-independent reduction.
"""
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import affine_maps, to_physical
from .geometry import (ARTIFICIAL, ELASTIC, FLUID, INTERFACE, INTERIOR_ELASTIC,
                       INTERIOR_FLUID)

log = logging.getLogger(__name__)

FULL_JUMP = "full"
NORMAL_JUMP = "normal"


@dataclass(frozen=True)
class PhysicalParams:
    rho1: float = 1.0
    rho2: float = 1.0
    c: float = 1.0
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (self.rho1 > 0 and self.rho2 > 0 and self.c > 0):
            raise ValueError("densities and sound speed must be positive")
        if not (self.mu > 0 and 3 * self.lam + 2 * self.mu > 0):
            raise ValueError("Lame constants need mu > 0 and 3*lambda + 2*mu > 0")


@dataclass(frozen=True)
class PenaltyParams:
    alpha: float = 100.0
    beta: float = 1.0
    # "full": vector jump v1 - v2 paired with the full traction average.
    # "normal": scalar jump (v1 - v2).n paired with the normal traction.
    vector_jump: str = FULL_JUMP

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("penalty alpha must be positive")
        if not self.beta >= 1:
            raise ValueError("penalty exponent beta must be >= 1")
        if self.vector_jump not in (FULL_JUMP, NORMAL_JUMP):
            raise ValueError(f"unknown vector jump {self.vector_jump!r}")


class DofMap:
    """Global numbering: elastic element blocks (2 * n_local each) first, then fluid."""

    def __init__(self, mesh, basis):
        self.mesh = mesh
        self.n_local = nl = basis.n_local
        self.elastic_elements = np.flatnonzero(mesh.tags == ELASTIC)
        self.fluid_elements = np.flatnonzero(mesh.tags == FLUID)
        ne, nf = len(self.elastic_elements), len(self.fluid_elements)
        self.n_elastic = 2 * nl * ne
        self.size = self.n_elastic + nl * nf
        self.position = np.empty(mesh.n_triangles, dtype=np.int64)
        self.position[self.elastic_elements] = np.arange(ne)
        self.position[self.fluid_elements] = np.arange(nf)
        self.start = np.empty(mesh.n_triangles, dtype=np.int64)
        self.start[self.elastic_elements] = 2 * nl * np.arange(ne)
        self.start[self.fluid_elements] = self.n_elastic + nl * np.arange(nf)
        self.count = np.where(mesh.tags == ELASTIC, 2 * nl, nl)
        for a in (self.position, self.start, self.count):
            a.setflags(write=False)

    def dofs(self, elems):
        """Global indices (n, ndof) for elements that all share one tag."""
        elems = np.asarray(elems, dtype=np.int64)
        width = int(self.count[elems[0]]) if len(elems) else self.n_local
        return self.start[elems][:, None] + np.arange(width)

    @property
    def elastic_slice(self):
        return slice(0, self.n_elastic)

    @property
    def fluid_slice(self):
        return slice(self.n_elastic, self.size)

    def split(self, U):
        """Views (n_elastic_elems, 2, n_local) and (n_fluid_elems, n_local) of ``U``."""
        U = np.asarray(U)
        nl = self.n_local
        return (U[:self.n_elastic].reshape(-1, 2, nl), U[self.n_elastic:].reshape(-1, nl))

    def pack(self, u=None, phi=None):
        U = np.zeros(self.size)
        if u is not None:
            U[:self.n_elastic] = np.asarray(u).ravel()
        if phi is not None:
            U[self.n_elastic:] = np.asarray(phi).ravel()
        return U


def csr_from_triplets(rows, cols, vals, shape):
    """Sum duplicate entries after sorting by (row, col, value).

    Sorting on the value as a final key makes the floating point summation
    order independent of the order in which triplets were produced.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if len(vals) == 0:
        return sp.csr_matrix(shape)
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    new = np.ones(len(rows), dtype=bool)
    new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(new)
    summed = np.add.reduceat(vals, starts)
    r, c = rows[starts], cols[starts]
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    indptr = np.cumsum(indptr)
    return sp.csr_matrix((summed, c, indptr), shape=shape)


def _block_triplets(row_dofs, col_dofs, blocks):
    n, a = row_dofs.shape
    b = col_dofs.shape[1]
    rows = np.broadcast_to(row_dofs[:, :, None], (n, a, b))
    cols = np.broadcast_to(col_dofs[:, None, :], (n, a, b))
    return rows.ravel(), cols.ravel(), np.asarray(blocks).ravel()


def _chunked(items, threads, fn):
    """Apply ``fn`` to contiguous chunks of ``items``; results kept in chunk order."""
    items = np.asarray(items)
    if threads <= 1 or len(items) < 2 * threads:
        return [fn(items)]
    chunks = np.array_split(items, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def _merge(parts, shape):
    rows = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int64)
    vals = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    return csr_from_triplets(rows, cols, vals, shape)


def _gather(parts):
    rows, cols, vals = [], [], []
    for group in parts:
        for r, c, v in group:
            rows.append(r)
            cols.append(c)
            vals.append(v)
    return rows, cols, vals


def _gradient_gram(basis, inv, det):
    """G[n, c, d, i, j] = integral over element n of d_c phi_i * d_d phi_j."""
    w = basis.vol_rule.weights
    g = basis.vol_grads
    ref = np.einsum("q,qic,qjd->cdij", w, g, g)
    return np.abs(det)[:, None, None, None, None] * np.einsum(
        "nec,nfd,efij->ncdij", inv, inv, ref)


def elastic_volume_blocks(basis, inv, det, params):
    """Element matrices of (lam/rho1) div.div + (2 mu/rho1) eps:eps, shape (n, 2nl, 2nl)."""
    G = _gradient_gram(basis, inv, det)
    nl = basis.n_local
    lam = params.lam / params.rho1
    mu2 = 2 * params.mu / params.rho1
    trace = G[:, 0, 0] + G[:, 1, 1]
    K = np.empty((len(det), 2, nl, 2, nl))
    for a in range(2):
        for b in range(2):
            blk = lam * G[:, a, b] + mu2 * 0.5 * G[:, b, a]
            if a == b:
                blk = blk + mu2 * 0.5 * trace
            K[:, a, :, b, :] = blk
    return K.reshape(len(det), 2 * nl, 2 * nl)


def fluid_volume_blocks(basis, inv, det):
    G = _gradient_gram(basis, inv, det)
    return G[:, 0, 0] + G[:, 1, 1]


def assemble_mass(mesh, basis, dofmap, params, threads=1):
    """Block-diagonal mass: rho2/rho1 per displacement component, 1/c^2 for the potential."""
    shape = (dofmap.size, dofmap.size)
    nl = basis.n_local

    def elastic(elems):
        _, det, _ = affine_maps(mesh.corners(elems))
        blk = (params.rho2 / params.rho1) * np.abs(det)[:, None, None] * basis.mass
        full = np.zeros((len(elems), 2 * nl, 2 * nl))
        full[:, :nl, :nl] = blk
        full[:, nl:, nl:] = blk
        d = dofmap.dofs(elems)
        return _block_triplets(d, d, full)

    def fluid(elems):
        _, det, _ = affine_maps(mesh.corners(elems))
        blk = np.abs(det)[:, None, None] * basis.mass / params.c**2
        d = dofmap.dofs(elems)
        return _block_triplets(d, d, blk)

    parts = []
    if len(dofmap.elastic_elements):
        parts += _chunked(dofmap.elastic_elements, threads, elastic)
    if len(dofmap.fluid_elements):
        parts += _chunked(dofmap.fluid_elements, threads, fluid)
    return _merge(parts, shape)


class EdgeTraces:
    """Quadrature data on a set of edges: weights, points and both sides' traces."""

    def __init__(self, mesh, basis, edges):
        self.edges = edges = np.asarray(edges, dtype=np.int64)
        rule = basis.edge_rule
        self.lengths = mesh.edge_lengths[edges]
        self.normals = mesh.edge_normals[edges]
        self.weights = rule.weights[None, :] * self.lengths[:, None]  # (ne, nq)
        ev = mesh.edge_vertices[edges]
        p0 = mesh.vertices[ev[:, 0]]
        p1 = mesh.vertices[ev[:, 1]]
        s = rule.points
        self.points = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
        self.elements = mesh.edge_elements[edges]
        self.values = []
        self.grads = []
        for side in (0, 1):
            el = self.elements[:, side]
            if np.any(el < 0):
                self.values.append(None)
                self.grads.append(None)
                continue
            j = mesh.edge_local[edges, side]
            o = mesh.edge_orient[edges, side]
            _, _, inv = affine_maps(mesh.corners(el))
            self.values.append(basis.trace_values[j, o])
            self.grads.append(np.einsum("nqic,ncd->nqid", basis.trace_grads[j, o], inv))


def _traction(grads, normals, params):
    """Scaled traction sigma(phi_j e_b) n / rho1 for all (b, j): (ne, nq, c, b, j)."""
    lam = params.lam / params.rho1
    mu = params.mu / params.rho1
    gn = np.einsum("nqjd,nd->nqj", grads, normals)
    ne, nq, nl, _ = grads.shape
    t = np.zeros((ne, nq, 2, 2, nl))
    eye = np.eye(2)
    for c in range(2):
        for b in range(2):
            t[:, :, c, b, :] = (lam * grads[..., b] * normals[:, None, c, None]
                                + mu * (eye[c, b] * gn + grads[..., c] * normals[:, None, b, None]))
    return t


def elastic_edge_operators(tr, params, vector_jump):
    """Jump and averaged-flux operators over the two sides' dofs.

    Returns (jump, flux), each (ne, nq, ncomp, 2 * 2nl); ncomp is 2 for the
    full vector jump and 1 for the normal jump.
    """
    ne, nq = tr.weights.shape
    nl = tr.values[0].shape[-1]
    jump = np.zeros((ne, nq, 2, 2, 2, nl))  # comp, side, b, j
    flux = np.zeros((ne, nq, 2, 2, 2, nl))
    n = tr.normals
    for side, sign in ((0, 1.0), (1, -1.0)):
        for b in range(2):
            jump[:, :, b, side, b, :] = sign * tr.values[side]
        flux[:, :, :, side] = 0.5 * _traction(tr.grads[side], n, params)
    jump = jump.reshape(ne, nq, 2, 4 * nl)
    flux = flux.reshape(ne, nq, 2, 4 * nl)
    if vector_jump == NORMAL_JUMP:
        jump = np.einsum("nc,nqcd->nqd", n, jump)[:, :, None, :]
        flux = np.einsum("nc,nqcd->nqd", n, flux)[:, :, None, :]
    return jump, flux


def fluid_edge_operators(tr):
    ne, nq = tr.weights.shape
    nl = tr.values[0].shape[-1]
    jump = np.zeros((ne, nq, 1, 2, nl))
    flux = np.zeros((ne, nq, 1, 2, nl))
    n = tr.normals
    for side, sign in ((0, 1.0), (1, -1.0)):
        jump[:, :, 0, side] = sign * tr.values[side]
        flux[:, :, 0, side] = 0.5 * np.einsum("nqjd,nd->nqj", tr.grads[side], n)
    return jump.reshape(ne, nq, 1, 2 * nl), flux.reshape(ne, nq, 1, 2 * nl)


def edge_blocks(tr, jump, flux, penalty, parts):
    """Local (2-side) matrices of the consistency and penalty terms."""
    w = tr.weights
    out = 0.0
    if "consistency" in parts:
        jf = np.einsum("nq,nqci,nqcj->nij", w, jump, flux)
        out = out - jf - np.transpose(jf, (0, 2, 1))
    if "penalty" in parts:
        pen = penalty.alpha / tr.lengths**penalty.beta
        out = out + pen[:, None, None] * np.einsum("nq,nqci,nqcj->nij", w, jump, jump)
    return out


STIFFNESS_PARTS = ("volume", "consistency", "penalty")


def assemble_stiffness(mesh, basis, dofmap, params, penalty, parts=STIFFNESS_PARTS, threads=1):
    """Symmetric interior penalty stiffness A (no elastic/fluid coupling).

    ``parts`` selects a subset of the volume, consistency and penalty terms.
    """
    shape = (dofmap.size, dofmap.size)

    def elastic_vol(elems):
        _, det, inv = affine_maps(mesh.corners(elems))
        d = dofmap.dofs(elems)
        return _block_triplets(d, d, elastic_volume_blocks(basis, inv, det, params))

    def fluid_vol(elems):
        _, det, inv = affine_maps(mesh.corners(elems))
        d = dofmap.dofs(elems)
        return _block_triplets(d, d, fluid_volume_blocks(basis, inv, det))

    def elastic_edges(edges):
        tr = EdgeTraces(mesh, basis, edges)
        jump, flux = elastic_edge_operators(tr, params, penalty.vector_jump)
        blk = edge_blocks(tr, jump, flux, penalty, parts)
        d = np.concatenate([dofmap.dofs(tr.elements[:, 0]), dofmap.dofs(tr.elements[:, 1])], axis=1)
        return _block_triplets(d, d, blk)

    def fluid_edges(edges):
        tr = EdgeTraces(mesh, basis, edges)
        jump, flux = fluid_edge_operators(tr)
        blk = edge_blocks(tr, jump, flux, penalty, parts)
        d = np.concatenate([dofmap.dofs(tr.elements[:, 0]), dofmap.dofs(tr.elements[:, 1])], axis=1)
        return _block_triplets(d, d, blk)

    out = []
    if "volume" in parts:
        if len(dofmap.elastic_elements):
            out += _chunked(dofmap.elastic_elements, threads, elastic_vol)
        if len(dofmap.fluid_elements):
            out += _chunked(dofmap.fluid_elements, threads, fluid_vol)
    if "consistency" in parts or "penalty" in parts:
        e1 = mesh.edges_of_kind(INTERIOR_ELASTIC)
        e2 = mesh.edges_of_kind(INTERIOR_FLUID)
        if len(e1):
            out += _chunked(e1, threads, elastic_edges)
        if len(e2):
            out += _chunked(e2, threads, fluid_edges)
    return _merge(out, shape)


def assemble_damping(mesh, basis, dofmap, params=None, threads=1):
    """N = [[0, B], [-B^T, D]]: interface coupling and the absorbing boundary mass."""
    shape = (dofmap.size, dofmap.size)
    nl = basis.n_local

    def interface(edges):
        tr = EdgeTraces(mesh, basis, edges)
        ve, vf = tr.values
        # B[(a, i), j] = integral n_a phi^E_i phi^K_j
        blk = np.einsum("nq,na,nqi,nqj->naij", tr.weights, tr.normals, ve, vf)
        blk = blk.reshape(len(edges), 2 * nl, nl)
        de = dofmap.dofs(tr.elements[:, 0])
        df = dofmap.dofs(tr.elements[:, 1])
        r1, c1, v1 = _block_triplets(de, df, blk)
        r2, c2, v2 = _block_triplets(df, de, -np.transpose(blk, (0, 2, 1)))
        return (np.concatenate([r1, r2]), np.concatenate([c1, c2]), np.concatenate([v1, v2]))

    def absorbing(edges):
        tr = EdgeTraces(mesh, basis, edges)
        v = tr.values[0]
        blk = np.einsum("nq,nqi,nqj->nij", tr.weights, v, v)
        d = dofmap.dofs(tr.elements[:, 0])
        return _block_triplets(d, d, blk)

    out = []
    gi = mesh.edges_of_kind(INTERFACE)
    gr = mesh.edges_of_kind(ARTIFICIAL)
    if len(gi):
        out += _chunked(gi, threads, interface)
    if len(gr):
        out += _chunked(gr, threads, absorbing)
    return _merge(out, shape)


class LoadAssembler:
    """Interface load f(t) with the edge geometry cached across time steps."""

    def __init__(self, mesh, basis, dofmap, wave):
        self.wave = wave
        self.size = dofmap.size
        edges = mesh.edges_of_kind(INTERFACE)
        self.traces = tr = EdgeTraces(mesh, basis, edges) if len(edges) else None
        if tr is None:
            return
        self.elastic_dofs = dofmap.dofs(tr.elements[:, 0])
        self.fluid_dofs = dofmap.dofs(tr.elements[:, 1])
        # integration weights times basis traces, reused every step
        self._we = np.einsum("nq,nqi->nqi", tr.weights, tr.values[0])
        self._wf = np.einsum("nq,nqi->nqi", tr.weights, tr.values[1])

    def __call__(self, t):
        f = np.zeros(self.size)
        tr = self.traces
        if tr is None:
            return f
        pts = tr.points
        dn = np.einsum("nqc,nc->nq", self.wave.grad(pts, t), tr.normals)
        fluid = np.einsum("nq,nqi->ni", dn, self._wf)
        dt = self.wave.dt(pts, t)
        el = -np.einsum("nq,nc,nqi->nci", dt, tr.normals, self._we)
        np.add.at(f, self.fluid_dofs.ravel(), fluid.ravel())
        np.add.at(f, self.elastic_dofs.ravel(), el.reshape(len(el), -1).ravel())
        return f


def assemble_load(mesh, basis, dofmap, wave, t):
    return LoadAssembler(mesh, basis, dofmap, wave)(t)


@dataclass
class SemidiscreteSystem:
    M: sp.csr_matrix
    N: sp.csr_matrix
    A: sp.csr_matrix


def assemble_system(mesh, basis, dofmap, params, penalty, threads=1):
    return SemidiscreteSystem(
        M=assemble_mass(mesh, basis, dofmap, params, threads=threads),
        N=assemble_damping(mesh, basis, dofmap, params, threads=threads),
        A=assemble_stiffness(mesh, basis, dofmap, params, penalty, threads=threads),
    )


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class CoercivityReport:
    lambda_min: float
    norm: float
    asymmetry: float
    method: str

    @property
    def passed(self):
        return self.lambda_min >= -1e-10 * self.norm


def symmetry_residual(A):
    A = sp.csr_matrix(A)
    diff = A - A.T
    dmax = abs(diff).max() if diff.nnz else 0.0
    amax = abs(A).max() if A.nnz else 0.0
    return float(dmax), float(amax)


def check_coercivity(A, dense_limit=2000):
    """Estimate the smallest eigenvalue of the symmetric stiffness matrix.

    Dense eigensolve up to ``dense_limit`` unknowns, otherwise shift-invert
    Lanczos near zero. A negative estimate is reported with a warning.
    """
    dmax, amax = symmetry_residual(A)
    if dmax > 1e-12 * amax:
        raise SymmetryError(f"matrix is not symmetric: max|A - A^T| = {dmax:.3e}, max|A| = {amax:.3e}")
    n = A.shape[0]
    if n <= dense_limit:
        ev = scipy.linalg.eigvalsh(A.toarray())
        lmin, norm, method = float(ev[0]), float(np.abs(ev).max()), "dense"
    else:
        norm = float(spla.eigsh(A, k=1, which="LM", return_eigenvectors=False)[0])
        shift = -1e-3 * abs(norm)
        lmin = float(spla.eigsh(A, k=1, sigma=shift, which="LM", return_eigenvectors=False)[0])
        method = "shift-invert"
    report = CoercivityReport(lmin, abs(norm), dmax, method)
    if not report.passed:
        warnings.warn(f"stiffness matrix is indefinite: lambda_min = {lmin:.3e}", stacklevel=2)
    return report


def write_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
