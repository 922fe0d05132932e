"""Reference-element machinery for P_k on triangles.

Quadrature rules, the nodal Lagrange basis with its volume and edge-trace
tabulations, affine element maps and the element-local L2 projection.

Reference triangle: vertices (0,0), (1,0), (0,1). Local edge j is the edge
opposite local vertex j, traversed from vertex j+1 to vertex j+2 (mod 3).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 4

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (n, 2) on the triangle, (n,) in [0, 1] on an edge
    weights: np.ndarray
    degree: int

    @property
    def size(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, wt = roots_jacobi(n, 1.0, 0.0)
    x = 0.5 * (1.0 + t)
    wx = 0.25 * wt
    s, ws = np.polynomial.legendre.leggauss(n)
    eta = 0.5 * (1.0 + s)
    weta = 0.5 * ws
    X, E = np.meshgrid(x, eta, indexing="ij")
    pts = np.column_stack([X.ravel(), ((1.0 - X) * E).ravel()])
    w = np.outer(wx, weta).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * n - 1)


@lru_cache(maxsize=None)
def edge_rule(degree):
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    s, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (1.0 + s)
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * n - 1)


def lagrange_nodes(k):
    """Equispaced nodes: vertices, then edge nodes per local edge, then interior."""
    nodes = [REF_VERTICES[i] for i in range(3)]
    for j in range(3):
        a, b = REF_VERTICES[(j + 1) % 3], REF_VERTICES[(j + 2) % 3]
        for m in range(1, k):
            nodes.append(a + (b - a) * m / k)
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append(np.array([i / k, j / k]))
    return np.array(nodes)


def _exponents(k):
    return [(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]


def _monomials(k, pts):
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([x**a * y**b for a, b in _exponents(k)], axis=-1)


def _monomial_gradients(k, pts):
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    dx, dy = [], []
    for a, b in _exponents(k):
        dx.append(a * x ** max(a - 1, 0) * y**b if a > 0 else np.zeros_like(x))
        dy.append(b * x**a * y ** max(b - 1, 0) if b > 0 else np.zeros_like(x))
    return np.stack([np.stack(dx, axis=-1), np.stack(dy, axis=-1)], axis=-1)


def edge_points(j, s):
    """Reference coordinates of parameter values ``s`` on local edge ``j``."""
    a, b = REF_VERTICES[(j + 1) % 3], REF_VERTICES[(j + 2) % 3]
    s = np.asarray(s, dtype=float)[..., None]
    return (1.0 - s) * a + s * b


class ReferenceBasis:
    """Nodal Lagrange basis of degree k on the reference triangle.

    ``vol_values[q, i]`` and ``vol_grads[q, i, :]`` tabulate basis function i
    at volume quadrature point q. ``trace_values[j, o, q, i]`` tabulates the
    trace on local edge j at edge quadrature point q, with o = 0 for the edge
    parameter running along the local edge direction and o = 1 reversed.
    """

    def __init__(self, k):
        if not (1 <= k <= MAX_DEGREE):
            raise ValueError(f"unsupported polynomial degree {k} (need 1..{MAX_DEGREE})")
        self.degree = k
        self.nodes = lagrange_nodes(k)
        self.n_local = (k + 1) * (k + 2) // 2
        vander = _monomials(k, self.nodes)
        self._coeffs = np.linalg.inv(vander)
        self.vol_rule = triangle_rule(2 * k + 2)
        self.edge_rule = edge_rule(2 * k + 1)
        self.vol_values = self.values(self.vol_rule.points)
        self.vol_grads = self.gradients(self.vol_rule.points)
        s = self.edge_rule.points
        tv, tg = [], []
        for j in range(3):
            tv.append([self.values(edge_points(j, s)), self.values(edge_points(j, 1.0 - s))])
            tg.append([self.gradients(edge_points(j, s)), self.gradients(edge_points(j, 1.0 - s))])
        self.trace_values = np.array(tv)
        self.trace_grads = np.array(tg)
        w, phi = self.vol_rule.weights, self.vol_values
        self.mass = np.einsum("q,qi,qj->ij", w, phi, phi)
        for arr in (self.vol_values, self.vol_grads, self.trace_values, self.trace_grads, self.mass):
            arr.setflags(write=False)

    def values(self, pts):
        """Basis values at reference points, shape (..., n_local)."""
        return _monomials(self.degree, pts) @ self._coeffs

    def gradients(self, pts):
        """Reference gradients at reference points, shape (..., n_local, 2)."""
        g = _monomial_gradients(self.degree, pts)
        return np.einsum("...mc,mi->...ic", g, self._coeffs)


@lru_cache(maxsize=None)
def make_basis(k):
    return ReferenceBasis(k)


def affine_maps(corners):
    """Jacobians, determinants and inverses for triangles ``corners`` (..., 3, 2).

    The map is x = corners[0] + J xi with J = [p1 - p0, p2 - p0] as columns.
    """
    corners = np.asarray(corners, dtype=float)
    J = np.stack([corners[..., 1, :] - corners[..., 0, :],
                  corners[..., 2, :] - corners[..., 0, :]], axis=-1)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    scale = np.abs(corners).max(axis=(-1, -2)) ** 2
    if np.any(np.abs(det) <= 1e-14 * np.maximum(scale, 1e-300)):
        raise ValueError("degenerate triangle")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 1, 1] = J[..., 0, 0]
    inv[..., 0, 1] = -J[..., 0, 1]
    inv[..., 1, 0] = -J[..., 1, 0]
    inv /= det[..., None, None]
    return J, det, inv


def map_gradient(corners, ref_grad):
    """Physical gradient J^{-T} grad_ref for the affine triangle ``corners``."""
    _, _, inv = affine_maps(corners)
    return np.einsum("...c,cd->...d", np.asarray(ref_grad, dtype=float), inv)


def to_physical(corners, ref_pts):
    corners = np.asarray(corners, dtype=float)
    J, _, _ = affine_maps(corners)
    return corners[..., None, 0, :] + np.einsum("...cd,...qd->...qc", J, ref_pts)


def to_reference(corners, pts):
    """Inverse affine map; ``pts`` shape (..., n, 2) matched to ``corners`` (..., 3, 2)."""
    corners = np.asarray(corners, dtype=float)
    _, _, inv = affine_maps(corners)
    return np.einsum("...cd,...qd->...qc", inv, pts - corners[..., None, 0, :])


def l2_project(mesh, basis, field, tag):
    """Element-local L2 projection of ``field`` onto P_k on elements with ``tag``.

    ``field`` maps points of shape (N, 2) to values (N,) or vectors (N, 2).
    Returns coefficients (n_tagged, n_local) or (n_tagged, 2, n_local), in
    mesh order of the tagged elements.
    """
    elems = np.flatnonzero(mesh.tags == tag)
    corners = mesh.vertices[mesh.triangles[elems]]
    rule = basis.vol_rule
    xq = to_physical(corners, rule.points)
    f = np.asarray(field(xq.reshape(-1, 2)), dtype=float)
    if f.ndim == 1:
        f = f.reshape(len(elems), rule.size)
        load = np.einsum("q,qi,eq->ei", rule.weights, basis.vol_values, f)
        return np.linalg.solve(basis.mass, load.T).T
    f = f.reshape(len(elems), rule.size, -1)
    load = np.einsum("q,qi,eqc->eci", rule.weights, basis.vol_values, f)
    sol = np.linalg.solve(basis.mass, load.reshape(-1, basis.n_local).T).T
    return sol.reshape(len(elems), f.shape[-1], basis.n_local)
