"""Triangular meshes of the coupled solid/fluid domain.

A :class:`Mesh` holds vertices, counter-clockwise triangles tagged ELASTIC or
FLUID, and edges classified into the four sets the DG scheme sums over.
Edge data is kept in flat arrays; ``Mesh.edge(i)`` gives a record view.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

ELASTIC = 1
FLUID = 2
TAG_NAMES = {ELASTIC: "ELASTIC", FLUID: "FLUID"}

INTERIOR_ELASTIC = 0
INTERIOR_FLUID = 1
INTERFACE = 2
ARTIFICIAL = 3
# traction-free elastic boundary; only produced by non-strict meshes
FREE = 4
EDGE_KIND_NAMES = ("INTERIOR_ELASTIC", "INTERIOR_FLUID", "INTERFACE", "ARTIFICIAL", "FREE")


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Edge:
    vertices: tuple
    length: float
    normal: tuple
    kind: int
    elements: tuple  # (first, second); second is -1 on boundary edges
    local_index: tuple  # local edge number within each adjacent element


class Mesh:
    """Immutable triangle mesh with classified edges.

    Edge arrays (``ne`` edges):

    ``edge_vertices`` (ne, 2)
        endpoints, ordered along the first element's counter-clockwise boundary.
    ``edge_elements`` (ne, 2), ``edge_local`` (ne, 2), ``edge_orient`` (ne, 2)
        adjacent elements, their local edge numbers and whether the element
        traverses the edge reversed (1) or not (0). Column 1 is -1 on
        boundary edges. On INTERFACE edges column 0 is the elastic element.
    ``edge_normals`` (ne, 2)
        unit normal pointing out of the first element.
    ``edge_lengths``, ``edge_kinds`` (ne,)

    With ``strict=False`` an elastic boundary edge off the interface is
    classified FREE (no terms in the scheme) instead of being rejected;
    small test meshes use this.
    """

    def __init__(self, vertices, triangles, tags, parent=None, parent_index=None,
                 circles=None, strict=True):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        tags = np.array(tags, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(tags) != len(triangles):
            raise MeshError("triangles must have shape (n, 3) with one tag each")
        if not np.isin(tags, (ELASTIC, FLUID)).all():
            raise MeshError("triangle tags must be ELASTIC (1) or FLUID (2)")
        self.vertices = vertices
        self.triangles = triangles
        self.tags = tags
        self.parent = parent
        self.parent_index = None if parent_index is None else np.asarray(parent_index, dtype=np.int64)
        self.circles = dict(circles or {})
        self.strict = bool(strict)

        area2 = self._signed_area2()
        if np.any(area2 <= 0.0):
            bad = int(np.flatnonzero(area2 <= 0.0)[0])
            raise MeshError(f"triangle {bad} has non-positive signed area")
        self.areas = 0.5 * area2
        self._build_edges()
        tri_edge_len = np.linalg.norm(
            vertices[triangles[:, [1, 2, 0]]] - vertices[triangles], axis=2)
        self.diameters = tri_edge_len.max(axis=1)
        self.h = float(self.diameters.max())
        for a in (self.vertices, self.triangles, self.tags, self.areas, self.diameters):
            a.setflags(write=False)
        self._tree = None

    def _signed_area2(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]

    def _build_edges(self):
        tri = self.triangles
        nt = len(tri)
        # local edge j joins local vertices j+1 -> j+2
        starts = tri[:, [1, 2, 0]].ravel()
        ends = tri[:, [2, 0, 1]].ravel()
        key = np.sort(np.column_stack([starts, ends]), axis=1)
        uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            e = int(np.flatnonzero(counts > 2)[0])
            raise MeshError(f"edge {tuple(uniq[e])} is shared by more than two triangles")
        ne = len(uniq)
        owner = np.repeat(np.arange(nt), 3)
        local = np.tile(np.arange(3), nt)

        order = np.lexsort((owner, inverse))
        first = np.full(ne, -1, dtype=np.int64)
        second = np.full(ne, -1, dtype=np.int64)
        first_slot = np.full(ne, -1, dtype=np.int64)
        second_slot = np.full(ne, -1, dtype=np.int64)
        inv_sorted = inverse[order]
        is_first = np.ones(len(order), dtype=bool)
        is_first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        first_slot[inv_sorted[is_first]] = order[is_first]
        second_slot[inv_sorted[~is_first]] = order[~is_first]
        first = owner[first_slot]
        has2 = second_slot >= 0
        second[has2] = owner[second_slot[has2]]

        # interface edges: the elastic element goes first
        tags = self.tags
        swap = has2 & (tags[first] == FLUID) & (tags[np.maximum(second, 0)] == ELASTIC)
        first_slot[swap], second_slot[swap] = second_slot[swap], first_slot[swap].copy()
        first[swap], second[swap] = second[swap], first[swap].copy()

        kinds = np.empty(ne, dtype=np.int64)
        t1 = tags[first]
        t2 = np.where(has2, tags[np.maximum(second, 0)], 0)
        kinds[has2 & (t1 == ELASTIC) & (t2 == ELASTIC)] = INTERIOR_ELASTIC
        kinds[has2 & (t1 == FLUID) & (t2 == FLUID)] = INTERIOR_FLUID
        kinds[has2 & (t1 != t2)] = INTERFACE
        kinds[~has2 & (t1 == FLUID)] = ARTIFICIAL
        bad = ~has2 & (t1 == ELASTIC)
        if not self.strict:
            kinds[bad] = FREE
            bad[:] = False
        if np.any(bad):
            e = int(np.flatnonzero(bad)[0])
            v = (int(starts[first_slot[e]]), int(ends[first_slot[e]]))
            raise MeshError(
                f"unclassifiable edge {v}: boundary edge of elastic element {int(first[e])} "
                "is not on the fluid interface")

        ev = np.column_stack([starts[first_slot], ends[first_slot]])
        d = self.vertices[ev[:, 1]] - self.vertices[ev[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        normals = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

        loc = np.full((ne, 2), -1, dtype=np.int64)
        loc[:, 0] = local[first_slot]
        loc[has2, 1] = local[second_slot[has2]]
        orient = np.full((ne, 2), -1, dtype=np.int64)
        orient[:, 0] = 0
        orient[has2, 1] = (starts[second_slot[has2]] != ev[has2, 0]).astype(np.int64)

        self.edge_vertices = ev
        self.edge_elements = np.column_stack([first, second])
        self.edge_local = loc
        self.edge_orient = orient
        self.edge_normals = normals
        self.edge_lengths = length
        self.edge_kinds = kinds
        tri_edges = np.empty(3 * nt, dtype=np.int64)
        tri_edges[:] = inverse
        self.triangle_edges = tri_edges.reshape(nt, 3)
        for a in (ev, self.edge_elements, loc, orient, normals, length, kinds, self.triangle_edges):
            a.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edge_kinds)

    def edge(self, i):
        return Edge(
            vertices=tuple(int(v) for v in self.edge_vertices[i]),
            length=float(self.edge_lengths[i]),
            normal=tuple(float(c) for c in self.edge_normals[i]),
            kind=int(self.edge_kinds[i]),
            elements=tuple(int(e) for e in self.edge_elements[i]),
            local_index=tuple(int(e) for e in self.edge_local[i]),
        )

    def edges_of_kind(self, kind):
        return np.flatnonzero(self.edge_kinds == kind)

    def edge_counts(self):
        return {name: int(np.sum(self.edge_kinds == k)) for k, name in enumerate(EDGE_KIND_NAMES)}

    def area(self, tag=None):
        if tag is None:
            return float(self.areas.sum())
        return float(self.areas[self.tags == tag].sum())

    def corners(self, elems=None):
        if elems is None:
            return self.vertices[self.triangles]
        return self.vertices[self.triangles[elems]]

    def ancestors(self, coarse):
        """Index into ``coarse`` of the ancestor of every triangle of this mesh."""
        idx = np.arange(self.n_triangles)
        mesh = self
        while mesh is not coarse:
            if mesh.parent is None:
                raise MeshError("mesh is not a refinement descendant of the given mesh")
            idx = mesh.parent_index[idx]
            mesh = mesh.parent
        return idx

    def depth_below(self, coarse):
        depth, mesh = 0, self
        while mesh is not coarse:
            if mesh.parent is None:
                return None
            mesh = mesh.parent
            depth += 1
        return depth

    def summary(self):
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "elastic_triangles": int(np.sum(self.tags == ELASTIC)),
            "fluid_triangles": int(np.sum(self.tags == FLUID)),
            "h": self.h,
            "edges": self.edge_counts(),
        }


def _orient_ccw(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    triangles = triangles.copy()
    triangles[neg] = triangles[neg][:, [0, 2, 1]]
    return triangles


def _stitch_rings(inner, outer, inner_angles, outer_angles):
    """Triangulate the strip between two closed rings of vertex ids."""
    tris = []
    na, nb = len(inner), len(outer)
    i = j = 0
    while i < na or j < nb:
        next_a = inner_angles[i + 1] if i < na else np.inf
        next_b = outer_angles[j + 1] if j < nb else np.inf
        if next_b <= next_a:
            tris.append((inner[i % na], outer[j % nb], outer[(j + 1) % nb]))
            j += 1
        else:
            tris.append((inner[i % na], outer[j % nb], inner[(i + 1) % na]))
            i += 1
    return tris


def build_annulus_mesh(R0, R, n_radial, n_angular, layout="uniform"):
    """Disk of radius R0 (ELASTIC) inside the annulus R0 < r < R (FLUID).

    ``n_angular`` vertices sit on the interface circle and ``n_radial``
    bands of width (R - R0) / n_radial fill the annulus. The disk is filled
    by concentric rings of the same width whose vertex counts shrink toward
    a center fan.

    ``layout="uniform"`` grows the vertex count of each fluid ring with its
    radius, so triangles stay close to the same size and shape everywhere.
    ``layout="polar"`` keeps ``n_angular`` vertices on every fluid ring and
    splits each polar quad into two triangles.
    """
    if not (R0 > 0 and R > R0):
        raise MeshError(f"need R > R0 > 0, got R0={R0}, R={R}")
    if n_angular < 8 or n_radial < 1:
        raise MeshError("need n_angular >= 8 and n_radial >= 1")
    if layout not in ("uniform", "polar"):
        raise MeshError(f"unknown annulus layout {layout!r}")

    dr = (R - R0) / n_radial
    verts = [np.zeros((1, 2))]
    ring_ids = []
    ring_angles = []
    next_id = 1

    def add_ring(r, n, stagger):
        nonlocal next_id
        ang = 2 * np.pi * (np.arange(n) + 0.5 * stagger) / n
        verts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        ring_ids.append(np.arange(next_id, next_id + n))
        ring_angles.append(np.append(ang, ang[0] + 2 * np.pi))
        next_id += n

    n_core = max(1, int(round(R0 / dr)))
    for i in range(1, n_core + 1):
        n_i = n_angular if i == n_core else max(6, int(round(n_angular * i / n_core)))
        add_ring(R0 * i / n_core, n_i, (n_core - i) % 2 if layout == "uniform" else 0)
    for i in range(1, n_radial + 1):
        r = R if i == n_radial else R0 + i * dr
        n_i = n_angular if layout == "polar" else int(round(n_angular * r / R0))
        add_ring(r, n_i, i % 2 if layout == "uniform" else 0)

    tris = []
    first = ring_ids[0]
    for a in range(len(first)):
        tris.append((0, first[a], first[(a + 1) % len(first)]))
    for i in range(1, len(ring_ids)):
        if layout == "polar" and i >= n_core:
            lo, hi = ring_ids[i - 1], ring_ids[i]
            for j in range(n_angular):
                a, b = lo[j], lo[(j + 1) % n_angular]
                c, d = hi[(j + 1) % n_angular], hi[j]
                tris.extend([(a, d, c), (a, c, b)])
        else:
            tris.extend(_stitch_rings(ring_ids[i - 1], ring_ids[i], ring_angles[i - 1], ring_angles[i]))
    n_elastic = sum(1 for t in tris if max(t) < ring_ids[n_core - 1][-1] + 1)
    tags = [ELASTIC] * n_elastic + [FLUID] * (len(tris) - n_elastic)

    vertices = np.vstack(verts)
    triangles = _orient_ccw(vertices, np.array(tris, dtype=np.int64))
    circles = {INTERFACE: ((0.0, 0.0), float(R0)), ARTIFICIAL: ((0.0, 0.0), float(R))}
    return Mesh(vertices, triangles, tags, circles=circles)


def refine_uniform(mesh):
    """Split every triangle into four through its edge midpoints.

    Children of coarse triangle p are 4p..4p+3 (three corner triangles, then
    the middle one). Midpoints on INTERFACE/ARTIFICIAL edges are pushed onto
    the circle recorded in ``mesh.circles`` for that edge kind.
    """
    nv = mesh.n_vertices
    ev = mesh.edge_vertices
    mid = 0.5 * (mesh.vertices[ev[:, 0]] + mesh.vertices[ev[:, 1]])
    for kind, (center, radius) in mesh.circles.items():
        sel = mesh.edge_kinds == kind
        c = np.asarray(center, dtype=float)
        d = mid[sel] - c
        mid[sel] = c + radius * d / np.linalg.norm(d, axis=1)[:, None]
    vertices = np.vstack([mesh.vertices, mid])

    tri = mesh.triangles
    te = mesh.triangle_edges + nv  # midpoint of local edge j (opposite vertex j)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    m_bc, m_ca, m_ab = te[:, 0], te[:, 1], te[:, 2]
    children = np.stack([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ], axis=1).reshape(-1, 3)
    tags = np.repeat(mesh.tags, 4)
    parent_index = np.repeat(np.arange(mesh.n_triangles), 4)
    return Mesh(vertices, children, tags, parent=mesh, parent_index=parent_index,
                circles=mesh.circles, strict=mesh.strict)


def refine(mesh, levels):
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def edge_parents(fine, coarse):
    """Coarse edge containing each fine edge, or -1 for edges inside coarse triangles."""
    depth = fine.depth_below(coarse)
    if depth is None:
        raise MeshError("mesh is not a refinement descendant of the given mesh")
    if depth == 0:
        return np.arange(fine.n_edges)
    # one level: a fine edge on coarse edge e joins an endpoint of e to its midpoint nv+e
    par = fine.parent
    nv = par.n_vertices
    ev = fine.edge_vertices
    lo = ev.min(axis=1)
    hi = ev.max(axis=1)
    result = np.full(fine.n_edges, -1, dtype=np.int64)
    sel = (hi >= nv) & (lo < nv)
    e = hi[sel] - nv
    pv = par.edge_vertices[e]
    ok = (pv[:, 0] == lo[sel]) | (pv[:, 1] == lo[sel])
    idx = np.flatnonzero(sel)[ok]
    result[idx] = e[ok]
    if depth == 1:
        return result
    up = edge_parents(par, coarse)
    out = np.full(fine.n_edges, -1, dtype=np.int64)
    has = result >= 0
    out[has] = up[result[has]]
    return out


def barycentric(corners, pts):
    """Barycentric coordinates of ``pts`` (..., 2) in triangles ``corners`` (..., 3, 2)."""
    p0, p1, p2 = corners[..., 0, :], corners[..., 1, :], corners[..., 2, :]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    r = pts - p0
    l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
    l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.einsum("...c,...c->...", p - a, ab) / np.einsum("...c,...c->...", ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def _triangle_distance(corners, pts, bary):
    inside = bary.min(axis=-1) >= 0.0
    d = np.minimum.reduce([
        _segment_distance(pts, corners[..., 0, :], corners[..., 1, :]),
        _segment_distance(pts, corners[..., 1, :], corners[..., 2, :]),
        _segment_distance(pts, corners[..., 2, :], corners[..., 0, :]),
    ])
    return np.where(inside, 0.0, d)


CONTAIN_TOL = 1e-9
FAR_TOL = 1e-6


def _descend(mesh, coarse, coarse_elem, pts):
    """Walk from ancestors ``coarse_elem`` in ``coarse`` down to ``mesh``."""
    chain = []
    m = mesh
    while m is not coarse:
        chain.append(m)
        m = m.parent
    elem = np.asarray(coarse_elem, dtype=np.int64)
    for m in reversed(chain):
        cand = 4 * elem[:, None] + np.arange(4)
        bary = barycentric(m.corners(cand), pts[:, None, :])
        score = bary.min(axis=-1)
        # lowest child index among those containing the point, else the best fit
        inside = score >= -CONTAIN_TOL
        pick = np.where(inside.any(axis=1), inside.argmax(axis=1), score.argmax(axis=1))
        elem = cand[np.arange(len(elem)), pick]
    return elem


def _root(mesh):
    while mesh.parent is not None:
        mesh = mesh.parent
    return mesh


def _brute_locate(mesh, pts):
    if mesh._tree is None:
        cent = mesh.vertices[mesh.triangles].mean(axis=1)
        mesh._tree = cKDTree(cent)
    n = len(pts)
    k = min(mesh.n_triangles, 16)
    elem = np.full(n, -1, dtype=np.int64)
    todo = np.arange(n)
    while len(todo):
        _, cand = mesh._tree.query(pts[todo], k=k)
        cand = np.atleast_2d(cand).reshape(len(todo), -1)
        bary = barycentric(mesh.corners(cand), pts[todo][:, None, :])
        inside = bary.min(axis=-1) >= -CONTAIN_TOL
        # lowest element index among containing candidates
        masked = np.where(inside, cand, np.iinfo(np.int64).max)
        best = masked.min(axis=1)
        found = inside.any(axis=1)
        elem[todo[found]] = best[found]
        todo = todo[~found]
        if len(todo) == 0:
            break
        if k >= mesh.n_triangles:
            dist = _triangle_distance(mesh.corners(cand[~found]), pts[todo][:, None, :],
                                      bary[~found])
            j = dist.argmin(axis=1)
            near = dist[np.arange(len(todo)), j] <= FAR_TOL * mesh.h
            if not near.all():
                p = pts[todo[~near][0]]
                raise LookupError(f"point ({p[0]:.17g}, {p[1]:.17g}) is outside the mesh")
            elem[todo] = cand[~found][np.arange(len(todo)), j]
            break
        k = min(mesh.n_triangles, 4 * k)
    return elem


def locate_points(mesh, pts, coarse_hint=None):
    """Element containing each point of ``pts`` (N, 2) and its barycentrics.

    With ``coarse_hint=(coarse_mesh, elems)`` the search descends the
    refinement hierarchy from known ancestors; otherwise meshes with a
    parent are searched from the hierarchy root down.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if coarse_hint is not None:
        coarse, elems = coarse_hint
        elem = _descend(mesh, coarse, elems, pts)
    elif mesh.parent is not None:
        root = _root(mesh)
        elem = _descend(mesh, root, _brute_locate(root, pts), pts)
        bary = barycentric(mesh.corners(elem), pts)
        bad = bary.min(axis=1) < -CONTAIN_TOL
        if bad.any():
            # curved-boundary projection can move fine triangles off their ancestor
            elem[bad] = _brute_locate(mesh, pts[bad])
    else:
        elem = _brute_locate(mesh, pts)
    return elem, barycentric(mesh.corners(elem), pts)


def locate_point(mesh, point):
    elem, bary = locate_points(mesh, np.asarray(point, dtype=float)[None, :])
    return int(elem[0]), bary[0]


def read_msh(path, strict=True):
    """Read a Gmsh MSH 2.2 ASCII file with physical tags 1=ELASTIC, 2=FLUID.

    ``strict=False`` accepts elastic boundary edges off the interface as FREE.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    try:
        return _parse_msh(lines, strict)
    except MeshError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


import_msh = read_msh


def _parse_msh(lines, strict=True):
    pos = 0
    nodes = None
    tris = None

    def need(i, what):
        if i >= len(lines):
            raise MeshFormatError(i + 1, f"unexpected end of file, expected {what}")
        return lines[i].strip()

    def count(i, what):
        s = need(i, what)
        try:
            return int(s)
        except ValueError:
            raise MeshFormatError(i + 1, f"expected {what}, got {s!r}") from None

    seen_format = False
    while pos < len(lines):
        s = lines[pos].strip()
        if not s:
            pos += 1
            continue
        if s == "$MeshFormat":
            fields = need(pos + 1, "format line").split()
            if len(fields) < 3 or not fields[0].startswith("2"):
                raise MeshFormatError(pos + 2, f"unsupported MSH version {' '.join(fields)!r}")
            if fields[1] != "0":
                raise MeshFormatError(pos + 2, "binary MSH files are not supported")
            if need(pos + 2, "$EndMeshFormat") != "$EndMeshFormat":
                raise MeshFormatError(pos + 3, "expected $EndMeshFormat")
            seen_format = True
            pos += 3
        elif s == "$Nodes":
            n = count(pos + 1, "node count")
            ids = np.empty(n, dtype=np.int64)
            xy = np.empty((n, 2))
            for i in range(n):
                ln = pos + 2 + i
                f = need(ln, "node line").split()
                if len(f) < 3:
                    raise MeshFormatError(ln + 1, "malformed node line")
                try:
                    ids[i] = int(f[0])
                    xy[i] = float(f[1]), float(f[2])
                except ValueError:
                    raise MeshFormatError(ln + 1, "malformed node line") from None
            end = pos + 2 + n
            if need(end, "$EndNodes") != "$EndNodes":
                raise MeshFormatError(end + 1, "expected $EndNodes")
            nodes = (ids, xy)
            pos = end + 1
        elif s == "$Elements":
            n = count(pos + 1, "element count")
            tris = []
            for i in range(n):
                ln = pos + 2 + i
                f = need(ln, "element line").split()
                try:
                    vals = [int(v) for v in f]
                    etype, ntags = vals[1], vals[2]
                    conn = vals[3 + ntags:]
                except (ValueError, IndexError):
                    raise MeshFormatError(ln + 1, "malformed element line") from None
                if etype != 2:
                    continue
                if ntags < 1 or len(conn) != 3:
                    raise MeshFormatError(ln + 1, "triangle without physical tag or with wrong node count")
                phys = vals[3]
                if phys not in (ELASTIC, FLUID):
                    raise MeshFormatError(ln + 1, f"physical tag {phys} is neither 1 (ELASTIC) nor 2 (FLUID)")
                tris.append((conn[0], conn[1], conn[2], phys, ln + 1))
            end = pos + 2 + n
            if need(end, "$EndElements") != "$EndElements":
                raise MeshFormatError(end + 1, "expected $EndElements")
            pos = end + 1
        elif s.startswith("$"):
            name = s[1:]
            pos += 1
            while True:
                if need(pos, f"$End{name}") == f"$End{name}":
                    pos += 1
                    break
                pos += 1
        else:
            raise MeshFormatError(pos + 1, f"unexpected content {s!r}")
    if not seen_format:
        raise MeshFormatError(1, "missing $MeshFormat section")
    if nodes is None or tris is None:
        raise MeshFormatError(len(lines), "missing $Nodes or $Elements section")
    if not tris:
        raise MeshFormatError(len(lines), "no triangles in file")

    ids, xy = nodes
    lookup = {int(v): i for i, v in enumerate(ids)}
    conn = np.empty((len(tris), 3), dtype=np.int64)
    tags = np.empty(len(tris), dtype=np.int64)
    for t, (a, b, c, phys, ln) in enumerate(tris):
        try:
            conn[t] = lookup[a], lookup[b], lookup[c]
        except KeyError as exc:
            raise MeshFormatError(ln, f"unknown node id {exc.args[0]}") from None
        tags[t] = phys
    used, compact = np.unique(conn, return_inverse=True)
    vertices = xy[used]
    conn = compact.reshape(-1, 3)
    conn = _orient_ccw(vertices, conn)
    mesh = Mesh(vertices, conn, tags, strict=strict)
    circles = _detect_circles(mesh)
    if circles:
        mesh = Mesh(vertices, conn, tags, circles=circles, strict=strict)
    return mesh


def _detect_circles(mesh, rtol=1e-9):
    circles = {}
    for kind in (INTERFACE, ARTIFICIAL):
        sel = mesh.edges_of_kind(kind)
        if len(sel) == 0:
            continue
        r = np.linalg.norm(mesh.vertices[np.unique(mesh.edge_vertices[sel])], axis=1)
        if r.max() - r.min() <= rtol * r.max():
            circles[kind] = ((0.0, 0.0), float(r.mean()))
    return circles


def write_msh(mesh, path):
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write("$PhysicalNames\n2\n2 1 \"ELASTIC\"\n2 2 \"FLUID\"\n$EndPhysicalNames\n")
        fh.write(f"$Nodes\n{mesh.n_vertices}\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i + 1} {x:.17g} {y:.17g} 0\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{mesh.n_triangles}\n")
        for i, (t, tag) in enumerate(zip(mesh.triangles, mesh.tags)):
            fh.write(f"{i + 1} 2 2 {tag} {tag} {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
        fh.write("$EndElements\n")
