"""Generate the L-shape fixture mesh (MSH 2.2 ASCII).

Solid: (-1,1)^2 minus [0,1)^2. Fluid: disk of radius 3 around the origin
minus the solid. Uses the ``triangle`` package, which is only needed to
regenerate the committed fixture:

    pip install triangle
    python tools/make_lshape_mesh.py src/fsidg/data/lshape.msh
"""
import argparse

import numpy as np
import triangle

L_CORNERS = [(-1, -1), (1, -1), (1, 0), (0, 0), (0, 1), (-1, 1)]


def polyline(corners, n_per_unit):
    pts = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        a, b = np.asarray(a, float), np.asarray(b, float)
        n = max(1, int(round(np.linalg.norm(b - a) * n_per_unit)))
        for s in np.arange(n) / n:
            pts.append(a + s * (b - a))
    return np.array(pts)


def build(R=3.0, n_per_unit=2, n_circle=32, max_area=0.12):
    inner = polyline(L_CORNERS, n_per_unit)
    ang = 2 * np.pi * np.arange(n_circle) / n_circle
    outer = R * np.column_stack([np.cos(ang), np.sin(ang)])
    ni = len(inner)
    seg_i = np.column_stack([np.arange(ni), (np.arange(ni) + 1) % ni])
    seg_o = ni + np.column_stack([np.arange(n_circle), (np.arange(n_circle) + 1) % n_circle])
    geom = {
        "vertices": np.vstack([inner, outer]),
        "segments": np.vstack([seg_i, seg_o]),
        "regions": [[-0.5, -0.5, 1, 0], [2.0, 0.5, 2, 0]],
    }
    # Y: no Steiner points on segments, so circle vertices stay on the circle
    out = triangle.triangulate(geom, f"pq30AYa{max_area}")
    tags = out["triangle_attributes"].ravel().astype(int)
    return out["vertices"], out["triangles"], tags


def write(path, verts, tris, tags):
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write('$PhysicalNames\n2\n2 1 "ELASTIC"\n2 2 "FLUID"\n$EndPhysicalNames\n')
        fh.write(f"$Nodes\n{len(verts)}\n")
        for i, (x, y) in enumerate(verts):
            fh.write(f"{i + 1} {x:.17g} {y:.17g} 0\n")
        fh.write(f"$EndNodes\n$Elements\n{len(tris)}\n")
        for i, (t, g) in enumerate(zip(tris, tags)):
            fh.write(f"{i + 1} 2 2 {g} {g} {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
        fh.write("$EndElements\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("output")
    ap.add_argument("--max-area", type=float, default=0.12)
    ap.add_argument("--circle-segments", type=int, default=32)
    args = ap.parse_args()
    v, t, g = build(n_circle=args.circle_segments, max_area=args.max_area)
    write(args.output, v, t, g)
    print(f"{len(t)} triangles ({np.sum(g == 1)} solid), {len(v)} vertices -> {args.output}")
