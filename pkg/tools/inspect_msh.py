"""Independent inspection of a triangle MSH 2.2 file; prints a JSON manifest.

Deliberately does not import the package: it re-derives triangle counts,
per-tag areas and the edge classification from the raw file so the
package reader can be checked against it.

    python tools/inspect_msh.py src/fsidg/data/lshape.msh > tests/data/lshape_manifest.json
"""
import hashlib
import json
import math
import sys
from collections import Counter


def read(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    nodes, tris = {}, []
    i = 0
    while i < len(lines):
        if lines[i] == "$Nodes":
            n = int(lines[i + 1])
            for ln in lines[i + 2:i + 2 + n]:
                f = ln.split()
                nodes[int(f[0])] = (float(f[1]), float(f[2]))
            i += n + 2
        elif lines[i] == "$Elements":
            n = int(lines[i + 1])
            for ln in lines[i + 2:i + 2 + n]:
                f = [int(v) for v in ln.split()]
                if f[1] == 2:
                    tris.append((f[3], tuple(f[3 + f[2]:])))
            i += n + 2
        else:
            i += 1
    return nodes, tris


def inspect(path):
    nodes, tris = read(path)
    area = Counter()
    owners = {}
    h = 0.0
    for tag, conn in tris:
        (x1, y1), (x2, y2), (x3, y3) = (nodes[v] for v in conn)
        area[tag] += abs((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)) / 2
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = frozenset((conn[a], conn[b]))
            owners.setdefault(key, []).append(tag)
            h = max(h, math.dist(nodes[conn[a]], nodes[conn[b]]))
    kinds = Counter()
    for tags in owners.values():
        if len(tags) == 2:
            kinds[{(1, 1): "INTERIOR_ELASTIC", (2, 2): "INTERIOR_FLUID"}.get(tuple(tags), "INTERFACE")] += 1
        else:
            kinds["ARTIFICIAL" if tags[0] == 2 else "UNCLASSIFIED"] += 1
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return {
        "file_sha256": digest,
        "n_vertices": len({v for _, c in tris for v in c}),
        "n_triangles": len(tris),
        "n_elastic": sum(1 for t, _ in tris if t == 1),
        "n_fluid": sum(1 for t, _ in tris if t == 2),
        "area_elastic": area[1],
        "area_fluid": area[2],
        "h": h,
        "edge_counts": {k: kinds[k] for k in
                        ("INTERIOR_ELASTIC", "INTERIOR_FLUID", "INTERFACE", "ARTIFICIAL", "UNCLASSIFIED")},
    }


if __name__ == "__main__":
    json.dump(inspect(sys.argv[1]), sys.stdout, indent=2)
    sys.stdout.write("\n")
