"""Numerical property checks of the assembled matrices.

Each check yields a :class:`CheckResult`; a report passes when all do.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import check_coercivity, symmetry_residual
from .geometry import ARTIFICIAL

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.4e} (threshold {self.threshold:.4e}) {self.detail}".rstrip()


def _extreme_eigs(S, dense_limit=DENSE_LIMIT):
    """Smallest and largest eigenvalue of a symmetric sparse matrix."""
    n = S.shape[0]
    if n <= dense_limit:
        ev = scipy.linalg.eigvalsh(S.toarray())
        return float(ev[0]), float(ev[-1])
    hi = float(spla.eigsh(S, k=1, which="LA", return_eigenvectors=False)[0])
    lo = float(spla.eigsh(S, k=1, which="SA", return_eigenvectors=False)[0])
    return lo, hi


def artificial_dofs(mesh, dofmap):
    """Fluid DOFs of elements with an edge on the artificial boundary."""
    elems = np.unique(mesh.edge_elements[mesh.edges_of_kind(ARTIFICIAL), 0])
    if len(elems) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(dofmap.dofs(elems))


def check_matrices(mesh, dofmap, M, N, A, dense_limit=DENSE_LIMIT):
    results = []
    dmax, amax = symmetry_residual(A)
    results.append(CheckResult("A symmetry residual max|A-A^T|/max|A|", dmax / amax if amax else 0.0,
                               1e-12, dmax <= 1e-12 * amax))
    if dmax <= 1e-12 * amax:
        rep = check_coercivity(A, dense_limit)
        results.append(CheckResult("lambda_min(A)/||A||", rep.lambda_min / rep.norm, -1e-10,
                                   rep.passed, f"[{rep.method}]"))
    else:
        results.append(CheckResult("lambda_min(A)/||A||", float("nan"), -1e-10, False,
                                   "[skipped: A not symmetric]"))

    S = sp.csr_matrix(N + N.T)
    lo, hi = _extreme_eigs(S, dense_limit)
    scale = max(abs(hi), 1.0)
    results.append(CheckResult("lambda_min(N+N^T)/||N+N^T||", lo / scale, -1e-12, lo >= -1e-12 * scale))
    allowed = np.zeros(S.shape[0], dtype=bool)
    allowed[artificial_dofs(mesh, dofmap)] = True
    coo = S.tocoo()
    stray = (coo.data != 0) & ~(allowed[coo.row] & allowed[coo.col])
    off = float(np.abs(coo.data[stray]).max()) if stray.any() else 0.0
    results.append(CheckResult("N+N^T entries off artificial-boundary DOFs", off, 1e-14 * scale,
                               off <= 1e-14 * scale))

    mlo, mhi = _extreme_eigs(sp.csr_matrix(M), dense_limit)
    cond = mhi / mlo if mlo > 0 else float("inf")
    results.append(CheckResult("cond(M)", cond, 1e12, mlo > 0 and cond < 1e12))
    return results
