"""Newmark time integration of M U'' + N U' + A U = f(t)."""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT_LIMIT = 50_000
MAX_BLOCK = 500


class NumericalError(RuntimeError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class SolverError(NumericalError):
    pass


@dataclass(frozen=True)
class NewmarkParams:
    l: float
    T: float
    gamma: float = 0.5
    delta: float = 0.0

    def __post_init__(self):
        if self.gamma < 0.5 or self.delta < 0:
            raise ValueError("Newmark parameters need gamma >= 1/2 and delta >= 0")
        if not self.l > 0:
            raise ValueError("time step must be positive")
        if self.T < self.l * (1 - 1e-12):
            raise ValueError("final time must be at least one time step")

    @property
    def n_steps(self):
        return max(1, math.ceil(self.T / self.l - 1e-9))

    def fitted(self):
        """Same parameters with l shrunk so that an integer number of steps ends at T."""
        return replace(self, l=self.T / self.n_steps)


@dataclass
class State:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    t: float = 0.0
    step: int = 0
    iterations: int = 0
    residual: float = 0.0

    def copy(self):
        return replace(self, U=self.U.copy(), V=self.V.copy(), W=self.W.copy())


def _rel_residual(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


def max_stable_step(M, A, dense_limit=2000):
    """Largest explicit (gamma = 1/2, delta = 0) step, 2 / omega_max.

    omega_max^2 is the top generalized eigenvalue of A x = w^2 M x. The
    damping N is ignored; it only helps.
    """
    n = M.shape[0]
    if n <= dense_limit:
        import scipy.linalg as sla

        w2 = sla.eigh(A.toarray(), M.toarray(), eigvals_only=True)[-1]
    else:
        lu = spla.splu(sp.csc_matrix(M))
        op = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(A @ x))
        w2 = spla.eigs(op, k=1, which="LM", return_eigenvectors=False, tol=1e-6)[0].real
    return 2.0 / math.sqrt(max(w2, np.finfo(float).tiny))


def init_state(M, N, A, f0, U0=None, V0=None):
    """Initial acceleration from M W = f(0) - N V0 - A U0."""
    n = M.shape[0]
    U0 = np.zeros(n) if U0 is None else np.array(U0, dtype=float)
    V0 = np.zeros(n) if V0 is None else np.array(V0, dtype=float)
    M = sp.csc_matrix(M)
    rhs = np.asarray(f0, dtype=float) - N @ V0 - A @ U0
    try:
        W = spla.splu(M).solve(rhs)
    except RuntimeError as exc:
        raise NumericalError(f"singular mass matrix: {exc}") from None
    res = _rel_residual(M, W, rhs)
    if not np.isfinite(W).all() or res > 1e-12:
        raise NumericalError(f"mass solve failed (relative residual {res:.3e})")
    return State(U0, V0, W, 0.0, 0, 0, res)


class EffectiveSolver:
    """Solves (M + gamma l N + delta l^2 A) x = b for the Newmark update.

    Up to ``direct_limit`` unknowns the matrix is LU-factorized once.
    Beyond it, GMRES runs with the block-diagonal part of the effective
    matrix as preconditioner. Blocks are the connected components of the
    effective matrix when they are all small (then the preconditioner is
    exact), otherwise those of the mass matrix.
    """

    def __init__(self, M, N, A, params, direct_limit=DIRECT_LIMIT, rtol=1e-10):
        self.matrix = sp.csc_matrix(M + params.gamma * params.l * N + params.delta * params.l**2 * A)
        self.n = n = self.matrix.shape[0]
        self.rtol = rtol
        self.direct = n <= direct_limit
        if self.direct:
            self._lu = spla.splu(self.matrix)
        else:
            _, labels = csgraph.connected_components(sp.csr_matrix(self.matrix), directed=False)
            if np.bincount(labels).max() > MAX_BLOCK:
                _, labels = csgraph.connected_components(sp.csr_matrix(M), directed=False)
            coo = self.matrix.tocoo()
            keep = labels[coo.row] == labels[coo.col]
            P = sp.csc_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape)
            lu = spla.splu(P)
            self._precond = spla.LinearOperator((n, n), matvec=lu.solve)
            self.max_iter = int(10 * math.sqrt(n))

    def solve(self, b):
        if self.direct:
            x = self._lu.solve(b)
            return x, 0, _rel_residual(self.matrix, x, b)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(self.matrix, b, M=self._precond, rtol=self.rtol, atol=0.0,
                             restart=min(50, self.max_iter), maxiter=self.max_iter,
                             callback=cb, callback_type="pr_norm")
        res = _rel_residual(self.matrix, x, b)
        if info != 0 or res > self.rtol * (1 + 1e-6):
            raise SolverError(f"GMRES did not converge after {count[0]} iterations "
                              f"(relative residual {res:.3e})")
        return x, count[0], res


def newmark_step(state, M, N, A, f, params, solver=None):
    """Advance one step of size ``params.l``; ``f`` is the load at the new time."""
    if solver is None:
        solver = EffectiveSolver(M, N, A, params)
    l, g, d = params.l, params.gamma, params.delta
    U_pred = state.U + l * state.V + 0.5 * (1 - 2 * d) * l**2 * state.W
    V_pred = state.V + (1 - g) * l * state.W
    rhs = f - N @ V_pred - A @ U_pred
    W, iters, res = solver.solve(rhs)
    return State(
        U=U_pred + d * l**2 * W,
        V=V_pred + g * l * W,
        W=W,
        t=state.t + l,
        step=state.step + 1,
        iterations=iters,
        residual=res,
    )


def integrate(system, load, params, U0=None, V0=None, observers=(), stride=1):
    """Run from t = 0 to T; ``load(t)`` returns f(t).

    The step is shrunk so that an integer number of steps ends exactly at T.
    Observers are called as ``obs(state)`` at step 0, every ``stride`` steps
    and at the final step.
    """
    params = params.fitted()
    M, N, A = system.M, system.N, system.A
    state = init_state(M, N, A, load(0.0), U0, V0)
    for obs in observers:
        obs(state)
    solver = EffectiveSolver(M, N, A, params)
    n = params.n_steps
    for k in range(1, n + 1):
        t = k * params.l
        with np.errstate(over="ignore", invalid="ignore"):
            state = newmark_step(state, M, N, A, load(t), params, solver)
        state.t = t
        # squares catch states too large for any energy to be representable
        with np.errstate(over="ignore", invalid="ignore"):
            size = state.U @ state.U + state.W @ state.W
        if not np.isfinite(size):
            raise NumericalError(f"non-finite solution at step {k} (t = {t:.6g})", step=k)
        if k % stride == 0 or k == n:
            for obs in observers:
                obs(state)
    return state


def run(mesh, basis, dofmap, system, wave, params, observers=(), U0=None, V0=None, stride=1):
    from .assembly import LoadAssembler

    load = LoadAssembler(mesh, basis, dofmap, wave)
    return integrate(system, load, params, U0, V0, observers, stride)


@dataclass
class Recorder:
    """Keeps (t, value) pairs of a scalar functional of the state."""

    fn: object
    records: list = field(default_factory=list)

    def __call__(self, state):
        self.records.append((state.t, self.fn(state)))
