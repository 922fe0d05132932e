"""Acceptance criteria, each run at its stated settings and tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line for its criterion; the
lines are repeated in the terminal summary. Where a criterion fails at its
stated settings, the test also runs a labelled companion configuration
(``[INFO]`` lines) that shows what the discretization does at a stable step.
Companions never change the verdict.
"""
import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import factorial

from fsidg.assembly import (DofMap, PenaltyParams, PhysicalParams, assemble_load, assemble_stiffness,
                            assemble_system, symmetry_residual)
from fsidg.checks import artificial_dofs
from fsidg.config import InitialSpec, TimeSpec, WaveSpec, preset
from fsidg.diagnostics import convergence_study, dg_energy_norm, energy_monitor, newmark_energy
from fsidg.experiment import build_mesh, simulate
from fsidg.fem import affine_maps, edge_rule, l2_project, lagrange_nodes, make_basis, map_gradient, triangle_rule
from fsidg.geometry import ELASTIC, FLUID, Mesh, build_annulus_mesh, refine_uniform
from fsidg.timestepper import NewmarkParams, NumericalError, integrate, max_stable_step
from fsidg.waves import plane_wave

from oracle import dense_system

RESULTS = []


def report(tag, text):
    line = f"[{tag}] {text}"
    print(line)
    RESULTS.append(line)


def verdict(number, title, passed, detail):
    report("PASS" if passed else "FAIL", f"criterion {number} ({title}): {detail}")
    return passed


def with_step(cfg, step, **kw):
    return replace(cfg, time=replace(cfg.time, l=step), **kw)


def stability_note(cfg):
    mesh = build_mesh(cfg)
    basis = make_basis(cfg.degree)
    s = assemble_system(mesh, basis, DofMap(mesh, basis), cfg.physics, cfg.penalty)
    l_max = max_stable_step(s.M, s.A)
    return f"explicit limit on the base mesh is l < h/{mesh.h / l_max:.1f}"


def run_study(cfg, levels):
    """(report, None) or (None, failure text)."""
    try:
        return convergence_study(cfg, levels), None
    except NumericalError as exc:
        return None, f"diverged ({exc})"


def order_check(number, title, cfg, e_band, l2_band, companion_step):
    stated, failure = run_study(cfg, 4)
    if stated is None:
        ok = verdict(number, title, False, f"l={cfg.time.l}: {failure}; {stability_note(cfg)}")
    else:
        e, l2 = stated.energy_orders[-1], stated.l2_orders[-1]
        ok = verdict(number, title, e_band[0] <= e <= e_band[1] and l2_band[0] <= l2 <= l2_band[1],
                     f"l={cfg.time.l}: energy order {e:.2f} in {list(e_band)}, L2 order {l2:.2f} in {list(l2_band)}")
    if not ok:
        comp, failure = run_study(with_step(cfg, companion_step), 4)
        if comp is None:
            report("INFO", f"criterion {number} companion at l={companion_step}: {failure}")
        else:
            e, l2 = comp.energy_orders[-1], comp.l2_orders[-1]
            report("INFO", f"criterion {number} companion at l={companion_step}: energy orders "
                   f"{[round(v, 2) for v in comp.energy_orders[1:]]}, L2 orders "
                   f"{[round(v, 2) for v in comp.l2_orders[1:]]}; finest pair energy {e:.2f} "
                   f"({'in' if e_band[0] <= e <= e_band[1] else 'outside'} {list(e_band)}), "
                   f"L2 {l2:.2f} ({'in' if l2_band[0] <= l2 <= l2_band[1] else 'outside'} {list(l2_band)})")
            for line in comp.table().splitlines():
                report("INFO", "  " + line)
    return ok


@pytest.mark.slow
def test_criterion_1_smooth_convergence():
    cfg = preset("example1")
    assert cfg.time.l == "h/20" and cfg.penalty.alpha == 100.0 and cfg.time.T == 1.0
    assert order_check(1, "Example 1 convergence orders", cfg, (0.85, 1.35), (1.7, 2.2), "h/50")


@pytest.mark.slow
def test_criterion_2_singular_convergence():
    cfg = preset("example2")
    assert cfg.wave.kind == "pulse" and cfg.wave.mode == "as-written" and cfg.time.l == "h/20"
    assert order_check(2, "Example 2 convergence orders", cfg, (0.5, 0.85), (1.1, 1.6), "h/80")


def test_criterion_3_matrix_properties():
    cfg = preset("example1")
    mesh = build_mesh(cfg)
    assert mesh.n_triangles <= 500
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    s = assemble_system(mesh, basis, dm, cfg.physics, cfg.penalty)
    A = s.A.toarray()
    dmax, amax = symmetry_residual(s.A)
    lam = scipy.linalg.eigvalsh(A)
    norm = np.abs(lam).max()
    S = (s.N + s.N.T).toarray()
    mu = scipy.linalg.eigvalsh(S)
    outside = np.ones(dm.size, dtype=bool)
    outside[artificial_dofs(mesh, dm)] = False
    leak = max(np.abs(S[outside]).max(), np.abs(S[:, outside]).max())
    checks = [dmax <= 1e-12 * amax, lam[0] >= -1e-10 * norm, mu[0] >= -1e-12 * np.abs(mu).max(), leak == 0.0]
    assert verdict(3, "matrix properties", all(checks),
                   f"{mesh.n_triangles} elements; symmetry {dmax / amax:.1e} (<= 1e-12), "
                   f"lambda_min(A)/||A|| {lam[0] / norm:.2e} (>= -1e-10), "
                   f"lambda_min(N+N^T) {mu[0]:.1e}, entries off Gamma_R DOFs {leak:.1e} (dense eigensolves)")


def test_criterion_4_null_space():
    mesh = build_mesh(preset("example1"))
    phys = PhysicalParams()
    worst_norm = worst_au = 0.0
    for k in (1, 2):
        basis = make_basis(k)
        dm = DofMap(mesh, basis)
        one = l2_project(mesh, basis, lambda x: np.ones(len(x)), FLUID)
        fields = [dm.pack(phi=one)]
        for a, b in (((1.0, 0.0), 0.0), ((0.0, 1.0), 0.0), ((0.0, 0.0), 1.0)):
            u = l2_project(mesh, basis, lambda x, a=a, b=b: np.stack(
                [a[0] - b * x[:, 1], a[1] + b * x[:, 0]], axis=-1), ELASTIC)
            fields.append(dm.pack(u=u))
        for jump in ("full", "normal"):
            A = assemble_stiffness(mesh, basis, dm, phys, PenaltyParams(vector_jump=jump))
            a_norm = abs(spla.eigsh(A, k=1, which="LM", return_eigenvectors=False)[0])
            for U in fields:
                worst_norm = max(worst_norm, dg_energy_norm(mesh, basis, dm, U, phys, jump, interface_jumps=False))
                worst_au = max(worst_au, np.linalg.norm(A @ U) / (a_norm * np.linalg.norm(U)))
    assert verdict(4, "null space", worst_norm <= 1e-10 and worst_au <= 1e-10,
                   f"k=1,2, both vector jumps: max dg_energy_norm {worst_norm:.1e} (<= 1e-10), "
                   f"max ||AU||/(||A|| ||U||) {worst_au:.1e} (<= 1e-10)")


def _orders(errs):
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


def test_criterion_5_temporal_order():
    zero = lambda n: (lambda t: np.zeros(n))  # noqa: E731
    sys1 = SimpleNamespace(M=sp.csr_matrix([[1.0]]), N=sp.csr_matrix((1, 1)), A=sp.csr_matrix([[1.0]]))
    errs = [abs(integrate(sys1, zero(1), NewmarkParams(0.01 / 2**i, 1.0), U0=[1.0]).U[0] - math.cos(1.0))
            for i in range(3)]
    scalar = _orders(errs)
    rng = np.random.default_rng(7)
    n = 100
    Q1, Q2 = rng.normal(size=(2, n, n))
    M = Q1 @ Q1.T / n + np.eye(n)
    A = 4 * (Q2 @ Q2.T / n + np.eye(n))
    U0 = rng.normal(size=n)
    w2, Phi = scipy.linalg.eigh(A, M)
    exact = Phi @ ((Phi.T @ M @ U0) * np.cos(np.sqrt(w2)))
    sysn = SimpleNamespace(M=sp.csr_matrix(M), N=sp.csr_matrix((n, n)), A=sp.csr_matrix(A))
    errs = [np.linalg.norm(integrate(sysn, zero(n), NewmarkParams(0.02 / 2**i, 1.0), U0=U0).U - exact)
            for i in range(3)]
    big = _orders(errs)
    ok = all(1.8 <= p <= 2.2 for p in scalar + big) and errs[0] > 0
    assert verdict(5, "Newmark temporal order", ok,
                   f"oscillator orders {[round(p, 3) for p in scalar]}, 100-DOF SPD orders "
                   f"{[round(p, 3) for p in big]} (each in [1.8, 2.2])")


def _energy_run(cfg, mesh):
    """Volume energy E and Newmark energy per step, or the failure."""
    l = NewmarkParams(cfg.time.step(mesh.h), cfg.time.T).fitted().l
    E, En = [], []

    def observers(m, b, d):
        s = assemble_system(m, b, d, cfg.physics, cfg.penalty)
        return [lambda st: (E.append(energy_monitor(st, m, b, d, cfg.physics)),
                            En.append(newmark_energy(st, s.M, s.A, l)))]

    try:
        simulate(cfg, mesh, observers)
    except NumericalError as exc:
        return np.array(E), np.array(En), f"diverged at step {exc.step}"
    return np.array(E), np.array(En), None


@pytest.mark.slow
def test_criterion_6_energy_decay():
    base = preset("example1")
    assert base.time.l == "h/20"
    cfg = replace(base, wave=WaveSpec(kind="zero"), initial=InitialSpec(kind="random", seed=1),
                  time=TimeSpec(T=1.0, l="h/20"))
    meshes = [build_mesh(cfg)]
    meshes.append(refine_uniform(meshes[0]))
    parts, ok = [], True
    for i, mesh in enumerate(meshes):
        E, _, failure = _energy_run(cfg, mesh)
        if failure:
            ok = False
            parts.append(f"mesh {i} (h={mesh.h:.3f}): {failure}")
        else:
            ratio = E.max() / E[0]
            ok &= ratio <= 1 + 1e-6
            parts.append(f"mesh {i}: max E/E(0) - 1 = {ratio - 1:.1e}")
    passed = verdict(6, "discrete energy at l=h/20", ok, "; ".join(parts) + f"; {stability_note(cfg)}")
    if not passed:
        comp = with_step(cfg, "h/50")
        for i, mesh in enumerate(meshes):
            E, En, failure = _energy_run(comp, mesh)
            if failure:
                report("INFO", f"criterion 6 companion at l=h/50, mesh {i}: {failure}")
                continue
            monotone = bool(np.all(np.diff(En) <= 1e-12 * En[0]))
            report("INFO", f"criterion 6 companion at l=h/50, mesh {i}: Newmark energy "
                   f"{'non-increasing' if monotone else 'NOT monotone'}, max/initial - 1 = "
                   f"{En.max() / En[0] - 1:.1e}, final/initial {En[-1] / En[0]:.3f}; volume energy "
                   f"max E/E(0) - 1 = {E.max() / E[0] - 1:.1e}")
    assert passed


def test_criterion_7_oracle_equivalence():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [[0, 1, 2], [1, 3, 2]],
                [ELASTIC, FLUID], strict=False)
    phys = PhysicalParams(rho1=1.3, rho2=0.7, c=1.7, lam=2.1, mu=0.9)
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    s = assemble_system(mesh, basis, dm, phys, PenaltyParams(alpha=100.0, beta=1.0))
    M, N, A, _ = dense_system(mesh, phys, 100.0, 1.0)
    gaps = {name: np.abs(got.toarray() - want).max() for name, got, want in
            (("M", s.M, M), ("N", s.N, N), ("A", s.A, A))}
    # the oracle integrates the load with Simpson's rule, exact for polynomial data only,
    # so the load is compared on a wave that is quadratic along the interface edge
    class Linear:
        def dt(self, x, t):
            return x[..., 0] + 2 * x[..., 1]

        def grad(self, x, t):
            return np.stack([np.full(x.shape[:-1], t), np.full(x.shape[:-1], 2 * t)], axis=-1)

    lin = Linear()
    f = assemble_load(mesh, basis, dm, lin, 0.7)
    fo = dense_system(mesh, phys, 100.0, 1.0, lin, 0.7)[3]
    gaps["f"] = np.abs(f - fo).max()
    assert verdict(7, "oracle equivalence", max(gaps.values()) <= 1e-12,
                   ", ".join(f"max|{k} - oracle| {v:.1e}" for k, v in gaps.items()) + " (<= 1e-12)")


def _monomial_integral(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def test_criterion_8_quadrature_and_basis():
    checks = {}
    worst = 0.0
    for d in range(1, 11):
        rule = triangle_rule(d)
        x, y = rule.points.T
        for a in range(d + 1):
            for b in range(d + 1 - a):
                worst = max(worst, abs(rule.weights @ (x**a * y**b) - _monomial_integral(a, b)))
        e = edge_rule(d)
        for a in range(d + 1):
            worst = max(worst, abs(e.weights @ e.points**a - 1 / (a + 1)))
    checks["quadrature monomials"] = worst <= 1e-12
    b1 = make_basis(1)
    checks["P1 mass = analytic"] = np.abs(b1.mass - (np.ones((3, 3)) + np.eye(3)) / 24).max() <= 1e-14
    checks["int phi_1 phi_2 = 1/24"] = abs(b1.mass[0, 1] - 1 / 24) <= 1e-15
    pu = max(np.abs(make_basis(k).vol_values.sum(axis=1) - 1).max() for k in range(1, 5))
    gs = max(np.abs(make_basis(k).vol_grads.sum(axis=1)).max() for k in range(1, 5))
    checks["partition of unity"] = pu <= 1e-13 and gs <= 1e-12
    b2 = make_basis(2)
    checks["P2 Lagrange property"] = np.abs(b2.values(lagrange_nodes(2)) - np.eye(6)).max() <= 1e-13
    rng = np.random.default_rng(0)
    corners = rng.uniform(-2, 2, (3, 2))
    a = rng.normal(size=2)
    J, _, _ = affine_maps(corners)
    ref_grad = J.T @ a  # gradient of a.x pulled back to the reference element
    checks["affine gradient exact"] = np.abs(map_gradient(corners, ref_grad) - a).max() <= 1e-12
    w = plane_wave((0.3, -0.7))
    pts = rng.uniform(-2, 2, (100, 2))
    ts = rng.uniform(0, 1, 100)
    h = 1e-6
    fd = 0.0
    for x, t in zip(pts, ts):
        fd = max(fd, abs(w.dt(x, t) - (w.value(x, t + h) - w.value(x, t - h)) / (2 * h)))
        for k in range(2):
            e = np.eye(2)[k] * h
            fd = max(fd, abs(w.grad(x, t)[k] - (w.value(x + e, t) - w.value(x - e, t)) / (2 * h)))
    checks["wave finite differences"] = fd <= 1e-8
    fine = build_annulus_mesh(1.0, 2.0, 4, 256)
    checks["annulus area at 256"] = abs(fine.area(FLUID) / (3 * math.pi) - 1) <= 1e-3
    base = build_annulus_mesh(1.0, 2.0, 3, 18)
    checks["refinement halves h"] = 0.45 <= refine_uniform(base).h / base.h <= 0.55
    failed = [k for k, v in checks.items() if not v]
    assert verdict(8, "quadrature/basis unit examples", not failed,
                   f"{len(checks) - len(failed)}/{len(checks)} pass (quadrature {worst:.1e}, "
                   f"wave FD {fd:.1e})" + (f"; failed: {failed}" if failed else ""))
