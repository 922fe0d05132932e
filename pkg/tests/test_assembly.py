import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
import scipy.sparse as sp

from fsidg.assembly import (
    DofMap,
    PenaltyParams,
    PhysicalParams,
    SymmetryError,
    assemble_damping,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_system,
    check_coercivity,
    csr_from_triplets,
    write_matrix_market,
)
from fsidg.fem import make_basis
from fsidg.geometry import ELASTIC, FLUID, INTERFACE, Mesh, build_annulus_mesh, refine_uniform
from fsidg.waves import ZeroWave, plane_wave

from oracle import dense_system

PHYS = PhysicalParams(rho1=1.3, rho2=0.7, c=1.7, lam=2.1, mu=0.9)
SQUARE = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
PAIR = [[0, 1, 2], [1, 3, 2]]


class LinearWave:
    """phi^i = t (x1 + 2 x2) + t^2 x1 x2; polynomial traces keep the oracle exact."""

    def value(self, x, t):
        return t * (x[..., 0] + 2 * x[..., 1]) + t**2 * x[..., 0] * x[..., 1]

    def dt(self, x, t):
        return x[..., 0] + 2 * x[..., 1] + 2 * t * x[..., 0] * x[..., 1]

    def grad(self, x, t):
        return np.stack([t + t**2 * x[..., 1], 2 * t + t**2 * x[..., 0]], axis=-1)


def package_system(mesh, phys, penalty, wave=None, t=0.0):
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    s = assemble_system(mesh, basis, dm, phys, penalty)
    f = assemble_load(mesh, basis, dm, wave, t) if wave is not None else None
    return s, f


def relative_gap(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1.0)


@pytest.mark.parametrize("tags", [(ELASTIC, FLUID), (FLUID, FLUID), (ELASTIC, ELASTIC)])
@pytest.mark.parametrize("beta", [1.0, 1.5])
def test_two_element_meshes_match_dense_oracle(tags, beta):
    verts = np.array([[0.1, -0.2], [1.3, 0.1], [0.2, 1.1], [1.4, 1.2]])
    mesh = Mesh(verts, PAIR, list(tags), strict=False)
    penalty = PenaltyParams(alpha=100.0, beta=beta)
    wave = LinearWave()
    s, f = package_system(mesh, PHYS, penalty, wave, t=0.7)
    M, N, A, fo = dense_system(mesh, PHYS, 100.0, beta, wave, t=0.7)
    assert relative_gap(s.M.toarray(), M) <= 1e-12
    assert relative_gap(s.N.toarray(), N) <= 1e-12
    assert relative_gap(s.A.toarray(), A) <= 1e-12
    assert relative_gap(f, fo) <= 1e-12


def test_refined_annulus_patch_matches_oracle():
    # a few dozen elements with every edge kind present
    mesh = build_annulus_mesh(1.0, 2.0, 1, 8)
    s, f = package_system(mesh, PHYS, PenaltyParams(), LinearWave(), t=0.3)
    M, N, A, fo = dense_system(mesh, PHYS, 100.0, 1.0, LinearWave(), t=0.3)
    for got, want in ((s.M, M), (s.N, N), (s.A, A)):
        assert relative_gap(got.toarray(), want) <= 1e-12
    assert relative_gap(f, fo) <= 1e-12


def test_penalty_part_on_two_fluid_triangles():
    mesh = Mesh(SQUARE, PAIR, [FLUID, FLUID])
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    P = assemble_stiffness(mesh, basis, dm, PHYS, PenaltyParams(100.0, 1.0), parts=("penalty",)).toarray()
    # shared edge from (1,0) to (0,1); jump traces: +phi on element 0, -phi on element 1
    e = np.sqrt(2.0)
    edge_mass = e / 6 * np.array([[2.0, 1.0], [1.0, 2.0]])
    expected = np.zeros((6, 6))
    ends = {0: (1, 2), 1: (0, 2)}  # local indices of (1,0) and (0,1) in each triangle
    for si, sign_i in ((0, 1.0), (1, -1.0)):
        for sj, sign_j in ((0, 1.0), (1, -1.0)):
            for a in range(2):
                for b in range(2):
                    expected[3 * si + ends[si][a], 3 * sj + ends[sj][b]] += sign_i * sign_j * edge_mass[a, b]
    np.testing.assert_allclose(P, 100.0 / e * expected, atol=1e-12)


@pytest.fixture(scope="module")
def annulus_system():
    mesh = build_annulus_mesh(1.0, 2.0, 2, 12)
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    return mesh, basis, dm, assemble_system(mesh, basis, dm, PhysicalParams(), PenaltyParams())


def test_mass_reference_triangle():
    mesh = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [FLUID])
    basis = make_basis(1)
    M = assemble_mass(mesh, basis, DofMap(mesh, basis), PhysicalParams()).toarray()
    np.testing.assert_allclose(M, 0.5 / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]), atol=1e-15)


def test_fluid_mass_sums_to_area(annulus_system):
    mesh, basis, dm, _ = annulus_system
    phys = PhysicalParams(c=1.7)
    M = assemble_mass(mesh, basis, dm, phys).toarray()
    fl = dm.fluid_slice
    assert M[fl, fl].sum() == pytest.approx(mesh.area(FLUID) / 1.7**2, abs=1e-10)


def test_mass_scales_with_solid_density(annulus_system):
    mesh, basis, dm, _ = annulus_system
    M1 = assemble_mass(mesh, basis, dm, PhysicalParams(rho2=1.0)).toarray()
    M2 = assemble_mass(mesh, basis, dm, PhysicalParams(rho2=2.0)).toarray()
    el, fl = dm.elastic_slice, dm.fluid_slice
    np.testing.assert_array_equal(M2[el, el], 2 * M1[el, el])
    np.testing.assert_array_equal(M2[fl, fl], M1[fl, fl])


def test_mass_is_block_diagonal_spd(annulus_system):
    mesh, basis, dm, s = annulus_system
    M = s.M.tocoo()
    elem_of = np.empty(dm.size, dtype=np.int64)
    for e in range(mesh.n_triangles):
        elem_of[dm.dofs([e])[0]] = e
    assert np.all(elem_of[M.row] == elem_of[M.col])
    assert scipy.linalg.eigvalsh(s.M.toarray())[0] > 0


def test_no_elastic_fluid_coupling_in_stiffness(annulus_system):
    _, _, dm, s = annulus_system
    A = s.A.toarray()
    assert np.all(A[dm.elastic_slice, dm.fluid_slice] == 0)
    assert np.all(A[dm.fluid_slice, dm.elastic_slice] == 0)


def test_constant_fluid_field_in_kernel(annulus_system):
    _, _, dm, s = annulus_system
    U = dm.pack(phi=np.ones((len(dm.fluid_elements), dm.n_local)))
    assert np.abs(s.A @ U).max() <= 1e-11


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("jump", ["full", "normal"])
def test_rigid_motions_in_kernel(k, jump):
    mesh = build_annulus_mesh(1.0, 2.0, 2, 12)
    basis = make_basis(k)
    dm = DofMap(mesh, basis)
    A = assemble_stiffness(mesh, basis, dm, PhysicalParams(), PenaltyParams(vector_jump=jump))
    from fsidg.fem import l2_project

    for a, b in (((1.0, 0.0), 0.0), ((0.0, 1.0), 0.0), ((0.3, -0.2), 1.0)):
        def rigid(x, a=a, b=b):
            return np.stack([a[0] - b * x[:, 1], a[1] + b * x[:, 0]], axis=-1)

        U = dm.pack(u=l2_project(mesh, basis, rigid, ELASTIC))
        assert np.abs(A @ U).max() <= 1e-10 * abs(A).max() * np.abs(U).max()


def test_continuous_polynomials_have_no_jump_contributions():
    mesh = refine_uniform(build_annulus_mesh(1.0, 2.0, 1, 8))
    basis = make_basis(2)
    dm = DofMap(mesh, basis)
    from fsidg.fem import l2_project

    phi = l2_project(mesh, basis, lambda x: x[:, 0] ** 2 - x[:, 0] * x[:, 1], FLUID)
    U = dm.pack(phi=phi)
    pen = assemble_stiffness(mesh, basis, dm, PHYS, PenaltyParams(), parts=("penalty",))
    assert abs(U @ (pen @ U)) <= 1e-14 * abs(pen).max() * (U @ U)


def test_damping_is_skew_without_artificial_edges():
    # the fluid triangle has artificial edges here, so only the coupling blocks are skew
    mesh = Mesh(SQUARE, PAIR, [ELASTIC, FLUID], strict=False)
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    N = assemble_damping(mesh, basis, dm, PHYS).toarray()
    el, fl = dm.elastic_slice, dm.fluid_slice
    np.testing.assert_array_equal(N[el, fl], -N[fl, el].T)
    assert np.all(N[el, el] == 0)


def test_damping_skew_on_disk_mesh():
    # swapping tags puts the fluid inside, so it has no artificial boundary
    mesh = build_annulus_mesh(1.0, 2.0, 1, 8)
    tags = np.where(mesh.tags == ELASTIC, FLUID, ELASTIC)
    swapped = Mesh(mesh.vertices, mesh.triangles, tags, strict=False)
    basis = make_basis(1)
    dm = DofMap(swapped, basis)
    N = assemble_damping(swapped, basis, dm, PHYS)
    assert abs(N + N.T).max() == 0.0


def test_damping_symmetric_part_psd_on_artificial_dofs(annulus_system):
    mesh, _, dm, s = annulus_system
    from fsidg.checks import artificial_dofs

    S = (s.N + s.N.T).toarray()
    keep = np.zeros(dm.size, dtype=bool)
    keep[artificial_dofs(mesh, dm)] = True
    assert np.all(S[~keep] == 0) and np.all(S[:, ~keep] == 0)
    assert scipy.linalg.eigvalsh(S)[0] >= -1e-12 * np.abs(S).max()


def test_coupling_of_constants_integrates_normal(annulus_system):
    mesh, _, dm, s = annulus_system
    N = s.N.toarray()
    u = np.zeros((len(dm.elastic_elements), 2, dm.n_local))
    u[:, 0, :] = 1.0
    v = dm.pack(u=u)
    phi = dm.pack(phi=np.ones((len(dm.fluid_elements), dm.n_local)))
    assert abs(v @ N @ phi) <= 1e-12
    # and the coupling really is nonzero: int_Gamma n.v with v = x is the disk area
    lin = np.zeros_like(u)
    corners = mesh.vertices[mesh.triangles[dm.elastic_elements]]
    lin[:, 0, :] = corners[:, :, 0]
    lin[:, 1, :] = corners[:, :, 1]
    flux = dm.pack(u=lin) @ N @ phi
    assert flux == pytest.approx(2 * mesh.area(ELASTIC), rel=1e-12)


def test_zero_wave_load(annulus_system):
    mesh, basis, dm, _ = annulus_system
    assert not assemble_load(mesh, basis, dm, ZeroWave(), 0.4).any()


def test_plane_wave_load_at_time_zero(annulus_system):
    mesh, basis, dm, _ = annulus_system
    f = assemble_load(mesh, basis, dm, plane_wave((1.0, 0.0)), 0.0)
    assert not f[dm.elastic_slice].any()
    # fluid entries are int_Gamma (-sin(x1) n1) psi; summing over psi gives the integral of the data
    edges = mesh.edges_of_kind(INTERFACE)
    total = 0.0
    for e in edges:
        a, b = mesh.vertices[mesh.edge_vertices[e]]
        n1 = mesh.edge_normals[e, 0]
        val, _ = scipy.integrate.quad(lambda s: -np.sin(a[0] + s * (b[0] - a[0])) * n1, 0.0, 1.0)
        total += val * mesh.edge_lengths[e]
    # the load rule is exact for polynomials only, so allow its O(|e|^4) error
    assert f[dm.fluid_slice].sum() == pytest.approx(total, rel=1e-5)
    touched = np.flatnonzero(f)
    fluid_on_gamma = np.unique(dm.dofs(mesh.edge_elements[edges, 1]))
    assert set(touched) <= set(fluid_on_gamma)


def test_single_interface_edge_unit_time_derivative():
    class Unit:
        def dt(self, x, t):
            return np.ones(x.shape[:-1])

        def grad(self, x, t):
            return np.zeros(x.shape)

    mesh = Mesh(SQUARE, PAIR, [ELASTIC, FLUID], strict=False)
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    f = assemble_load(mesh, basis, dm, Unit(), 0.0)
    n = np.array([1.0, 1.0]) / np.sqrt(2)
    e = np.sqrt(2.0)
    u, _ = dm.split(f)
    # local vertices 1 and 2 of the elastic triangle lie on the interface
    for comp in range(2):
        np.testing.assert_allclose(u[0, comp], [0.0, -e / 2 * n[comp], -e / 2 * n[comp]], atol=1e-15)


def test_coercivity_and_under_penalization():
    mesh = build_annulus_mesh(1.0, 2.0, 2, 12)
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    A = assemble_stiffness(mesh, basis, dm, PhysicalParams(), PenaltyParams(alpha=100.0))
    rep = check_coercivity(A)
    assert rep.passed and rep.method == "dense"
    weak = assemble_stiffness(mesh, basis, dm, PhysicalParams(), PenaltyParams(alpha=0.001))
    with pytest.warns(UserWarning, match="indefinite"):
        rep = check_coercivity(weak)
    assert rep.lambda_min < 0 and not rep.passed


def test_coercivity_rejects_asymmetric_matrix(annulus_system):
    A = annulus_system[3].A.tolil()
    A[0, 1] += 1e-3
    with pytest.raises(SymmetryError):
        check_coercivity(A.tocsr())


def test_shift_invert_path_agrees_with_dense(annulus_system):
    A = annulus_system[3].A
    dense = check_coercivity(A)
    sparse = check_coercivity(A, dense_limit=10)
    assert sparse.method == "shift-invert"
    assert sparse.passed
    assert sparse.norm == pytest.approx(dense.norm, rel=1e-8)


def test_assembly_independent_of_element_order():
    mesh = build_annulus_mesh(1.0, 2.0, 2, 12)
    perm = np.random.default_rng(3).permutation(mesh.n_triangles)
    shuffled = Mesh(mesh.vertices, mesh.triangles[perm], mesh.tags[perm])
    basis = make_basis(1)
    a = assemble_system(mesh, basis, DofMap(mesh, basis), PHYS, PenaltyParams())
    b = assemble_system(shuffled, basis, DofMap(shuffled, basis), PHYS, PenaltyParams())
    # map dofs of the shuffled mesh back to the original numbering
    dm, dm2 = DofMap(mesh, basis), DofMap(shuffled, basis)
    p = np.empty(dm.size, dtype=np.int64)
    for new, old in enumerate(perm):
        p[dm2.dofs([new])[0]] = dm.dofs([old])[0]
    for x, y in ((a.M, b.M), (a.N, b.N), (a.A, b.A)):
        Y = sp.csr_matrix((y.tocoo().data, (p[y.tocoo().row], p[y.tocoo().col])), shape=y.shape)
        assert abs(x - Y).max() == 0.0


def test_thread_count_gives_bitwise_identical_matrices():
    mesh = refine_uniform(build_annulus_mesh(1.0, 2.0, 2, 12))
    basis = make_basis(1)
    dm = DofMap(mesh, basis)
    one = assemble_system(mesh, basis, dm, PHYS, PenaltyParams(), threads=1)
    four = assemble_system(mesh, basis, dm, PHYS, PenaltyParams(), threads=4)
    for x, y in ((one.M, four.M), (one.N, four.N), (one.A, four.A)):
        np.testing.assert_array_equal(x.indptr, y.indptr)
        np.testing.assert_array_equal(x.indices, y.indices)
        np.testing.assert_array_equal(x.data, y.data)


def test_triplet_reduction_is_order_independent():
    rng = np.random.default_rng(0)
    rows = rng.integers(0, 5, 200)
    cols = rng.integers(0, 5, 200)
    vals = rng.normal(size=200)
    a = csr_from_triplets(rows, cols, vals, (5, 5))
    p = rng.permutation(200)
    b = csr_from_triplets(rows[p], cols[p], vals[p], (5, 5))
    np.testing.assert_array_equal(a.data, b.data)
    assert not a.has_canonical_format or a.nnz == len(set(zip(rows, cols)))


def test_matrix_market_export(tmp_path, annulus_system):
    import scipy.io

    A = annulus_system[3].A
    path = tmp_path / "A.mtx"
    write_matrix_market(path, A)
    assert abs(scipy.io.mmread(str(path)).tocsr() - A).max() == 0.0


@pytest.mark.parametrize("kwargs", [dict(rho1=0.0), dict(c=-1.0), dict(mu=0.0), dict(lam=-1.0, mu=1.0)])
def test_physical_params_validation(kwargs):
    with pytest.raises(ValueError):
        PhysicalParams(**kwargs)


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(beta=0.5), dict(vector_jump="tangential")])
def test_penalty_params_validation(kwargs):
    with pytest.raises(ValueError):
        PenaltyParams(**kwargs)
