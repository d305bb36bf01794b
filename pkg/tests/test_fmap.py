import numpy as np
import pytest

from specmatch import (
    FeatureKind,
    FeatureSet,
    FunctionalMap,
    InhibitionFilter,
    build_operators,
    eigendecompose,
    energy_bijectivity,
    energy_coupling,
    energy_orthogonality,
    fmap_project,
    fmap_solve,
    load_fmap,
    make_basis,
    save_fmap,
    shared_filter_pair,
)
from specmatch.errors import DimensionMismatchError, SingularSystemError
from specmatch.pointwise import PointwiseMap

from .conftest import permuted_copy
from .oracles import fmap_solver_normal_equations, frobenius_sq


def _features(values):
    return FeatureSet(values, FeatureKind.TRANSFORMED)


def _equivalence_instance(mesh, k, seed, extra_dims=3):
    """A constructed instance transporting features exactly: band-limited
    full-rank features on X carried onto a relabeled copy by the true map."""
    rng = np.random.default_rng(seed)
    copy, perm = permuted_copy(mesh, seed=seed)
    spec_x = eigendecompose(build_operators(mesh), k)
    spec_y = eigendecompose(build_operators(copy), k)
    r = rng.standard_normal((k, k + extra_dims)) + 0.1 * np.eye(k, k + extra_dims)
    f_x = spec_x.phi @ r
    pi = PointwiseMap.hard(perm, mesh.vertex_count)
    f_y = pi.pull(f_x)
    return spec_x, spec_y, _features(f_x), _features(f_y), pi


def test_identity_map_from_identical_features(bumpy1_spec):
    rng = np.random.default_rng(0)
    k = bumpy1_spec.k
    feats = _features(bumpy1_spec.phi @ (np.eye(k) + 0.1 * rng.standard_normal((k, k))))
    basis = make_basis(bumpy1_spec, InhibitionFilter.identity(k))
    c = fmap_solve(
        feats, feats, basis, basis,
        bumpy1_spec.eigenvalues, bumpy1_spec.eigenvalues, lam_reg=0.0,
    )
    assert np.abs(c.C - np.eye(k)).max() <= 1e-8


def test_solver_equals_projection_on_constructed_instances(bumpy1):
    rng = np.random.default_rng(21)
    k = 10
    spec_x, spec_y, f_x, f_y, pi = _equivalence_instance(bumpy1, k, seed=3)
    for trial in range(3):
        times = np.zeros(k) if trial == 0 else np.abs(rng.standard_normal(k))
        bx, by = shared_filter_pair(spec_x, spec_y, InhibitionFilter(times))
        c_solve = fmap_solve(
            f_x, f_y, bx, by, spec_x.eigenvalues, spec_y.eigenvalues, lam_reg=0.0
        )
        c_proj = fmap_project(pi, bx, by)
        assert np.abs(c_solve.C - c_proj.C).max() <= 1e-8


def test_solver_matches_normal_equations_oracle(bumpy1_spec):
    rng = np.random.default_rng(22)
    k = bumpy1_spec.k
    basis = make_basis(bumpy1_spec, InhibitionFilter(np.abs(rng.standard_normal(k))))
    f_x = _features(rng.standard_normal((bumpy1_spec.vertex_count, k + 2)))
    f_y = _features(rng.standard_normal((bumpy1_spec.vertex_count, k + 2)))
    lam_x = bumpy1_spec.eigenvalues
    lam_y = lam_x * 1.3 + 0.2
    for lam_reg in (0.0, 1e-3, 0.5):
        c = fmap_solve(f_x, f_y, basis, basis, lam_x, lam_y, lam_reg=lam_reg)
        a = basis.pinv @ f_x.values
        b = basis.pinv @ f_y.values
        oracle = fmap_solver_normal_equations(a, b, lam_x, lam_y, lam_reg)
        assert np.abs(c.C - oracle).max() <= 1e-9 * max(1.0, np.abs(oracle).max())


def test_huge_commutativity_weight_kills_mismatched_rows(bumpy1_spec):
    """With disjoint eigenvalue sets every entry gets a positive penalty, so
    the map vanishes in the stiff-regularization limit."""
    rng = np.random.default_rng(23)
    k = bumpy1_spec.k
    basis = make_basis(bumpy1_spec, InhibitionFilter.identity(k))
    f = _features(rng.standard_normal((bumpy1_spec.vertex_count, k + 2)))
    lam_x = np.linspace(1.0, 2.0, k)
    lam_y = np.linspace(10.0, 20.0, k)  # disjoint from lam_x
    c0 = fmap_solve(f, f, basis, basis, lam_x, lam_y, lam_reg=0.0)
    c_stiff = fmap_solve(f, f, basis, basis, lam_x, lam_y, lam_reg=1e12)
    assert np.abs(c_stiff.C).max() <= 1e-9 * np.abs(c0.C).max()


def test_solver_rank_deficient_features(bumpy1_spec):
    k = bumpy1_spec.k
    basis = make_basis(bumpy1_spec, InhibitionFilter.identity(k))
    f = _features(np.ones((bumpy1_spec.vertex_count, 2)))  # rank 1 << k
    with pytest.raises(SingularSystemError):
        fmap_solve(f, f, basis, basis, bumpy1_spec.eigenvalues,
                   bumpy1_spec.eigenvalues, lam_reg=0.0)


def test_project_identity_map(ico1_spec):
    k = ico1_spec.k
    basis = make_basis(ico1_spec, InhibitionFilter.identity(k))
    pi = PointwiseMap.hard(np.arange(ico1_spec.vertex_count), ico1_spec.vertex_count)
    c = fmap_project(pi, basis, basis)
    assert np.abs(c.C - np.eye(k)).max() <= 1e-12


def test_project_permutation_is_orthonormal(bumpy1):
    copy, perm = permuted_copy(bumpy1, seed=9)
    k = 10
    spec_x = eigendecompose(build_operators(bumpy1), k)
    spec_y = eigendecompose(build_operators(copy), k)
    bx, by = shared_filter_pair(spec_x, spec_y, InhibitionFilter.identity(k))
    pi = PointwiseMap.hard(perm, bumpy1.vertex_count)
    c = fmap_project(pi, bx, by)
    assert energy_orthogonality(c) <= 1e-6


def test_project_soft_uniform_matches_dense_product(ico1_spec):
    n = ico1_spec.vertex_count
    k = ico1_spec.k
    rng = np.random.default_rng(24)
    basis = make_basis(ico1_spec, InhibitionFilter(np.abs(rng.standard_normal(k))))
    pi = PointwiseMap.soft(np.full((n, n), 1.0 / n))
    c = fmap_project(pi, basis, basis, k_prime=6)
    dense = basis.pinv_k(6) @ pi.dense() @ basis.psi_k(6)
    assert np.abs(c.C - dense).max() <= 1e-12


def test_project_linear_in_the_map(ico1_spec):
    n = ico1_spec.vertex_count
    rng = np.random.default_rng(25)
    basis = make_basis(ico1_spec, InhibitionFilter.identity(ico1_spec.k))

    def random_soft():
        m = rng.random((n, n))
        return m / m.sum(axis=1, keepdims=True)

    pi_a, pi_b = random_soft(), random_soft()
    for w in (0.25, 0.5, 0.9):
        blend = PointwiseMap.soft(w * pi_a + (1 - w) * pi_b)
        c_blend = fmap_project(blend, basis, basis)
        c_a = fmap_project(PointwiseMap.soft(pi_a), basis, basis)
        c_b = fmap_project(PointwiseMap.soft(pi_b), basis, basis)
        assert np.abs(c_blend.C - (w * c_a.C + (1 - w) * c_b.C)).max() <= 1e-10


def test_project_dimension_checks(ico1_spec, bumpy1_spec):
    basis = make_basis(ico1_spec, InhibitionFilter.identity(ico1_spec.k))
    pi = PointwiseMap.hard(np.zeros(5, dtype=int), 7)
    with pytest.raises(DimensionMismatchError):
        fmap_project(pi, basis, basis)


# -- energies -------------------------------------------------------------------


def test_bijectivity_closed_forms():
    eye = FunctionalMap(np.eye(10))
    two = FunctionalMap(2 * np.eye(10))
    assert energy_bijectivity(eye, eye) == 0.0
    assert energy_bijectivity(two, eye) == pytest.approx(10.0)


def test_bijectivity_matches_elementwise_oracle():
    rng = np.random.default_rng(26)
    a = FunctionalMap(rng.standard_normal((7, 7)))
    b = FunctionalMap(rng.standard_normal((7, 7)))
    expected = frobenius_sq(a.C @ b.C - np.eye(7))
    assert energy_bijectivity(a, b) == pytest.approx(expected, abs=1e-12)


def test_orthogonality_closed_forms():
    theta = 0.7
    rot = np.eye(5)
    rot[:2, :2] = [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    assert energy_orthogonality(FunctionalMap(rot)) <= 1e-28
    assert energy_orthogonality(FunctionalMap(2 * np.eye(5))) == pytest.approx(45.0)


def test_orthogonality_matches_elementwise_oracle():
    rng = np.random.default_rng(27)
    c = FunctionalMap(rng.standard_normal((6, 6)))
    expected = frobenius_sq(c.C @ c.C.T - np.eye(6))
    assert energy_orthogonality(c) == pytest.approx(expected, abs=1e-12)


def test_coupling_energy(ico1_spec):
    rng = np.random.default_rng(28)
    n = ico1_spec.vertex_count
    basis = make_basis(ico1_spec, InhibitionFilter(np.abs(rng.standard_normal(ico1_spec.k))))
    pi = PointwiseMap.hard(rng.integers(0, n, n), n)
    proj = fmap_project(pi, basis, basis)
    assert energy_coupling(proj, pi, basis, basis) <= 1e-20
    zero = FunctionalMap(np.zeros((ico1_spec.k, ico1_spec.k)))
    assert energy_coupling(zero, pi, basis, basis) == pytest.approx(
        frobenius_sq(proj.C), rel=1e-10
    )
    c = FunctionalMap(rng.standard_normal((ico1_spec.k, ico1_spec.k)))
    expected = frobenius_sq(c.C - proj.C)
    assert energy_coupling(c, pi, basis, basis) == pytest.approx(expected, rel=1e-12)


def test_self_map_all_energies_vanish(ico1_spec):
    basis = make_basis(ico1_spec, InhibitionFilter.identity(ico1_spec.k))
    pi = PointwiseMap.hard(np.arange(ico1_spec.vertex_count), ico1_spec.vertex_count)
    c = fmap_project(pi, basis, basis)
    assert energy_bijectivity(c, c) <= 1e-20
    assert energy_orthogonality(c) <= 1e-20
    assert energy_coupling(c, pi, basis, basis) <= 1e-24


# -- serialization ----------------------------------------------------------------


def test_fmap_roundtrip(tmp_path):
    rng = np.random.default_rng(29)
    fm = FunctionalMap(rng.standard_normal((8, 8)), direction="a->b")
    p = tmp_path / "m.fmap"
    save_fmap(fm, p)
    assert p.read_bytes()[:6] == b"FMAP1\0"
    back = load_fmap(p)
    assert back.direction == "a->b"
    assert np.array_equal(back.C, fm.C)


def test_fmap_validation():
    with pytest.raises(DimensionMismatchError):
        FunctionalMap(np.ones((3, 4)))
    with pytest.raises(SingularSystemError):
        FunctionalMap(np.full((3, 3), np.nan))
