import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specmatch import (
    DiagonalGainFilter,
    InhibitionFilter,
    eigendecompose,
    build_operators,
    make_basis,
    mass_norm_decomposition,
    shared_filter_pair,
    spectral_convolve,
)
from specmatch.errors import DimensionMismatchError, GainUnderflowError


def test_identity_filter_reproduces_eigenbasis(ico1_spec):
    basis = make_basis(ico1_spec, InhibitionFilter.identity(ico1_spec.k))
    assert np.array_equal(basis.psi, ico1_spec.phi)
    assert np.array_equal(basis.pinv, ico1_spec.pinv)


def test_uniform_halving(ico1_spec):
    filt = InhibitionFilter(np.full(ico1_spec.k, np.log(2.0)))
    basis = make_basis(ico1_spec, filt)
    assert np.allclose(basis.psi, ico1_spec.phi / 2.0, rtol=1e-15)
    assert np.allclose(basis.pinv, 2.0 * ico1_spec.pinv, rtol=1e-15)


def test_random_gains_pseudoinverse(ico1_spec):
    rng = np.random.default_rng(5)
    filt = InhibitionFilter(np.abs(rng.standard_normal(ico1_spec.k)) * 2.0)
    basis = make_basis(ico1_spec, filt)
    gram = basis.pinv @ basis.psi
    assert np.abs(gram - np.eye(basis.k)).max() <= 1e-8


def test_invertibility_over_many_draws(ico1_spec, bumpy1_spec):
    rng = np.random.default_rng(6)
    for spec in (ico1_spec, bumpy1_spec):
        for _ in range(50):
            filt = InhibitionFilter(np.abs(rng.standard_normal(spec.k)) * 3.0)
            basis = make_basis(spec, filt)
            assert np.abs(basis.pinv @ basis.psi - np.eye(spec.k)).max() <= 1e-7


def test_orthogonality_preserved(ico1_spec):
    rng = np.random.default_rng(7)
    filt = InhibitionFilter(np.abs(rng.standard_normal(ico1_spec.k)))
    basis = make_basis(ico1_spec, filt)
    gram = basis.psi.T @ (basis.mass[:, None] * basis.psi)
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() <= 1e-7
    assert np.allclose(np.diag(gram), basis.gains**2, atol=1e-9)


def test_structure_preserved(ico1_spec):
    """Positive per-column gains keep each column's sign pattern and
    zero-crossing count."""
    filt = InhibitionFilter(np.linspace(0.0, 2.0, ico1_spec.k))
    basis = make_basis(ico1_spec, filt)
    assert np.array_equal(np.sign(basis.psi), np.sign(ico1_spec.phi))
    for i in range(basis.k):
        zc_psi = np.count_nonzero(np.diff(np.sign(basis.psi[:, i])))
        zc_phi = np.count_nonzero(np.diff(np.sign(ico1_spec.phi[:, i])))
        assert zc_psi == zc_phi


def test_matches_diagonal_gain_convolution_exactly(ico1_spec):
    rng = np.random.default_rng(8)
    filt = InhibitionFilter(np.abs(rng.standard_normal(ico1_spec.k)))
    basis = make_basis(ico1_spec, filt)
    convolved = spectral_convolve(
        ico1_spec, DiagonalGainFilter(filt.gains), ico1_spec.phi
    )
    assert np.array_equal(basis.psi, convolved)


def test_truncation_slices(ico1_spec):
    filt = InhibitionFilter(np.linspace(0, 1, ico1_spec.k))
    basis = make_basis(ico1_spec, filt)
    assert np.array_equal(basis.psi_k(5), basis.psi[:, :5])
    assert np.array_equal(basis.pinv_k(5), basis.pinv[:5])
    gram = basis.pinv_k(5) @ basis.psi_k(5)
    assert np.abs(gram - np.eye(5)).max() <= 1e-8
    with pytest.raises(DimensionMismatchError):
        basis.psi_k(0)
    with pytest.raises(DimensionMismatchError):
        basis.pinv_k(ico1_spec.k + 1)


def test_gain_underflow(ico1_spec):
    t = np.zeros(ico1_spec.k)
    t[-1] = 800.0  # exp(-800) underflows past 1e-300
    with pytest.raises(GainUnderflowError):
        make_basis(ico1_spec, InhibitionFilter(t))


def test_shared_pair_same_mesh(ico1_spec):
    bx, by = shared_filter_pair(
        ico1_spec, ico1_spec, InhibitionFilter.identity(ico1_spec.k)
    )
    assert np.array_equal(bx.psi, by.psi)


def test_shared_pair_two_meshes(ico1_spec, bumpy1_spec):
    rng = np.random.default_rng(9)
    filt = InhibitionFilter(np.abs(rng.standard_normal(ico1_spec.k)))
    bx, by = shared_filter_pair(ico1_spec, bumpy1_spec, filt)
    for basis in (bx, by):
        assert np.abs(basis.pinv @ basis.psi - np.eye(basis.k)).max() <= 1e-7
    assert np.array_equal(bx.gains, by.gains)


def test_shared_pair_k_mismatch(ico1_spec, ico2):
    other = eigendecompose(build_operators(ico2), ico1_spec.k + 3)
    filt = InhibitionFilter.identity(ico1_spec.k)
    with pytest.raises(DimensionMismatchError):
        shared_filter_pair(ico1_spec, other, filt)
    with pytest.raises(DimensionMismatchError):
        make_basis(other, filt)


def test_filter_validation():
    with pytest.raises(ValueError):
        InhibitionFilter(np.array([0.1, -0.2]))
    with pytest.raises(ValueError):
        InhibitionFilter(np.array([np.inf]))
    ident = InhibitionFilter.identity(4)
    assert np.array_equal(ident.gains, np.ones(4))


@given(
    st.lists(st.floats(min_value=0.0, max_value=500.0), min_size=1, max_size=30)
)
@settings(max_examples=60, deadline=None)
def test_gains_always_in_unit_interval(times):
    filt = InhibitionFilter(np.asarray(times))
    assert ((filt.gains > 0) & (filt.gains <= 1.0)).all()


def test_filter_json_roundtrip():
    filt = InhibitionFilter(np.array([0.0, 0.5, 2.5]))
    text = filt.to_json("abc123")
    back, spectrum_hash = InhibitionFilter.from_json(text)
    assert np.array_equal(back.times, filt.times)
    assert spectrum_hash == "abc123"


def test_mass_norm_decomposition_identity(ico1_spec, bumpy1_spec):
    rng = np.random.default_rng(10)
    for spec in (ico1_spec, bumpy1_spec):
        for _ in range(25):
            filt = InhibitionFilter(np.abs(rng.standard_normal(spec.k)))
            basis = make_basis(spec, filt)
            signal = rng.standard_normal((spec.vertex_count, 4))
            total, in_span, out_of_span = mass_norm_decomposition(basis, signal)
            assert total == pytest.approx(in_span + out_of_span, rel=1e-8)
            # the in-span term reduces to the plain eigenbasis coefficients
            coeff = spec.pinv @ signal
            assert in_span == pytest.approx(np.sum(coeff * coeff), rel=1e-9)
