import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonloc import hilbert
from nonloc.hilbert import (
    DimPair,
    NotHermitianError,
    flip_operator,
    kron,
    partial_trace,
    spectral_decompose,
)


def hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2.0


class TestDimPair:
    def test_total(self):
        assert DimPair(3, 4).total == 12

    def test_single_system_allowed(self):
        assert DimPair(2, 1).total == 2

    @pytest.mark.parametrize("d1,d2", [(0, 2), (2, 0), (-1, 3), (1, 1)])
    def test_invalid(self, d1, d2):
        with pytest.raises(ValueError):
            DimPair(d1, d2)


class TestFlipOperator:
    def test_d2_entries(self):
        # oracle: F |i,j> = |j,i>, so F[(i,j),(k,l)] = delta_il delta_jk
        f = flip_operator(2)
        expected = np.zeros((4, 4))
        expected[0, 0] = expected[3, 3] = 1.0
        expected[1, 2] = expected[2, 1] = 1.0
        assert np.array_equal(f, expected)

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_involution_and_trace(self, d):
        f = flip_operator(d)
        assert np.array_equal(f @ f, np.eye(d * d))
        assert np.trace(f) == d
        assert hilbert.hermiticity_defect(f) == 0.0

    def test_swaps_product_vectors(self):
        rng = np.random.default_rng(3)
        u = rng.normal(size=3) + 1j * rng.normal(size=3)
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        f = flip_operator(3)
        assert np.allclose(f @ np.kron(u, v), np.kron(v, u))


class TestPartialTrace:
    def test_kron_factorization(self):
        rng = np.random.default_rng(5)
        a = hermitian(rng, 2)
        b = hermitian(rng, 3)
        m = kron(a, b)
        assert np.allclose(partial_trace(m, (2, 3), keep=1), np.trace(b) * a,
                           atol=1e-12)
        assert np.allclose(partial_trace(m, (2, 3), keep=2), np.trace(a) * b,
                           atol=1e-12)

    def test_trace_preserved(self):
        rng = np.random.default_rng(7)
        m = hermitian(rng, 6)
        for keep in (1, 2):
            assert np.isclose(
                np.trace(partial_trace(m, (2, 3), keep=keep)), np.trace(m)
            )

    def test_flip_partial_trace_is_identity(self):
        # tr_2 F = I_d: classic flip identity
        for d in (2, 3):
            assert np.allclose(
                partial_trace(flip_operator(d), (d, d), keep=1), np.eye(d)
            )


class TestSpectralDecompose:
    def test_flip_d2(self):
        f = flip_operator(2)
        spec = spectral_decompose(f)
        assert np.allclose(spec.eigenvalues, [1.0, -1.0])
        sym = (np.eye(4) + f) / 2.0
        anti = (np.eye(4) - f) / 2.0
        assert np.allclose(spec.projectors[0], sym, atol=1e-12)
        assert np.allclose(spec.projectors[1], anti, atol=1e-12)
        assert spec.ranks == (3, 1)

    def test_reconstruct(self):
        rng = np.random.default_rng(11)
        m = hermitian(rng, 5)
        spec = spectral_decompose(m)
        assert np.max(np.abs(spec.reconstruct() - m)) < 1e-10

    def test_degenerate_clustering(self):
        m = np.diag([2.0, 1.0 + 1e-12, 1.0]).astype(complex)
        spec = spectral_decompose(m)
        assert len(spec.eigenvalues) == 2
        assert spec.ranks == (1, 2)

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitianError):
            spectral_decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_projector_orthogonality(self):
        rng = np.random.default_rng(13)
        m = hermitian(rng, 4)
        spec = spectral_decompose(m)
        for i, p in enumerate(spec.projectors):
            assert np.max(np.abs(p @ p - p)) < 1e-10
            for q in spec.projectors[i + 1:]:
                assert np.max(np.abs(p @ q)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**30))
def test_spectral_reconstruction_property(n, seed):
    rng = np.random.default_rng(seed)
    m = hermitian(rng, n)
    spec = spectral_decompose(m)
    assert np.max(np.abs(spec.reconstruct() - m)) < 1e-10
    total = sum(spec.projectors)
    assert np.max(np.abs(total - np.eye(n))) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**30))
def test_kron_mixed_product_property(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(-4, 5, size=(2, 2, 2))
    c, d = rng.integers(-4, 5, size=(2, 3, 3))
    left = kron(a, c) @ kron(b, d)
    right = kron(a @ b, c @ d)
    assert np.array_equal(left, right)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**30))
def test_partial_trace_factorization_property(d1, d2, seed):
    rng = np.random.default_rng(seed)
    a = hermitian(rng, d1)
    b = hermitian(rng, d2)
    m = kron(a, b)
    assert np.max(np.abs(partial_trace(m, (d1, d2), 1) - np.trace(b) * a)) < 1e-12
    assert np.max(np.abs(partial_trace(m, (d1, d2), 2) - np.trace(a) * b)) < 1e-12


def test_matrix_json_round_trip():
    rng = np.random.default_rng(17)
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    back = hilbert.matrix_from_json(hilbert.matrix_to_json(m))
    assert np.array_equal(back, m)
