import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boundary_ctrl.exceptions import InvalidArgumentError, PreconditionError
from boundary_ctrl.spectral import (FourierBasis, IntervalGeometry, TruncatedOperator,
                                    build_identity, build_magnetic_laplacian,
                                    build_position_operator, closed_form_eigenvalues,
                                    eigendecompose, gap_sequence, spectral_residuals)
from oracles import fd_richardson, simpson_position_element

TWO_PI = 2 * np.pi

# frozen from oracles.fd_richardson (M = 4096, Richardson with 8192)
FD_A05_L2PI = np.array([0.25, 0.25, 2.25, 2.25])
FD_A0_L1 = np.array([4.22308855e-11, 39.4784176, 39.4784176])
# frozen from oracles.simpson_position_element
SIMPSON_DIAG_L2 = 1.0
SIMPSON_OFF_L2PI = -1.0j


def basis(l=TWO_PI, N=8):
    return FourierBasis.on_interval(l, N)


class TestGeometry:
    @pytest.mark.parametrize("l", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_bad_length(self, l):
        with pytest.raises(InvalidArgumentError):
            IntervalGeometry(l)

    @pytest.mark.parametrize("N", [0, -2, 1.5, True])
    def test_rejects_bad_truncation(self, N):
        with pytest.raises(InvalidArgumentError):
            FourierBasis(IntervalGeometry(1.0), N)

    def test_dimension_and_modes(self):
        b = basis(N=5)
        assert b.dim == 11
        assert list(b.modes) == list(range(-5, 6))

    def test_sampled_gram_is_identity(self):
        b = basis(l=3.0, N=6)
        M = 64
        E = b.sample_matrix(b.grid(M))
        gram = E.conj().T @ E * (b.l / M)
        assert np.max(np.abs(gram - np.eye(b.dim))) < 1e-12

    def test_mode_vector_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            basis(N=2).mode_vector(3)


class TestMagneticLaplacian:
    def test_zero_mode_of_free_laplacian(self):
        b = basis()
        assert build_magnetic_laplacian(0.0, b).matrix[b.index_of(0), b.index_of(0)] == 0

    def test_half_flux_first_mode_matches_fd_oracle(self):
        b = basis()
        val = build_magnetic_laplacian(0.5, b).matrix[b.index_of(1), b.index_of(1)].real
        assert val == pytest.approx(0.25, abs=1e-14)
        lowest = np.sort(np.diag(build_magnetic_laplacian(0.5, b).matrix).real)[:4]
        assert np.allclose(lowest, FD_A05_L2PI, atol=1e-6)

    def test_degenerate_pair_matches_fd_oracle(self):
        b = basis(l=1.0)
        m = build_magnetic_laplacian(0.0, b).matrix
        assert m[b.index_of(1), b.index_of(1)] == m[b.index_of(-1), b.index_of(-1)]
        assert m[b.index_of(1), b.index_of(1)].real == pytest.approx(4 * np.pi ** 2, rel=1e-14)
        assert np.allclose(np.sort(np.diag(m).real)[:3], FD_A0_L1, atol=1e-4)

    def test_non_finite_potential(self):
        with pytest.raises(InvalidArgumentError):
            build_magnetic_laplacian(np.nan, basis())

    @given(A=st.floats(-20, 20), l=st.floats(0.1, 50), N=st.integers(1, 24))
    def test_exactly_diagonal_and_real(self, A, l, N):
        m = build_magnetic_laplacian(A, FourierBasis.on_interval(l, N)).matrix
        assert np.count_nonzero(m - np.diag(np.diag(m))) == 0
        assert np.all(np.diag(m).imag == 0)

    @given(A=st.floats(-10, 10), l=st.floats(0.5, 20), N=st.integers(1, 16))
    def test_spectrum_matches_closed_form(self, A, l, N):
        b = FourierBasis.on_interval(l, N)
        ev = eigendecompose(build_magnetic_laplacian(A, b)).eigenvalues
        ref = closed_form_eigenvalues(A, l, b.modes)
        assert np.all(np.abs(ev - ref) <= 1e-10 * np.maximum(1, np.abs(ref)))


@pytest.mark.slow
def test_fd_oracle_reproduces_frozen_values():
    ev, err = fd_richardson(0.5, TWO_PI, 4096, 4)
    assert np.allclose(ev, FD_A05_L2PI, atol=1e-6)


class TestPosition:
    def test_diagonal_matches_quadrature(self):
        b = basis(l=2.0, N=3)
        x = build_position_operator(b).matrix
        assert x[b.index_of(0), b.index_of(0)] == pytest.approx(SIMPSON_DIAG_L2, abs=1e-12)
        assert simpson_position_element(0, 0, 2.0) == pytest.approx(SIMPSON_DIAG_L2, abs=1e-10)

    def test_first_off_diagonal_matches_quadrature(self):
        b = basis(N=3)
        x = build_position_operator(b).matrix
        assert x[b.index_of(-1), b.index_of(0)] == pytest.approx(SIMPSON_OFF_L2PI, abs=1e-12)
        assert simpson_position_element(-1, 0, TWO_PI) == pytest.approx(SIMPSON_OFF_L2PI, abs=1e-10)

    @given(l=st.floats(0.1, 30), N=st.integers(1, 20))
    def test_hermitian_and_bounded(self, l, N):
        x = build_position_operator(FourierBasis.on_interval(l, N)).matrix
        assert np.array_equal(x, x.conj().T)
        assert np.linalg.norm(x, 2) <= l * (1 + 1e-12)

    def test_elements_against_quadrature(self):
        b = basis(l=1.7, N=2)
        x = build_position_operator(b).matrix
        for m in b.modes:
            for n in b.modes:
                ref = simpson_position_element(m, n, 1.7)
                assert abs(x[b.index_of(m), b.index_of(n)] - ref) < 1e-8


class TestEigendecompose:
    def test_diagonal_input_gives_permutation(self):
        b = basis(N=2)
        d = np.array([3.0, -1.0, 2.0, 0.5, 7.0])
        spec = eigendecompose(TruncatedOperator(b, np.diag(d)))
        assert np.array_equal(spec.eigenvalues, np.sort(d))
        assert np.array_equal(np.abs(spec.eigenvectors), np.abs(spec.eigenvectors).round())

    def test_shifted_laplacian_matches_sorted_closed_form(self):
        b = basis()
        spec = eigendecompose(build_magnetic_laplacian(0.3, b))
        ref = np.sort((np.arange(-8, 9) - 0.3) ** 2)
        assert np.max(np.abs(spec.eigenvalues - ref)) <= 1e-12

    def test_identity(self):
        spec = eigendecompose(build_identity(basis(N=3)))
        assert np.all(spec.eigenvalues == 1)
        assert np.all(spec.gaps == 0)
        assert np.allclose(spec.eigenvectors, np.eye(7))

    def test_degenerate_ties_broken_by_mode_index(self):
        b = basis()
        spec = eigendecompose(build_magnetic_laplacian(0.0, b))
        modes = spec.dominant_modes
        assert modes[0] == 0
        assert list(modes[1:5]) == [-1, 1, -2, 2]

    def test_deterministic_under_basis_rotation(self):
        b = basis(N=3)
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7)))
        d = np.array([1, 1, 2, 2, 2, 5, 6.0])
        op = TruncatedOperator(b, (q * d) @ q.conj().T)
        v1 = eigendecompose(op).eigenvectors
        v2 = eigendecompose(TruncatedOperator(b, op.matrix.copy())).eigenvectors
        assert np.array_equal(v1, v2)

    def test_rejects_non_hermitian(self):
        b = basis(N=1)
        m = np.zeros((3, 3), dtype=complex)
        m[0, 1] = 1e-6
        with pytest.raises(PreconditionError) as err:
            eigendecompose(TruncatedOperator(b, m))
        assert err.value.deviation == pytest.approx(1e-6)

    @given(seed=st.integers(0, 2 ** 32 - 1), N=st.integers(1, 8))
    def test_invariants_random_hermitian(self, seed, N):
        b = FourierBasis.on_interval(1.0, N)
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(b.dim, b.dim)) + 1j * rng.normal(size=(b.dim, b.dim))
        op = TruncatedOperator(b, m + m.conj().T)
        spec = eigendecompose(op)
        v = spec.eigenvectors
        assert np.all(np.diff(spec.eigenvalues) >= 0)
        assert np.max(np.abs(v.conj().T @ v - np.eye(b.dim))) <= 1e-10
        res = spectral_residuals(op, spec)
        assert np.all(res <= 1e-10 * np.maximum(1, np.abs(spec.eigenvalues)))


class TestGaps:
    def test_arithmetic(self):
        b = basis(N=2)
        spec = eigendecompose(TruncatedOperator(b, np.diag([0, 1, 4, 9, 16.0])))
        assert list(gap_sequence(spec, 3)) == [1, 3, 5]

    def test_free_laplacian_has_zero_gaps(self):
        gaps = gap_sequence(eigendecompose(build_magnetic_laplacian(0.0, basis())), 8)
        assert list(gaps[1::2]) == [0, 0, 0, 0]

    def test_irrational_flux_gaps_positive(self):
        b = basis(N=32)
        spec = eigendecompose(build_magnetic_laplacian(1 / (2 * np.sqrt(2)), b))
        assert np.all(gap_sequence(spec, b.dim - 1) > 0)
        ref = np.sort((np.arange(-32, 33) - 1 / (2 * np.sqrt(2))) ** 2)
        assert len(np.unique(ref)) == b.dim

    def test_count_too_large(self):
        spec = eigendecompose(build_identity(basis(N=1)))
        with pytest.raises(InvalidArgumentError):
            gap_sequence(spec, 3)
