import numpy as np
import pytest

from slowpoints import linalg
from slowpoints.errors import InsufficientDataError


def char_poly_coeffs(m):
    """Faddeev-LeVerrier characteristic polynomial coefficients.

    Returns c with p(x) = x^n + c[0] x^(n-1) + ... + c[n-1], computed without
    any eigensolver so it can serve as an independent oracle.
    """
    n = m.shape[0]
    coeffs = []
    mk = np.zeros_like(m)
    c = 1.0
    for k in range(1, n + 1):
        mk = m @ mk + c * np.eye(n)
        c = -np.trace(m @ mk) / k
        coeffs.append(c)
    return np.array(coeffs)


def durand_kerner_roots(coeffs, iters=600):
    """All complex roots of a monic polynomial by Weierstrass iteration."""
    n = len(coeffs)
    poly = np.concatenate([[1.0], coeffs]).astype(complex)
    roots = (0.4 + 0.9j) ** np.arange(1, n + 1)
    for _ in range(iters):
        vals = np.polyval(poly, roots)
        new = roots.copy()
        for i in range(n):
            denom = np.prod(roots[i] - np.delete(roots, i))
            new[i] = roots[i] - vals[i] / denom
        if np.max(np.abs(new - roots)) < 1e-13:
            roots = new
            break
        roots = new
    return roots


class TestSvd:
    def test_identity(self):
        _, s, _ = linalg.svd(np.eye(3))
        assert np.allclose(s, [1.0, 1.0, 1.0])

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=4), rng.normal(size=6)
        _, s, _ = linalg.svd(np.outer(a, b))
        assert np.sum(s > 1e-10) == 1

    def test_reconstruction_and_gram_oracle(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(5, 3))
        u, s, v = linalg.svd(m)
        recon = u @ np.diag(s) @ v.T
        assert np.linalg.norm(recon - m) < 1e-10 * np.linalg.norm(m)
        # Squared singular values are the eigenvalues of m^T m.
        gram_eigs = np.sort(np.linalg.eigvalsh(m.T @ m))[::-1]
        assert np.allclose(s**2, gram_eigs, atol=1e-10)

    def test_ordering(self):
        rng = np.random.default_rng(2)
        _, s, _ = linalg.svd(rng.normal(size=(7, 7)))
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


class TestEig:
    def test_diagonal(self):
        spec = linalg.eig_nonsymmetric(np.diag([0.9, 0.5]))
        assert np.allclose(spec.eigenvalues, [0.9, 0.5])
        for a in range(2):
            r = np.abs(spec.right_vectors[:, a])
            assert np.isclose(r.max(), 1.0) and np.isclose(r.min(), 0.0, atol=1e-12)

    def test_scaled_rotation(self):
        rho, theta = 0.8, 0.7
        c, s = np.cos(theta), np.sin(theta)
        spec = linalg.eig_nonsymmetric(rho * np.array([[c, -s], [s, c]]))
        expect = {rho * np.exp(1j * theta), rho * np.exp(-1j * theta)}
        for ev in spec.eigenvalues:
            assert min(abs(ev - e) for e in expect) < 1e-12

    def test_random_matrix_against_char_poly_roots(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(8, 8))
        spec = linalg.eig_nonsymmetric(m)
        roots = durand_kerner_roots(char_poly_coeffs(m))
        # Greedy-match every eigenvalue to an oracle root.
        remaining = list(roots)
        for ev in spec.eigenvalues:
            dists = [abs(ev - r) for r in remaining]
            i = int(np.argmin(dists))
            assert dists[i] < 1e-8
            remaining.pop(i)

    def test_residuals_and_biorthogonality(self):
        rng = np.random.default_rng(4)
        for n in (2, 5, 12):
            m = rng.normal(size=(n, n))
            spec = linalg.eig_nonsymmetric(m)
            scale = np.linalg.norm(m)
            for a in range(n):
                resid = m @ spec.right_vectors[:, a] - spec.eigenvalues[a] * spec.right_vectors[:, a]
                assert np.linalg.norm(resid) <= 1e-6 * scale
            assert np.abs(spec.left_vectors @ spec.right_vectors - np.eye(n)).max() < 1e-8

    def test_symmetric_input_real_eigenvalues(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(6, 6))
        m = a + a.T
        spec = linalg.eig_nonsymmetric(m)
        assert np.abs(spec.eigenvalues.imag).max() < 1e-8 * np.linalg.norm(m)

    def test_conjugate_pairs_adjacent(self):
        rng = np.random.default_rng(6)
        m = rng.normal(size=(6, 6))
        evs = linalg.eig_nonsymmetric(m).eigenvalues
        complex_evs = evs[np.abs(evs.imag) > 1e-12]
        for i in range(0, len(complex_evs) - 1, 2):
            assert np.isclose(complex_evs[i], np.conj(complex_evs[i + 1]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            linalg.eig_nonsymmetric(np.zeros((2, 3)))


class TestPca:
    def test_line_in_10d(self):
        rng = np.random.default_rng(7)
        direction = rng.normal(size=10)
        pts = np.outer(rng.uniform(-1, 1, size=50), direction)
        basis = linalg.pca(pts)
        assert basis.variances[0] > 0
        assert np.all(basis.variances[1:] < 1e-12)

    def test_isotropic_gaussian(self):
        rng = np.random.default_rng(8)
        basis = linalg.pca(rng.normal(size=(10000, 3)))
        v = basis.variances
        assert v.max() / v.min() < 1.1

    def test_hand_example(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.1], [0.0, -0.1]])
        basis = linalg.pca(pts)
        assert np.allclose(basis.variances, [0.5, 0.005])
        assert np.allclose(np.abs(basis.components), np.eye(2), atol=1e-12)

    def test_variance_sum_matches_covariance_trace(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(40, 6)) * rng.uniform(0.1, 3.0, size=6)
        basis = linalg.pca(pts)
        centered = pts - pts.mean(axis=0)
        trace = np.trace(centered.T @ centered / len(pts))
        assert abs(basis.variances.sum() - trace) < 1e-6 * trace

    def test_projection_reproduces_centered_data(self):
        rng = np.random.default_rng(10)
        pts = rng.normal(size=(30, 4))
        basis = linalg.pca(pts)
        coords = basis.project(pts)
        recon = basis.embed(coords)
        assert np.abs(recon - pts).max() < 1e-10

    def test_components_orthonormal(self):
        rng = np.random.default_rng(11)
        basis = linalg.pca(rng.normal(size=(100, 7)))
        gram = basis.components @ basis.components.T
        assert np.abs(gram - np.eye(7)).max() < 1e-8

    def test_fewer_points_than_dims_pads_basis(self):
        rng = np.random.default_rng(12)
        basis = linalg.pca(rng.normal(size=(4, 9)))
        assert basis.components.shape == (9, 9)
        assert basis.variances.shape == (9,)
        gram = basis.components @ basis.components.T
        assert np.abs(gram - np.eye(9)).max() < 1e-8

    def test_insufficient_points(self):
        with pytest.raises(InsufficientDataError):
            linalg.pca(np.ones((1, 3)))
