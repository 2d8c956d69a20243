import numpy as np
import pytest

from wiregraph.lowrank import (
    DegreeMode,
    FourierFeatures,
    KernelGraphSpec,
    LaplacianFactors,
    build_factors,
    exact_laplacian,
    jlt_compress,
    kernel_matrix,
    lowrank_eig,
    sample_fourier_features,
)
from wiregraph.rng import Rng
from wiregraph.spectral import Variant, spectral_features


def loop_laplacian(points, sigma):
    """Pairwise loop over j != i; independent of the vectorized kernel."""
    n = len(points)
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                w = np.exp(-np.sum((points[i] - points[j]) ** 2) / (2 * sigma ** 2))
                L[i, j] = -w
                L[i, i] += w
    return L


def cloud(seed, n=32, dim=3):
    return KernelGraphSpec(np.random.default_rng(seed).normal(size=(n, dim)), sigma=1.0)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelGraphSpec(np.zeros((3, 2)), sigma=0.0)
    with pytest.raises(ValueError):
        KernelGraphSpec(np.array([[0.0, np.nan]]), sigma=1.0)
    with pytest.raises(ValueError):
        sample_fourier_features(cloud(0), 0, Rng(0))


def test_exact_laplacian_matches_loop():
    spec = cloud(1, n=12)
    assert np.allclose(exact_laplacian(spec), loop_laplacian(spec.points, spec.sigma), atol=1e-14)


# features

def test_features_coincident_points_dot_is_one():
    spec = KernelGraphSpec(np.array([[0.3, -1.0], [0.3, -1.0], [2.0, 2.0]]), sigma=0.7)
    F = sample_fourier_features(spec, 17, Rng(0)).features
    assert np.allclose(np.sum(F ** 2, axis=1), 1.0, atol=1e-14)
    assert np.isclose(F[0] @ F[1], 1.0, atol=1e-14)


def test_features_mc_at_distance_sigma():
    sigma = 0.8
    spec = KernelGraphSpec(np.array([[0.0, 0, 0], [sigma, 0, 0]]), sigma=sigma)
    ff = sample_fourier_features(spec, 100_000, Rng(1))
    # each frequency contributes one independent cos term to the dot product
    terms = np.cos(2 * np.pi * ff.frequencies @ (spec.points[0] - spec.points[1]))
    dot = ff.features[0] @ ff.features[1]
    assert np.isclose(dot, terms.mean(), atol=1e-12)
    assert abs(dot - np.exp(-0.5)) <= 3 * terms.std() / np.sqrt(len(terms))


def test_features_approximate_kernel_matrix():
    spec = cloud(2)
    F = sample_fourier_features(spec, 4096, Rng(2)).features
    assert np.max(np.abs(F @ F.T - kernel_matrix(spec))) < 0.05


# factors

def test_single_node_factors():
    spec = KernelGraphSpec(np.array([[1.0, 2.0]]), sigma=1.0)
    ff = sample_fourier_features(spec, 5, Rng(3))
    fac = build_factors(spec, ff, "exact")
    assert fac.degrees.tolist() == [1.0]
    assert np.array_equal(fac.X, np.concatenate([[[1.0]], ff.features], axis=1))
    assert np.array_equal(fac.Y, np.concatenate([[[1.0]], -ff.features], axis=1))
    assert np.isclose(fac.estimate()[0, 0], 1.0 - ff.features[0] @ ff.features[0], atol=1e-14)


def test_exact_degree_factors_approximate_laplacian():
    spec = cloud(4, n=16)
    fac = build_factors(spec, sample_fourier_features(spec, 2048, Rng(4)), DegreeMode.EXACT)
    assert rel_fro(fac.estimate(), loop_laplacian(spec.points, spec.sigma)) <= 0.1


def test_estimated_degrees_close_to_exact():
    spec = cloud(5)
    ff = sample_fourier_features(spec, 4096, Rng(5))
    est = build_factors(spec, ff, "estimated").degrees
    # the loop oracle excludes the self term a_ii = 1
    exact = np.diag(loop_laplacian(spec.points, spec.sigma)) + 1.0
    assert np.max(np.abs(est - exact) / exact) <= 0.05


def test_negative_degree_estimates_are_clamped_and_counted():
    spec = KernelGraphSpec(np.zeros((2, 1)), sigma=1.0)
    ff = FourierFeatures(np.zeros((1, 1)), np.array([[1.0, 0.0], [-2.0, 0.0]]))
    fac = build_factors(spec, ff, "estimated")
    assert fac.clamped == 1
    assert fac.degrees.tolist() == [0.0, 2.0]


def test_mismatched_features_rejected():
    ff = sample_fourier_features(cloud(0, n=4), 3, Rng(0))
    with pytest.raises(ValueError):
        build_factors(cloud(0, n=5), ff)


# JLT

def test_jlt_identity_projection_is_exact():
    spec = cloud(6, n=6)
    fac = build_factors(spec, sample_fourier_features(spec, 8, Rng(6)))
    p = fac.X.shape[1]
    comp = jlt_compress(fac, p, G=np.sqrt(p) * np.eye(p))
    assert comp.compressed
    assert np.allclose(comp.estimate(), fac.estimate(), atol=1e-12)


def test_jlt_rejects_bad_shapes():
    spec = cloud(6, n=4)
    fac = build_factors(spec, sample_fourier_features(spec, 2, Rng(6)))
    with pytest.raises(ValueError):
        jlt_compress(fac, 0, Rng(0))
    with pytest.raises(ValueError):
        jlt_compress(fac, 3, G=np.ones((2, 3)))


def test_jlt_unbiased_on_small_case():
    rng = np.random.default_rng(7)
    fac = LaplacianFactors(rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), np.ones(4))
    target = fac.estimate()
    draws = np.array([jlt_compress(fac, 3, Rng(7).child(t)).estimate() for t in range(10_000)])
    err = np.abs(draws.mean(0) - target)
    assert np.all(err <= 3 * draws.std(0) / np.sqrt(len(draws)))


def test_jlt_error_shrinks_with_p():
    spec = cloud(8, n=16)
    fac = build_factors(spec, sample_fourier_features(spec, 64, Rng(8)))
    medians = [np.median([rel_fro(jlt_compress(fac, p, Rng(p).child(s)).estimate(), fac.estimate())
                          for s in range(25)])
               for p in (8, 32, 128)]
    assert medians[0] > medians[1] > medians[2]


def test_error_nonincreasing_in_r_and_p():
    spec = cloud(9, n=16)
    L = exact_laplacian(spec)

    def med(r, p):
        errs = []
        for s in range(10):
            fac = build_factors(spec, sample_fourier_features(spec, r, Rng(s).child("f")))
            est = fac.estimate() if p is None else jlt_compress(fac, p, Rng(s).child("g")).estimate()
            errs.append(rel_fro(est, L))
        return np.median(errs)

    # at small p the projection error hides any gain from more features, so
    # the grid stays where both effects exceed seed noise; None is uncompressed
    grid = np.array([[med(r, p) for p in (64, 256, None)] for r in (16, 64, 4096)])
    assert np.all(np.diff(grid, axis=0) <= 0)
    assert np.all(np.diff(grid, axis=1) <= 0)


# small eigenproblem

def test_nonzero_spectrum_matches_full_estimate():
    # identity embedding: eigenvalues of the 4x4 estimate reappear in the big small-matrix
    spec = KernelGraphSpec(np.array([[0.0, 0], [1, 0], [0, 1], [1.5, 1.5]]), sigma=1.0)
    fac = build_factors(spec, sample_fourier_features(spec, 256, Rng(10)))
    p = fac.X.shape[1]
    comp = jlt_compress(fac, p, G=np.sqrt(p) * np.eye(p))
    want = np.sort(np.linalg.eigvals(fac.estimate()).real)
    assert np.all(np.abs(want) > 1e-6)
    got = np.linalg.eigvals(comp.Y.T @ comp.X)
    got = np.sort(got[np.argsort(-np.abs(got))[:4]].real)
    assert np.max(np.abs(got - want)) <= 1e-10
    lr = lowrank_eig(comp)
    big = lr.eigenvalues[np.abs(lr.eigenvalues) > 1e-8]
    assert np.max(np.abs(np.sort(big.real) - want)) <= 1e-10


def test_nonzero_spectrum_identity_random_factors():
    for s in range(10):
        rng = np.random.default_rng(s)
        X, Y = rng.normal(size=(7, 4)), rng.normal(size=(7, 4))
        big = np.linalg.eigvals(X @ Y.T)
        big = big[np.abs(big) > 1e-8]
        small = np.linalg.eigvals(Y.T @ X)
        key = lambda v: np.lexsort((v.imag, v.real))
        assert len(big) == 4
        assert np.max(np.abs(big[key(big)] - small[key(small)])) <= 1e-8


def test_lowrank_eig_sorted_with_small_residuals():
    spec = cloud(11, n=20)
    fac = jlt_compress(build_factors(spec, sample_fourier_features(spec, 512, Rng(11))), 48, Rng(12))
    lr = lowrank_eig(fac, 6)
    assert len(lr.eigenvalues) == 6
    assert np.all(np.diff(lr.eigenvalues.real) >= 0)
    assert np.all(lr.residuals <= 1e-8 * np.linalg.norm(fac.estimate()))
    coords = spectral_features(lr.to_spectrum(), Variant.RAW).coords
    assert coords.shape == (20, 5)
    with pytest.raises(ValueError):
        lowrank_eig(fac, 49)


def test_smallest_eigenvalues_near_dense_oracle():
    errs = []
    for s in range(10):
        spec = cloud(100 + s)
        L = exact_laplacian(spec)
        want = np.linalg.eigvalsh(L)[:4]
        fac = build_factors(spec, sample_fourier_features(spec, 4096, Rng(s).child("f")))
        lr = lowrank_eig(jlt_compress(fac, 64, Rng(s).child("g")), 4)
        errs.append(np.max(np.abs(lr.eigenvalues.real - want)) / np.linalg.eigvalsh(L)[-1])
    assert np.median(errs) <= 0.15


def test_zero_features_collapse_to_degrees():
    spec = cloud(13, n=5)
    ff = FourierFeatures(np.zeros((3, 3)), np.zeros((5, 6)))
    fac = build_factors(spec, ff, "exact")
    p = fac.X.shape[1]
    lr = lowrank_eig(jlt_compress(fac, p, G=np.sqrt(p) * np.eye(p)), 5)
    # X Y^T = diag(d): zero features leave only the degree term
    d = kernel_matrix(spec).sum(1)
    assert np.allclose(lr.eigenvalues, np.sort(d), atol=1e-12)
    assert np.allclose(np.abs(lr.eigenvectors), np.eye(5)[:, np.argsort(d)], atol=1e-12)


def test_defective_small_matrix_uses_schur():
    # Y^T X is a 2x2 Jordan block
    fac = LaplacianFactors(np.eye(2), np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros(2), compressed=True)
    lr = lowrank_eig(fac)
    assert lr.used_schur and lr.notes
    assert np.allclose(lr.eigenvalues, 0)
    assert np.all(np.isfinite(lr.residuals))
