from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigma2lab.symfun import (
    DomainError,
    Spectrum,
    SymTensor,
    eigenvalues_sym,
    eigh_sorted,
    gamma2_mask,
    in_gamma_k,
    shift_spectrum,
    sigma2_batch,
    sigma2_gradient,
    sigma2_gradient_batch,
    sigma3_batch,
    sigma_all_batch,
    sigma_k,
    sigma_k_batch,
    sigma_k_mat,
)


# -- oracles ----------------------------------------------------------------------

def subset_sigma(values, k):
    """Sum over k-subsets of the product, by enumeration."""
    if k == 0:
        return 1.0
    return math.fsum(math.prod(c) for c in itertools.combinations(values, k))


def minor_sigma(W, k):
    """Sum of k x k principal minors."""
    W = np.asarray(W, dtype=float)
    if k == 0:
        return 1.0
    return math.fsum(float(np.linalg.det(W[np.ix_(idx, idx)]))
                     for idx in itertools.combinations(range(len(W)), k))


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# -- Spectrum / SymTensor -------------------------------------------------------------

def test_spectrum_sorting_is_stable_and_nonincreasing():
    s = Spectrum([1.0, 3.0, 1.0, 2.0])
    assert s.sorted().values == (3.0, 2.0, 1.0, 1.0)
    assert s.sorted().is_sorted()
    assert not s.is_sorted()
    assert s.n == 4


@pytest.mark.parametrize("n", [1, 9])
def test_spectrum_dimension_limits(n):
    with pytest.raises(DomainError):
        Spectrum([1.0] * n)


def test_symtensor_rejects_asymmetric():
    with pytest.raises(DomainError):
        SymTensor([[1.0, 2.0], [0.0, 1.0]])


def test_symtensor_enforces_exact_symmetry_on_rounding_noise():
    rng = np.random.default_rng(0)
    Q = random_orthogonal(rng, 3)
    W = SymTensor(Q @ np.diag([1.5, 1.0, -0.2]) @ Q.T)
    assert np.array_equal(W.entries, W.entries.T)
    with pytest.raises(ValueError):
        W.entries[0, 0] = 1.0


# -- sigma_k ------------------------------------------------------------------------

@pytest.mark.parametrize("lam,k,expected", [
    ((1, 1, 1), 2, 3.0),
    ((2, 2, -0.75), 2, 1.0),
    ((1.5, 1, -0.2), 3, -0.3),
])
def test_sigma_k_examples(lam, k, expected):
    assert sigma_k(Spectrum(lam), k) == pytest.approx(expected, rel=1e-14)


def test_sigma_k_examples_exact_rational():
    lam = [Fraction(2), Fraction(2), Fraction(-3, 4)]
    assert sum(a * b for a, b in itertools.combinations(lam, 2)) == 1
    assert math.prod([Fraction(3, 2), Fraction(1), Fraction(-1, 5)]) == Fraction(-3, 10)


def test_sigma_k_range():
    with pytest.raises(DomainError):
        sigma_k([1.0, 2.0, 3.0], 4)
    with pytest.raises(DomainError):
        sigma_k([1.0, 2.0, 3.0], -1)
    assert sigma_k([1.0, 2.0, 3.0], 0) == 1.0


@pytest.mark.parametrize("n", range(2, 9))
def test_sigma_k_matches_subset_enumeration(n):
    rng = np.random.default_rng(n)
    lam = rng.normal(size=(200, n)) * 10.0 ** rng.uniform(-2, 2, size=(200, 1))
    all_e = sigma_all_batch(lam, n)
    for row, e in zip(lam, all_e):
        for k in range(n + 1):
            ref = subset_sigma(row, k)
            scale = subset_sigma(np.abs(row), k)
            assert abs(e[k] - ref) <= 1e-12 * scale
            assert abs(sigma_k_batch(row, k) - ref) <= 1e-12 * scale


@given(st.lists(finite, min_size=2, max_size=8), st.floats(-3, 3))
def test_sigma_k_homogeneity_and_permutation(values, t):
    lam = np.array(values)
    n = len(lam)
    perm = lam[::-1]
    for k in range(n + 1):
        e = sigma_k(lam, k)
        scale = subset_sigma(np.abs(lam), k) + 1e-300
        assert abs(sigma_k(perm, k) - e) <= 1e-12 * scale
        assert abs(sigma_k(t * lam, k) - t ** k * e) <= 1e-11 * scale * max(1.0, abs(t)) ** k


# -- matrix sigma_k -------------------------------------------------------------------

def test_sigma_k_mat_examples():
    assert sigma_k_mat(np.eye(3), 2) == 3.0
    assert sigma_k_mat(np.diag([2, 2, -0.75]), 2) == pytest.approx(1.0, abs=1e-15)
    rng = np.random.default_rng(5)
    Q = random_orthogonal(rng, 3)
    W = Q @ np.diag([1.5, 1.0, -0.2]) @ Q.T
    assert sigma_k_mat(W, 2) == pytest.approx(1.0, abs=1e-12)
    assert sigma_k_mat(W, 3) == pytest.approx(-0.3, abs=1e-12)


@pytest.mark.parametrize("n", range(2, 9))
def test_sigma_k_mat_matches_minors_and_spectrum(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(40):
        G = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-1, 1)
        W = 0.5 * (G + G.T)
        spec = eigenvalues_sym(W)
        for k in range(n + 1):
            got = sigma_k_mat(W, k)
            scale = subset_sigma(np.abs(spec.values), k)
            assert abs(got - minor_sigma(W, k)) <= 1e-10 * scale
            assert abs(got - subset_sigma(spec.values, k)) <= 1e-10 * scale


def test_sigma_k_mat_random_symmetric_many():
    rng = np.random.default_rng(2024)
    for _ in range(10_000 // 8):
        n = int(rng.integers(2, 9))
        G = rng.standard_normal((n, n))
        W = 0.5 * (G + G.T)
        lam = np.linalg.eigvalsh(W)
        k = int(rng.integers(0, n + 1))
        scale = subset_sigma(np.abs(lam), k)
        assert abs(sigma_k_mat(W, k) - subset_sigma(lam, k)) <= 1e-10 * scale


@settings(max_examples=200)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_sigma_k_mat_orthogonal_invariance(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    W = 0.5 * (G + G.T)
    Q = random_orthogonal(rng, n)
    lam = np.abs(np.linalg.eigvalsh(W))
    for k in range(n + 1):
        scale = subset_sigma(lam, k)
        assert abs(sigma_k_mat(Q.T @ W @ Q, k) - sigma_k_mat(W, k)) <= 1e-10 * max(scale, 1.0)


def test_batch_sigma_functions_match_minors():
    rng = np.random.default_rng(9)
    G = rng.standard_normal((50, 3, 3))
    H = 0.5 * (G + np.swapaxes(G, 1, 2))
    for W, s2, s3 in zip(H, sigma2_batch(H), sigma3_batch(H)):
        assert s2 == pytest.approx(minor_sigma(W, 2), abs=1e-12)
        assert s3 == pytest.approx(minor_sigma(W, 3), abs=1e-12)
    G = rng.standard_normal((20, 5, 5))
    H = 0.5 * (G + np.swapaxes(G, 1, 2))
    for W, s3 in zip(H, sigma3_batch(H)):
        assert s3 == pytest.approx(minor_sigma(W, 3), abs=1e-10)


# -- gradient ---------------------------------------------------------------------

def test_sigma2_gradient_examples():
    G = sigma2_gradient(np.diag([2, 2, -0.75]))
    np.testing.assert_allclose(G.entries, np.diag([1.25, 1.25, 4.0]), atol=1e-15)
    assert not np.any(sigma2_gradient(np.zeros((3, 3))).entries)
    W = np.diag([1.5, 1.0, -0.2])
    assert np.sum(sigma2_gradient(W).entries * W) == pytest.approx(2.0, abs=1e-12)


def test_sigma2_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for n in range(2, 7):
        G = rng.standard_normal((n, n))
        W = 0.5 * (G + G.T)
        grad = sigma2_gradient(W).entries
        h = 1e-6
        for i in range(n):
            for j in range(n):
                E = np.zeros((n, n))
                E[i, j] = h
                # sigma_2 as a function of the full (unsymmetrized) matrix
                fd = (minor_sigma(W + E, 2) - minor_sigma(W - E, 2)) / (2 * h)
                assert grad[i, j] == pytest.approx(fd, abs=1e-7)


@settings(max_examples=200)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_contraction_identity(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-2, 2)
    W = 0.5 * (G + G.T)
    lhs = float(np.sum(sigma2_gradient(W).entries * W))
    scale = subset_sigma(np.abs(np.linalg.eigvalsh(W)), 2)
    assert abs(lhs - 2 * sigma_k_mat(W, 2)) <= 1e-12 * max(scale, 1.0) * n


def test_gradient_positive_definite_in_gamma2():
    rng = np.random.default_rng(11)
    found = 0
    while found < 10_000:
        n = 3
        lam = rng.normal(size=(4096, n)) + 0.8
        H = np.zeros((len(lam), n, n))
        idx = np.arange(n)
        H[:, idx, idx] = lam
        Q = np.stack([random_orthogonal(rng, n) for _ in range(len(lam))])
        H = Q @ H @ np.swapaxes(Q, 1, 2)
        H = 0.5 * (H + np.swapaxes(H, 1, 2))
        inside = gamma2_mask(H)
        ev = np.linalg.eigvalsh(sigma2_gradient_batch(H[inside]))
        assert np.all(ev[:, 0] > 0)
        found += int(inside.sum())


# -- cones --------------------------------------------------------------------------

def test_in_gamma_k_examples():
    assert in_gamma_k(Spectrum([1, 1, 1]), 3).inside
    c = in_gamma_k(Spectrum([2, 2, -0.75]), 2)
    assert c.inside
    assert c.margins == pytest.approx((3.25, 1.0))
    c3 = in_gamma_k(Spectrum([2, 2, -0.75]), 3)
    assert not c3.inside
    assert c3.margins[2] == pytest.approx(-3.0)
    assert in_gamma_k(SymTensor.diag([2, 2, -0.75]), 2).inside
    with pytest.raises(DomainError):
        in_gamma_k([1.0, 1.0], 3)


def test_cone_boundary_is_excluded():
    assert not in_gamma_k([1.0, 0.0, 0.0], 2).inside


@given(st.lists(finite, min_size=2, max_size=8))
def test_gamma_nesting(values):
    n = len(values)
    inside = [in_gamma_k(values, k).inside for k in range(1, n + 1)]
    for k in range(1, n):
        if inside[k]:
            assert inside[k - 1]


# -- eigenvalues ----------------------------------------------------------------------

def test_eigenvalue_examples():
    assert eigenvalues_sym(np.diag([3.0, 1.0, 2.0])).values == (3.0, 2.0, 1.0)
    assert eigenvalues_sym([[0.0, 1.0], [1.0, 0.0]]).values == pytest.approx((1.0, -1.0), abs=1e-15)
    rng = np.random.default_rng(17)
    for _ in range(100):
        Q = random_orthogonal(rng, 3)
        W = Q @ np.diag([1.5, 1.0, -0.2]) @ Q.T
        for method in ("closed", "iterative"):
            assert eigenvalues_sym(W, method).values == pytest.approx((1.5, 1.0, -0.2), abs=1e-12)


@pytest.mark.parametrize("n", range(2, 9))
def test_eigen_reconstruction(n):
    rng = np.random.default_rng(n)
    for _ in range(50):
        G = rng.standard_normal((n, n))
        W = 0.5 * (G + G.T)
        spec, Q = eigh_sorted(W)
        assert spec.is_sorted()
        err = np.abs(W - Q @ np.diag(spec.values) @ Q.T).max()
        assert err <= 1e-12 * (1 + np.abs(W).max())
        if n <= 3:
            np.testing.assert_allclose(eigenvalues_sym(W, "closed").values, spec.values, atol=1e-12)


def test_closed_form_requires_small_n():
    with pytest.raises(DomainError):
        eigenvalues_sym(np.eye(4), "closed")


# -- shift ------------------------------------------------------------------------

def test_shift_examples():
    s = shift_spectrum(Spectrum([1.5, 1.0, -0.2]), 0.2)
    assert s.values == pytest.approx((1.7, 1.2, 0.0), abs=1e-15)
    assert shift_spectrum([1.5, 1.0, -0.2], 0.0).values == (1.5, 1.0, -0.2)
    assert sigma_k(s, 3) == pytest.approx(0.0, abs=1e-15)


@given(st.lists(finite, min_size=2, max_size=6), st.floats(-5, 5))
def test_shift_identity(values, a):
    # sigma_k(lam + a) = sum_j C(n-j, k-j) a^(k-j) sigma_j(lam)
    n = len(values)
    shifted = shift_spectrum(values, a)
    for k in range(n + 1):
        ref = sum(math.comb(n - j, k - j) * a ** (k - j) * subset_sigma(values, j) for j in range(k + 1))
        scale = subset_sigma(np.abs(values) + abs(a), k)
        assert abs(sigma_k(shifted, k) - ref) <= 1e-11 * max(scale, 1.0)
