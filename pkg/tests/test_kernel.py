import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.exceptions import KernelDomainError, SingularKernelError
from src.kernel import (
    KernelBlock,
    PriorCovariance,
    factor,
    inverse,
    inverse_quadratic,
    log_det,
    materialize,
)


def test_materialize_small_block():
    assert_allclose(materialize(KernelBlock(n=2, beta=0.5)), [[0.5, 0.25], [0.25, 0.25]])


def test_materialize_beta_zero_is_zero_matrix():
    assert np.all(materialize(KernelBlock(n=4, beta=0.0, lam=2.0)) == 0.0)


def test_materialize_is_positive_semidefinite():
    K = materialize(KernelBlock(n=5, beta=0.7))
    assert_allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-12


@pytest.mark.parametrize("block", [
    KernelBlock(n=3, beta=1.0),
    KernelBlock(n=3, beta=-0.1),
    KernelBlock(n=3, beta=0.5, lam=0.0),
    KernelBlock(n=0, beta=0.5),
])
def test_materialize_rejects_out_of_domain(block):
    with pytest.raises(KernelDomainError):
        materialize(block)


def test_diagonal_decays():
    diag = np.diag(materialize(KernelBlock(n=6, beta=0.8, lam=3.0)))
    assert np.all(np.diff(diag) < 0)


def test_factor_scalar():
    assert_allclose(factor(KernelBlock(n=1, beta=0.3, lam=2.0)), [[np.sqrt(0.6)]])


def test_factor_reconstructs_small_block():
    F = factor(KernelBlock(n=2, beta=0.5))
    assert F[0, 1] == 0.0
    assert_allclose(F @ F.T, [[0.5, 0.25], [0.25, 0.25]], atol=1e-15)


@pytest.mark.parametrize("beta, lam", [(0.9, 1.0), (0.5, 3.0), (0.05, 0.2)])
def test_factor_round_trip(beta, lam):
    block = KernelBlock(n=50, beta=beta, lam=lam)
    F = factor(block)
    assert np.allclose(F, np.tril(F))
    assert np.max(np.abs(F @ F.T - materialize(block))) <= 1e-10 * lam


def test_factor_beta_zero_is_singular():
    with pytest.raises(SingularKernelError):
        factor(KernelBlock(n=3, beta=0.0))


def test_log_det_matches_cholesky():
    K = materialize(KernelBlock(n=10, beta=0.6))
    chol = np.linalg.cholesky(K)
    expected = 2.0 * np.sum(np.log(np.diag(chol)))
    assert_allclose(log_det(10, 0.6), expected, rtol=1e-8)


def test_inverse_quadratic_scalar_case():
    trace, logdet = inverse_quadratic(KernelBlock(n=1, beta=0.4), np.array([[2.0]]))
    assert_allclose(trace, 2.0 / 0.4)
    assert_allclose(logdet, np.log(0.4))


def test_inverse_quadratic_of_kernel_itself():
    n, beta = 8, 0.75
    K = materialize(KernelBlock(n=n, beta=beta))
    trace, logdet = inverse_quadratic(KernelBlock(n=n, beta=beta), K)
    assert_allclose(trace, n, rtol=1e-10)
    assert_allclose(logdet, np.linalg.slogdet(K)[1], rtol=1e-8)


def test_inverse_quadratic_matches_dense_oracle(rng):
    n, beta = 20, 0.8
    X = rng.standard_normal((n, 2 * n))
    M = X @ X.T
    K = materialize(KernelBlock(n=n, beta=beta))
    trace, _ = inverse_quadratic(KernelBlock(n=n, beta=beta), M)
    assert_allclose(trace, np.trace(np.linalg.solve(K, M)), rtol=1e-8)


@pytest.mark.parametrize("beta", [0.0, 1.0, 1.5])
def test_inverse_quadratic_domain(beta):
    with pytest.raises(KernelDomainError):
        inverse_quadratic(KernelBlock(n=2, beta=beta), np.eye(2))


def test_inverse_is_tridiagonal_inverse():
    n, beta = 7, 0.65
    K_inv = inverse(n, beta)
    assert_allclose(K_inv @ materialize(KernelBlock(n=n, beta=beta)), np.eye(n), atol=1e-9)
    assert np.all(np.triu(K_inv, 2) == 0.0)


def test_prior_covariance_block_diagonal():
    prior = PriorCovariance(blocks=(KernelBlock(n=2, beta=0.5, lam=2.0), KernelBlock(n=3, beta=0.3)))
    assert prior.dim == 5
    K = prior.materialize()
    assert K.shape == (5, 5)
    assert np.all(K[:2, 2:] == 0.0)
    assert_allclose(K[:2, :2], 2.0 * materialize(KernelBlock(n=2, beta=0.5)))
    F = prior.factor()
    assert_allclose(F @ F.T, K, atol=1e-14)


def test_prior_covariance_empty():
    assert PriorCovariance(blocks=()).materialize().shape == (0, 0)
