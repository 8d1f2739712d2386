import numpy as np
import pytest

from rkhspi.functionals import (
    DirGrad,
    FunctionalSet,
    PointEval,
    cross_gram,
    gram,
    representer_gradient,
    representer_value,
)
from rkhspi.kernels import KERNEL_NAMES, GaussianKernel, QuadraticProductKernel, make_kernel


def _apply_fd(lam, fn, h=1e-5):
    """Apply functional ``lam`` to a scalar function by central differences."""
    x = np.asarray(lam.x)
    if isinstance(lam, PointEval):
        return fn(x)
    a = np.asarray(lam.a)
    return (fn(x + h * a) - fn(x - h * a)) / (2 * h)


def _mixed_set(rng, n, N):
    pts = rng.uniform(-1, 1, size=(n, N))
    dirs = rng.normal(size=(n, N))
    return FunctionalSet(pts, dirs, np.arange(n) % 3 != 0)


def test_representer_examples():
    k = GaussianKernel(1.3)
    assert representer_value(PointEval([0.0, 0.0]), k, np.zeros(2)) == 1.0
    x = np.array([0.3, -0.4])
    assert representer_value(DirGrad(x, [1.0, 2.0]), k, x) == 0.0
    np.testing.assert_array_equal(representer_gradient(PointEval(x), k, x), np.zeros(2))
    np.testing.assert_allclose(representer_gradient(DirGrad(x, [1.0, 0.0]), k, x), [2 * 1.3**2, 0.0], rtol=1e-14)
    q = QuadraticProductKernel(GaussianKernel(1.0))
    assert representer_value(PointEval(x), q, np.zeros(2)) == 0.0


def test_product_kernel_representer_gradient_matches_fd():
    q = QuadraticProductKernel(GaussianKernel(0.8))
    lam = PointEval([0.5, -0.7])
    y = np.array([0.2, 0.9])
    h = 1e-5
    fd = [(representer_value(lam, q, y + h * e) - representer_value(lam, q, y - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(representer_gradient(lam, q, y), fd, rtol=1e-8)


@pytest.mark.parametrize("name", KERNEL_NAMES)
def test_gram_entries_are_functionals_of_representers(name, rng):
    # <w_i, w_j> = lambda_i(w_j): apply lambda_i to w_j by finite differences
    k = make_kernel(name, gamma=1.2)
    fs = _mixed_set(rng, 7, 2)
    K = gram(fs, k)
    fd = np.array([[_apply_fd(fi, lambda y: representer_value(fj, k, y)) for fj in fs] for fi in fs])
    # the Matern third derivative jumps at r = 0, so FD on the diagonal is only O(h)
    rtol = 1e-6 if name.startswith("gaussian") else 1e-4
    np.testing.assert_allclose(K, fd, rtol=rtol, atol=1e-8)


def test_gram_is_exactly_symmetric(rng):
    fs = _mixed_set(rng, 30, 3)
    K = gram(fs, make_kernel("linear-matern-quad", gamma=2.0))
    assert np.array_equal(K, K.T)


def test_gram_examples():
    k = GaussianKernel(1.0)
    np.testing.assert_array_equal(gram(FunctionalSet.from_list([PointEval([0.0, 0.0])]), k), [[1.0]])
    d = 0.7
    K = gram(FunctionalSet.from_list([PointEval([0.0]), PointEval([d])]), k)
    q = np.exp(-(d**2))
    np.testing.assert_allclose(K, [[1, q], [q, 1]], rtol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(K), [1 - q, 1 + q], rtol=1e-14)


def test_cross_gram_blocks(rng):
    k = GaussianKernel(0.9)
    fs = _mixed_set(rng, 9, 2)
    full = gram(fs, k)
    a, b = fs.subset(range(4)), fs.subset(range(4, 9))
    np.testing.assert_allclose(cross_gram(a, b, k), full[:4, 4:], rtol=1e-14)


def test_functional_set_validation():
    with pytest.raises(ValueError):
        DirGrad([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        DirGrad([1.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        FunctionalSet.from_list([PointEval([1.0]), PointEval([1.0])])
    with pytest.raises(ValueError):
        FunctionalSet([[np.nan]], [[0.0]], [False])
    with pytest.raises(ValueError):
        FunctionalSet.from_list([])
    fs = FunctionalSet.from_list([PointEval([0.0, 1.0]), DirGrad([0.0, 1.0], [1.0, 0.0])])
    assert len(fs) == 2 and fs.dim == 2
    assert list(fs) == [PointEval([0.0, 1.0]), DirGrad([0.0, 1.0], [1.0, 0.0])]
    assert len(FunctionalSet.empty(3)) == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        representer_value(PointEval([0.0, 0.0]), GaussianKernel(1.0), np.zeros(3))
