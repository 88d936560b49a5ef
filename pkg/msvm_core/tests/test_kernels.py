"""Tests for msvm_core.kernels module."""
import numpy as np
import pytest
import msvm_core as core


def test_eval_kernel():
    x = np.array([1.0, 2.0])
    y = np.array([0.5, -1.0])

    linear = core.kernels.KernelSpec.linear()
    assert np.isclose(core.kernels.eval_kernel(linear, x, y), -1.5)

    rbf = core.kernels.KernelSpec.gaussian(gamma=0.5)
    expected = np.exp(-0.5 * np.sum((x - y) ** 2))
    assert np.isclose(core.kernels.eval_kernel(rbf, x, y), expected)

    poly = core.kernels.KernelSpec.polynomial(degree=3, scale=2.0, offset=1.0)
    assert np.isclose(core.kernels.eval_kernel(poly, x, y), (2 * -1.5 + 1) ** 3)

    # offset is never applied to point evaluations
    spec = linear.with_diagonal_offset(10.0)
    assert np.isclose(core.kernels.eval_kernel(spec, x, x), 5.0)


def test_eval_kernel_dimension_mismatch():
    spec = core.kernels.KernelSpec.linear()
    with pytest.raises(core.kernels.KernelError):
        core.kernels.eval_kernel(spec, [1, 2], [1, 2, 3])


def test_invalid_parameters():
    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec("sigmoid")
    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec.gaussian(gamma=0)
    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec.polynomial(degree=0)
    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec.polynomial(degree=2.5)
    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec("linear", gamma=1.0)
    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec.linear(diagonal_offset=-1)


def test_family_aliases():
    assert core.kernels.KernelSpec("rbf", gamma=1).family == "gaussian"
    assert core.kernels.KernelSpec("poly", degree=2).family == "polynomial"


def test_spec_dict():
    spec = core.kernels.KernelSpec.polynomial(degree=2, offset=1.0, diagonal_offset=0.25)
    spec2 = core.kernels.KernelSpec.from_dict(spec.to_dict())
    assert spec2 == spec
    assert spec2.degree == 2


def test_soft_margin_kernel():
    base = core.kernels.KernelSpec.gaussian(gamma=2.0)
    spec = core.kernels.KernelSpec.for_soft_margin(base, C=4.0)
    assert spec.diagonal_offset == 0.125
    assert spec.gamma == 2.0
    assert base.diagonal_offset == 0

    with pytest.raises(core.kernels.KernelError):
        core.kernels.KernelSpec.for_soft_margin(base, C=0)


def test_build_gram():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 3))
    spec = core.kernels.KernelSpec.gaussian(gamma=0.3, diagonal_offset=0.5)
    gram = core.kernels.build_gram(spec, X)

    G = gram.entries
    assert np.array_equal(G, G.T)
    assert np.allclose(np.diag(G), 1.5)
    assert gram.offset_applied
    assert gram.is_psd()

    # offset only on the diagonal
    K = core.kernels.cross_gram(spec, X, X)
    assert np.allclose(G - K, 0.5 * np.eye(6))

    # entries cannot be modified
    with pytest.raises(ValueError):
        G[0, 1] = 0


def test_cross_gram():
    spec = core.kernels.KernelSpec.linear()
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    Y = np.array([[3.0, 1.0]])
    K = core.kernels.cross_gram(spec, X, Y)
    assert K.shape == (3, 1)
    assert np.allclose(K[:, 0], [3, 2, 4])

    with pytest.raises(core.kernels.KernelError):
        core.kernels.cross_gram(spec, X, [[1.0, 2.0, 3.0]])


def test_gram_matrix_validation():
    with pytest.raises(core.kernels.KernelError):
        core.kernels.GramMatrix(np.ones((2, 3)))
    with pytest.raises(core.kernels.KernelError):
        core.kernels.GramMatrix([[1.0, 0.5], [0.4, 1.0]])

    gram = core.kernels.GramMatrix([[1.0, 2.0], [2.0, 1.0]])
    assert not gram.is_psd()
    with pytest.raises(core.kernels.NotPSDError):
        gram.check_psd()
