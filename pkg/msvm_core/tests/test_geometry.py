"""Tests for margins and the minimum enclosing ball."""
from pathlib import Path

import numpy as np
import pytest
import yaml
import msvm_core as core


def load_config():
    path = Path(__file__).parent / "config.yaml"
    with open(path) as f:
        return yaml.safe_load(f)


def blobs(name):
    d = load_config()["blobs"][name]
    return core.util.gaussian_blobs(
        d["n_per_class"], d["Q"], spread=d["spread"], separation=d["separation"], seed=d["seed"]
    )


def settings():
    return core.qp.SolverSettings.from_config(load_config()["solver"])


def ball_settings():
    return core.geometry.BallSettings.from_config(load_config()["ball"])


def unit_model():
    dataset = core.dataset.Dataset(np.eye(3), [0, 1, 2], ["a", "b", "c"])
    return core.model.train(
        dataset, core.kernels.KernelSpec.linear(), C=0.5, settings=settings()
    )


def test_d_base():
    assert core.geometry.d_base(2) == 2
    assert np.isclose(core.geometry.d_base(3), 1.5)
    with pytest.raises(ValueError):
        core.geometry.d_base(1)


def test_unit_margins():
    margins = core.geometry.compute_margins(unit_model())

    assert margins.pairs == [(0, 1), (0, 2), (1, 2)]
    assert np.isclose(margins.d, 1.5)
    assert np.allclose(margins.pair_gap, 1.5)
    assert np.allclose(margins.d_kl, 0, atol=1e-8)
    assert np.allclose(margins.d_llw_kl, 0, atol=1e-8)
    assert np.allclose(margins.w_diff_norm, 1.5)
    assert np.allclose(margins.gamma, 1)
    assert np.isclose(margins.margin_sum, 3)
    assert margins.identity_disagreement() <= 1e-6


def test_margin_identities():
    dataset = blobs("four")
    spec = core.kernels.KernelSpec.gaussian(gamma=0.4)
    model = core.model.train(dataset, spec, C=3.0, settings=settings())

    margins = core.geometry.compute_margins(model)
    assert np.all(margins.gamma > 0)
    assert np.min(margins.d_kl) >= -1e-9
    assert np.isclose(np.min(margins.d_kl), 0, atol=1e-9)
    assert margins.identity_disagreement() <= 1e-5

    lhs, rhs = core.geometry.sumwl_check(model)
    assert np.isclose(lhs, rhs, rtol=1e-8)

    d = margins.to_dict()
    assert len(d["pairs"]) == 6


def test_margins_undefined():
    model = unit_model()
    # all class functions vanish, so every training point is a tie
    flat = core.model.TrainedModel(
        kernel=model.kernel,
        C=model.C,
        points=model.points,
        labels=model.labels,
        alpha=np.zeros((3, 3)),
        biases=np.zeros(3),
        category_map=model.category_map,
    )
    with pytest.raises(core.geometry.MarginError):
        core.geometry.compute_margins(flat)


def test_unit_ball():
    ball = core.geometry.model_ball(unit_model(), settings=ball_settings())
    assert ball.converged
    assert np.isclose(ball.squared_radius, 4 / 3)
    assert np.isclose(ball.squared_diameter, 16 / 3)
    assert np.allclose(ball.weights, 1 / 3)


def test_ball_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(5):
        X = rng.standard_normal((7, 2))
        gram = core.kernels.build_gram(core.kernels.KernelSpec.linear(), X)
        ball = core.geometry.min_enclosing_ball(gram, tol=1e-12, max_iter=200000)
        expected = core.util.smallest_circle_brute_force(X)
        assert np.isclose(ball.squared_radius, expected, rtol=1e-6)

        # every point inside, weights on the simplex
        dist = ball.squared_distances(gram)
        assert np.all(dist <= ball.squared_radius * (1 + 1e-6))
        assert np.isclose(ball.weights.sum(), 1)
        assert np.all(ball.weights >= 0)


def test_ball_single_point():
    ball = core.geometry.min_enclosing_ball(np.array([[2.0]]))
    assert ball.converged
    assert ball.squared_radius == 0


def test_ball_support_only():
    dataset = blobs("separated")
    model = core.model.train(
        dataset, core.kernels.KernelSpec.linear(), C=10.0, settings=settings()
    )
    full = core.geometry.model_ball(model, settings=ball_settings())
    support = core.geometry.model_ball(model, support_only=True, settings=ball_settings())
    assert support.squared_radius <= full.squared_radius * (1 + 1e-9)
    assert support.weights.shape == (np.count_nonzero(model.support_mask()),)


def test_ball_not_psd():
    with pytest.raises(core.kernels.NotPSDError):
        core.geometry.min_enclosing_ball(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_ball_two_points():
    # ±e1 are at distance 2: unit radius around the midpoint
    gram = core.kernels.build_gram(core.kernels.KernelSpec.linear(), [[1.0, 0.0], [-1.0, 0.0]])
    ball = core.geometry.min_enclosing_ball(gram, tol=1e-12, max_iter=200000)
    assert np.isclose(ball.squared_radius, 1, atol=1e-6)
    assert np.allclose(ball.weights, 0.5, atol=1e-6)
    assert np.allclose(ball.squared_distances(gram), 1, atol=1e-6)


def test_ball_equilateral():
    # pairwise feature distance 1
    gram = core.kernels.build_gram(core.kernels.KernelSpec.linear(), np.eye(3) / np.sqrt(2))
    ball = core.geometry.min_enclosing_ball(gram, tol=1e-12, max_iter=200000)
    assert np.isclose(ball.squared_radius, 1 / 3, atol=1e-6)
    assert np.allclose(ball.weights, 1 / 3, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_ball_containment(seed):
    rng = np.random.default_rng(300 + seed)
    X = rng.standard_normal((int(rng.integers(5, 25)), 3))
    spec = core.kernels.KernelSpec.gaussian(gamma=rng.uniform(0.1, 2.0), diagonal_offset=0.2)
    gram = core.kernels.build_gram(spec, X)
    ball = core.geometry.min_enclosing_ball(gram, tol=1e-12, max_iter=200000)
    R2 = ball.squared_radius
    assert np.max(ball.squared_distances(gram)) <= R2 + 1e-8 * (1 + R2)


def test_diagonal_offset_effect():
    X = np.random.default_rng(4).standard_normal((8, 2))
    base = core.kernels.KernelSpec.gaussian(gamma=0.5)
    ball = core.geometry.min_enclosing_ball(
        core.kernels.build_gram(base, X), tol=1e-12, max_iter=200000
    )
    D2 = ball.squared_diameter
    m = X.shape[0]
    for o in [0.1, 1.0]:
        gram = core.kernels.build_gram(base.with_diagonal_offset(o), X)

        # every squared pairwise distance grows by exactly 2o
        K0 = core.kernels.build_gram(base, X).entries
        d0 = np.diag(K0)[:, None] + np.diag(K0)[None, :] - 2 * K0
        K = gram.entries
        d = np.diag(K)[:, None] + np.diag(K)[None, :] - 2 * K
        off = ~np.eye(m, dtype=bool)
        assert np.allclose(d[off], d0[off] + 2 * o)

        # the diameter 2R grows, by at most 4o(1 - 1/m) (center moved along the offset axes)
        D2_o = core.geometry.min_enclosing_ball(gram, tol=1e-12, max_iter=200000).squared_diameter
        assert D2_o >= D2 - 1e-8
        assert D2_o <= D2 + 4 * o * (1 - 1 / m) + 1e-8
