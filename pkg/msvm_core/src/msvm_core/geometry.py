"""Geometrical margins of a trained machine and the minimum enclosing ball.

All quantities live in the feature space of the training kernel, i.e. the
augmented space of κ' = κ + δ/(2C) for an M-SVM².
"""
import logging
from itertools import combinations

import numpy as np

from msvm_core.kernels import GramMatrix
from msvm_core.model import argmax_labels, training_scores, wk_norms
from msvm_core.parsing import parse_number


LOGGER = logging.getLogger(__name__)

BALL_TOLERANCE = 1e-9
BALL_MAX_ITER = 100000

# Kβ is updated incrementally and recomputed from scratch this often
BALL_REFRESH = 100


class MarginError(ValueError):
    """Margins are undefined for the given model."""


def d_base(Q):
    """Functional gap Q/(Q-1) enforced by the hard margin constraints."""
    if Q < 2:
        raise ValueError(f"At least two categories are required, got Q = {Q}.")
    return Q / (Q - 1)


class MarginReport:
    """Pairwise margins of a model that classifies its training set correctly.

    For the pair (k, l), `pair_gap` is the smallest h_k - h_l over class k
    points and h_l - h_k over class l points. `d_kl` is relative to the
    global minimum `d`, `d_llw_kl` to the constraint gap Q/(Q-1).
    """

    def __init__(self, Q, d, pairs, pair_gap, w_diff_norm, identities):
        self.Q = Q
        self.d = d
        self.pairs = pairs
        self.pair_gap = pair_gap
        self.w_diff_norm = w_diff_norm
        self.identities = identities

    @property
    def d_kl(self):
        return self.pair_gap / self.d - 1.0

    @property
    def d_llw_kl(self):
        return self.pair_gap / d_base(self.Q) - 1.0

    @property
    def gamma(self):
        with np.errstate(divide="ignore"):
            return self.pair_gap / self.w_diff_norm

    @property
    def margin_sum(self):
        """Σ_{k<l} ((1 + d_llw_kl) / γ_kl)²."""
        return np.sum(((1.0 + self.d_llw_kl) / self.gamma) ** 2)

    def identity_disagreement(self):
        """Largest relative difference between the four equal quantities."""
        values = np.array(list(self.identities.values()))
        scale = max(np.max(np.abs(values)), np.finfo(float).tiny)
        return (values.max() - values.min()) / scale

    def to_dict(self):
        return {
            "d": float(self.d),
            "pairs": [
                {
                    "pair": [int(k), int(l)],
                    "gap": float(self.pair_gap[p]),
                    "d_kl": float(self.d_kl[p]),
                    "d_llw_kl": float(self.d_llw_kl[p]),
                    "w_diff_norm": float(self.w_diff_norm[p]),
                    "gamma": float(self.gamma[p]),
                }
                for p, (k, l) in enumerate(self.pairs)
            ],
            "identities": {k: float(v) for k, v in self.identities.items()},
        }


def _w_diff_sq(alpha, G, k, l):
    # ‖w_k - w_l‖² with w_k - w_l = Σ_i (α_il - α_ik) Φ(x_i)
    u = alpha[:, l] - alpha[:, k]
    return u @ G @ u


def compute_margins(model):
    """Margins of every category pair, on the training kernel."""
    Q = model.Q
    h = training_scores(model)
    labels = model.labels

    predicted = argmax_labels(h, model.tie_tol)
    errors = np.count_nonzero(predicted != labels)
    if errors > 0:
        raise MarginError(f"Model makes {errors} training errors; margins are undefined.")

    G = model.gram().entries
    alpha = np.asarray(model.alpha)
    pairs = list(combinations(range(Q), 2))
    pair_gap = np.zeros(len(pairs))
    w_diff_norm = np.zeros(len(pairs))
    for p, (k, l) in enumerate(pairs):
        in_k = labels == k
        in_l = labels == l
        if not (in_k.any() or in_l.any()):
            raise MarginError(f"No training point in category {k} or {l}.")
        gaps = np.concatenate((h[in_k, k] - h[in_k, l], h[in_l, l] - h[in_l, k]))
        pair_gap[p] = gaps.min()
        w_diff_norm[p] = np.sqrt(max(_w_diff_sq(alpha, G, k, l), 0.0))

    d = pair_gap.min()
    if not d > 0:
        raise MarginError(f"Smallest score gap {d} is not positive.")

    _, sum_wk_sq = wk_norms(model)
    problem = model.problem()
    alpha_H_alpha = np.sum(alpha * problem.hessian_product(alpha))
    alpha_sum_term = problem.target * alpha.sum()

    report = MarginReport(Q, d, pairs, pair_gap, w_diff_norm, identities={})
    report.identities = {
        "lhs_margin_sum": Q / (Q - 1) ** 2 * report.margin_sum,
        "sum_wk_sq": sum_wk_sq,
        "alpha_H_alpha": alpha_H_alpha,
        "alpha_sum_term": alpha_sum_term,
    }
    return report


def sumwl_check(model):
    """Both sides of Σ_{k<l} ‖w_k - w_l‖² = Q Σ_k ‖w_k‖², computed independently."""
    G = model.gram().entries
    alpha = np.asarray(model.alpha)
    lhs = sum(
        _w_diff_sq(alpha, G, k, l) for k, l in combinations(range(model.Q), 2)
    )
    problem = model.problem()
    rhs = model.Q * np.sum(alpha * problem.hessian_product(alpha))
    return float(lhs), float(rhs)


class BallSettings:
    def __init__(self, tol=BALL_TOLERANCE, max_iter=BALL_MAX_ITER):
        self.tol = float(tol)
        self.max_iter = int(max_iter)

    @classmethod
    def from_config(cls, config):
        return cls(
            tol=parse_number(config.get("tol", BALL_TOLERANCE)),
            max_iter=parse_number(config.get("max_iter", BALL_MAX_ITER), dtype=int),
        )


class BallResult:
    """Smallest ball containing the feature-space images, center Σ_i β_i Φ(x_i)."""

    def __init__(self, weights, squared_radius, gap, iterations, converged):
        self.weights = weights
        self.squared_radius = float(squared_radius)
        self.gap = float(gap)
        self.iterations = int(iterations)
        self.converged = bool(converged)

    @property
    def radius(self):
        return np.sqrt(self.squared_radius)

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def squared_diameter(self):
        return 4.0 * self.squared_radius

    def squared_distances(self, gram):
        """‖Φ(x_i) - c‖² for every point of the Gram matrix."""
        G = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram)
        Gβ = G @ self.weights
        return np.diag(G) - 2 * Gβ + self.weights @ Gβ

    def to_dict(self):
        return {
            "radius": float(self.radius),
            "squared_diameter": float(self.squared_diameter),
            "iterations": self.iterations,
            "gap": self.gap,
        }


def min_enclosing_ball(gram, tol=BALL_TOLERANCE, max_iter=BALL_MAX_ITER):
    """Maximize f(β) = Σ_i β_i g_ii - βᵀGβ over the probability simplex.

    Frank-Wolfe with away steps and exact line search from the uniform β.
    The optimum is R². Stops when max_i ‖Φ(x_i) - c‖² - f(β) <= tol (1 + f).
    """
    if not isinstance(gram, GramMatrix):
        gram = GramMatrix(gram)
    gram.check_psd()
    G = gram.entries
    m = G.shape[0]
    if m == 0:
        raise ValueError("Empty Gram matrix.")

    diag = np.diag(G)
    β = np.full(m, 1.0 / m)
    Gβ = G @ β
    converged = False

    for iteration in range(max_iter + 1):
        if iteration % BALL_REFRESH == 0:
            Gβ = G @ β
        βGβ = β @ Gβ
        f = β @ diag - βGβ

        # squared distances of the images to the current center
        dist = diag - 2 * Gβ + βGβ
        j = np.argmax(dist)
        gap = dist[j] - f
        if gap <= tol * (1 + max(f, 0.0)):
            converged = True
            break
        if iteration == max_iter:
            break

        active = np.flatnonzero(β > 0)
        a = active[np.argmin(dist[active])]
        away_gap = f - dist[a]

        if gap >= away_gap:
            slope, curvature, tmax = gap, dist[j], 1.0
        else:
            slope, curvature = away_gap, dist[a]
            tmax = β[a] / (1.0 - β[a]) if β[a] < 1 else np.inf
        t = tmax if curvature <= 0 else min(slope / (2 * curvature), tmax)

        if gap >= away_gap:
            β = (1 - t) * β
            β[j] += t
            Gβ = (1 - t) * Gβ + t * G[:, j]
        else:
            β = (1 + t) * β
            β[a] -= t
            Gβ = (1 + t) * Gβ - t * G[:, a]
            if t == tmax:
                β[a] = 0.0
        np.maximum(β, 0, out=β)

    β = β / β.sum()
    Gβ = G @ β
    f = β @ diag - β @ Gβ
    R2 = max(f, 0.0)
    if converged:
        LOGGER.debug("Enclosing ball found in %d iterations, R² = %.6g.", iteration, R2)
    else:
        LOGGER.warning("Enclosing ball stopped after %d iterations, gap %.3e.", iteration, gap)
    return BallResult(β, R2, gap, iteration, converged)


def model_ball(model, support_only=False, settings=None):
    """Enclosing ball of the training images of a model.

    By default every training point is enclosed. With support_only=True only
    points carrying a nonzero dual variable are.
    """
    if settings is None:
        settings = BallSettings()
    G = model.gram().entries
    if support_only:
        mask = model.support_mask()
        if mask.any():
            G = G[np.ix_(mask, mask)]
        else:
            LOGGER.debug("Model has no support vectors; enclosing every point.")
    return min_enclosing_ball(GramMatrix(G), tol=settings.tol, max_iter=settings.max_iter)
