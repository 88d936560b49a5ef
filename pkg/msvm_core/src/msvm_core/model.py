"""Training of the M-SVM² and reconstruction of its class functions.

The M-SVM² with soft margin parameter C is trained as the hard margin
machine on the kernel κ' = κ + δ/(2C). The training Gram matrix carries the
offset, kernel evaluations against query points do not.
"""
import logging

import numpy as np

from msvm_core.kernels import KernelSpec, KernelError, build_gram, cross_gram
from msvm_core.qp import (
    ConvergenceError,
    DualProblem,
    SolverSettings,
    recover_biases,
    solve_dual,
)


LOGGER = logging.getLogger(__name__)

# label of the abstention (dummy) category
DUMMY = -1
DUMMY_NAME = "*"

TIE_TOLERANCE = 1e-12
KKT_TOLERANCE = 1e-6


class TrainingError(ValueError):
    """Training data or hyperparameters are unusable."""


class Prediction:
    """Scores h_k(x) of a single point and the resulting label."""

    def __init__(self, scores, label):
        self.scores = np.asarray(scores, dtype=float)
        self.label = int(label)

    @property
    def is_dummy(self):
        return self.label == DUMMY

    def __repr__(self):
        return f"Prediction(label={self.label}, scores={self.scores})"


def argmax_labels(scores, tie_tol=TIE_TOLERANCE):
    """Argmax over the last axis, DUMMY where the top two scores tie."""
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    order = np.argsort(-S, axis=1, kind="stable")
    rows = np.arange(S.shape[0])
    top = S[rows, order[:, 0]]
    second = S[rows, order[:, 1]]
    return np.where(top - second <= tie_tol, DUMMY, order[:, 0])


def argmax_rule(scores, tie_tol=TIE_TOLERANCE):
    """Label of a single score vector."""
    return int(argmax_labels(scores, tie_tol)[0])


class TrainedModel:
    """Everything needed to evaluate the class functions h_k.

    `kernel` is the spec the training Gram matrix was built with, including
    the diagonal offset 1/(2C) when `C` is given. `alpha` is the (m, Q) dual
    solution and `biases` its equality multipliers.
    """

    def __init__(
        self,
        kernel,
        C,
        points,
        labels,
        alpha,
        biases,
        category_map,
        solver=None,
        tie_tol=TIE_TOLERANCE,
        support_threshold=None,
    ):
        points = np.array(points, dtype=float)
        labels = np.array(labels, dtype=int)
        alpha = np.array(alpha, dtype=float)
        biases = np.array(biases, dtype=float)
        for a in (points, labels, alpha, biases):
            a.flags.writeable = False

        self.kernel = kernel
        self.C = None if C is None else float(C)
        self.points = points
        self.labels = labels
        self.alpha = alpha
        self.biases = biases
        self.category_map = tuple(str(c) for c in category_map)
        self.solver = dict(solver) if solver is not None else {}
        self.tie_tol = float(tie_tol)
        self.support_threshold = (
            float(support_threshold)
            if support_threshold is not None
            else self.solver.get("support_threshold", 1e-7)
        )
        self._gram = None

        if alpha.shape != (self.m, self.Q):
            raise TrainingError(f"alpha has shape {alpha.shape}, expected ({self.m}, {self.Q}).")

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def Q(self):
        return len(self.category_map)

    @property
    def n_features(self):
        return self.points.shape[1]

    @property
    def hard_margin(self):
        return self.C is None

    @property
    def coefficients(self):
        """c_ik = (1/Q) Σ_l α_il - α_ik, so that w_k = Σ_i c_ik Φ(x_i)."""
        return self.alpha.mean(axis=1, keepdims=True) - self.alpha

    def gram(self):
        """Training Gram matrix, diagonal offset included."""
        if self._gram is None:
            self._gram = build_gram(self.kernel, self.points)
        return self._gram

    def problem(self):
        return DualProblem(self.gram(), self.labels, self.Q)

    def support_mask(self):
        """Points with at least one dual variable above the support threshold."""
        amax = self.alpha.max()
        if amax <= 0:
            return np.zeros(self.m, dtype=bool)
        return (self.alpha > self.support_threshold * amax).any(axis=1)

    def label_name(self, label):
        if label == DUMMY:
            return DUMMY_NAME
        return self.category_map[label]

    def check_invariants(self, kkt_tol=KKT_TOLERANCE):
        """Largest violation of Σb = 0 and of complementary slackness."""
        bias_sum = abs(np.sum(self.biases))
        h = training_scores(self)
        amax = self.alpha.max()
        worst = 0.0
        if amax > 0:
            support = self.alpha > self.support_threshold * amax
            worst = np.max(np.abs(h[support] + 1.0 / (self.Q - 1)), initial=0.0)
        if bias_sum > 1e-9:
            LOGGER.warning("Biases sum to %.3e.", bias_sum)
        if worst > kkt_tol:
            LOGGER.warning("Complementary slackness violated by %.3e.", worst)
        return max(bias_sum, worst)


def _training_kernel(kernel, C, hard_margin):
    if hard_margin:
        if C is not None:
            raise TrainingError("Both C and a hard margin were requested.")
        return kernel
    if C is None:
        raise TrainingError("Either C or a hard margin is required.")
    if not C > 0:
        raise TrainingError(f"C must be positive, got {C}.")
    if kernel.diagonal_offset > 0:
        raise TrainingError("The base kernel of a soft margin machine must not carry an offset.")
    return KernelSpec.for_soft_margin(kernel, C)


def fit(
    points,
    labels,
    n_classes,
    kernel,
    C=None,
    hard_margin=False,
    category_map=None,
    settings=None,
    data_logger=None,
    tie_tol=TIE_TOLERANCE,
):
    """Train on index labels in [0, n_classes).

    Categories absent from `labels` are allowed; they only enter through the
    equality constraints. Raises ConvergenceError when the solver stops with
    a KKT residual above accept_factor times its tolerance; a stalled solve
    closer to the optimum is kept.
    """
    if settings is None:
        settings = SolverSettings()
    if category_map is None:
        category_map = [str(k) for k in range(n_classes)]
    if len(category_map) != n_classes:
        raise TrainingError("Category map does not match the number of categories.")
    if n_classes < 2:
        raise TrainingError("At least two categories are required.")

    training_kernel = _training_kernel(kernel, C, hard_margin)

    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if points.ndim != 2 or points.shape[0] != labels.shape[0]:
        raise TrainingError(
            f"{points.shape[0] if points.ndim else 0} points but {labels.shape[0]} labels."
        )
    if points.shape[0] == 0:
        raise TrainingError("No training points.")

    try:
        gram = build_gram(training_kernel, points)
    except KernelError as e:
        raise TrainingError(str(e)) from e

    problem = DualProblem(gram, labels, n_classes)
    solution = solve_dual(
        problem,
        tol=settings.tol,
        max_iter=settings.iteration_limit(problem),
        support_threshold=settings.support_threshold,
        data_logger=data_logger,
    )
    if not solution.acceptable(settings.accept_factor):
        raise ConvergenceError(
            f"Dual solver did not converge: KKT residual {solution.kkt_residual:.3e} "
            f"after {solution.iterations} iterations ({solution.status}).",
            solution=solution,
        )
    if not solution.converged:
        LOGGER.info(
            "Accepting dual solution (%s) with KKT residual %.3e.",
            solution.status,
            solution.kkt_residual,
        )

    biases, missing = recover_biases(problem, solution.alpha, settings.support_threshold)
    solver = {
        "tol": settings.tol,
        "support_threshold": settings.support_threshold,
        "iterations": solution.iterations,
        "kkt_residual": solution.kkt_residual,
        "status": solution.status,
        "objective": solution.objective,
        "missing_bias_equations": [int(k) for k in missing],
    }
    model = TrainedModel(
        kernel=training_kernel,
        C=C,
        points=points,
        labels=labels,
        alpha=solution.alpha,
        biases=biases,
        category_map=category_map,
        solver=solver,
        tie_tol=tie_tol,
        support_threshold=settings.support_threshold,
    )
    model._gram = gram
    model.check_invariants()
    return model


def train(
    dataset,
    kernel,
    C=None,
    hard_margin=False,
    settings=None,
    data_logger=None,
    tie_tol=TIE_TOLERANCE,
):
    """Train the M-SVM² (given C) or the hard margin machine on a dataset."""
    present = np.unique(dataset.labels)
    if present.shape[0] < 2:
        raise TrainingError("The training set holds a single category.")
    return fit(
        dataset.points,
        dataset.labels,
        dataset.Q,
        kernel,
        C=C,
        hard_margin=hard_margin,
        category_map=dataset.category_map,
        settings=settings,
        data_logger=data_logger,
        tie_tol=tie_tol,
    )


def _query_points(model, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise TrainingError(
            f"Query dimension {X.shape[1]} does not match training dimension {model.n_features}."
        )
    return X, single


def decision_scores(model, x):
    """h_k(x) = Σ_i c_ik κ(x_i, x) + b_k for a point (Q,) or a batch (n, Q)."""
    X, single = _query_points(model, x)
    K = cross_gram(model.kernel, model.points, X)
    scores = K.T @ model.coefficients + model.biases
    return scores[0] if single else scores


def training_scores(model):
    """h_k(x_i) on the training points with the offset Gram matrix.

    These are the scores of the hard margin machine in the augmented feature
    space; they differ from decision_scores on the training points when C is
    finite.
    """
    return model.gram().entries @ model.coefficients + model.biases


def predict(model, x):
    """Prediction of a single point."""
    scores = decision_scores(model, np.asarray(x, dtype=float).ravel())
    return Prediction(scores, argmax_rule(scores, model.tie_tol))


def predict_labels(model, X):
    """Labels (DUMMY on ties) and scores of a batch of points."""
    scores = np.atleast_2d(decision_scores(model, np.atleast_2d(X)))
    return argmax_labels(scores, model.tie_tol), scores


def wk_norms(model, base=False):
    """Per-class ‖w_k‖² and their total.

    With base=True the base kernel (no diagonal offset) is used, which gives
    the penalizer of the M-SVM² primal rather than of the hard margin
    machine.
    """
    c = model.coefficients
    G = model.gram().entries
    if base and model.kernel.diagonal_offset > 0:
        G = G - model.kernel.diagonal_offset * np.eye(model.m)
    norms = np.einsum("ik,ij,jk->k", c, G, c)
    return norms, norms.sum()


def slack_vector(model):
    """Slacks ξ recovered from 2C Mξ = α, and the residual ‖2C Mξ - Mα‖∞.

    M centres each point's row, so only Mα lies in its range; the per-point
    constant is fixed by ξ_{i,y_i} = 0, which gives ξ = α/(2C).
    """
    if model.C is None:
        raise TrainingError("A hard margin model has no slacks.")
    xi = model.alpha / (2.0 * model.C)

    def centre(A):
        return A - A.mean(axis=1, keepdims=True)

    residual = np.max(np.abs(2.0 * model.C * centre(xi) - centre(model.alpha)))
    return xi, residual


def primal_objective(model):
    """½ Σ_k ‖w_k‖² + C ξᵀMξ (base kernel), or ½ Σ_k ‖w_k‖² for a hard margin."""
    if model.C is None:
        return 0.5 * wk_norms(model)[1]
    _, total = wk_norms(model, base=True)
    xi, _ = slack_vector(model)
    penalty = np.sum(xi * (xi - xi.mean(axis=1, keepdims=True)))
    return 0.5 * total + model.C * penalty
