"""Exact leave-one-out, the multi-class radius-margin bound and grid search."""
import logging
import time

import numpy as np
from joblib import Parallel, delayed

from msvm_core.dataset import content_digest
from msvm_core.geometry import MarginError, compute_margins, model_ball
from msvm_core.kernels import KernelError, KernelSpec, NotPSDError
from msvm_core.model import DUMMY, TrainingError, fit, predict, train
from msvm_core.qp import ConvergenceError


LOGGER = logging.getLogger(__name__)

# slack allowed when checking the per-point inequality of a LOO error
ERROR_ALPHA_SLACK = 1e-9

# failures of a single fold or grid point that are recorded rather than raised
NUMERICAL_FAILURES = (ConvergenceError, NotPSDError, MarginError, TrainingError, KernelError)


class SelectionError(RuntimeError):
    """Model selection could not produce a result."""


class LooOutcome:
    """Result of the fold that leaves out point `index`."""

    def __init__(self, index, label, predicted=None, scores=None, failed=False, message=None):
        self.index = int(index)
        self.label = int(label)
        self.predicted = DUMMY if predicted is None else int(predicted)
        self.scores = scores
        self.failed = bool(failed)
        self.message = message

    @property
    def error(self):
        return self.failed or self.predicted != self.label

    def to_dict(self):
        return {
            "index": self.index,
            "label": self.label,
            "predicted": self.predicted,
            "error": self.error,
            "failed": self.failed,
        }


class LooResult:
    def __init__(self, outcomes, dataset_digest):
        self.outcomes = outcomes
        self.dataset_digest = dataset_digest

    @property
    def errors(self):
        return sum(o.error for o in self.outcomes)

    @property
    def failures(self):
        return sum(o.failed for o in self.outcomes)

    def error_indices(self):
        return [o.index for o in self.outcomes if o.error]


def _loo_fold(points, labels, category_map, p, kernel, C, hard_margin, settings):
    mask = np.ones(labels.shape[0], dtype=bool)
    mask[p] = False
    try:
        model = fit(
            points[mask],
            labels[mask],
            len(category_map),
            kernel,
            C=C,
            hard_margin=hard_margin,
            category_map=category_map,
            settings=settings,
        )
    except NUMERICAL_FAILURES as e:
        LOGGER.warning("Fold %d failed: %s", p, e)
        return LooOutcome(p, labels[p], failed=True, message=str(e))
    prediction = predict(model, points[p])
    return LooOutcome(p, labels[p], prediction.label, prediction.scores)


def exact_loo(dataset, kernel, C=None, hard_margin=False, settings=None, workers=None):
    """Retrain without each point in turn and classify the left-out point.

    A fold whose training fails counts as an error and is flagged. DUMMY
    predictions count as errors. Folds run in parallel with `workers` jobs;
    outcomes are always in point order.
    """
    points = np.asarray(dataset.points)
    labels = np.asarray(dataset.labels)
    outcomes = Parallel(n_jobs=workers or 1)(
        delayed(_loo_fold)(
            points, labels, dataset.category_map, p, kernel, C, hard_margin, settings
        )
        for p in range(dataset.m)
    )
    result = LooResult(list(outcomes), dataset.source_hash)
    LOGGER.info(
        "Leave-one-out: %d errors (%d failed folds) over %d points.",
        result.errors,
        result.failures,
        dataset.m,
    )
    return result


class ErrorAlphaCheck:
    """max_k α⁰_pk against 1/(Q(Q-1)D²) for a LOO error p."""

    def __init__(self, index, value, threshold):
        self.index = int(index)
        self.value = float(value)
        self.threshold = float(threshold)

    @property
    def satisfied(self):
        return self.value >= self.threshold - ERROR_ALPHA_SLACK

    def to_dict(self):
        return {
            "index": self.index,
            "max_alpha": self.value,
            "threshold": self.threshold,
            "satisfied": self.satisfied,
        }


def model_digest(model):
    return content_digest(model.points, model.labels, model.category_map)


def check_error_alphas(model, loo, ball=None):
    """Check that every LOO error p has max_k α_pk >= 1/(Q(Q-1)D²) in the full-data model.

    D is the diameter of the smallest ball around all training images; a
    `ball` computed on the support vectors only must not be passed here.

    Failed folds are skipped: their error comes from training, not from the
    machine's decision.
    """
    if loo.dataset_digest != model_digest(model):
        raise SelectionError("Leave-one-out results come from a different dataset.")
    if ball is None:
        ball = model_ball(model)
    Q = model.Q
    with np.errstate(divide="ignore"):
        threshold = 1.0 / np.float64(Q * (Q - 1) * ball.squared_diameter)
    checks = []
    for outcome in loo.outcomes:
        if outcome.error and not outcome.failed:
            checks.append(
                ErrorAlphaCheck(outcome.index, np.max(model.alpha[outcome.index]), threshold)
            )
    violations = [c.index for c in checks if not c.satisfied]
    if violations:
        LOGGER.warning("LOO errors below the alpha threshold at points %s.", violations)
    return checks


class BoundReport:
    """Radius-margin bound of a trained model, in its two equivalent forms."""

    def __init__(
        self,
        Q,
        m,
        ball,
        margins,
        alpha_sum,
        loo_errors=None,
        error_checks=None,
        dataset_digest=None,
    ):
        self.Q = Q
        self.m = m
        self.ball = ball
        self.margins = margins
        self.alpha_sum = float(alpha_sum)
        self.loo_errors = loo_errors
        self.error_checks = error_checks if error_checks is not None else []
        self.dataset_digest = dataset_digest

    @property
    def squared_diameter(self):
        return self.ball.squared_diameter

    @property
    def margin_sum(self):
        if self.margins is None:
            return 0.0
        return float(self.margins.margin_sum)

    @property
    def bound_value(self):
        """Q² D² Σ_{k<l} ((1 + d_kl)/γ_kl)²."""
        return self.Q ** 2 * self.squared_diameter * self.margin_sum

    @property
    def bound_via_alpha(self):
        """Q(Q-1) D² 1ᵀα⁰."""
        return self.Q * (self.Q - 1) * self.squared_diameter * self.alpha_sum

    @property
    def clamped(self):
        return min(self.bound_value, self.m)

    @property
    def per_q2(self):
        return self.bound_value / self.Q ** 2

    def forms_agree(self, rtol=1e-6):
        a, b = self.bound_value, self.bound_via_alpha
        return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))

    def error_check_violations(self):
        return [c.index for c in self.error_checks if not c.satisfied]

    def to_dict(self):
        d = {
            "Q": self.Q,
            "m": self.m,
            "dataset_digest": self.dataset_digest,
            "squared_diameter": float(self.squared_diameter),
            "margin_sum": self.margin_sum,
            "bound": float(self.bound_value),
            "bound_clamped": float(self.clamped),
            "bound_per_q2": float(self.per_q2),
            "alpha_sum": self.alpha_sum,
            "bound_via_alpha": float(self.bound_via_alpha),
            "loo_errors": self.loo_errors,
            "error_checks": [c.to_dict() for c in self.error_checks],
            "ball": self.ball.to_dict(),
        }
        if self.margins is not None:
            d["margins"] = self.margins.to_dict()
        return d


def radius_margin_bound(model, loo=None, ball_settings=None, support_only=False):
    """Bound on the number of LOO errors from the full-data model.

    When `loo` is given its error count and the per-point checks are added
    to the report.
    """
    ball = model_ball(model, support_only=support_only, settings=ball_settings)
    alpha_sum = np.sum(model.alpha)
    margins = None
    if alpha_sum > 0:
        margins = compute_margins(model)

    report = BoundReport(
        Q=model.Q,
        m=model.m,
        ball=ball,
        margins=margins,
        alpha_sum=alpha_sum,
        dataset_digest=model_digest(model),
    )
    if not report.forms_agree():
        LOGGER.warning(
            "Bound forms disagree: %.17g (margins) vs %.17g (alpha).",
            report.bound_value,
            report.bound_via_alpha,
        )
    if loo is not None:
        report.loo_errors = loo.errors
        # the per-point threshold always comes from the ball around every training image
        full_ball = model_ball(model, settings=ball_settings) if support_only else ball
        report.error_checks = check_error_alphas(model, loo, ball=full_ball)
    return report


class GridPoint:
    """One (C, kernel parameters) configuration of a grid search."""

    def __init__(
        self,
        C,
        params,
        bound=np.inf,
        per_q2=np.inf,
        loo_errors=None,
        failed=False,
        message=None,
        wall_time=0.0,
    ):
        self.C = float(C)
        self.params = dict(params)
        self.bound = float(bound)
        self.per_q2 = float(per_q2)
        self.loo_errors = loo_errors
        self.failed = failed
        self.message = message
        self.wall_time = wall_time

    def sort_key(self):
        return (self.bound, self.C, tuple(self.params[k] for k in sorted(self.params)))

    def to_dict(self, timing=False):
        d = {
            "C": self.C,
            "params": {k: float(v) for k, v in self.params.items()},
            "bound": self.bound,
            "bound_per_q2": self.per_q2,
            "loo_errors": self.loo_errors,
            "failed": self.failed,
        }
        if self.message is not None:
            d["message"] = self.message
        if timing:
            d["wall_time"] = self.wall_time
        return d


class SelectionResult:
    def __init__(self, grid, best, dataset_digest, family, Q, m):
        self.grid = grid
        self.best = best
        self.dataset_digest = dataset_digest
        self.family = family
        self.Q = Q
        self.m = m

    @property
    def best_point(self):
        return self.grid[self.best]

    def to_dict(self, timing=False):
        return {
            "family": self.family,
            "Q": self.Q,
            "m": self.m,
            "dataset_digest": self.dataset_digest,
            "best": self.best,
            "grid": [g.to_dict(timing=timing) for g in self.grid],
        }


def _evaluate_grid_point(dataset, family, C, params, with_loo, settings, ball_settings):
    start = time.perf_counter()
    try:
        kernel = KernelSpec(family, **params)
        model = train(dataset, kernel, C=C, settings=settings)
        report = radius_margin_bound(model, ball_settings=ball_settings)
    except NUMERICAL_FAILURES as e:
        LOGGER.warning("Grid point C=%g %s failed: %s", C, params, e)
        return GridPoint(C, params, failed=True, message=str(e),
                         wall_time=time.perf_counter() - start)

    loo_errors = None
    if with_loo:
        loo_errors = exact_loo(dataset, kernel, C=C, settings=settings).errors
    return GridPoint(
        C,
        params,
        bound=report.bound_value,
        per_q2=report.per_q2,
        loo_errors=loo_errors,
        wall_time=time.perf_counter() - start,
    )


def grid_select(
    dataset,
    family,
    C_grid,
    param_grid=None,
    with_loo=False,
    settings=None,
    ball_settings=None,
    workers=None,
    data_logger=None,
):
    """Pick the (C, kernel parameters) pair minimizing the radius-margin bound.

    The grid is C-major. Ties are broken by the smaller C, then by the
    lexicographically smaller parameter tuple. Failing points get an
    infinite bound.
    """
    C_grid = list(C_grid)
    param_grid = [{}] if not param_grid else [dict(p) for p in param_grid]
    if not C_grid:
        raise SelectionError("Empty C grid.")
    if any(not C > 0 for C in C_grid):
        raise SelectionError("Every C of the grid must be positive.")

    configs = [(C, params) for C in C_grid for params in param_grid]
    grid = Parallel(n_jobs=workers or 1)(
        delayed(_evaluate_grid_point)(
            dataset, family, C, params, with_loo, settings, ball_settings
        )
        for C, params in configs
    )
    grid = list(grid)

    if data_logger is not None:
        for point in grid:
            data_logger.append("C", point.C)
            data_logger.append("bound", point.bound)
            if point.loo_errors is not None:
                data_logger.append("loo_errors", point.loo_errors)

    candidates = [i for i, g in enumerate(grid) if not g.failed]
    if not candidates:
        raise SelectionError("Every grid point failed.")
    best = min(candidates, key=lambda i: grid[i].sort_key())
    LOGGER.info(
        "Selected C=%g %s with bound %.6g.", grid[best].C, grid[best].params, grid[best].bound
    )
    return SelectionResult(grid, best, dataset.source_hash, family, dataset.Q, dataset.m)
