"""Dual quadratic program of the hard margin M-SVM of Lee, Lin and Wahba.

The dual variables are stored as an (m, Q) array `alpha` whose row i holds
(α_i1, ..., α_iQ); the flat vector of length Qm is its row-major ravel, so
coordinate (i, k) sits at index i * Q + k. The coordinates α_{i,y_i} are
pinned to zero.

The Hessian h_{ik,jl} = (δ_kl - 1/Q) κ(x_i, x_j) is never formed: its
product with alpha is G @ (alpha - row means of alpha).
"""
import logging

import numpy as np

from msvm_core.kernels import GramMatrix, NotPSDError, PSD_TOLERANCE
from msvm_core.parsing import parse_number


LOGGER = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
SUPPORT_THRESHOLD = 1e-7
MAX_ITER_FACTOR = 100

# stall detection: relative objective change over a window of iterations
STALL_WINDOW = 10
STALL_TOLERANCE = 1e-14

# full projected gradient steps tried on a stall before giving up
STALL_RELEASES = 3

# a stalled or truncated solve is accepted when its KKT residual is within
# this factor of the tolerance
ACCEPT_FACTOR = 1e3

CONVERGED = "converged"
STALLED = "stalled"
MAX_ITER = "max_iter"

# directions with curvature below this (relative to the largest eigenvalue)
# are treated as flat
FLAT_CURVATURE = 1e-14
NEGATIVE_CURVATURE = 1e-10

# dual variables growing beyond this mean the hard margin problem is infeasible
UNBOUNDED_ALPHA = 1e12

BISECTION_STEPS = 200


class ConvergenceError(RuntimeError):
    """The solver stopped before reaching the requested KKT residual."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class UnboundedDualError(ConvergenceError):
    """The dual is unbounded: the data are not separable in feature space."""


class SolverSettings:
    """Tolerances of the dual solver."""

    def __init__(
        self,
        tol=DEFAULT_TOLERANCE,
        max_iter=None,
        max_iter_factor=MAX_ITER_FACTOR,
        support_threshold=SUPPORT_THRESHOLD,
        accept_factor=ACCEPT_FACTOR,
    ):
        if not tol > 0:
            raise ValueError("Solver tolerance must be positive.")
        if not accept_factor >= 1:
            raise ValueError("Accept factor must be at least one.")
        self.tol = float(tol)
        self.max_iter = None if max_iter is None else int(max_iter)
        self.max_iter_factor = int(max_iter_factor)
        self.support_threshold = float(support_threshold)
        self.accept_factor = float(accept_factor)

    @classmethod
    def from_config(cls, config):
        """Build settings from the `solver` section of a config dict."""
        max_iter = config.get("max_iter", None)
        return cls(
            tol=parse_number(config.get("tol", DEFAULT_TOLERANCE)),
            max_iter=None if max_iter is None else parse_number(max_iter, dtype=int),
            max_iter_factor=parse_number(
                config.get("max_iter_factor", MAX_ITER_FACTOR), dtype=int
            ),
            support_threshold=parse_number(
                config.get("support_threshold", SUPPORT_THRESHOLD)
            ),
            accept_factor=parse_number(config.get("accept_factor", ACCEPT_FACTOR)),
        )

    def iteration_limit(self, problem):
        if self.max_iter is not None:
            return self.max_iter
        return self.max_iter_factor * problem.Q * problem.m

    def to_dict(self):
        return {
            "tol": self.tol,
            "max_iter": self.max_iter,
            "max_iter_factor": self.max_iter_factor,
            "support_threshold": self.support_threshold,
            "accept_factor": self.accept_factor,
        }


class DualProblem:
    """Data of the dual: Gram matrix (offset already applied), labels, Q."""

    def __init__(self, gram, labels, n_classes):
        if isinstance(gram, GramMatrix):
            gram = gram.entries
        gram = np.asarray(gram, dtype=float)
        labels = np.asarray(labels, dtype=int).ravel()
        m = labels.shape[0]

        if gram.shape != (m, m):
            raise ValueError(f"Gram matrix of shape {gram.shape} does not match {m} labels.")
        if n_classes < 2:
            raise ValueError("At least two categories are required.")
        if m == 0:
            raise ValueError("Empty training set.")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError(f"Labels must lie in [0, {n_classes}).")

        self.gram = gram
        self.labels = labels
        self.m = m
        self.Q = int(n_classes)

        self.pinned = np.zeros((m, self.Q), dtype=bool)
        self.pinned[np.arange(m), labels] = True
        self.free = ~self.pinned

    @property
    def target(self):
        """Right-hand side 1/(Q-1) of the correct classification constraints."""
        return 1.0 / (self.Q - 1)

    def as_matrix(self, alpha):
        """View alpha as an (m, Q) array, accepting the flat form as well."""
        A = np.asarray(alpha, dtype=float)
        if A.shape == (self.m, self.Q):
            return A
        if A.ndim == 1 and A.shape[0] == self.m * self.Q:
            return A.reshape(self.m, self.Q)
        raise ValueError(
            f"alpha has shape {A.shape}, expected ({self.m}, {self.Q}) or ({self.m * self.Q},)."
        )

    def hessian_product(self, alpha):
        """Hα in factored form: (Hα)_ik = Σ_j G_ij (α_jk - mean_l α_jl)."""
        A = self.as_matrix(alpha)
        return self.gram @ (A - A.mean(axis=1, keepdims=True))

    def gradient(self, alpha):
        """Gradient of the dual objective, zero on the pinned coordinates."""
        g = self.target - self.hessian_product(alpha)
        g[self.pinned] = 0
        return g

    def equality_residuals(self, alpha):
        """Σ_i Σ_l α_il (1/Q - δ_kl) for every k."""
        A = self.as_matrix(alpha)
        return A.sum() / self.Q - A.sum(axis=0)


class DualSolution:
    """Dual optimum with its certificates.

    `status` is CONVERGED when the KKT residual reached `tolerance`, STALLED
    when the objective stopped improving first and MAX_ITER when the
    iteration limit was hit.
    """

    def __init__(
        self,
        alpha,
        objective,
        kkt_residual,
        iterations,
        status,
        biases,
        tolerance,
        history=None,
    ):
        if status not in (CONVERGED, STALLED, MAX_ITER):
            raise ValueError(f"Unknown solver status {status!r}.")
        alpha = np.array(alpha, dtype=float)
        alpha.flags.writeable = False
        self.alpha = alpha
        self.objective = float(objective)
        self.kkt_residual = float(kkt_residual)
        self.iterations = int(iterations)
        self.status = status
        self.biases = np.array(biases, dtype=float)
        self.tolerance = float(tolerance)
        self.history = np.array(history if history is not None else [objective])

    @property
    def converged(self):
        return self.status == CONVERGED

    @property
    def flat(self):
        return self.alpha.ravel()

    def acceptable(self, accept_factor=ACCEPT_FACTOR):
        """Converged, or stopped with a residual within accept_factor * tolerance."""
        return self.converged or self.kkt_residual <= accept_factor * self.tolerance


class KKTReport:
    """Residuals certifying (or refuting) optimality of a dual point."""

    def __init__(
        self, equality, min_coordinate, pinned, complementarity, stationarity, biases
    ):
        self.equality = equality
        self.min_coordinate = min_coordinate
        self.pinned = pinned
        self.complementarity = complementarity
        self.stationarity = stationarity
        self.biases = biases

    @property
    def max_residual(self):
        return max(
            np.max(np.abs(self.equality)),
            max(-self.min_coordinate, 0.0),
            self.pinned,
            self.complementarity,
            self.stationarity,
        )


def dual_objective(problem, alpha):
    """J(α) = -½ αᵀHα + 1/(Q-1) 1ᵀα."""
    A = problem.as_matrix(alpha)
    return -0.5 * np.sum(A * problem.hessian_product(A)) + problem.target * A.sum()


def _support_mask(problem, A, support_threshold):
    amax = np.max(A[problem.free], initial=0.0)
    if amax <= 0:
        return np.zeros_like(problem.free)
    return problem.free & (A > support_threshold * amax)


def recover_biases(problem, alpha, support_threshold=SUPPORT_THRESHOLD, gradient=None):
    """Multipliers of the equality constraints, which are the biases b.

    Every support coordinate (i, k) gives the equation b_k = -g_ik, i.e.
    h_k(x_i) = -1/(Q-1). The equations are solved in the least squares sense
    under Σ_k b_k = 0. Returns b and the indices of the categories that had
    no equation (their biases only come from the sum constraint).
    """
    A = problem.as_matrix(alpha)
    g = problem.gradient(A) if gradient is None else gradient
    Q = problem.Q

    support = _support_mask(problem, A, support_threshold)
    if not support.any():
        # α = 0: the tightest biases are -max_i g_ik; categories without free
        # coordinates take up the sum constraint
        has_free = problem.free.any(axis=0)
        b = np.zeros(Q)
        for k in np.flatnonzero(has_free):
            b[k] = -np.max(g[problem.free[:, k], k])
        if has_free.all():
            return b - b.mean(), np.array([], dtype=int)
        missing = np.flatnonzero(~has_free)
        b[missing] = -b[has_free].sum() / len(missing)
        return b, missing

    n = support.sum(axis=0)
    a = np.zeros(Q)
    present = n > 0
    a[present] = -(g * support).sum(axis=0)[present] / n[present]

    if present.all():
        μ = a.sum() / np.sum(1.0 / n)
        return a - μ / n, np.array([], dtype=int)

    missing = np.flatnonzero(~present)
    LOGGER.warning("No support equation for categories %s.", missing.tolist())
    b = a.copy()
    b[missing] = -a[present].sum() / len(missing)
    return b, missing


def kkt_report(problem, alpha, biases=None, support_threshold=SUPPORT_THRESHOLD, gradient=None):
    """Residuals of the Kuhn-Tucker conditions at alpha.

    With r_ik = g_ik + b_k = h_k(x_i) + 1/(Q-1) (scores of the hard margin
    machine on the Gram matrix of the problem), the conditions are r = 0 on
    support coordinates, r <= 0 elsewhere, α_ik r_ik = 0, plus feasibility.
    """
    A = problem.as_matrix(alpha)
    g = problem.gradient(A) if gradient is None else gradient
    if biases is None:
        biases, _ = recover_biases(problem, A, support_threshold, gradient=g)

    r = g + biases[None, :]
    support = _support_mask(problem, A, support_threshold)
    bound = problem.free & ~support

    stationarity = max(
        np.max(np.abs(r[support]), initial=0.0), np.max(r[bound], initial=0.0)
    )
    complementarity = np.max(np.abs(A * r)[problem.free], initial=0.0)
    min_coordinate = np.min(A[problem.free], initial=0.0)
    pinned = np.max(np.abs(A[problem.pinned]), initial=0.0)

    return KKTReport(
        equality=problem.equality_residuals(A),
        min_coordinate=min_coordinate,
        pinned=pinned,
        complementarity=complementarity,
        stationarity=stationarity,
        biases=biases,
    )


class _SortedColumn:
    """Column of free entries, pre-sorted for repeated simplex projections."""

    def __init__(self, values):
        self.values = values
        self.u = np.sort(values)[::-1]
        self.cumsum = np.cumsum(self.u)
        self.idx = np.arange(1, len(values) + 1)

    def threshold(self, total):
        """θ such that Σ max(v - θ, 0) = total (total > 0)."""
        css = self.cumsum - total
        (ρ,) = np.nonzero(self.u - css / self.idx > 0)
        ρ = ρ[-1]
        return css[ρ] / (ρ + 1)


def project_feasible(problem, V):
    """Euclidean projection onto {α >= 0, α_{i,y_i} = 0, equal column sums}.

    For a common column sum t each column is projected onto a scaled simplex;
    the optimal t zeroes the sum of the simplex thresholds, which is
    nonincreasing in t and found by bisection.
    """
    V = problem.as_matrix(V)
    out = np.zeros_like(V)
    free = problem.free
    if not free.any(axis=0).all():
        # some category has no free coordinate: the column sums are all zero
        return out

    columns = [_SortedColumn(V[free[:, k], k]) for k in range(problem.Q)]
    tops = np.array([c.u[0] for c in columns])
    if tops.sum() <= 0:
        return out

    def theta_sum(t):
        return sum(c.threshold(t) for c in columns)

    lo = 0.0
    hi = tops.sum() / np.sum([1.0 / len(c.values) for c in columns])
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if theta_sum(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    if t <= 0:
        return out

    for k, c in enumerate(columns):
        out[free[:, k], k] = np.maximum(c.values - c.threshold(t), 0)
    return out


def _project_face(v, face):
    """Orthogonal projection onto {d: supp(d) ⊆ face, equal column sums}."""
    v = np.where(face, v, 0.0)
    n = face.sum(axis=0)
    sums = v.sum(axis=0)
    nonempty = n > 0

    t = 0.0
    if nonempty.all():
        t = np.sum(sums / n) / np.sum(1.0 / n)

    shift = np.zeros(v.shape[1])
    shift[nonempty] = (t - sums[nonempty]) / n[nonempty]
    return np.where(face, v + shift[None, :], 0.0)


class _Ascent:
    """Exact line searches shared by the projection and face phases."""

    def __init__(self, problem, scale):
        self.problem = problem
        self.scale = scale

    def step(self, alpha, direction, gradient, Hd=None, cap=np.inf):
        """Maximize J along alpha + θ d, θ in [0, min(cap, θmax)].

        θmax is the step at which the first decreasing coordinate reaches
        zero. Returns (alpha, θ, blocked).
        """
        slope = np.sum(gradient * direction)
        if slope <= 0:
            return alpha, 0.0, False

        if Hd is None:
            Hd = self.problem.hessian_product(direction)
        curvature = np.sum(direction * Hd)
        dd = np.sum(direction * direction)

        decreasing = direction < 0
        θmax = cap
        if decreasing.any():
            θmax = min(cap, np.min(alpha[decreasing] / -direction[decreasing]))

        if curvature < -NEGATIVE_CURVATURE * self.scale * dd:
            raise NotPSDError(f"Negative curvature {curvature} along an ascent direction.")
        if curvature <= FLAT_CURVATURE * self.scale * dd:
            θ = θmax
        else:
            θ = min(slope / curvature, θmax)
        if not np.isfinite(θ):
            raise UnboundedDualError(
                "Dual objective is unbounded: the data are not separable in feature space."
            )

        new = alpha + θ * direction
        blocked = θ == θmax
        if blocked:
            new[decreasing & (alpha / np.where(decreasing, -direction, 1.0) <= θmax)] = 0
        np.maximum(new, 0, out=new)
        if np.max(new) > UNBOUNDED_ALPHA:
            raise UnboundedDualError(
                "Dual variables diverge: the data are not separable in feature space."
            )
        return new, θ, blocked


def _face_conjugate_gradient(problem, ascent, alpha, tol):
    """Conjugate gradient ascent on the face {α_ik > 0}, stopping at a bound."""
    face = problem.free & (alpha > 0)
    if not face.any():
        return alpha

    g = problem.gradient(alpha)
    r = _project_face(g, face)
    p = r.copy()
    rr = np.sum(r * r)

    for _ in range(int(face.sum())):
        if np.max(np.abs(r)) <= tol:
            break
        Hp = problem.hessian_product(p)
        Hp[problem.pinned] = 0
        alpha, θ, blocked = ascent.step(alpha, p, g, Hd=Hp)
        if blocked or θ == 0:
            break
        g = g - θ * Hp
        r_new = _project_face(g, face)
        rr_new = np.sum(r_new * r_new)
        # keep p in the face subspace, round-off in its column sums grows with β
        p = _project_face(r_new + (rr_new / rr) * p, face)
        if np.sum(r_new * p) <= 0:
            p = r_new
        r, rr = r_new, rr_new
    return alpha


def solve_dual(
    problem,
    tol=DEFAULT_TOLERANCE,
    max_iter=None,
    support_threshold=SUPPORT_THRESHOLD,
    data_logger=None,
):
    """Maximize the dual objective.

    Each iteration takes a gradient projection step onto the feasible set
    followed by conjugate gradient ascent on the resulting face; both use
    exact line searches, so the objective never decreases. The projection
    step never goes past the projected point, so every iterate is a convex
    combination of feasible points.

    Stops when the KKT residual is below tol/(Q-1) (status CONVERGED), when
    the objective stalls (STALLED) or after max_iter iterations (MAX_ITER,
    default 100 Qm). On a stall up to STALL_RELEASES full projected gradient
    steps are taken to leave a jammed face before the solver gives up.
    """
    tol_abs = tol * problem.target
    if max_iter is None:
        max_iter = MAX_ITER_FACTOR * problem.Q * problem.m

    λ = np.linalg.eigvalsh(problem.gram)
    scale = max(np.max(np.abs(λ)), np.finfo(float).tiny)
    if λ[0] < -PSD_TOLERANCE * max(scale, 1.0):
        raise NotPSDError(f"Gram matrix has negative eigenvalue {λ[0]}.")
    step = 1.0 / λ[-1] if λ[-1] > 0 else 1.0

    ascent = _Ascent(problem, scale)
    alpha = np.zeros((problem.m, problem.Q))
    objective = 0.0
    history = [objective]
    status = None
    iteration = 0
    releases = 0
    window_start = 0

    while True:
        g = problem.gradient(alpha)
        report = kkt_report(problem, alpha, support_threshold=support_threshold, gradient=g)
        residual = report.max_residual
        if data_logger is not None:
            data_logger.append("objective", objective)
            data_logger.append("kkt_residual", residual)
            data_logger.append("face_size", np.count_nonzero(alpha))

        if residual <= tol_abs:
            status = CONVERGED
            break
        if iteration >= max_iter:
            status = MAX_ITER
            break

        release = False
        if len(history) - window_start > STALL_WINDOW:
            change = abs(history[-1] - history[-1 - STALL_WINDOW])
            if change <= STALL_TOLERANCE * max(1.0, abs(history[-1])):
                if releases >= STALL_RELEASES:
                    LOGGER.debug("Objective stalled at iteration %d.", iteration)
                    status = STALLED
                    break
                LOGGER.debug(
                    "Objective stalled at iteration %d, taking a full projected gradient step.",
                    iteration,
                )
                releases += 1
                window_start = len(history)
                release = True

        iteration += 1
        target = project_feasible(problem, alpha + step * g)
        if release:
            alpha = target
        else:
            alpha, _, _ = ascent.step(alpha, target - alpha, g, cap=1.0)
        alpha = _face_conjugate_gradient(problem, ascent, alpha, 0.1 * tol_abs)

        new_objective = dual_objective(problem, alpha)
        if new_objective < objective - 1e-12 * (1.0 + abs(objective)):
            raise NotPSDError(
                f"Ascent failure: objective decreased from {objective} to {new_objective}."
            )
        objective = new_objective
        history.append(objective)
        LOGGER.debug(
            "iteration %d: objective %.17g, residual %.3e", iteration, objective, residual
        )

    if status == CONVERGED:
        LOGGER.info(
            "Dual solved in %d iterations, KKT residual %.3e.", iteration, residual
        )
    else:
        LOGGER.warning(
            "Dual solver %s after %d iterations with KKT residual %.3e > %.3e.",
            "stalled" if status == STALLED else "hit the iteration limit",
            iteration,
            residual,
            tol_abs,
        )

    return DualSolution(
        alpha=alpha,
        objective=objective,
        kkt_residual=residual,
        iterations=iteration,
        status=status,
        biases=report.biases,
        tolerance=tol_abs,
        history=history,
    )
