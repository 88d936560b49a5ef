"""Dense reference solvers and synthetic data used to cross-check the library."""
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from msvm_core.dataset import Dataset


def dense_hessian(gram, Q):
    """The Qm x Qm matrix h_{ik,jl} = (δ_kl - 1/Q) g_ij, row index i * Q + k."""
    G = np.asarray(gram, dtype=float)
    return np.kron(G, np.eye(Q) - np.ones((Q, Q)) / Q)


def solve_dense_dual(gram, labels, Q, tol=1e-14, max_iter=1000):
    """Solve the M-SVM dual as a generic QP with SLSQP on the dense Hessian.

    Returns the (m, Q) alpha and the objective value.
    """
    G = np.asarray(gram, dtype=float)
    labels = np.asarray(labels, dtype=int)
    m = G.shape[0]
    H = dense_hessian(G, Q)
    s = 1.0 / (Q - 1)

    # optimize over the coordinates that are not pinned to zero
    free = np.ones((m, Q), dtype=bool)
    free[np.arange(m), labels] = False
    free = free.ravel()
    Hf = H[np.ix_(free, free)]

    # one equality per category: Σ_i Σ_l α_il (1/Q - δ_kl) = 0
    A = np.zeros((Q, m * Q))
    for k in range(Q):
        row = np.full((m, Q), 1.0 / Q)
        row[:, k] -= 1
        A[k, :] = row.ravel()
    # the rows sum to zero, so the last one is redundant
    A = A[:-1, free]

    def cost(x):
        return 0.5 * x @ Hf @ x - s * x.sum()

    def jac(x):
        return Hf @ x - s

    n = int(free.sum())
    constraints = [{"type": "eq", "fun": lambda x: A @ x, "jac": lambda x: A}]
    res = minimize(
        cost,
        x0=np.zeros(n),
        jac=jac,
        bounds=[(0, None)] * n,
        constraints=constraints,
        method="slsqp",
        options={"ftol": tol, "maxiter": max_iter},
    )
    x = np.maximum(res.x, 0)
    alpha = np.zeros(m * Q)
    alpha[free] = x
    return alpha.reshape(m, Q), -cost(x)


def binary_two_norm_svm(K, y, C, support_threshold=1e-7):
    """Binary SVM minimizing ½‖w‖² + C Σ ξ_i², solved in the dual by SLSQP.

    `y` holds ±1 labels. The dual is the hard margin dual with the kernel
    K + I/(2C). Returns the dual variables a and the bias b; the decision
    function is Σ_j a_j y_j κ(x_j, x) + b.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    m = K.shape[0]
    Kc = K + np.eye(m) / (2 * C)
    P = np.outer(y, y) * Kc

    def cost(a):
        return 0.5 * a @ P @ a - a.sum()

    def jac(a):
        return P @ a - 1

    res = minimize(
        cost,
        x0=np.zeros(m),
        jac=jac,
        bounds=[(0, None)] * m,
        constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
        method="slsqp",
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    a = np.maximum(res.x, 0)
    support = a > support_threshold * a.max()
    b = np.mean(y[support] - Kc[support, :] @ (a * y))
    return a, b


def _circle_through(p, q, r):
    # circumcircle of a triangle, None when degenerate
    ax, ay = p
    bx, by = q
    cx, cy = r
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-14:
        return None
    ux = (
        (ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)
    ) / d
    uy = (
        (ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)
    ) / d
    return np.array([ux, uy])


def smallest_circle_brute_force(points):
    """Squared radius of the smallest circle enclosing 2D points.

    Tries every circle defined by one, two (diametral) or three points.
    """
    P = np.asarray(points, dtype=float)
    if P.shape[0] == 1:
        return 0.0

    best = np.inf
    candidates = [0.5 * (P[i] + P[j]) for i, j in combinations(range(len(P)), 2)]
    for i, j, k in combinations(range(len(P)), 3):
        c = _circle_through(P[i], P[j], P[k])
        if c is not None:
            candidates.append(c)

    for c in candidates:
        r2 = np.max(np.sum((P - c) ** 2, axis=1))
        best = min(best, r2)
    return best


def gaussian_blobs(n_per_class, Q, dim=2, spread=0.5, separation=3.0, seed=0):
    """Q Gaussian clusters with centers on a circle in the first two coordinates."""
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(Q) / Q
    centers = np.zeros((Q, dim))
    centers[:, 0] = separation * np.cos(angles)
    if dim > 1:
        centers[:, 1] = separation * np.sin(angles)

    points = []
    labels = []
    for k in range(Q):
        points.append(centers[k] + spread * rng.standard_normal((n_per_class, dim)))
        labels.extend([f"c{k}"] * n_per_class)
    points = np.vstack(points)

    # interleave the classes so that file order does not follow the labels
    order = rng.permutation(len(labels))
    return Dataset.from_labels(points[order], [labels[i] for i in order])
