"""Base kernels, Gram matrices and the M-SVM² diagonal modification."""
import numpy as np
from scipy.spatial.distance import cdist


# relative tolerance used when validating positive semidefiniteness
PSD_TOLERANCE = 1e-8

FAMILIES = ("linear", "gaussian", "polynomial")

# names accepted on the command line and in config files
FAMILY_ALIASES = {
    "linear": "linear",
    "gaussian": "gaussian",
    "rbf": "gaussian",
    "polynomial": "polynomial",
    "poly": "polynomial",
}


class KernelError(ValueError):
    """Invalid kernel parameters or inconsistent inputs."""


class NotPSDError(ValueError):
    """A matrix expected to be positive semidefinite is not."""


class KernelSpec:
    """Declarative description of a base kernel plus a diagonal offset.

    The offset is index-based: it is added to the diagonal of training Gram
    matrices only, never to kernel evaluations between arbitrary vectors.
    """

    def __init__(
        self, family, gamma=None, degree=None, scale=1.0, offset=0.0, diagonal_offset=0.0
    ):
        if family not in FAMILY_ALIASES:
            raise KernelError(f"Unknown kernel family {family}.")
        family = FAMILY_ALIASES[family]

        if family == "gaussian":
            if gamma is None or not gamma > 0:
                raise KernelError("Gaussian kernel requires gamma > 0.")
            gamma = float(gamma)
        elif gamma is not None:
            raise KernelError(f"gamma is not a parameter of the {family} kernel.")

        if family == "polynomial":
            if degree is None or int(degree) != degree or degree < 1:
                raise KernelError("Polynomial kernel requires an integer degree >= 1.")
            if not scale > 0:
                raise KernelError("Polynomial kernel requires scale > 0.")
            if not offset >= 0:
                raise KernelError("Polynomial kernel requires offset >= 0.")
            degree = int(degree)
        elif degree is not None:
            raise KernelError(f"degree is not a parameter of the {family} kernel.")

        if not diagonal_offset >= 0 or not np.isfinite(diagonal_offset):
            raise KernelError("Diagonal offset must be a finite nonnegative number.")

        self.family = family
        self.gamma = gamma
        self.degree = degree
        self.scale = float(scale)
        self.offset = float(offset)
        self.diagonal_offset = float(diagonal_offset)

    @classmethod
    def linear(cls, diagonal_offset=0.0):
        return cls("linear", diagonal_offset=diagonal_offset)

    @classmethod
    def gaussian(cls, gamma, diagonal_offset=0.0):
        return cls("gaussian", gamma=gamma, diagonal_offset=diagonal_offset)

    @classmethod
    def polynomial(cls, degree, scale=1.0, offset=0.0, diagonal_offset=0.0):
        return cls(
            "polynomial",
            degree=degree,
            scale=scale,
            offset=offset,
            diagonal_offset=diagonal_offset,
        )

    @classmethod
    def from_dict(cls, d):
        """Build a spec from a dict as stored in model files."""
        params = dict(d.get("params", {}))
        return cls(
            d["family"], diagonal_offset=d.get("diagonal_offset", 0.0), **params
        )

    def params(self):
        """Family parameters as a dict (the diagonal offset excluded)."""
        if self.family == "gaussian":
            return {"gamma": self.gamma}
        if self.family == "polynomial":
            return {"degree": self.degree, "scale": self.scale, "offset": self.offset}
        return {}

    def to_dict(self):
        return {
            "family": self.family,
            "params": self.params(),
            "diagonal_offset": self.diagonal_offset,
        }

    def with_diagonal_offset(self, diagonal_offset):
        """Copy of this spec with a different diagonal offset."""
        return KernelSpec(self.family, diagonal_offset=diagonal_offset, **self.params())

    @classmethod
    def for_soft_margin(cls, base, C):
        """The kernel κ' = κ + δ/(2C) turning the M-SVM² into a hard margin machine."""
        if C is None:
            return base.with_diagonal_offset(0.0)
        if not C > 0:
            raise KernelError("C must be positive.")
        return base.with_diagonal_offset(1.0 / (2.0 * C))

    def __eq__(self, other):
        return isinstance(other, KernelSpec) and self.to_dict() == other.to_dict()

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"KernelSpec({self.family}, {args}, diagonal_offset={self.diagonal_offset})"

    def _pairwise(self, X, Y):
        # base kernel between the rows of X and Y
        if self.family == "linear":
            return X @ Y.T
        if self.family == "gaussian":
            return np.exp(-self.gamma * cdist(X, Y, "sqeuclidean"))
        return (self.scale * (X @ Y.T) + self.offset) ** self.degree


class GramMatrix:
    """Symmetric kernel matrix of a training set.

    `entries` is read-only; `offset` is the diagonal offset that has been
    added to it (zero when `offset_applied` is False).
    """

    def __init__(self, entries, offset=0.0):
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise KernelError("Gram matrix must be square.")
        if not np.array_equal(entries, entries.T):
            raise KernelError("Gram matrix must be exactly symmetric.")
        entries.flags.writeable = False
        self.entries = entries
        self.offset = float(offset)
        self.offset_applied = self.offset > 0

    @property
    def order(self):
        return self.entries.shape[0]

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.entries)

    def is_psd(self, rel_tol=PSD_TOLERANCE):
        """Smallest eigenvalue >= -rel_tol * largest (in magnitude)."""
        λ = self.eigenvalues()
        scale = max(np.max(np.abs(λ)), 1.0)
        return λ[0] >= -rel_tol * scale

    def check_psd(self, rel_tol=PSD_TOLERANCE):
        if not self.is_psd(rel_tol):
            raise NotPSDError(
                f"Gram matrix has eigenvalue {self.eigenvalues()[0]} below tolerance."
            )
        return self


def _as_points(points, name="points"):
    try:
        X = np.atleast_2d(np.asarray(points, dtype=float))
    except ValueError:
        raise KernelError(f"Dimension mismatch between {name}.")
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise KernelError(f"No {name} given.")
    return X


def eval_kernel(spec, x, y):
    """Evaluate the base kernel κ(x, y). The diagonal offset is not applied."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise KernelError(f"Dimension mismatch: {x.shape[0]} != {y.shape[0]}.")
    return float(spec._pairwise(x[None, :], y[None, :])[0, 0])


def _mirror_upper(K):
    # exact symmetry: keep the upper triangle and reflect it
    return np.triu(K) + np.triu(K, 1).T


def build_gram(spec, points):
    """Training Gram matrix κ(x_i, x_j) + diagonal_offset δ_ij."""
    X = _as_points(points)
    K = _mirror_upper(spec._pairwise(X, X))
    if spec.diagonal_offset > 0:
        K[np.diag_indices_from(K)] += spec.diagonal_offset
    return GramMatrix(K, offset=spec.diagonal_offset)


def cross_gram(spec, train_points, query_points):
    """Rectangular matrix κ(x_i, x_q) between training and query points.

    A query point never shares a training index, so no offset is applied.
    """
    X = _as_points(train_points, "training points")
    Y = _as_points(query_points, "query points")
    if X.shape[1] != Y.shape[1]:
        raise KernelError(f"Dimension mismatch: {X.shape[1]} != {Y.shape[1]}.")
    return spec._pairwise(X, Y)
