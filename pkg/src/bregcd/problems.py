"""Composite test problems: Poisson inverse, relative-entropy regression, quadratic.

The two KL families are the applications the solvers are built for.  The
quadratic family (Euclidean geometry, no constraint) is an extension used only
where a computable strong-convexity constant is needed.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BURG,
    EUCLIDEAN,
    SHANNON,
    BlockPartition,
    BregmanError,
    DomainError,
    RegKind,
    Regularizer,
    WeightedReference,
)


class Family(enum.Enum):
    POISSON = "poisson"
    RELENT = "relent"
    QUADRATIC = "quadratic"

    @classmethod
    def parse(cls, name: "str | Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {
            "poisson": cls.POISSON,
            "poisson-inverse": cls.POISSON,
            "relent": cls.RELENT,
            "relative-entropy": cls.RELENT,
            "relative-entropy-regression": cls.RELENT,
            "quadratic": cls.QUADRATIC,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown problem family {name!r}") from None


_REFERENCE = {Family.POISSON: BURG, Family.RELENT: SHANNON, Family.QUADRATIC: EUCLIDEAN}


class StaleCacheError(BregmanError):
    """A residual cache no longer matches the iterate it claims to describe."""


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Data, block structure and geometry of one composite problem.

    For the KL families ``A`` is the M x N measurement matrix and ``b`` the
    M observations; for the quadratic family ``A`` holds the symmetric N x N
    matrix Q and ``b`` the linear term, so f(x) = x'Qx/2 - b'x.
    """

    family: Family
    A: np.ndarray
    b: np.ndarray
    partition: BlockPartition
    regularizer: Regularizer
    reference: WeightedReference

    def __post_init__(self):
        # column-major copy: every coordinate step reads one column of A
        object.__setattr__(self, "_At", np.ascontiguousarray(self.A.T))

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def dim(self) -> int:
        return self.partition.dim

    @property
    def L(self) -> np.ndarray:
        return self.reference.weights

    def columns(self, block: int) -> np.ndarray:
        """Rows of A^T belonging to ``block`` (shape N_i x M)."""
        return self._At[self.partition.slice(block)]

    def initial_point(self) -> np.ndarray:
        return np.ones(self.dim)

    def with_weights(self, weights) -> "ProblemInstance":
        return ProblemInstance(
            self.family, self.A, self.b, self.partition, self.regularizer,
            self.reference.with_weights(weights),
        )


def make_instance(
    family,
    A,
    b,
    partition: BlockPartition | None = None,
    weights=None,
    regularizer: Regularizer | None = None,
) -> ProblemInstance:
    """Validate data and attach the family's reference functions and constants."""
    family = Family.parse(family)
    A = np.array(A, dtype=float, ndmin=2)
    b = np.array(b, dtype=float, ndmin=1)
    M, N = A.shape
    if b.shape != (M,):
        raise ValueError(f"b has shape {b.shape}, expected ({M},)")
    if family is Family.QUADRATIC:
        if M != N:
            raise ValueError("quadratic family needs a square Q")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(A).min() < -1e-10 * max(1.0, np.abs(A).max()):
            raise ValueError("Q must be positive semidefinite")
    else:
        if np.any(A < 0) or np.any(b < 0):
            raise ValueError("A and b must be nonnegative")
        if np.any(~(A > 0).any(axis=1)):
            raise ValueError(f"row {int(np.flatnonzero(~(A > 0).any(axis=1))[0])} of A is zero")
        if np.any(~(A > 0).any(axis=0)):
            raise ValueError(f"column {int(np.flatnonzero(~(A > 0).any(axis=0))[0])} of A is zero")
    partition = partition or BlockPartition.scalar(N)
    if partition.dim != N:
        raise ValueError(f"partition covers {partition.dim} coordinates, data has {N}")
    if regularizer is None:
        kind = RegKind.ZERO if family is Family.QUADRATIC else RegKind.NONNEG
        regularizer = Regularizer.uniform(kind, partition.n)
    if weights is None:
        weights = _smoothness_constants(family, A, b, partition)
    ref = WeightedReference.uniform(_REFERENCE[family], weights, partition)
    return ProblemInstance(family, A, b, partition, regularizer, ref)


def _smoothness_constants(family: Family, A, b, partition: BlockPartition) -> np.ndarray:
    if family is Family.POISSON:
        return np.full(partition.n, float(np.sum(b)))
    if family is Family.RELENT:
        colsum = A.sum(axis=0)
        return np.array([colsum[partition.slice(i)].max() for i in range(partition.n)])
    out = np.empty(partition.n)
    for i in range(partition.n):
        sl = partition.slice(i)
        out[i] = np.linalg.norm(A[sl, sl], 2)
    return out


def smoothness_constants(p: ProblemInstance) -> np.ndarray:
    """Per-block relative-smoothness constants of the family.

    Poisson: ||b||_1 for every block; relative entropy: column sums of A
    (largest one within a block); quadratic: spectral norm of the diagonal
    block of Q.
    """
    return _smoothness_constants(p.family, p.A, p.b, p.partition)


def synth_instance(family, M: int, N: int, seed: int, partition: BlockPartition | None = None) -> ProblemInstance:
    """Random instance with A, b i.i.d. uniform on [0, 1].

    For the quadratic family the uniform M x N draw G is centred and turned
    into Q = (2G - 1)'(2G - 1)/M + 0.1 I, with b uniform on [0, 1]^N.
    """
    family = Family.parse(family)
    if M < 1 or N < 1:
        raise ValueError("M and N must be at least 1")
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 1.0, size=(M, N))
    if family is Family.QUADRATIC:
        G = 2.0 * A - 1.0
        Q = G.T @ G / M + 0.1 * np.eye(N)
        Q = 0.5 * (Q + Q.T)
        b = rng.uniform(0.0, 1.0, size=N)
        return make_instance(family, Q, b, partition)
    b = rng.uniform(0.0, 1.0, size=M)
    return make_instance(family, A, b, partition)


# -- objective and gradients ------------------------------------------------------


def residual(p: ProblemInstance, x: np.ndarray) -> np.ndarray:
    return p.A @ x


def _check_ax(p: ProblemInstance, ax: np.ndarray) -> None:
    if p.family is Family.QUADRATIC:
        return
    bad = ~(ax > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"<a_{i}, x> = {ax[i]!r} is not positive", i)
    if p.family is Family.RELENT and np.any(p.b <= 0):
        i = int(np.flatnonzero(p.b <= 0)[0])
        raise DomainError(f"b[{i}] = 0 makes the relative-entropy objective undefined", i)


def objective_from_residual(p: ProblemInstance, ax: np.ndarray, x: np.ndarray | None = None) -> float:
    """f evaluated from a cached A x (quadratic: Q x, and x itself is needed)."""
    _check_ax(p, ax)
    b = p.b
    if p.family is Family.POISSON:
        pos = b > 0
        terms = ax - b
        terms[pos] += b[pos] * np.log(b[pos] / ax[pos])
        return float(np.sum(terms))
    if p.family is Family.RELENT:
        return float(np.sum(ax * np.log(ax / b) - ax + b))
    if x is None:
        raise ValueError("the quadratic objective needs x")
    return float(0.5 * np.dot(x, ax) - np.dot(b, x))


def objective(p: ProblemInstance, x) -> float:
    x = np.asarray(x, dtype=float)
    p.reference.check_domain(x)
    return objective_from_residual(p, residual(p, x), x)


def residual_weights(p: ProblemInstance, ax: np.ndarray) -> np.ndarray:
    """The M-vector w with grad f = A' w (KL families only)."""
    if p.family is Family.POISSON:
        return 1.0 - p.b / ax
    if p.family is Family.RELENT:
        return np.log(ax / p.b)
    raise ValueError("quadratic family has no residual weights")


def full_gradient(p: ProblemInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    p.reference.check_domain(x)
    ax = residual(p, x)
    _check_ax(p, ax)
    if p.family is Family.QUADRATIC:
        return ax - p.b
    return p.A.T @ residual_weights(p, ax)


class ResidualCache:
    """A x for the current iterate, kept in sync by rank-one column updates."""

    __slots__ = ("ax",)

    def __init__(self, ax: np.ndarray):
        self.ax = ax

    @classmethod
    def fresh(cls, p: ProblemInstance, x: np.ndarray) -> "ResidualCache":
        return cls(residual(p, np.asarray(x, dtype=float)))

    def copy(self) -> "ResidualCache":
        return ResidualCache(self.ax.copy())

    def apply(self, p: ProblemInstance, block: int, delta: np.ndarray) -> None:
        """Account for x_block += delta."""
        cols = p.columns(block)
        if cols.shape[0] == 1:
            self.ax += delta[0] * cols[0]
        else:
            self.ax += cols.T @ delta

    def verify(self, p: ProblemInstance, x: np.ndarray, rtol: float = 1e-9) -> None:
        exact = residual(p, x)
        scale = max(1.0, float(np.max(np.abs(exact))))
        err = float(np.max(np.abs(self.ax - exact))) / scale
        if err > rtol:
            raise StaleCacheError(f"cached residual off by {err:.3e} (relative)")


def partial_gradient(p: ProblemInstance, x, cache: ResidualCache, block: int, verify: bool = False) -> np.ndarray:
    """Block gradient from the cached residual; O(M N_i)."""
    if verify:
        cache.verify(p, np.asarray(x, dtype=float))
    sl = p.partition.slice(block)
    if p.family is Family.QUADRATIC:
        return cache.ax[sl] - p.b[sl]
    ax = cache.ax
    _check_ax(p, ax)
    return p.columns(block) @ residual_weights(p, ax)


def relative_smoothness_residual(p: ProblemInstance, x_samples, rel_step: float = 1e-4) -> float:
    """max over samples and coordinates of f''_j(x) - L_j h''_j(x_j).

    f'' comes from central second differences along each coordinate (step
    ``rel_step * x_j`` on positive domains), h'' is exact.  A valid set of
    constants keeps this at or below finite-difference noise.
    """
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
    L = p.reference.coord_weights
    worst = -np.inf
    for x in x_samples:
        p.reference.check_domain(x)
        if p.family is Family.QUADRATIC:
            h = np.full(p.dim, rel_step)
        else:
            h = rel_step * x
        f0 = objective(p, x)
        fp = np.empty(p.dim)
        fm = np.empty(p.dim)
        ax = residual(p, x)
        for j in range(p.dim):
            xp = x.copy()
            xp[j] += h[j]
            xm = x.copy()
            xm[j] -= h[j]
            fp[j] = objective_from_residual(p, ax + h[j] * p._At[j], xp)
            fm[j] = objective_from_residual(p, ax - h[j] * p._At[j], xm)
        f2 = (fp - 2.0 * f0 + fm) / (h * h)
        h2 = np.empty(p.dim)
        for kind_ref, sl in _coord_refs(p):
            h2[sl] = kind_ref.hess_diag(x[sl])
        worst = max(worst, float(np.max(f2 - L * h2)))
    return worst


def _coord_refs(p: ProblemInstance):
    for i, ref in enumerate(p.reference.refs):
        yield ref, p.partition.slice(i)


# -- plain-text instance files --------------------------------------------------------


def save_instance(path, A, b) -> None:
    """Write ``M N``, then the M rows of A, then b, at 17 significant digits."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    M, N = A.shape
    lines = [f"{M} {N}"]
    lines.extend(" ".join(format(v, ".17g") for v in row) for row in A)
    lines.append(" ".join(format(v, ".17g") for v in b))
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> tuple[np.ndarray, np.ndarray]:
    with open(os.fspath(path)) as fh:
        rows = [line.split() for line in fh if line.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: first line must be 'M N'")
    M, N = (int(t) for t in rows[0])
    if len(rows) != M + 2:
        raise ValueError(f"{path}: expected {M + 2} non-empty lines, found {len(rows)}")
    A = np.array([[float(t) for t in r] for r in rows[1 : M + 1]])
    if A.shape != (M, N):
        raise ValueError(f"{path}: matrix rows must have {N} entries")
    b = np.array([float(t) for t in rows[M + 1]])
    if b.shape != (M,):
        raise ValueError(f"{path}: last line must have {M} entries")
    return A, b
