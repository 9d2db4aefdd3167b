"""Block structure, reference functions, Bregman distances and proximal maps.

All reference functions in the catalog are separable, so every operation here
works coordinatewise; blocks only decide which weight and stepsize a
coordinate receives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class BregmanError(Exception):
    """Base class for errors raised by this package."""


class DomainError(BregmanError, ValueError):
    """A point lies outside the domain of a reference function or objective."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class UnboundedSubproblemError(BregmanError):
    """A Bregman proximal subproblem has no minimizer (Burg ill-posedness)."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class RefKind(enum.Enum):
    EUCLIDEAN = "euclidean"
    SHANNON = "shannon"
    BURG = "burg"


class RegKind(enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"


@dataclass(frozen=True)
class ReferenceFunction:
    """A separable Legendre reference function h.

    ``theta`` is the symmetric coefficient inf D(x,y)/D(y,x) and
    ``gamma_uniform`` the exponent for which the triangle-scaling bound
    holds uniformly over the domain.
    """

    kind: RefKind
    theta: float
    gamma_uniform: float

    @property
    def positive_domain(self) -> bool:
        return self.kind is not RefKind.EUCLIDEAN

    def check_domain(self, x: np.ndarray, name: str = "x") -> None:
        if not self.positive_domain:
            if not np.all(np.isfinite(x)):
                idx = int(np.flatnonzero(~np.isfinite(x))[0])
                raise DomainError(f"{name}[{idx}] is not finite", idx)
            return
        bad = ~(x > 0)
        if np.any(bad):
            idx = int(np.flatnonzero(bad)[0])
            raise DomainError(
                f"{name}[{idx}] = {x[idx]!r} outside the positive domain of "
                f"the {self.kind.value} reference",
                idx,
            )

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        self.check_domain(x)
        return float(np.sum(_h(self.kind, x)))

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self.check_domain(x)
        return _dh(self.kind, x)

    def hess_diag(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self.check_domain(x)
        return _d2h(self.kind, x)


EUCLIDEAN = ReferenceFunction(RefKind.EUCLIDEAN, theta=1.0, gamma_uniform=2.0)
SHANNON = ReferenceFunction(RefKind.SHANNON, theta=0.0, gamma_uniform=1.0)
BURG = ReferenceFunction(RefKind.BURG, theta=0.0, gamma_uniform=0.0)

CATALOG = {k.kind.value: k for k in (EUCLIDEAN, SHANNON, BURG)}


def reference(kind: str | RefKind | ReferenceFunction) -> ReferenceFunction:
    if isinstance(kind, ReferenceFunction):
        return kind
    if isinstance(kind, RefKind):
        kind = kind.value
    try:
        return CATALOG[kind]
    except KeyError:
        raise ValueError(f"unknown reference function {kind!r}") from None


def _h(kind: RefKind, x):
    if kind is RefKind.EUCLIDEAN:
        return 0.5 * x * x
    if kind is RefKind.SHANNON:
        return x * np.log(x)
    return -np.log(x)


def _dh(kind: RefKind, x):
    if kind is RefKind.EUCLIDEAN:
        return np.array(x, dtype=float, copy=True)
    if kind is RefKind.SHANNON:
        return np.log(x) + 1.0
    return -1.0 / x


def _d2h(kind: RefKind, x):
    if kind is RefKind.EUCLIDEAN:
        return np.ones_like(x, dtype=float)
    if kind is RefKind.SHANNON:
        return 1.0 / x
    return 1.0 / (x * x)


def _coord_distance(kind: RefKind, u, x):
    # closed forms keep D >= 0 exactly and avoid cancellation in h(u) - h(x)
    if kind is RefKind.EUCLIDEAN:
        d = u - x
        return 0.5 * d * d
    r = u / x
    if kind is RefKind.SHANNON:
        return u * np.log(r) - u + x
    return r - np.log(r) - 1.0


@dataclass(frozen=True)
class BlockPartition:
    """Split of an N-vector into consecutive blocks."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ValueError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.cumsum((0,) + sizes[:-1])))

    @classmethod
    def scalar(cls, dim: int) -> "BlockPartition":
        return cls((1,) * dim)

    @classmethod
    def even(cls, dim: int, n: int) -> "BlockPartition":
        """``n`` blocks whose sizes differ by at most one."""
        base, extra = divmod(dim, n)
        return cls(tuple(base + (1 if i < extra else 0) for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def dim(self) -> int:
        return self.offsets[-1] + self.sizes[-1]

    @property
    def is_scalar(self) -> bool:
        return all(s == 1 for s in self.sizes)

    def slice(self, i: int) -> slice:
        o = self.offsets[i]
        return slice(o, o + self.sizes[i])

    def block_of(self, index: int) -> int:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        return int(np.searchsorted(self.offsets, index, side="right") - 1)

    def expand(self, per_block) -> np.ndarray:
        """Repeat one value per block onto the coordinates it covers."""
        return np.repeat(np.asarray(per_block), self.sizes)


@dataclass(frozen=True)
class Regularizer:
    """Block-separable regularizer; each block is zero or the indicator of x >= 0."""

    kinds: tuple[RegKind, ...]

    @classmethod
    def uniform(cls, kind: RegKind | str, n: int) -> "Regularizer":
        return cls((RegKind(kind),) * n)

    def value(self, partition: BlockPartition, x: np.ndarray) -> float:
        mask = self.nonneg_mask(partition)
        return 0.0 if np.all(x[mask] >= 0) else np.inf

    def nonneg_mask(self, partition: BlockPartition) -> np.ndarray:
        return partition.expand([k is RegKind.NONNEG for k in self.kinds]).astype(bool)


class WeightedReference:
    """H(x) = sum_i L_i h_i(x_i) over a block partition."""

    def __init__(self, partition: BlockPartition, refs: Sequence[ReferenceFunction], weights):
        refs = tuple(reference(r) for r in refs)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(refs) != partition.n or weights.size != partition.n:
            raise ValueError(
                f"need one reference and one weight per block ({partition.n}), "
                f"got {len(refs)} and {weights.size}"
            )
        if not np.all(weights > 0):
            raise ValueError("block weights must be strictly positive")
        self.partition = partition
        self.refs = refs
        self.weights = weights
        self.coord_weights = partition.expand(weights).astype(float)
        codes = np.array([list(RefKind).index(r.kind) for r in refs])
        self._coord_code = partition.expand(codes)
        self._groups = [
            (kind, self._coord_code == list(RefKind).index(kind))
            for kind in RefKind
            if np.any(self._coord_code == list(RefKind).index(kind))
        ]

    @classmethod
    def uniform(cls, ref, weights, partition: BlockPartition | None = None) -> "WeightedReference":
        weights = np.asarray(weights, dtype=float).reshape(-1)
        partition = partition or BlockPartition.scalar(weights.size)
        return cls(partition, [reference(ref)] * partition.n, weights)

    def with_weights(self, weights) -> "WeightedReference":
        return WeightedReference(self.partition, self.refs, weights)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.refs])

    def check_domain(self, x: np.ndarray, name: str = "x") -> None:
        if x.shape != (self.partition.dim,):
            raise ValueError(f"{name} has shape {x.shape}, expected ({self.partition.dim},)")
        for kind, mask in self._groups:
            if kind is RefKind.EUCLIDEAN:
                continue
            bad = mask & ~(x > 0)
            if np.any(bad):
                idx = int(np.flatnonzero(bad)[0])
                raise DomainError(f"{name}[{idx}] = {x[idx]!r} must be > 0", idx)

    def coord_distances(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Unweighted coordinatewise D_h(u_j, x_j)."""
        out = np.empty_like(x, dtype=float)
        for kind, mask in self._groups:
            out[mask] = _coord_distance(kind, u[mask], x[mask])
        return out

    def distance(self, u, x) -> float:
        u = np.asarray(u, dtype=float)
        x = np.asarray(x, dtype=float)
        self.check_domain(u, "u")
        self.check_domain(x, "x")
        return float(np.dot(self.coord_weights, self.coord_distances(u, x)))

    def block_distances(self, u, x) -> np.ndarray:
        """L_i D_h(u_i, x_i) for every block i."""
        u = np.asarray(u, dtype=float)
        x = np.asarray(x, dtype=float)
        self.check_domain(u, "u")
        self.check_domain(x, "x")
        terms = self.coord_weights * self.coord_distances(u, x)
        return np.add.reduceat(terms, np.asarray(self.partition.offsets))

    def grad(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x, dtype=float)
        for kind, mask in self._groups:
            out[mask] = _dh(kind, x[mask])
        return self.coord_weights * out

    def prox(self, x, g, alpha, reg: Regularizer) -> np.ndarray:
        """Coordinatewise Bregman prox of the whole vector.

        ``alpha`` is a scalar or one stepsize per block.
        """
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        self.check_domain(x)
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (self.partition.n,))
        a = self.partition.expand(alpha)
        nonneg = reg.nonneg_mask(self.partition)
        out = np.empty_like(x)
        for kind, mask in self._groups:
            out[mask] = _prox_closed(kind, x[mask], g[mask], a[mask], nonneg[mask])
        return out


def bregman_distance(ref, u, x) -> float:
    """D_h(u, x) = h(u) - h(x) - <h'(x), u - x>, summed over coordinates."""
    ref = reference(ref)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if u.shape != x.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {x.shape}")
    ref.check_domain(u, "u")
    ref.check_domain(x, "x")
    return float(np.sum(_coord_distance(ref.kind, u, x)))


def weighted_distance(H: WeightedReference, u, x) -> float:
    return H.distance(u, x)


def _prox_closed(kind: RefKind, x, g, alpha, nonneg):
    if kind is RefKind.EUCLIDEAN:
        u = x - alpha * g
        return np.where(nonneg, np.maximum(u, 0.0), u)
    if kind is RefKind.SHANNON:
        return x * np.exp(-alpha * g)
    denom = 1.0 / x + alpha * g
    bad = ~(denom > 0)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise UnboundedSubproblemError(
            f"Burg prox unbounded at component {idx}: 1/x + alpha*g = {denom[idx]!r} <= 0",
            idx,
        )
    return 1.0 / denom


def bregman_prox(ref, x, g, alpha, reg: RegKind | str = RegKind.ZERO) -> np.ndarray:
    """argmin_u <g, u - x> + D_h(u, x)/alpha + r(u), in closed form."""
    ref = reference(ref)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("stepsize must be positive")
    ref.check_domain(x)
    nonneg = np.full(x.shape, RegKind(reg) is RegKind.NONNEG)
    return _prox_closed(ref.kind, x, g, np.broadcast_to(alpha, x.shape), nonneg)


def bregman_prox_numeric(
    ref, x, g, alpha, reg: RegKind | str = RegKind.ZERO, tol: float = 1e-13, max_expand: int = 2000
) -> np.ndarray:
    """Bracket-and-bisect solution of the same prox subproblem.

    Works only from h' (never the closed forms above), so it can serve as an
    independent check.  Each coordinate solves
    g + (h'(u) - h'(x)) / alpha = 0, clipped to u >= 0 for the indicator
    (entropy roots are positive already).
    """
    ref = reference(ref)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape)
    if np.any(alpha <= 0):
        raise ValueError("stepsize must be positive")
    ref.check_domain(x)
    kind = ref.kind
    nonneg = RegKind(reg) is RegKind.NONNEG
    dhx = _dh(kind, x)

    def slope(u):
        return g + (_dh(kind, u) - dhx) / alpha

    lo = x.copy()
    hi = x.copy()
    root_below = g > 0
    root_above = g < 0
    done = g == 0

    # walk outward until the slope changes sign
    step = np.maximum(np.abs(x), 1.0)
    need_lo = root_below.copy()
    need_hi = root_above.copy()
    for _ in range(max_expand):
        if not (need_lo.any() or need_hi.any()):
            break
        if kind is RefKind.EUCLIDEAN:
            lo = np.where(need_lo, lo - step, lo)
        else:
            lo = np.where(need_lo, lo * 0.5, lo)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            hi = np.where(need_hi, hi + step, hi)
            step = np.where(need_lo | need_hi, step * 2.0, step)
            need_lo = need_lo & ~(slope(lo) < 0)
            need_hi = need_hi & ~(slope(hi) > 0)
    if need_hi.any():
        idx = int(np.flatnonzero(need_hi)[0])
        raise UnboundedSubproblemError(f"no bracket found for component {idx}", idx)
    if need_lo.any():
        idx = int(np.flatnonzero(need_lo)[0])
        raise UnboundedSubproblemError(f"no bracket found for component {idx}", idx)

    active = ~done
    for _ in range(400):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        stalled = (mid == lo) | (mid == hi)
        with np.errstate(divide="ignore"):
            s = slope(mid)
        lo = np.where(active & (s < 0), mid, lo)
        hi = np.where(active & (s >= 0), mid, hi)
        active = active & ~((hi - lo <= tol * np.abs(mid)) | stalled)
    out = np.where(done, x, 0.5 * (lo + hi))
    if nonneg and kind is RefKind.EUCLIDEAN:
        # one-dimensional convex problem: the constrained minimizer is the clipped root
        out = np.maximum(out, 0.0)
    return out


def gti_ratio_sample(ref, u, v, w, theta: float) -> float:
    """D_h(u + theta (v - w), u) / D_h(v, w)."""
    ref = reference(ref)
    u, v, w = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (u, v, w))
    for name, p in (("u", u), ("v", v), ("w", w)):
        ref.check_domain(p, name)
    moved = u + theta * (v - w)
    ref.check_domain(moved, "u + theta*(v - w)")
    denom = bregman_distance(ref, v, w)
    if denom == 0:
        raise ValueError("v and w must differ")
    return bregman_distance(ref, moved, u) / denom
