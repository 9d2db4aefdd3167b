"""Randomized Bregman block coordinate descent and its accelerated variants.

Every coordinate solver draws blocks from a :class:`BlockSampler`, so runs
with the same seed see the same block sequence regardless of the algorithm.
One epoch is n block steps, or one full-gradient iteration for BPG/ABPG.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .geometry import (
    BregmanError,
    DomainError,
    RefKind,
    RegKind,
    WeightedReference,
    _prox_closed,
)
from .problems import (
    Family,
    ProblemInstance,
    ResidualCache,
    objective,
    objective_from_residual,
    residual,
)


class Solver(enum.Enum):
    RBCD = "rbcd"
    ARBCD = "arbcd"
    ARBCD_EFFICIENT = "arbcd-efficient"
    BPG = "bpg"
    ABPG = "abpg"

    @classmethod
    def parse(cls, name: "str | Solver") -> "Solver":
        if isinstance(name, Solver):
            return name
        key = str(name).strip().lower().replace("_", "-")
        if key in ("arbcd-eff", "efficient"):
            key = "arbcd-efficient"
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown solver {name!r}") from None

    @property
    def accelerated(self) -> bool:
        return self in (Solver.ARBCD, Solver.ARBCD_EFFICIENT, Solver.ABPG)


class BetaSchedule(enum.Enum):
    CLOSED_FORM = "closed"
    EQUALITY = "equality"

    @classmethod
    def parse(cls, name: "str | BetaSchedule") -> "BetaSchedule":
        if isinstance(name, BetaSchedule):
            return name
        key = str(name).strip().lower()
        if key in ("closed", "closed-form", "closedform"):
            return cls.CLOSED_FORM
        if key in ("equality", "equality-recurrence", "recurrence"):
            return cls.EQUALITY
        raise ValueError(f"unknown beta schedule {name!r}")


@dataclass(frozen=True)
class SolverConfig:
    solver: Solver = Solver.RBCD
    gamma: float = 2.0
    beta_schedule: BetaSchedule = BetaSchedule.CLOSED_FORM
    epochs: int = 100
    seed: int = 0
    # None means the default (1 + theta_i) / (2 L_i); otherwise one stepsize per block
    alpha: tuple | None = None
    divergence_factor: float = 1e6
    # "residual": a point is usable while f is finite there (A x > 0);
    # "orthant": any maintained point leaving the positive orthant ends the run
    domain: str = "residual"

    def __post_init__(self):
        object.__setattr__(self, "solver", Solver.parse(self.solver))
        object.__setattr__(self, "beta_schedule", BetaSchedule.parse(self.beta_schedule))
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.solver.accelerated and not self.gamma > 0:
            raise ValueError("gamma must be positive for accelerated solvers")
        if self.domain not in ("residual", "orthant"):
            raise ValueError(f"unknown domain rule {self.domain!r}")
        if self.alpha is not None:
            object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))

    def snapshot(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.value
        d["beta_schedule"] = self.beta_schedule.value
        return d


@dataclass
class TraceRecord:
    epoch: int
    iterations: int
    objective: float
    stationarity: float
    elapsed_s: float
    diverged: bool = False


@dataclass
class SolverTrace:
    records: list
    seed: int
    config: dict
    initial: TraceRecord | None = None
    x: np.ndarray | None = None
    error: str | None = None

    @property
    def diverged(self) -> bool:
        return any(r.diverged for r in self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def stationarities(self) -> np.ndarray:
        return np.array([r.stationarity for r in self.records])

    @property
    def final_objective(self) -> float:
        for r in reversed(self.records):
            if not r.diverged:
                return r.objective
        return math.nan if self.diverged or not self.records else self.records[-1].objective


class BlockSampler:
    """Uniform block indices from one seeded stream, drawn n at a time."""

    def __init__(self, n: int, seed: int):
        self.n = n
        self.rng = np.random.default_rng(seed)
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def draw(self) -> int:
        if self._pos >= self._buf.size:
            self._buf = self.rng.integers(0, self.n, size=self.n)
            self._pos = 0
        i = int(self._buf[self._pos])
        self._pos += 1
        return i


# -- stepsizes and the beta sequence ------------------------------------------------


def default_stepsizes(H: WeightedReference) -> np.ndarray:
    return (1.0 + H.thetas) / (2.0 * H.weights)


def resolve_stepsizes(H: WeightedReference, alpha) -> np.ndarray:
    if alpha is None:
        return default_stepsizes(H)
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (H.partition.n,)).copy()
    upper = (1.0 + H.thetas) / H.weights
    if np.any(a <= 0) or np.any(a >= upper):
        raise ValueError("custom stepsizes must lie in (0, (1 + theta_i) / L_i)")
    return a


def beta_closed_form(k: int, gamma: float) -> float:
    if k < 0 or not gamma > 0:
        raise ValueError("need k >= 0 and gamma > 0")
    return gamma / (k + gamma)


def beta_equality(beta_k: float, gamma: float) -> float:
    """Root of (1 - b) / b**gamma = 1 / beta_k**gamma on (0, 1).

    Solved in the equivalent increasing form b**gamma - (1 - b) beta_k**gamma
    by bisection.
    """
    if not (0.0 < beta_k <= 1.0) or not gamma > 0:
        raise ValueError("need beta_k in (0, 1] and gamma > 0")
    c = beta_k**gamma
    return optimize.bisect(lambda b: b**gamma - (1.0 - b) * c, 0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps)


class BetaSequence:
    def __init__(self, schedule: BetaSchedule, gamma: float):
        self.schedule = schedule
        self.gamma = gamma
        self.k = 0
        self.value = 1.0

    def advance(self) -> float:
        self.k += 1
        if self.schedule is BetaSchedule.CLOSED_FORM:
            self.value = beta_closed_form(self.k, self.gamma)
        else:
            self.value = beta_equality(self.value, self.gamma)
        return self.value


# -- block-level helpers -------------------------------------------------------------


class _Blocks:
    """Per-block data pulled out of the instance once, for the inner loops."""

    def __init__(self, p: ProblemInstance):
        part = p.partition
        self.slices = [part.slice(i) for i in range(part.n)]
        self.kinds = [r.kind for r in p.reference.refs]
        self.nonneg = [k is RegKind.NONNEG for k in p.regularizer.kinds]
        self.positive = [k is not RefKind.EUCLIDEAN for k in self.kinds]
        self.cols = [p.columns(i) for i in range(part.n)]
        self.L = p.reference.weights
        self.positive_mask = part.expand(self.positive).astype(bool)


def _weights(p: ProblemInstance, ax: np.ndarray) -> np.ndarray:
    if p.family is Family.POISSON:
        return 1.0 - p.b / ax
    return np.log(ax / p.b)


def _block_grad(p: ProblemInstance, blocks: _Blocks, ax: np.ndarray, i: int) -> np.ndarray:
    if p.family is Family.QUADRATIC:
        sl = blocks.slices[i]
        return ax[sl] - p.b[sl]
    if not np.all(ax > 0):
        j = int(np.flatnonzero(~(ax > 0))[0])
        raise DomainError(f"<a_{j}, x> = {ax[j]!r} left the domain", j)
    return blocks.cols[i] @ _weights(p, ax)


def _grad_from_residual(p: ProblemInstance, ax: np.ndarray) -> np.ndarray:
    if p.family is Family.QUADRATIC:
        return ax - p.b
    if not np.all(ax > 0):
        j = int(np.flatnonzero(~(ax > 0))[0])
        raise DomainError(f"<a_{j}, x> = {ax[j]!r} left the domain", j)
    return p.A.T @ _weights(p, ax)


def _block_prox(blocks: _Blocks, i: int, xi, gi, alpha: float) -> np.ndarray:
    return _prox_closed(blocks.kinds[i], xi, gi, alpha, blocks.nonneg[i])


def _full_prox(p: ProblemInstance, x, g, alpha) -> np.ndarray:
    return p.reference.prox(x, g, alpha, p.regularizer)


def _check_point(blocks: _Blocks, x: np.ndarray, name: str) -> None:
    bad = blocks.positive_mask & ~(x > 0)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise DomainError(f"{name}[{j}] = {x[j]!r} left the domain", j)


# -- T-map and stationarity ----------------------------------------------------------


def t_map(p: ProblemInstance, H: WeightedReference | None, x) -> np.ndarray:
    """Block prox of the full gradient with stepsize 1/L_i on every block."""
    H = H or p.reference
    x = np.asarray(x, dtype=float)
    H.check_domain(x)
    ax = residual(p, x)
    g = _grad_from_residual(p, ax)
    return H.prox(x, g, 1.0 / H.weights, p.regularizer)


def stationarity(p: ProblemInstance, H: WeightedReference | None, x) -> float:
    H = H or p.reference
    return H.distance(t_map(p, H, x), x)


# -- solver states -------------------------------------------------------------------


class RBCDState:
    def __init__(self, p: ProblemInstance, x0, alpha=None):
        self.p = p
        self.blocks = _Blocks(p)
        self.alpha = resolve_stepsizes(p.reference, alpha)
        self.x = np.array(x0, dtype=float)
        p.reference.check_domain(self.x)
        self.cache = ResidualCache.fresh(p, self.x)
        self.k = 0

    def step(self, i: int) -> None:
        b = self.blocks
        sl = b.slices[i]
        g = _block_grad(self.p, b, self.cache.ax, i)
        xi = self.x[sl]
        new = _block_prox(b, i, xi, g, self.alpha[i])
        delta = new - xi
        self.x[sl] = new
        self.cache.apply(self.p, i, delta)
        self.k += 1

    def point(self) -> np.ndarray:
        return self.x

    def resync(self) -> None:
        self.cache = ResidualCache.fresh(self.p, self.x)


def rbcd_step(state: RBCDState, sampler: BlockSampler) -> int:
    """One randomized block step; returns the block that was updated."""
    i = sampler.draw()
    state.step(i)
    return i


class ARBCDState:
    """Accelerated method in its reference form: points x, y, z and their residuals."""

    def __init__(self, p: ProblemInstance, x0, gamma: float, schedule=BetaSchedule.CLOSED_FORM, strict=False):
        self.p = p
        self.blocks = _Blocks(p)
        self.strict = strict
        self.n = p.n
        self.gamma = float(gamma)
        self.beta = BetaSequence(BetaSchedule.parse(schedule), self.gamma)
        self.x = np.array(x0, dtype=float)
        p.reference.check_domain(self.x)
        self.z = self.x.copy()
        self.ax = residual(p, self.x)
        self.az = self.ax.copy()
        self.y = None
        self.ay = None
        self.k = 0

    def form_y(self) -> None:
        bk = self.beta.value
        self.y = (1.0 - bk) * self.x + bk * self.z
        self.ay = (1.0 - bk) * self.ax + bk * self.az

    def step(self, i: int) -> None:
        b = self.blocks
        sl = b.slices[i]
        bk = self.beta.value
        nb = self.n * bk
        self.form_y()
        if self.strict:
            _check_point(b, self.y, "y")
        g = _block_grad(self.p, b, self.ay, i)
        alpha = 1.0 / (nb ** (self.gamma - 1.0) * b.L[i])
        zi = self.z[sl]
        dz = _block_prox(b, i, zi, g, alpha) - zi
        self.z[sl] = zi + dz
        colsT = b.cols[i].T
        adz = colsT @ dz
        self.az += adz
        self.x = self.y.copy()
        self.x[sl] += nb * dz
        self.ax = self.ay + nb * adz
        self.beta.advance()
        self.k += 1

    def point(self) -> np.ndarray:
        return self.x

    def resync(self) -> None:
        self.ax = residual(self.p, self.x)
        self.az = residual(self.p, self.z)


class EfficientARBCDState:
    """Accelerated method through the (u, v) change of variables.

    x^k = beta_{k-1}^gamma u^k + v^k, y^k = beta_k^gamma u^k + v^k, z^k = v^k.
    """

    def __init__(self, p: ProblemInstance, x0, gamma: float, schedule=BetaSchedule.EQUALITY, strict=False):
        self.p = p
        self.blocks = _Blocks(p)
        self.strict = strict
        self.n = p.n
        self.gamma = float(gamma)
        self.beta = BetaSequence(BetaSchedule.parse(schedule), self.gamma)
        self.v = np.array(x0, dtype=float)
        p.reference.check_domain(self.v)
        self.u = np.zeros_like(self.v)
        self.av = residual(p, self.v)
        self.au = np.zeros_like(self.av)
        self.prev_beta_pow = 0.0  # u^0 = 0, so x^0 = v^0 whatever this is
        self.k = 0

    def y_point(self) -> np.ndarray:
        return self.beta.value**self.gamma * self.u + self.v

    def point(self) -> np.ndarray:
        return self.prev_beta_pow * self.u + self.v

    def step(self, i: int) -> None:
        b = self.blocks
        sl = b.slices[i]
        bk = self.beta.value
        bg = bk**self.gamma
        nb = self.n * bk
        if self.strict:
            _check_point(b, self.y_point(), "y")
        ay = bg * self.au + self.av
        g = _block_grad(self.p, b, ay, i)
        alpha = 1.0 / (nb ** (self.gamma - 1.0) * b.L[i])
        vi = self.v[sl]
        d = _block_prox(b, i, vi, g, alpha) - vi
        self.v[sl] = vi + d
        coef = (1.0 - nb) / bg
        self.u[sl] -= coef * d
        ad = b.cols[i].T @ d
        self.av += ad
        self.au -= coef * ad
        self.prev_beta_pow = bg
        self.beta.advance()
        self.k += 1

    def resync(self) -> None:
        self.av = residual(self.p, self.v)
        self.au = residual(self.p, self.u)


class BPGState:
    def __init__(self, p: ProblemInstance, x0, H: WeightedReference, alpha=None):
        self.p = p
        self.H = H
        self.alpha = resolve_stepsizes(H, alpha)
        self.x = np.array(x0, dtype=float)
        H.check_domain(self.x)
        self.k = 0

    def iterate(self) -> None:
        g = _grad_from_residual(self.p, residual(self.p, self.x))
        self.x = self.H.prox(self.x, g, self.alpha, self.p.regularizer)
        self.k += 1

    def point(self) -> np.ndarray:
        return self.x


class ABPGState:
    """Full-vector accelerated Bregman gradient: the coordinate method with n = 1."""

    def __init__(self, p: ProblemInstance, x0, H: WeightedReference, gamma: float, schedule=BetaSchedule.CLOSED_FORM, strict=False):
        self.p = p
        self.strict = strict
        self.H = H
        self.blocks = _Blocks(p)
        self.gamma = float(gamma)
        self.beta = BetaSequence(BetaSchedule.parse(schedule), self.gamma)
        self.x = np.array(x0, dtype=float)
        H.check_domain(self.x)
        self.z = self.x.copy()
        self.k = 0

    def iterate(self) -> None:
        bk = self.beta.value
        y = (1.0 - bk) * self.x + bk * self.z
        if self.strict:
            _check_point(self.blocks, y, "y")
        g = _grad_from_residual(self.p, residual(self.p, y))
        alpha = 1.0 / (bk ** (self.gamma - 1.0) * self.H.weights)
        self.z = self.H.prox(self.z, g, alpha, self.p.regularizer)
        self.x = (1.0 - bk) * self.x + bk * self.z
        self.beta.advance()
        self.k += 1

    def point(self) -> np.ndarray:
        return self.x


def full_gradient_weights(p: ProblemInstance) -> np.ndarray:
    """Per-block weights under which f is smooth relative to H as a whole.

    The KL constants are already valid for the full vector.  For a quadratic
    the block norms of Q need not dominate Q, so the largest eigenvalue is
    used on every block.
    """
    if p.family is Family.QUADRATIC:
        lam = float(np.linalg.eigvalsh(p.A).max())
        return np.full(p.n, max(lam, np.finfo(float).tiny))
    return p.reference.weights.copy()


# -- drivers -------------------------------------------------------------------------


def _measure(p: ProblemInstance, x: np.ndarray, strict: bool = True) -> tuple[float, float]:
    """Objective and stationarity at x.

    Under the residual rule an accelerated iterate may sit slightly outside
    the orthant while f stays finite; the T-map is undefined there, so the
    stationarity column is NaN for such points.
    """
    if strict:
        p.reference.check_domain(x)
    f = objective_from_residual(p, residual(p, x), x)
    try:
        p.reference.check_domain(x)
    except DomainError:
        return f, math.nan
    return f, stationarity(p, p.reference, x)


def _run(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    x0 = p.initial_point() if x0 is None else np.asarray(x0, dtype=float)
    solver = config.solver
    trace = SolverTrace(records=[], seed=config.seed, config=config.snapshot())
    start = time.perf_counter()
    f0, s0 = _measure(p, x0)
    trace.initial = TraceRecord(0, 0, f0, s0, 0.0, False)
    limit = config.divergence_factor * max(1.0, abs(f0))

    strict = config.domain == "orthant"
    if solver is Solver.RBCD:
        state = RBCDState(p, x0, config.alpha)
    elif solver is Solver.ARBCD:
        state = ARBCDState(p, x0, config.gamma, config.beta_schedule, strict)
    elif solver is Solver.ARBCD_EFFICIENT:
        state = EfficientARBCDState(p, x0, config.gamma, config.beta_schedule, strict)
    else:
        H = p.reference.with_weights(full_gradient_weights(p))
        if solver is Solver.BPG:
            state = BPGState(p, x0, H, config.alpha)
        else:
            state = ABPGState(p, x0, H, config.gamma, config.beta_schedule, strict)
    coordinate = solver in (Solver.RBCD, Solver.ARBCD, Solver.ARBCD_EFFICIENT)
    sampler = BlockSampler(p.n, config.seed) if coordinate else None
    per_epoch = p.n if coordinate else 1

    iterations = 0
    with np.errstate(all="ignore"):
        for epoch in range(1, config.epochs + 1):
            try:
                for _ in range(per_epoch):
                    if coordinate:
                        state.step(sampler.draw())
                    else:
                        state.iterate()
                    iterations += 1
                if coordinate:
                    state.resync()
                x = state.point()
                f, s = _measure(p, x, strict)
                if not math.isfinite(f) or abs(f) > limit:
                    raise DomainError(f"objective {f!r} exceeded the divergence threshold")
            except (BregmanError, FloatingPointError) as exc:
                trace.error = f"epoch {epoch}: {exc}"
                trace.records.append(
                    TraceRecord(epoch, iterations, math.nan, math.nan, time.perf_counter() - start, True)
                )
                break
            trace.records.append(TraceRecord(epoch, iterations, f, s, time.perf_counter() - start, False))
    trace.x = np.array(state.point(), dtype=float)
    return trace


def run_rbcd(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    return _run(p, _with_solver(config, Solver.RBCD), x0)


def run_arbcd(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    return _run(p, _with_solver(config, Solver.ARBCD), x0)


def run_arbcd_efficient(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    return _run(p, _with_solver(config, Solver.ARBCD_EFFICIENT), x0)


def run_bpg(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    return _run(p, _with_solver(config, Solver.BPG), x0)


def run_abpg(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    return _run(p, _with_solver(config, Solver.ABPG), x0)


def run_solver(p: ProblemInstance, config: SolverConfig, x0=None) -> SolverTrace:
    return _run(p, config, x0)


def _with_solver(config: SolverConfig, solver: Solver) -> SolverConfig:
    if config.solver is solver:
        return config
    d = dict(config.__dict__)
    d["solver"] = solver
    return SolverConfig(**d)
