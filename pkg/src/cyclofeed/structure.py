"""Structural hypotheses: feedback signs, canonical transform, cyclic
two-positive sign patterns, additive compounds, irreducibility, dissipativity.

All checks here are sampling-based certificates, not proofs: a clean
signature certifies the inequalities on the sampled region only.  Sampled
derivatives within ``TAU_SIGN`` of zero are inconclusive and never counted as
violations, so floating-point zeros cannot flip a certification either way.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .errors import DimensionError, DomainError, IndeterminateSignError
from .modelspec import Box, ModelSpec
from .ode import integrate
from .signs import delta_product

__all__ = [
    "SamplingGrid", "FeedbackSignature", "extract_feedback_signs", "mu_vector",
    "canonical_transform", "TwoPositiveResult", "check_linear_two_positive",
    "additive_compound", "is_metzler", "is_irreducible",
    "DissipativityReport", "check_dissipative_H", "find_absorbing_bound",
    "linear_coefficient_matrix",
]

#: Sampled derivatives with |value| <= TAU_SIGN are treated as inconclusive.
TAU_SIGN = 1e-10


@dataclass
class SamplingGrid:
    """Deterministic sampling plan: nt uniform times in [0, T], nx seeded
    uniform draws from the region box."""

    nt: int = 16
    nx: int = 64
    seed: int = 0


@dataclass
class FeedbackSignature:
    """Outcome of sampling the cyclic interaction signs of a model."""

    delta: np.ndarray
    Delta: int
    violations: list = field(default_factory=list)  # (i, j, t, x, value), 1-based i, j
    samples_checked: int = 0
    inconclusive: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def _region_for(m: ModelSpec, region: Box | None) -> Box:
    if region is not None:
        if region.dim != m.n:
            raise DimensionError("region dimension does not match the model")
        return region
    if m.domain is not None:
        return m.domain
    return Box((-1.0,) * m.n, (1.0,) * m.n)


def extract_feedback_signs(m: ModelSpec, region: Box | None = None,
                           grid: SamplingGrid | None = None,
                           tau_sign: float = TAU_SIGN) -> FeedbackSignature:
    """Determine the feedback signs delta_i and certify the cyclic sign
    conditions on sampled (t, x).

    delta_i is the sign of d f_i / d x_{i-1} at the first sample where the
    derivative is conclusively nonzero; afterwards every conclusive sample
    must satisfy delta_i * d f_i / d x_{i-1} > 0, and the weak neighbour
    condition delta_{i+1} * d f_i / d x_{i+1} >= 0 is checked cyclically for
    i = 2..n (for i = n this is the (n, 1) corner with delta_{n+1} = delta_1).
    Conclusive failures are recorded as violations.
    """
    if not m.cyclic:
        raise DomainError("feedback signs require a cyclic model")
    grid = grid or SamplingGrid()
    box = _region_for(m, region)
    rng = np.random.default_rng(grid.seed)
    times = np.linspace(0.0, m.period, grid.nt)
    points = box.sample(rng, grid.nx)

    n = m.n
    jacs = np.empty((grid.nt, grid.nx, n, n))
    for a, t in enumerate(times):
        for b in range(grid.nx):
            jacs[a, b] = m.jac(t, points[b])

    delta = np.zeros(n, dtype=int)
    for i in range(n):
        col = (i - 1) % n
        vals = jacs[:, :, i, col].ravel()
        conclusive = np.flatnonzero(np.abs(vals) > tau_sign)
        if conclusive.size == 0:
            raise IndeterminateSignError(
                f"d f_{i + 1} / d x_{col + 1} is below the sign threshold at every sample"
            )
        delta[i] = 1 if vals[conclusive[0]] > 0 else -1

    violations = []
    inconclusive = 0
    for a, t in enumerate(times):
        for b in range(grid.nx):
            J = jacs[a, b]
            for i in range(n):
                col = (i - 1) % n
                v = J[i, col]
                if abs(v) <= tau_sign:
                    inconclusive += 1
                elif delta[i] * v < 0:
                    violations.append((i + 1, col + 1, t, points[b].copy(), v))
            for i in range(1, n):
                col = (i + 1) % n
                v = J[i, col]
                if abs(v) <= tau_sign:
                    continue
                if delta[col] * v < 0:
                    violations.append((i + 1, col + 1, t, points[b].copy(), v))
    return FeedbackSignature(
        delta=delta,
        Delta=delta_product(delta),
        violations=violations,
        samples_checked=grid.nt * grid.nx,
        inconclusive=inconclusive,
    )


def mu_vector(delta) -> np.ndarray:
    """Cumulative sign products mu_i = delta_1 * ... * delta_i."""
    return np.cumprod(np.asarray(delta, dtype=int))


def canonical_transform(m: ModelSpec, sig: FeedbackSignature) -> ModelSpec:
    """Reflect coordinates by y_i = mu_i x_i so all interior interactions
    become nonnegative and both corner interactions carry the loop sign Delta.

    Refuses when the signature has violations (the sign conditions did not
    certify, so the reflected system has no guaranteed structure).
    """
    if sig.violations:
        raise DomainError(f"signature has {len(sig.violations)} violations; refusing to transform")
    mu = mu_vector(sig.delta)
    mapping = {
        j: expr.Neg(expr.State(j)) for j in range(1, m.n + 1) if mu[j - 1] < 0
    }
    new_rhs = []
    for i, e in enumerate(m.rhs):
        g = expr.substitute_states(e, mapping)
        if mu[i] < 0:
            g = expr.Neg(g) if not isinstance(g, expr.Neg) else g.operand
        new_rhs.append(g)
    domain = None
    if m.domain is not None:
        lo = np.asarray(m.domain.lo)
        hi = np.asarray(m.domain.hi)
        flipped_lo = np.where(mu > 0, lo, -hi)
        flipped_hi = np.where(mu > 0, hi, -lo)
        domain = Box(tuple(flipped_lo), tuple(flipped_hi))
    name = f"{m.name}:canonical" if m.name else "canonical"
    return ModelSpec(n=m.n, period=m.period, rhs=tuple(new_rhs), params=m.params,
                     cyclic=m.cyclic, domain=domain, name=name)


# ---------------------------------------------------------------------------
# linear sign-pattern checks

@dataclass
class TwoPositiveResult:
    ok: bool
    pattern_ok: bool
    product_ok: bool
    sub_product: float
    super_product: float
    violations: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def check_linear_two_positive(A, tol: float = 0.0) -> TwoPositiveResult:
    """Check the cyclic tridiagonal-plus-corners sign pattern with nonpositive
    corners, plus the strict cyclic product condition
    ``prod_i a_{i,i-1} + prod_i a_{i,i+1} < 0`` (corners included)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("matrix must be square")
    n = A.shape[0]
    if n < 3:
        raise DimensionError(f"matrix dimension must be >= 3, got {n}")
    violations = []
    if A[0, n - 1] > tol:
        violations.append(f"corner entry (1,{n}) must be <= 0, got {A[0, n - 1]!r}")
    if A[n - 1, 0] > tol:
        violations.append(f"corner entry ({n},1) must be <= 0, got {A[n - 1, 0]!r}")
    for i in range(1, n):
        if A[i, i - 1] < -tol:
            violations.append(f"sub-diagonal entry ({i + 1},{i}) must be >= 0, got {A[i, i - 1]!r}")
    for i in range(n - 1):
        if A[i, i + 1] < -tol:
            violations.append(f"super-diagonal entry ({i + 1},{i + 2}) must be >= 0, got {A[i, i + 1]!r}")
    for i in range(n):
        for j in range(n):
            if 1 < abs(i - j) < n - 1 and abs(A[i, j]) > tol:
                violations.append(f"entry ({i + 1},{j + 1}) must be 0, got {A[i, j]!r}")
    pattern_ok = not violations
    sub = A[0, n - 1] * float(np.prod([A[i, i - 1] for i in range(1, n)]))
    sup = A[n - 1, 0] * float(np.prod([A[i, i + 1] for i in range(n - 1)]))
    product_ok = sub + sup < -tol
    if not product_ok:
        violations.append(
            f"cyclic product condition failed: {sub!r} + {sup!r} is not < 0"
        )
    return TwoPositiveResult(ok=pattern_ok and product_ok, pattern_ok=pattern_ok,
                             product_ok=product_ok, sub_product=sub,
                             super_product=sup, violations=violations)


def additive_compound(A, k: int) -> np.ndarray:
    """k-th additive compound matrix, rows/columns indexed by the k-subsets of
    {1..n} in lexicographic order.

    Entry (S, S) is the trace of A restricted to S; entry (S, S') for
    S' = (S \\ {i}) | {j} is (-1)**p * a_{ij} with p the number of indices of
    S strictly between i and j; all other entries vanish.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("matrix must be square")
    n = A.shape[0]
    if not 1 <= k <= n:
        raise DimensionError(f"compound order k = {k} out of range 1..{n}")
    subsets = list(itertools.combinations(range(n), k))
    index = {S: r for r, S in enumerate(subsets)}
    C = np.zeros((len(subsets), len(subsets)))
    for r, S in enumerate(subsets):
        C[r, r] = sum(A[i, i] for i in S)
        inside = set(S)
        for i in S:
            for j in range(n):
                if j in inside:
                    continue
                target = tuple(sorted((inside - {i}) | {j}))
                p = sum(1 for s in S if min(i, j) < s < max(i, j))
                C[r, index[target]] = (-1) ** p * A[i, j]
    return C


def is_metzler(M, tol: float = 0.0) -> bool:
    """True iff every off-diagonal entry is >= 0 (within -tol)."""
    M = np.asarray(M, dtype=float)
    off = M.copy()
    np.fill_diagonal(off, 0.0)
    return bool((off >= -tol).all())


def is_irreducible(A, tol: float = 0.0) -> bool:
    """True iff the digraph with an edge i -> j whenever |a_ij| > tol (i != j)
    is strongly connected."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    adj = np.abs(A) > tol
    np.fill_diagonal(adj, False)

    def reaches_all(matrix) -> bool:
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(matrix[i]):
                if not seen[j]:
                    seen[j] = True
                    frontier.append(j)
        return bool(seen.all())

    return reaches_all(adj) and reaches_all(adj.T)


def linear_coefficient_matrix(m: ModelSpec, t: float) -> np.ndarray:
    """Coefficient matrix A(t) of a linear model (the Jacobian, which for a
    linear right-hand side is state-independent)."""
    return m.jac(t, np.zeros(m.n))


# ---------------------------------------------------------------------------
# dissipativity probe

@dataclass
class DissipativityReport:
    """Sampling evidence for the inward-pointing boundary condition with
    bound C, plus optional absorbing-box entry times of probe trajectories."""

    C: float
    samples_checked: int
    violations: list = field(default_factory=list)  # (i, t, x, value)
    entry_times: list = field(default_factory=list)  # (x0, entry_time | None, retained)

    @property
    def ok(self) -> bool:
        return not self.violations


def _boundary_samples(m: ModelSpec, C: float, grid: SamplingGrid, scale_hi: float = 2.0):
    """Yield (i, t, x) with |x_i| in [C, scale_hi*C], |x_{i+-1}| <= |x_i|,
    all coordinates restricted to the model domain when one is declared."""
    rng = np.random.default_rng(grid.seed)
    n = m.n
    lo = np.array(m.domain.lo) if m.domain is not None else np.full(n, -np.inf)
    hi = np.array(m.domain.hi) if m.domain is not None else np.full(n, np.inf)
    times = np.linspace(0.0, m.period, grid.nt)
    for i in range(n):
        signs = []
        if hi[i] > 0:
            signs.append(1.0)
        if lo[i] < 0:
            signs.append(-1.0)
        if not signs:
            continue
        for t in times:
            for _ in range(grid.nx):
                s = signs[rng.integers(len(signs))]
                xi = s * rng.uniform(C, scale_hi * C)
                x = rng.uniform(np.maximum(lo, -scale_hi * C), np.minimum(hi, scale_hi * C))
                x[i] = xi
                for nb in ((i - 1) % n, (i + 1) % n):
                    x[nb] = rng.uniform(max(lo[nb], -abs(xi)), min(hi[nb], abs(xi)))
                yield i, t, x


def check_dissipative_H(m: ModelSpec, C: float, grid: SamplingGrid | None = None,
                        x0s=None, span: float | None = None,
                        step: float | None = None) -> DissipativityReport:
    """Probe the dissipative boundary condition f_i(t, x) * x_i < 0 on samples
    with |x_i| >= C dominating its cyclic neighbours.

    When initial states ``x0s`` are given, each is integrated over ``span``
    (default 10 periods) and the report records the first grid time the
    trajectory enters the absorbing box {|x_i| <= C for all i} and whether it
    stays there until the end of the run.
    """
    if not C > 0:
        raise DomainError("C must be positive")
    grid = grid or SamplingGrid(nt=8, nx=32)
    violations = []
    checked = 0
    for i, t, x in _boundary_samples(m, C, grid):
        checked += 1
        v = m.f(t, x)[i]
        if v * x[i] >= 0:
            violations.append((i + 1, t, x.copy(), v))
    entries = []
    if x0s is not None:
        span = 10.0 * m.period if span is None else span
        step = m.period / 500.0 if step is None else step
        for x0 in x0s:
            traj = integrate(m, x0, 0.0, span, step=step)
            inside = (np.abs(traj.states) <= C).all(axis=1)
            hits = np.flatnonzero(inside)
            outs = np.flatnonzero(~inside)
            if hits.size == 0:
                entry, retained = None, False
            elif outs.size == 0 or outs[-1] < len(inside) - 1:
                # permanently inside from the grid point after the last exit
                start = 0 if outs.size == 0 else int(outs[-1]) + 1
                entry, retained = float(traj.times[start]), True
            else:
                entry, retained = float(traj.times[hits[0]]), False
            entries.append((np.asarray(x0, dtype=float), entry, retained))
    return DissipativityReport(C=C, samples_checked=checked,
                               violations=violations, entry_times=entries)


def find_absorbing_bound(m: ModelSpec, grid: SamplingGrid | None = None,
                         lo: float = 1e-3, hi: float = 1e3,
                         iterations: int = 40) -> float:
    """Bisect for an approximate minimal C at which the sampled boundary
    condition holds; assumes the condition is monotone in C (violations only
    below the returned bound).  Raises DomainError when even ``hi`` fails."""
    grid = grid or SamplingGrid(nt=8, nx=32)

    def ok(C: float) -> bool:
        return check_dissipative_H(m, C, grid).ok

    if not ok(hi):
        raise DomainError(f"no absorbing bound found up to C = {hi}")
    if ok(lo):
        return lo
    good, bad = hi, lo
    for _ in range(iterations):
        mid = 0.5 * (good + bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good
