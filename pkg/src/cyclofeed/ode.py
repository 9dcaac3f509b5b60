"""Numerical integration, difference-of-solutions matrices and zero-crossing
localisation.

Two stepping modes are provided:

* fixed-step classical 4th-order Runge-Kutta (the default for sign-trace
  work, where a dense predictable sampling grid matters more than adaptivity),
* an adaptive embedded Dormand-Prince 5(4) pair with a PI step-size
  controller, for probing runs where accuracy per function evaluation wins.

Trajectories carry the state derivative at every grid point, which makes
cubic Hermite interpolation between nodes exact at the nodes and 4th-order
accurate in between; all dense evaluation and event refinement run on that
interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

import numpy as np

from .errors import DimensionError, DomainError, IntegrationError, StepUnderflowError
from .modelspec import ModelSpec

__all__ = [
    "Trajectory", "integrate", "difference_matrix", "locate_zero_crossings",
    "trajectory_to_csv",
]

#: Integration aborts once the max-norm of the state exceeds this bound.
BLOWUP_LIMIT = 1e12

#: Default Gauss-Legendre node count for the segment-averaged Jacobian.
DEFAULT_QUAD_NODES = 8


@dataclass
class Trajectory:
    """Solution samples on a monotone time grid with dense cubic-Hermite output.

    ``times`` runs in integration order: strictly increasing for forward
    runs, strictly decreasing for backward runs; ``times[0]`` is the initial
    time and ``states[0]`` the initial condition.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    model_hash: str
    step_meta: dict

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.derivs = np.asarray(self.derivs, dtype=float)
        d = np.diff(self.times)
        if not ((d > 0).all() or (d < 0).all()):
            raise DomainError("trajectory time grid must be strictly monotone")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def forward(self) -> bool:
        return self.times[-1] > self.times[0]

    def _bracket(self, t: float) -> int:
        times = self.times if self.forward else self.times[::-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 2)
        return k if self.forward else len(times) - 2 - k

    def at(self, t: float) -> np.ndarray:
        """Dense state at time t via cubic Hermite on the bracketing interval."""
        lo, hi = sorted((self.times[0], self.times[-1]))
        if not (lo <= t <= hi):
            raise DomainError(f"t = {t} outside trajectory range [{lo}, {hi}]")
        k = self._bracket(t)
        return _hermite(
            self.times[k], self.times[k + 1],
            self.states[k], self.states[k + 1],
            self.derivs[k], self.derivs[k + 1], t,
        )

    def sample(self, ts) -> np.ndarray:
        return np.array([self.at(t) for t in np.asarray(ts, dtype=float)])


def _hermite(t0, t1, x0, x1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * x0 + (h10 * h) * f0 + h01 * x1 + (h11 * h) * f1


def _check_initial(m: ModelSpec, x0) -> list[float]:
    x0 = [float(v) for v in x0]
    if len(x0) != m.n:
        raise DimensionError(f"initial state has length {len(x0)}, model dimension is {m.n}")
    if not all(isfinite(v) for v in x0):
        raise DomainError("initial state must be finite")
    return x0


def _call_rhs(f, t, x):
    try:
        return f(t, x)
    except ArithmeticError as e:
        raise IntegrationError(f"right-hand side failed: {e}", time=t) from None


def _blown(x) -> bool:
    # NaN fails both comparisons, so this also catches non-finite states.
    return not all(-BLOWUP_LIMIT <= v <= BLOWUP_LIMIT for v in x)


def integrate(m: ModelSpec, x0, t0: float, t1: float, *, step=None, rtol=None,
              atol=None, first_step=None, max_steps=10_000_000) -> Trajectory:
    """Integrate the model from (t0, x0) to t1.

    Exactly one stepping mode must be selected: ``step`` for fixed-step RK4,
    or ``rtol`` (with optional ``atol``, default rtol * 1e-2) for the
    adaptive 5(4) pair.  Backward integration (t1 < t0) is allowed.  A
    non-finite state or max-norm beyond 1e12 aborts with IntegrationError
    carrying the blow-up time.
    """
    if t1 == t0:
        raise DomainError("integration span is empty (t1 == t0)")
    x0 = _check_initial(m, x0)
    if (step is None) == (rtol is None):
        raise DomainError("select exactly one of step= (fixed RK4) or rtol= (adaptive)")
    if step is not None:
        return _rk4_fixed(m, x0, float(t0), float(t1), float(step), max_steps)
    atol = rtol * 1e-2 if atol is None else atol
    return _rkdp_adaptive(m, x0, float(t0), float(t1), float(rtol), float(atol),
                          first_step, max_steps)


def _rk4_fixed(m, x0, t0, t1, step, max_steps):
    if not step > 0:
        raise DomainError("step must be positive")
    span = t1 - t0
    nsteps = max(1, int(np.ceil(abs(span) / step - 1e-12)))
    if nsteps > max_steps:
        raise IntegrationError(f"fixed grid needs {nsteps} steps, over the {max_steps} cap")
    h = span / nsteps
    f = m._rhs_fn
    n = m.n
    rng_n = range(n)
    x = list(x0)
    k1 = _call_rhs(f, t0, x)
    times = [t0]
    states = [tuple(x)]
    derivs = [k1]
    sixth = h / 6.0
    half = h / 2.0
    for k in range(nsteps):
        t = t0 + k * h
        x2 = [x[i] + half * k1[i] for i in rng_n]
        k2 = _call_rhs(f, t + half, x2)
        x3 = [x[i] + half * k2[i] for i in rng_n]
        k3 = _call_rhs(f, t + half, x3)
        x4 = [x[i] + h * k3[i] for i in rng_n]
        k4 = _call_rhs(f, t + h, x4)
        x = [x[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in rng_n]
        if _blown(x):
            raise IntegrationError("solution blew up", time=t + h)
        tn = t1 if k == nsteps - 1 else t0 + (k + 1) * h
        k1 = _call_rhs(f, tn, x)
        times.append(tn)
        states.append(tuple(x))
        derivs.append(k1)
    return Trajectory(np.array(times), np.array(states), np.array(derivs),
                      m.model_hash, {"method": "rk4", "step": abs(h)})


# Dormand-Prince 5(4) tableau (FSAL).
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# 5th-order weights equal the last A row (FSAL); error weights are b5 - b4.
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _rkdp_adaptive(m, x0, t0, t1, rtol, atol, first_step, max_steps):
    f = m._rhs_fn
    n = m.n
    rng_n = range(n)
    span = t1 - t0
    direction = 1.0 if span > 0 else -1.0
    h = direction * (abs(span) / 100.0 if first_step is None else abs(first_step))
    hmin = 1e-14 * max(abs(t0), abs(t1), abs(span))
    t = t0
    x = list(x0)
    k1 = _call_rhs(f, t, x)
    times = [t0]
    states = [tuple(x)]
    derivs = [k1]
    err_prev = 1.0
    steps = 0
    while (t1 - t) * direction > 0:
        if abs(h) < hmin:
            raise StepUnderflowError("adaptive step size underflow", time=t)
        if (t + h - t1) * direction > 0:
            h = t1 - t
        ks = [k1]
        for stage in range(1, 7):
            a = _DP_A[stage]
            xs = [x[i] + h * sum(a[j] * ks[j][i] for j in range(stage)) for i in rng_n]
            ks.append(_call_rhs(f, t + _DP_C[stage] * h, xs))
        xn = [x[i] + h * sum(_DP_A[6][j] * ks[j][i] for j in range(6)) for i in rng_n]
        # ks[6] is f at (t + h, xn) thanks to FSAL
        err = 0.0
        for i in rng_n:
            e = h * sum(_DP_E[j] * ks[j][i] for j in range(7))
            sc = atol + rtol * max(abs(x[i]), abs(xn[i]))
            err += (e / sc) ** 2
        err = (err / n) ** 0.5
        if err <= 1.0:
            t = t1 if (t + h == t1 or (t1 - (t + h)) * direction <= 0) else t + h
            x = xn
            if _blown(x):
                raise IntegrationError("solution blew up", time=t)
            k1 = ks[6]
            times.append(t)
            states.append(tuple(x))
            derivs.append(k1)
            # PI controller (Gustafsson): stabilises the step sequence.
            factor = 0.9 * err ** -0.14 * err_prev ** 0.08 if err > 0 else 5.0
            err_prev = max(err, 1e-10)
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
        h *= min(5.0, max(0.2, factor))
        steps += 1
        if steps > max_steps:
            raise IntegrationError(f"adaptive integration exceeded {max_steps} steps", time=t)
    return Trajectory(np.array(times), np.array(states), np.array(derivs),
                      m.model_hash, {"method": "rkdp54", "rtol": rtol, "atol": atol})


# ---------------------------------------------------------------------------
# segment-averaged Jacobian of the difference system

_LEGENDRE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _legendre_01(nodes: int):
    if nodes not in _LEGENDRE_CACHE:
        z, w = np.polynomial.legendre.leggauss(nodes)
        _LEGENDRE_CACHE[nodes] = ((z + 1.0) / 2.0, w / 2.0)
    return _LEGENDRE_CACHE[nodes]


def difference_matrix(m: ModelSpec, x_at_t, y_at_t, t: float,
                      quad_nodes: int = DEFAULT_QUAD_NODES) -> np.ndarray:
    """Segment-averaged Jacobian A~(t) with entries
    ``integral_0^1 d f_i / d x_j (t, r*x + (1-r)*y) dr``.

    The difference z of two solutions passing through x and y at time t
    satisfies z' = A~(t) z; the integral is approximated by Gauss-Legendre
    quadrature on [0, 1] (exact enough for smooth right-hand sides).
    """
    x = np.asarray(x_at_t, dtype=float)
    y = np.asarray(y_at_t, dtype=float)
    if x.shape != (m.n,) or y.shape != (m.n,):
        raise DimensionError("states must match the model dimension")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DomainError("states must be finite")
    rs, ws = _legendre_01(quad_nodes)
    out = np.zeros((m.n, m.n))
    for r, w in zip(rs, ws):
        out += w * m.jac(t, r * x + (1.0 - r) * y)
    return out


# ---------------------------------------------------------------------------
# zero-crossing localisation

def locate_zero_crossings(traj: Trajectory, component: int, refine_tol: float,
                          t_lo: float | None = None, t_hi: float | None = None) -> list[float]:
    """Times where a component changes sign, refined by bisection.

    Only genuine sign changes across a grid interval are reported; tangential
    touches (even-order contact with no sign change) are not.  An exact zero
    at a grid node is reported iff the neighbouring nonzero values differ in
    sign.  Times are returned strictly increasing, each localised to within
    ``refine_tol``.
    """
    if not 1 <= component <= traj.n:
        raise DimensionError(f"component {component} out of range 1..{traj.n}")
    c = component - 1
    times = traj.times if traj.forward else traj.times[::-1]
    values = traj.states[:, c] if traj.forward else traj.states[::-1, c]
    fvals = traj.derivs[:, c] if traj.forward else traj.derivs[::-1, c]
    if t_lo is None:
        t_lo = times[0]
    if t_hi is None:
        t_hi = times[-1]

    found = []
    signs = np.sign(values)
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        if b < t_lo or a > t_hi:
            continue
        sa, sb = signs[k], signs[k + 1]
        if sa == 0.0:
            # node exactly on zero: count it when flanked by a sign change
            prev = signs[k - 1] if k > 0 else 0.0
            if prev != 0.0 and sb != 0.0 and prev != sb:
                found.append(a)
            continue
        if sb == 0.0 or sa == sb:
            continue
        found.append(_refine_crossing(times[k], times[k + 1],
                                      values[k], values[k + 1],
                                      fvals[k], fvals[k + 1], refine_tol))
    return sorted(t for t in found if t_lo <= t <= t_hi)


def _refine_crossing(ta, tb, va, vb, fa, fb, tol):
    def value(t):
        return _hermite(ta, tb, va, vb, fa, fb, t)

    lo, hi = ta, tb
    vlo = va
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        vm = value(mid)
        if vm == 0.0:
            return mid
        if (vlo < 0) != (vm < 0):
            hi = mid
        else:
            lo, vlo = mid, vm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# export

def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV text ``t,x1,...,xn`` at full double precision."""
    header = "t," + ",".join(f"x{i}" for i in range(1, traj.n + 1))
    lines = [header]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join(f"{v:.17g}" for v in (t, *row)))
    return "\n".join(lines) + "\n"
