"""Poincare map, omega-limit approximation and runtime verification of the
sign-trace laws: monotone decay of sigma along difference trajectories,
constancy of sigma between points of an omega-limit set, and the planar
embedding of the limit set through the first two coordinates.

Conventions for sign traces.  A sampled difference z(t) is classified after
rescaling by its max-norm (sigma and Lambda membership are scale invariant,
so long exponentially decaying traces stay classifiable).  A sample is valid
only when every rescaled coordinate is either conclusively nonzero
(> 10 * tau_zero) or sits in Lambda with margin; everything near the
discontinuity set is marked off-Lambda rather than guessed.  Strict sigma
decreases must coincide with a refined zero crossing of some coordinate of z;
a decrease with no crossing is evidence of integration error, not of theory
failure, and flags the verdict inconclusive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, HypothesisGateError
from .modelspec import ModelSpec
from .ode import Trajectory, integrate, locate_zero_crossings
from .signs import TAU_ZERO, canonical_delta, is_canonical_delta

__all__ = [
    "classify_difference_states", "SigmaDropEvent", "SigmaTrace",
    "sigma_trace_pair", "VerificationReport", "verify_sigma_monotone",
    "poincare_map", "OmegaSetApprox", "omega_limit_approx",
    "verify_sigma_constancy_on_omega", "embed_projection",
    "verify_embedding_injectivity", "verify_conjugacy", "sigma_trace_to_csv",
    "points_to_csv",
]


# ---------------------------------------------------------------------------
# vectorised classification

def classify_difference_states(Z, delta=None, tau_zero: float = TAU_ZERO):
    """Classify rows of Z: Lambda membership and extended sigma, vectorised.

    Returns ``(valid, sigma)`` where ``valid`` is a boolean row mask and
    ``sigma`` holds the extended sigma value on valid rows and -1 elsewhere.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 3:
        raise DimensionError("Z must be (samples, n) with n >= 3")
    n = Z.shape[1]
    d = canonical_delta(n) if delta is None else np.asarray(delta, dtype=int)
    norms = np.max(np.abs(Z), axis=1)
    nonzero = norms > 0
    U = np.zeros_like(Z)
    U[nonzero] = Z[nonzero] / norms[nonzero, None]
    near0 = np.abs(U) <= 10.0 * tau_zero
    s = np.sign(U).astype(int)
    s[near0] = 0

    s_prev = np.roll(s, 1, axis=1)
    s_next = np.roll(s, -1, axis=1)
    u_prev = np.roll(U, 1, axis=1)
    u_next = np.roll(U, -1, axis=1)
    d_next = np.roll(d, -1)

    pair = d[None, :] * s * s_prev
    neg_pairs = (pair == -1).sum(axis=1)
    zero_cnt = near0.sum(axis=1)

    # admissibility of each near-zero coordinate: flanked by conclusive signs
    # whose delta-weighted product is strictly negative with margin
    flank_sign = (d * d_next)[None, :] * s_next * s_prev
    margin = np.abs(u_next * u_prev) > tau_zero * tau_zero
    coord_ok = (~near0) | ((flank_sign == -1) & margin)
    valid = nonzero & coord_ok.all(axis=1)

    sigma = np.where(valid, neg_pairs + zero_cnt, -1).astype(int)
    return valid, sigma


# ---------------------------------------------------------------------------
# sign traces along differences of solutions

@dataclass
class SigmaDropEvent:
    """A change of sigma between consecutive valid samples."""

    time: float          # refined crossing time when matched, else gap midpoint
    before: int
    after: int
    matched: bool        # a coordinate zero crossing was localised in the gap
    components: tuple = ()  # 1-based coordinates that crossed


@dataclass
class SigmaTrace:
    """Sampled sigma along a difference of two solutions."""

    times: np.ndarray
    sigma: np.ndarray        # -1 marks off-Lambda samples
    in_lambda: np.ndarray    # bool mask
    drop_events: list = field(default_factory=list)
    increase_events: list = field(default_factory=list)
    constant_forward: int | None = None   # trailing constant C1
    onset_forward: float | None = None    # first time from which it holds
    min_pair_margin: float = np.inf       # min over valid samples, cyclic i, of
                                          # |(u_i, u_{i+1})|_2 for u = z / |z|_inf

    def valid_values(self) -> np.ndarray:
        return self.sigma[self.in_lambda]

    def valid_times(self) -> np.ndarray:
        return self.times[self.in_lambda]


def sigma_trace_pair(m: ModelSpec, x0, y0, t_span=(0.0, None), *, step=None,
                     delta=None, tau_zero: float = TAU_ZERO,
                     refine_tol: float = 1e-6) -> SigmaTrace:
    """Trace sigma along z(t) = phi(t, x0) - phi(t, y0) on a shared fixed grid.

    Both solutions are integrated with fixed-step RK4 (default step T/2000);
    samples are classified per the module conventions, and every change of
    sigma between consecutive valid samples is refined against the zero
    crossings of the coordinates of z inside the gap.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.array_equal(x0, y0):
        raise DomainError("x0 == y0: the difference of identical solutions is identically zero")
    t0, t1 = t_span
    if t1 is None:
        t1 = t0 + 20.0 * m.period
    step = m.period / 2000.0 if step is None else step
    X = integrate(m, x0, t0, t1, step=step)
    Y = integrate(m, y0, t0, t1, step=step)
    Z = X.states - Y.states
    Zd = X.derivs - Y.derivs
    z_traj = Trajectory(X.times, Z, Zd, m.model_hash, X.step_meta)

    d = canonical_delta(m.n) if delta is None else np.asarray(delta, dtype=int)
    valid, sigma = classify_difference_states(Z, d, tau_zero)

    drops, increases = [], []
    vidx = np.flatnonzero(valid)
    for a, b in zip(vidx[:-1], vidx[1:]):
        if sigma[a] == sigma[b]:
            continue
        ta, tb = X.times[a], X.times[b]
        crossed = []
        times = []
        for c in range(1, m.n + 1):
            hits = locate_zero_crossings(z_traj, c, refine_tol, t_lo=ta, t_hi=tb)
            if hits:
                crossed.append(c)
                times.extend(hits)
        event = SigmaDropEvent(
            time=min(times) if times else 0.5 * (ta + tb),
            before=int(sigma[a]),
            after=int(sigma[b]),
            matched=bool(times),
            components=tuple(crossed),
        )
        (drops if sigma[b] < sigma[a] else increases).append(event)

    constant, onset = _trailing_constant(X.times, sigma, vidx)

    margin = np.inf
    if vidx.size:
        Uv = Z[vidx] / np.max(np.abs(Z[vidx]), axis=1)[:, None]
        pair_norm = np.hypot(Uv, np.roll(Uv, -1, axis=1))
        margin = float(pair_norm.min())

    return SigmaTrace(times=X.times, sigma=sigma, in_lambda=valid,
                      drop_events=drops, increase_events=increases,
                      constant_forward=constant, onset_forward=onset,
                      min_pair_margin=margin)


def _trailing_constant(times, sigma, vidx):
    if vidx.size == 0:
        return None, None
    last = int(sigma[vidx[-1]])
    vals = sigma[vidx]
    differs = np.flatnonzero(vals != last)
    start = 0 if differs.size == 0 else int(differs[-1]) + 1
    return last, float(times[vidx[start]])


# ---------------------------------------------------------------------------
# verification reports

@dataclass
class VerificationReport:
    """Outcome of a runtime check: verdict, counters and evidence paths."""

    verdict: str  # pass | fail | inconclusive
    statistics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_text(self, config: dict | None = None) -> str:
        lines = [f"verdict: {self.verdict}", "statistics:"]
        for key, value in self.statistics.items():
            lines.append(f"  {key}: {_fmt(value)}")
        if config:
            lines.append("config:")
            for key, value in config.items():
                lines.append(f"  {key}: {_fmt(value)}")
        if self.artifacts:
            lines.append("artifacts:")
            for path in self.artifacts:
                lines.append(f"  - {path}")
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in np.asarray(value).tolist()) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_fmt(v)}" for k, v in value.items()) + "}"
    return str(value)


def verify_sigma_monotone(trace: SigmaTrace, *, min_valid: int = 10,
                          trailing_fraction: float = 0.2) -> VerificationReport:
    """Check that a sigma trace never increases, that every strict decrease
    coincides with a refined coordinate zero crossing, and that the trailing
    ``trailing_fraction`` of the time span is constant."""
    valid_count = int(trace.in_lambda.sum())
    stats = {
        "samples": int(len(trace.times)),
        "in_lambda_samples": valid_count,
        "increases": len(trace.increase_events),
        "drops": len(trace.drop_events),
        "unmatched_drops": sum(1 for e in trace.drop_events if not e.matched),
        "eventual_constant": trace.constant_forward,
        "onset_time": trace.onset_forward,
        "min_pair_margin": trace.min_pair_margin,
    }
    if valid_count < min_valid:
        return VerificationReport("inconclusive", stats)
    if trace.increase_events:
        return VerificationReport("fail", stats)
    if stats["unmatched_drops"]:
        return VerificationReport("inconclusive", stats)
    t0, t1 = trace.times[0], trace.times[-1]
    window_start = t1 - trailing_fraction * (t1 - t0)
    in_window = trace.in_lambda & (trace.times >= window_start)
    stats["trailing_window_samples"] = int(in_window.sum())
    if not in_window.any():
        return VerificationReport("inconclusive", stats)
    window_vals = trace.sigma[in_window]
    stats["trailing_window_constant"] = bool((window_vals == window_vals[0]).all())
    if not stats["trailing_window_constant"]:
        return VerificationReport("fail", stats)
    return VerificationReport("pass", stats)


# ---------------------------------------------------------------------------
# Poincare map and omega-limit machinery

def poincare_map(m: ModelSpec, x, *, step=None, rtol=None) -> np.ndarray:
    """One application of the period map: the state advanced from phase 0 by
    one period."""
    if step is None and rtol is None:
        step = m.period / 500.0
    traj = integrate(m, x, 0.0, m.period, step=step, rtol=rtol)
    return traj.states[-1].copy()


@dataclass
class OmegaSetApprox:
    """Finite epsilon-net approximation of the omega-limit set of the period
    map, with the provenance needed to reproduce it."""

    points: np.ndarray            # (k, n), pairwise >= cluster_radius apart
    base_point: np.ndarray
    burn_in: int
    collected: int
    cluster_radius: float
    converged: bool
    iteration_index: tuple = ()   # iterate number that contributed each point

    def __len__(self) -> int:
        return len(self.points)


def omega_limit_approx(m: ModelSpec, x0, burn_in: int, window: int, eps: float,
                       *, step=None, rtol=None) -> OmegaSetApprox:
    """Iterate the period map ``burn_in + window`` times, keep the last
    ``window`` iterates, and reduce them to a greedy eps-net in iteration
    order.

    The convergence flag compares the net of the full window against the net
    of its second half: when they agree within eps the sampled net has stopped
    growing, a practical stand-in for the (uncomputable) limit-set definition.
    """
    if burn_in < 0 or window < 1:
        raise DomainError("burn_in must be >= 0 and window >= 1")
    if not eps > 0:
        raise DomainError("cluster radius eps must be positive")
    x = np.asarray(x0, dtype=float)
    iterates = []
    for _ in range(burn_in + window):
        x = poincare_map(m, x, step=step, rtol=rtol)
        iterates.append(x.copy())
    kept = iterates[burn_in:]

    net, idx = _greedy_net(kept, eps)
    half_net, _ = _greedy_net(kept[len(kept) // 2:], eps)
    converged = _nets_agree(net, half_net, eps)
    return OmegaSetApprox(points=np.array(net), base_point=np.asarray(x0, dtype=float),
                          burn_in=burn_in, collected=window, cluster_radius=eps,
                          converged=converged,
                          iteration_index=tuple(burn_in + 1 + i for i in idx))


def _greedy_net(points, eps):
    net, idx = [], []
    for i, p in enumerate(points):
        if all(np.linalg.norm(p - q) >= eps for q in net):
            net.append(p)
            idx.append(i)
    return net, idx


def _nets_agree(a, b, eps) -> bool:
    if not a or not b:
        return bool(a) == bool(b)
    A, B = np.array(a), np.array(b)
    d_ab = max(np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2).min(axis=1))
    d_ba = max(np.linalg.norm(B[:, None, :] - A[None, :, :], axis=2).min(axis=1))
    return max(d_ab, d_ba) <= eps


# ---------------------------------------------------------------------------
# theorem-level verifications on omega nets

def _gate_canonical(m: ModelSpec, signature) -> None:
    if signature is None:
        return
    if signature.Delta != -1:
        raise HypothesisGateError(
            "the loop sign Delta is +1 (cooperative/positive feedback); "
            "sigma-constancy and embedding checks require negative feedback"
        )
    if not is_canonical_delta(signature.delta):
        raise HypothesisGateError(
            "feedback signs are not in canonical form; apply canonical_transform first"
        )


def verify_sigma_constancy_on_omega(m: ModelSpec, omega: OmegaSetApprox,
                                    pair_budget: int, t_span=None, *, step=None,
                                    signature=None, tau_zero: float = TAU_ZERO,
                                    transient_periods: float = 1.0) -> VerificationReport:
    """For sampled pairs of net points, require every sigma trace to be
    constant: no drops, no increases, and no off-Lambda samples after the
    transient window.

    Pairs are taken in lexicographic index order up to ``pair_budget``.  The
    per-pair constants are collected as a statistic; equality across pairs is
    reported, never asserted.  With a single net point the claim is vacuous
    and the verdict is pass; with an empty net it is inconclusive.
    """
    _gate_canonical(m, signature)
    if t_span is None:
        t_span = (0.0, 5.0 * m.period)
    k = len(omega)
    stats = {"net_points": k, "pairs_checked": 0}
    if k == 0:
        return VerificationReport("inconclusive", stats)
    if k == 1:
        stats["vacuous"] = True
        return VerificationReport("pass", stats)

    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)][:pair_budget]
    t_cut = t_span[0] + transient_periods * m.period
    constants = []
    bad_pairs = 0
    off_lambda_late = 0
    drops = increases = 0
    inconclusive = False
    for i, j in pairs:
        trace = sigma_trace_pair(m, omega.points[i], omega.points[j], t_span,
                                 step=step, tau_zero=tau_zero)
        late = trace.times >= t_cut
        late_off = int((late & ~trace.in_lambda).sum())
        off_lambda_late += late_off
        drops += len(trace.drop_events)
        increases += len(trace.increase_events)
        vals = trace.sigma[late & trace.in_lambda]
        if vals.size == 0:
            inconclusive = True
            continue
        constants.append(int(vals[0]))
        if trace.drop_events or trace.increase_events or late_off or \
                not (vals == vals[0]).all():
            bad_pairs += 1
    stats.update({
        "pairs_checked": len(pairs),
        "pairs_violating": bad_pairs,
        "drop_events": drops,
        "increase_events": increases,
        "off_lambda_after_transient": off_lambda_late,
        "constants": sorted(set(constants)),
        "cross_pair_constant_agreement": len(set(constants)) <= 1,
    })
    if bad_pairs:
        return VerificationReport("fail", stats)
    if inconclusive:
        return VerificationReport("inconclusive", stats)
    return VerificationReport("pass", stats)


def embed_projection(omega: OmegaSetApprox) -> np.ndarray:
    """The planar image of the net under (x_1, ..., x_n) -> (x_1, x_2),
    order-preserving with ``omega.points``."""
    return np.asarray(omega.points, dtype=float).reshape(len(omega), -1)[:, :2].copy()


def verify_embedding_injectivity(omega: OmegaSetApprox, *,
                                 margin_factor: float = 0.1) -> VerificationReport:
    """Check that projecting the net to its first two coordinates keeps
    distinct points separated.

    Passes iff the minimal planar separation exceeds ``margin_factor`` times
    the cluster radius and no cyclically consecutive coordinate pair of any
    difference vanishes.  Single-point nets pass vacuously; empty nets are
    inconclusive.
    """
    k = len(omega)
    stats = {"net_points": k}
    if k == 0:
        return VerificationReport("inconclusive", stats)
    if k == 1:
        stats["vacuous"] = True
        return VerificationReport("pass", stats)
    P = np.asarray(omega.points, dtype=float)
    n = P.shape[1]
    diffs = P[:, None, :] - P[None, :, :]
    iu = np.triu_indices(k, 1)
    pair_diffs = diffs[iu]  # (k*(k-1)/2, n)
    full_d = np.linalg.norm(pair_diffs, axis=1)
    planar_d = np.linalg.norm(pair_diffs[:, :2], axis=1)
    m_sep = float(planar_d.min())
    full_min = float(full_d.min())
    consec = [
        float(np.hypot(pair_diffs[:, i], pair_diffs[:, (i + 1) % n]).min())
        for i in range(n)
    ]
    stats.update({
        "m_sep": m_sep,
        "min_full_distance": full_min,
        "bilipschitz_ratio": m_sep / full_min if full_min > 0 else float("nan"),
        "threshold": margin_factor * omega.cluster_radius,
        "consecutive_pair_margins": consec,
    })
    ok = m_sep > margin_factor * omega.cluster_radius and min(consec) > 0.0
    return VerificationReport("pass" if ok else "fail", stats)


def verify_conjugacy(omega: OmegaSetApprox, m: ModelSpec, *, step=None,
                     rtol=None) -> VerificationReport:
    """Check that the period map restricted to the net is consistent with its
    planar image: whenever P(x) lands within the cluster radius of a stored
    point x', the planar images match at least as closely.

    Projection can only contract Euclidean distances, so every matched
    discrepancy is bounded by the full-space mismatch; the report carries the
    maximum discrepancy and the match fraction.  Unmatched points (the net is
    not P-closed at this resolution) make the verdict inconclusive.
    """
    k = len(omega)
    stats = {"net_points": k}
    if k == 0:
        return VerificationReport("inconclusive", stats)
    P = np.asarray(omega.points, dtype=float)
    matched = 0
    max_disc = 0.0
    violations = 0
    for x in P:
        px = poincare_map(m, x, step=step, rtol=rtol)
        dists = np.linalg.norm(P - px, axis=1)
        j = int(np.argmin(dists))
        if dists[j] > omega.cluster_radius:
            continue
        matched += 1
        disc = float(np.linalg.norm(px[:2] - P[j, :2]))
        max_disc = max(max_disc, disc)
        if disc > dists[j] + 1e-12:
            violations += 1
    stats.update({
        "matched": matched,
        "unmatched": k - matched,
        "max_discrepancy": max_disc,
        "violations": violations,
    })
    if violations:
        return VerificationReport("fail", stats)
    if matched < k:
        return VerificationReport("inconclusive", stats)
    return VerificationReport("pass", stats)


# ---------------------------------------------------------------------------
# evidence export

def sigma_trace_to_csv(trace: SigmaTrace) -> str:
    """CSV text ``t,sigma`` (sigma = -1 on off-Lambda samples)."""
    lines = ["t,sigma"]
    for t, v in zip(trace.times, trace.sigma):
        lines.append(f"{t:.17g},{int(v)}")
    return "\n".join(lines) + "\n"


def points_to_csv(points, header_prefix: str = "x") -> str:
    """CSV text for a point cloud, one row per point."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        points = points.reshape(len(points), -1)
    header = ",".join(f"{header_prefix}{i}" for i in range(1, points.shape[1] + 1))
    lines = [header]
    for row in points:
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"
