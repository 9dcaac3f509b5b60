import math

import numpy as np
import pytest
import scipy.optimize

from cyclofeed.errors import DomainError, HypothesisGateError
from cyclofeed.expr import parse_expression
from cyclofeed.limits import (
    OmegaSetApprox, classify_difference_states, embed_projection,
    omega_limit_approx, points_to_csv, poincare_map, sigma_trace_pair,
    sigma_trace_to_csv, verify_conjugacy, verify_embedding_injectivity,
    verify_sigma_constancy_on_omega, verify_sigma_monotone,
)
from cyclofeed.modelspec import ModelSpec
from cyclofeed.models import (
    antithetic_controller, periodic_lotka_volterra, random_two_positive_linear,
    repressor_ring,
)
from cyclofeed.signs import canonical_delta, in_lambda, sigma_extended
from cyclofeed.structure import canonical_transform, extract_feedback_signs, mu_vector


def _model(eqs, **kw):
    kw.setdefault("cyclic", False)
    kw.setdefault("period", 1.0)
    kw.setdefault("params", {})
    return ModelSpec(n=len(eqs), rhs=tuple(map(parse_expression, eqs)), **kw)


# ---------------------------------------------------------------------------
# vectorised classification agrees with the scalar reference

def test_classification_matches_scalar_reference():
    rng = np.random.default_rng(7)
    n = 5
    delta = canonical_delta(n)
    rows = rng.choice([-1.0, 0.0, 1.0], size=(300, n)) * rng.uniform(0.5, 2.0, (300, n))
    rows = rows[np.abs(rows).max(axis=1) > 0]
    valid, sig = classify_difference_states(rows, delta)
    for row, ok, value in zip(rows, valid, sig):
        assert ok == in_lambda(row, delta)
        if ok:
            assert value == sigma_extended(row, delta)
        else:
            assert value == -1


def test_classification_scale_invariance_far_below_one():
    # rows scaled down to 1e-60 classify identically to their unit versions
    rng = np.random.default_rng(8)
    rows = rng.choice([-1.0, 1.0], size=(50, 4)) * rng.uniform(0.2, 3.0, (50, 4))
    v1, s1 = classify_difference_states(rows)
    v2, s2 = classify_difference_states(rows * 1e-60)
    assert np.array_equal(v1, v2) and np.array_equal(s1, s2)


def test_zero_rows_are_off_lambda():
    rows = np.zeros((3, 4))
    rows[1] = [1.0, 1.0, 1.0, 1.0]
    valid, sig = classify_difference_states(rows)
    assert valid.tolist() == [False, True, False]
    assert sig[1] == 1


# ---------------------------------------------------------------------------
# Poincare map

def test_poincare_identity_flow():
    m = _model(("0", "0", "0"))
    x = np.array([0.3, -0.7, 2.0])
    assert np.array_equal(poincare_map(m, x), x)


def test_poincare_scalar_decay():
    m = _model(("-x1", "-x2", "-x3"))
    x = np.array([1.0, 2.0, -1.0])
    px = poincare_map(m, x, step=1e-3)
    assert np.allclose(px, math.exp(-1) * x, atol=1e-8)


def test_poincare_is_definitional_endpoint():
    from cyclofeed.ode import integrate
    m = periodic_lotka_volterra()
    x = np.array([0.5, 1.5, 2.0, 0.8])
    traj = integrate(m, x, 0.0, m.period, step=m.period / 500)
    assert np.array_equal(poincare_map(m, x), traj.states[-1])


# ---------------------------------------------------------------------------
# omega-limit approximation

def _forced_decay_model():
    # componentwise linear decay forced by shifted sinusoids: the period map
    # is an affine contraction with a unique fixed point
    eqs = tuple(
        f"-x{i} + 0.5*sin(6.283185307179586*t + {0.7 * (i - 1)!r})" for i in (1, 2, 3)
    )
    return _model(eqs)


def test_omega_single_fixed_point_matches_root_finding():
    m = _forced_decay_model()
    omega = omega_limit_approx(m, [2.0, -1.0, 0.5], burn_in=60, window=20, eps=1e-6,
                               step=1e-3)
    assert len(omega) == 1 and omega.converged
    # independent oracle: solve P(x) - x = 0 directly
    root = scipy.optimize.root(lambda x: poincare_map(m, x, step=1e-3) - x,
                               np.zeros(3), tol=1e-12)
    assert root.success
    assert np.linalg.norm(omega.points[0] - root.x) < 1e-6


def test_omega_global_sink():
    m = _model(("-x1", "-x2", "-x3"))
    omega = omega_limit_approx(m, [1.0, 2.0, 3.0], burn_in=40, window=10, eps=1e-6)
    assert len(omega) == 1
    assert np.linalg.norm(omega.points[0]) < 1e-6


def test_omega_rotation_fills_circle():
    # planar rigid rotation by 1 radian per period plus a decaying third axis
    m = _model(("-x2", "x1", "-x3"))
    gaps = []
    for window in (40, 160):
        omega = omega_limit_approx(m, [1.0, 0.0, 0.3], burn_in=20, window=window,
                                   eps=1e-3, step=1e-3)
        angles = np.sort(np.arctan2(omega.points[:, 1], omega.points[:, 0]))
        wrapped = np.diff(np.concatenate([angles, angles[:1] + 2 * np.pi]))
        gaps.append(wrapped.max())
        assert np.allclose(np.linalg.norm(omega.points[:, :2], axis=1), 1.0, atol=1e-6)
    assert gaps[1] < gaps[0] / 2


def test_omega_net_spacing_and_provenance():
    m = _model(("-x2", "x1", "-x3"))
    omega = omega_limit_approx(m, [1.0, 0.0, 0.1], burn_in=10, window=50, eps=0.2,
                               step=1e-2)
    P = omega.points
    d = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    d[np.diag_indices(len(P))] = np.inf
    assert d.min() >= omega.cluster_radius
    assert len(omega.iteration_index) == len(P)
    assert all(10 < k <= 60 for k in omega.iteration_index)


def test_omega_requires_sane_budget():
    m = _model(("-x1", "-x2", "-x3"))
    with pytest.raises(DomainError):
        omega_limit_approx(m, [1, 1, 1], burn_in=-1, window=10, eps=0.1)
    with pytest.raises(DomainError):
        omega_limit_approx(m, [1, 1, 1], burn_in=1, window=0, eps=0.1)


def test_omega_net_stable_under_window_doubling():
    m = repressor_ring()
    sig = extract_feedback_signs(m)
    mc = canonical_transform(m, sig)
    x0 = mu_vector(sig.delta) * np.array([1.0, 2.0, 3.0])
    a = omega_limit_approx(mc, x0, burn_in=200, window=150, eps=0.25, step=1 / 200)
    b = omega_limit_approx(mc, x0, burn_in=200, window=300, eps=0.25, step=1 / 200)
    if a.converged:
        A, B = a.points, b.points
        hausdorff = max(
            np.linalg.norm(A[:, None] - B[None], axis=2).min(axis=1).max(),
            np.linalg.norm(B[:, None] - A[None], axis=2).min(axis=1).max(),
        )
        assert hausdorff <= a.cluster_radius


# ---------------------------------------------------------------------------
# sigma traces

def test_trace_rejects_identical_starts():
    m = antithetic_controller()
    with pytest.raises(DomainError, match="identical"):
        sigma_trace_pair(m, [1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], (0.0, 1.0))


def test_trace_without_crossings_is_constant():
    m = _model(("-x1", "-x2", "-x3"))
    tr = sigma_trace_pair(m, [1.0, 1.0, 1.0], [0.5, 0.3, 0.2], (0.0, 5.0), step=1e-2)
    assert not tr.drop_events and not tr.increase_events
    assert tr.constant_forward == 1
    assert tr.onset_forward == 0.0
    vals = tr.valid_values()
    assert (vals == vals[0]).all()


def test_linear_trace_monotone_and_odd():
    rng = np.random.default_rng(42)
    for seed in range(6):
        n = int(rng.integers(3, 8))
        m = random_two_positive_linear(n, periodic=bool(seed % 2), seed=seed)
        x0 = rng.uniform(-1, 1, n)
        tr = sigma_trace_pair(m, x0, np.zeros(n), (0.0, 20.0), step=0.01)
        rep = verify_sigma_monotone(tr)
        assert rep.verdict == "pass", rep.statistics
        vals = tr.valid_values()
        assert (vals % 2 == 1).all()
        assert len(tr.drop_events) <= (n - 1) // 2 + 1


def test_trace_sigma_values_non_increasing_sequence():
    m = random_two_positive_linear(5, periodic=True, seed=7)
    tr = sigma_trace_pair(m, [0.3, -1.2, 0.8, 0.5, -0.4], np.zeros(5), (0.0, 20.0),
                          step=0.01)
    vals = tr.valid_values()
    assert (np.diff(vals) <= 0).all()
    for event in tr.drop_events:
        assert event.matched and event.after < event.before
        assert event.components


def test_verify_sigma_monotone_flags_increase():
    from cyclofeed.limits import SigmaDropEvent, SigmaTrace
    times = np.linspace(0, 1, 40)
    sigma = np.ones(40, dtype=int)
    sigma[20:] = 3
    trace = SigmaTrace(times=times, sigma=sigma, in_lambda=np.ones(40, dtype=bool),
                       increase_events=[SigmaDropEvent(0.5, 1, 3, True, (1,))],
                       constant_forward=3, onset_forward=0.5)
    assert verify_sigma_monotone(trace).verdict == "fail"


def test_verify_sigma_monotone_inconclusive_on_thin_data():
    from cyclofeed.limits import SigmaTrace
    times = np.linspace(0, 1, 5)
    trace = SigmaTrace(times=times, sigma=np.ones(5, dtype=int),
                       in_lambda=np.ones(5, dtype=bool),
                       constant_forward=1, onset_forward=0.0)
    assert verify_sigma_monotone(trace).verdict == "inconclusive"


# ---------------------------------------------------------------------------
# omega-level verifications

@pytest.fixture(scope="module")
def ring_net():
    m = repressor_ring()
    sig = extract_feedback_signs(m)
    mc = canonical_transform(m, sig)
    sig_c = extract_feedback_signs(mc)
    x0 = mu_vector(sig.delta) * np.array([1.0, 2.0, 3.0])
    omega = omega_limit_approx(mc, x0, burn_in=200, window=300, eps=0.15, step=1 / 200)
    return mc, sig_c, omega


def test_ring_net_is_nontrivial(ring_net):
    _, _, omega = ring_net
    assert len(omega) > 20
    assert omega.converged


def test_sigma_constancy_on_ring(ring_net):
    mc, sig_c, omega = ring_net
    rep = verify_sigma_constancy_on_omega(mc, omega, pair_budget=25,
                                          t_span=(0.0, 5.0), step=1 / 400,
                                          signature=sig_c)
    assert rep.verdict == "pass", rep.statistics
    assert rep.statistics["pairs_checked"] == 25
    assert rep.statistics["constants"] == [1]


def test_embedding_injectivity_on_ring(ring_net):
    _, _, omega = ring_net
    rep = verify_embedding_injectivity(omega)
    assert rep.verdict == "pass"
    assert rep.statistics["m_sep"] > omega.cluster_radius / 10
    assert min(rep.statistics["consecutive_pair_margins"]) > 0


def test_conjugacy_on_ring(ring_net):
    mc, _, omega = ring_net
    rep = verify_conjugacy(omega, mc, step=1 / 200)
    assert rep.verdict == "pass"
    assert rep.statistics["max_discrepancy"] <= omega.cluster_radius


def test_hypothesis_gate_refuses_cooperative_model():
    eqs = ("x3 - x1", "x1 - x2", "x2 - x3")
    m = ModelSpec(n=3, period=1.0, rhs=tuple(map(parse_expression, eqs)), cyclic=True)
    sig = extract_feedback_signs(m)
    assert sig.Delta == 1
    omega = OmegaSetApprox(points=np.zeros((2, 3)), base_point=np.zeros(3),
                           burn_in=0, collected=2, cluster_radius=1e-3, converged=True)
    with pytest.raises(HypothesisGateError, match="negative feedback"):
        verify_sigma_constancy_on_omega(m, omega, 5, (0.0, 1.0), signature=sig)


def test_hypothesis_gate_requires_canonical_signs():
    m = repressor_ring()
    sig = extract_feedback_signs(m)  # Delta = -1 but delta = (-1,-1,-1)
    omega = OmegaSetApprox(points=np.zeros((2, 3)), base_point=np.zeros(3),
                           burn_in=0, collected=2, cluster_radius=1e-3, converged=True)
    with pytest.raises(HypothesisGateError, match="canonical"):
        verify_sigma_constancy_on_omega(m, omega, 5, (0.0, 1.0), signature=sig)


def _net(points, eps=1e-3):
    points = np.asarray(points, dtype=float)
    return OmegaSetApprox(points=points, base_point=points[0], burn_in=0,
                          collected=len(points), cluster_radius=eps, converged=True)


def test_vacuous_passes_on_single_point():
    net = _net([[0.5, 1.0, 2.0, 0.5]])
    assert verify_embedding_injectivity(net).verdict == "pass"
    m = periodic_lotka_volterra()
    rep = verify_sigma_constancy_on_omega(m, net, 10, (0.0, 1.0))
    assert rep.verdict == "pass" and rep.statistics.get("vacuous")


def test_empty_net_inconclusive():
    net = OmegaSetApprox(points=np.zeros((0, 4)), base_point=np.zeros(4), burn_in=0,
                         collected=0, cluster_radius=1e-3, converged=False)
    assert verify_sigma_constancy_on_omega(periodic_lotka_volterra(), net, 5,
                                           (0.0, 1.0)).verdict == "inconclusive"
    assert verify_embedding_injectivity(net).verdict == "inconclusive"
    assert verify_conjugacy(net, periodic_lotka_volterra()).verdict == "inconclusive"


def test_embedding_projection_and_counterexample():
    # two points differing only in x3, x4: full-space distinct, planar collision
    net = _net([[1.0, 2.0, 0.0, 0.0], [1.0, 2.0, 3.0, 1.0]])
    proj = embed_projection(net)
    assert proj.shape == (2, 2)
    assert np.array_equal(proj, [[1.0, 2.0], [1.0, 2.0]])
    rep = verify_embedding_injectivity(net)
    assert rep.verdict == "fail"
    assert rep.statistics["m_sep"] == 0.0


def test_csv_exports():
    m = _model(("-x1", "-x2", "-x3"))
    tr = sigma_trace_pair(m, [1.0, 1.0, 1.0], [0.5, 0.3, 0.2], (0.0, 1.0), step=0.1)
    text = sigma_trace_to_csv(tr)
    lines = text.strip().split("\n")
    assert lines[0] == "t,sigma"
    assert len(lines) == 1 + len(tr.times)
    net = _net([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    text = points_to_csv(net.points)
    assert text.startswith("x1,x2,x3\n")
