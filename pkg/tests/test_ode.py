import math

import numpy as np
import pytest
import scipy.linalg

from cyclofeed.errors import DomainError, IntegrationError
from cyclofeed.expr import parse_expression
from cyclofeed.modelspec import ModelSpec
from cyclofeed.models import antithetic_controller, random_two_positive_linear
from cyclofeed.ode import (
    difference_matrix, integrate, locate_zero_crossings, trajectory_to_csv,
)
from cyclofeed.structure import linear_coefficient_matrix


def _model(eqs, n=None, period=1.0, params=None, cyclic=False):
    eqs = tuple(map(parse_expression, eqs))
    return ModelSpec(n=n or len(eqs), period=period, rhs=eqs,
                     params=params or {}, cyclic=cyclic)


DECAY3 = _model(("-x1", "-x2", "-x3"))


def _linear_model(A, period=1.0):
    n = A.shape[0]
    eqs = []
    for i in range(n):
        terms = [f"({float(A[i, j])!r})*x{j + 1}" for j in range(n) if A[i, j] != 0.0]
        eqs.append(" + ".join(terms) if terms else "0")
    return _model(eqs, n=n, period=period)


def test_scalar_decay_hits_exp():
    traj = integrate(DECAY3, [1.0, 1.0, 1.0], 0.0, 1.0, step=1e-3)
    assert abs(traj.states[-1][0] - math.exp(-1)) < 1e-8


def test_linear_system_matches_expm_oracle():
    rng = np.random.default_rng(4)
    A = rng.uniform(-1, 1, (4, 4))
    A -= 1.5 * np.eye(4)
    m = _linear_model(A)
    x0 = rng.uniform(-1, 1, 4)
    traj = integrate(m, x0, 0.0, 1.0, step=1e-3)
    want = scipy.linalg.expm(A) @ x0
    assert np.linalg.norm(traj.states[-1] - want) <= 1e-6 * np.linalg.norm(want)


def test_backward_forward_round_trip():
    m = antithetic_controller()
    x0 = np.array([1.2, 0.8, 1.1, 0.9])
    fwd = integrate(m, x0, 0.0, 1.0, step=1e-3)
    back = integrate(m, fwd.states[-1], 1.0, 0.0, step=1e-3)
    assert np.linalg.norm(back.states[-1] - x0) < 1e-6


def test_rk4_order_factor():
    rng = np.random.default_rng(9)
    A = rng.uniform(-1, 1, (4, 4)) - 1.0 * np.eye(4)
    m = _linear_model(A)
    x0 = rng.uniform(-1, 1, 4)
    want = scipy.linalg.expm(A) @ x0
    errs = []
    for h in (0.05, 0.025):
        traj = integrate(m, x0, 0.0, 1.0, step=h)
        errs.append(np.linalg.norm(traj.states[-1] - want))
    factor = errs[0] / errs[1]
    assert 12.0 <= factor <= 20.0


def test_dense_output_exact_at_nodes_and_accurate_between():
    m = DECAY3
    traj = integrate(m, [1.0, 2.0, 3.0], 0.0, 1.0, step=0.05)
    for k in (0, 7, 20):
        assert np.array_equal(traj.at(traj.times[k]), traj.states[k])
    t = 0.512
    assert np.allclose(traj.at(t), np.array([1.0, 2.0, 3.0]) * math.exp(-t), atol=1e-7)


def test_periodicity_composition():
    m = random_two_positive_linear(4, periodic=True, seed=3)
    x0 = np.array([0.5, -0.2, 0.7, 0.1])
    one = integrate(m, x0, 0.0, m.period, step=m.period / 500)
    two = integrate(m, one.states[-1], m.period, 2 * m.period, step=m.period / 500)
    direct = integrate(m, x0, 0.0, 2 * m.period, step=m.period / 500)
    assert np.allclose(two.states[-1], direct.states[-1], atol=1e-10)


def test_blow_up_reports_time():
    m = _model(("x1*x1", "-x2", "-x3"))
    with pytest.raises(IntegrationError) as err:
        integrate(m, [1.0, 1.0, 1.0], 0.0, 2.0, step=1e-3)
    assert err.value.time is not None and 0.9 < err.value.time < 1.1


def test_adaptive_matches_fixed():
    m = antithetic_controller()
    x0 = [1.3, 0.7, 1.0, 1.4]
    fixed = integrate(m, x0, 0.0, 5.0, step=1e-4)
    adaptive = integrate(m, x0, 0.0, 5.0, rtol=1e-10)
    assert np.allclose(adaptive.states[-1], fixed.states[-1], atol=1e-7)
    assert adaptive.step_meta["method"] == "rkdp54"
    assert len(adaptive.times) < len(fixed.times) / 4


def test_integrate_argument_validation():
    m = DECAY3
    with pytest.raises(DomainError):
        integrate(m, [1, 1, 1], 0.0, 0.0, step=0.1)
    with pytest.raises(DomainError):
        integrate(m, [1, 1, 1], 0.0, 1.0)
    with pytest.raises(DomainError):
        integrate(m, [1, 1, 1], 0.0, 1.0, step=0.1, rtol=1e-8)


def test_difference_matrix_linear_is_exact():
    m = random_two_positive_linear(5, periodic=False, seed=1)
    A = linear_coefficient_matrix(m, 0.0)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5)
    assert np.allclose(difference_matrix(m, x, y, 0.0), A, atol=1e-12)


def test_difference_matrix_degenerate_segment_is_jacobian():
    m = antithetic_controller()
    x = np.array([1.1, 0.9, 1.2, 0.8])
    assert np.allclose(difference_matrix(m, x, x, 0.3), m.jac(0.3, x), atol=1e-12)


def test_difference_matrix_reproduces_difference_derivative():
    m = antithetic_controller()
    rng = np.random.default_rng(6)
    for _ in range(10):
        x = rng.uniform(0.3, 2.0, 4)
        y = rng.uniform(0.3, 2.0, 4)
        A = difference_matrix(m, x, y, 0.0)
        lhs = A @ (x - y)
        rhs = np.array(m.f(0.0, x)) - np.array(m.f(0.0, y))
        assert np.linalg.norm(lhs - rhs) <= 1e-5 * max(1.0, np.linalg.norm(rhs))


def test_locate_zero_crossings_cosine():
    m = _model(("-x2", "x1", "-x3"))  # (x1, x2) = (cos t, sin t)
    traj = integrate(m, [1.0, 0.0, 1.0], 0.0, 3.2, step=0.01)
    hits = locate_zero_crossings(traj, 1, refine_tol=1e-10)
    assert len(hits) == 1
    assert abs(hits[0] - math.pi / 2) < 1e-8


def test_locate_zero_crossings_constant_component_empty():
    traj = integrate(DECAY3, [1.0, 1.0, 1.0], 0.0, 2.0, step=0.01)
    assert locate_zero_crossings(traj, 1, 1e-8) == []


def test_tangential_touch_not_reported():
    # x1(t) = (t-1)^2 touches zero at t=1 without a sign change; the grid is
    # chosen so the touch falls strictly between nodes
    m = _model(("2*t - 2", "-x2", "-x3"))
    traj = integrate(m, [1.0, 1.0, 1.0], 0.0, 2.0, step=2.0 / 49.0)
    assert 1.0 not in traj.times
    assert locate_zero_crossings(traj, 1, 1e-8) == []


def test_window_restriction():
    m = _model(("-x2", "x1", "-x3"))
    traj = integrate(m, [1.0, 0.0, 1.0], 0.0, 6.0, step=0.01)
    both = locate_zero_crossings(traj, 1, 1e-9)
    assert len(both) == 2  # pi/2 and 3pi/2
    only_late = locate_zero_crossings(traj, 1, 1e-9, t_lo=2.0, t_hi=6.0)
    assert len(only_late) == 1 and abs(only_late[0] - 3 * math.pi / 2) < 1e-7


def test_trajectory_csv_format():
    traj = integrate(DECAY3, [1.0, 2.0, 3.0], 0.0, 0.1, step=0.05)
    text = trajectory_to_csv(traj)
    lines = text.strip().split("\n")
    assert lines[0] == "t,x1,x2,x3"
    assert len(lines) == 1 + len(traj.times)
    first = [float(v) for v in lines[1].split(",")]
    assert first == [0.0, 1.0, 2.0, 3.0]
    # full double precision round-trips
    last = [float(v) for v in lines[-1].split(",")]
    assert last[1:] == traj.states[-1].tolist()
