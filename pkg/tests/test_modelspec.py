import numpy as np
import pytest

from cyclofeed.errors import ModelFormatError
from cyclofeed.expr import Num, parse_expression, unparse
from cyclofeed.modelspec import Box, ModelSpec, parse_model_file, serialize_model
from cyclofeed.models import antithetic_controller, periodic_lotka_volterra
from cyclofeed.ode import integrate


def _linear_3d():
    eqs = ("-x1 + x2", "x1 - 2*x2 + x3", "x2 - x3")
    return ModelSpec(n=3, period=1.0, rhs=tuple(map(parse_expression, eqs)), cyclic=True)


def test_modelspec_validation():
    with pytest.raises(ModelFormatError, match="dimension"):
        ModelSpec(n=2, period=1.0, rhs=(Num(0.0), Num(0.0)))
    with pytest.raises(ModelFormatError, match="period"):
        ModelSpec(n=3, period=0.0, rhs=(Num(0.0),) * 3)
    with pytest.raises(ModelFormatError, match="equations"):
        ModelSpec(n=3, period=1.0, rhs=(Num(0.0),) * 2)
    with pytest.raises(ModelFormatError, match="unbound"):
        ModelSpec(n=3, period=1.0, rhs=tuple(map(parse_expression, ("k*x1", "x2", "x3"))))
    with pytest.raises(ModelFormatError, match="references x4"):
        ModelSpec(n=3, period=1.0, rhs=tuple(map(parse_expression, ("x4", "x2", "x3"))))


def test_cyclic_scan():
    # x3 is not a cyclic neighbour of equation 2 in dimension 4
    eqs = ("x4 - x1", "x4*x2", "x2 - x3", "x3 - x4")
    with pytest.raises(ModelFormatError, match="cyclic"):
        ModelSpec(n=4, period=1.0, rhs=tuple(map(parse_expression, eqs)), cyclic=True)
    # fine when the flag is off
    m = ModelSpec(n=4, period=1.0, rhs=tuple(map(parse_expression, eqs)), cyclic=False)
    assert m.n == 4


def test_jacobian_cyclic_pattern_is_zero_off_band():
    m = antithetic_controller()
    jac = m.jacobian
    assert unparse(jac[1][3]) == "0"  # equation 2 does not see x4
    assert unparse(jac[0][3]) == "-(a2*x1)"
    for i in range(4):
        for j in range(4):
            if j not in {(i - 1) % 4, i, (i + 1) % 4}:
                assert jac[i][j] == Num(0.0)


def test_jacobian_of_linear_model_is_constant():
    m = _linear_3d()
    A = m.jac(0.0, np.zeros(3))
    want = np.array([[-1, 1, 0], [1, -2, 1], [0, 1, -1]], dtype=float)
    assert np.array_equal(A, want)
    assert np.array_equal(m.jac(0.7, np.array([3.0, -1.0, 2.0])), want)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(2)
    for m in (antithetic_controller(), periodic_lotka_volterra()):
        fn = m.f
        for _ in range(25):
            t = rng.uniform(0, 1)
            x = rng.uniform(0.2, 2.0, m.n)
            J = m.jac(t, x)
            for j in range(m.n):
                h = 1e-6 * max(1.0, abs(x[j]))
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                fd = (np.array(fn(t, xp)) - np.array(fn(t, xm))) / (2 * h)
                assert np.allclose(J[:, j], fd, rtol=1e-5, atol=1e-8)


def test_model_file_round_trip_trajectories():
    for m in (antithetic_controller((1, 2, 1, 1, 0.5, 1, 1.5, 1)), periodic_lotka_volterra()):
        m2 = parse_model_file(serialize_model(m))
        assert m2.model_hash == m.model_hash
        x0 = np.full(m.n, 0.8)
        a = integrate(m, x0, 0.0, 3.0, step=1e-2)
        b = integrate(m2, x0, 0.0, 3.0, step=1e-2)
        assert np.array_equal(a.states, b.states)


def test_parse_model_file_errors():
    with pytest.raises(ModelFormatError, match="JSON"):
        parse_model_file("not json")
    with pytest.raises(ModelFormatError, match="missing"):
        parse_model_file('{"n": 3}')
    with pytest.raises(ModelFormatError, match="mismatch"):
        parse_model_file('{"n": 3, "period": 1.0, "equations": ["x1", "x2"]}')
    with pytest.raises(ModelFormatError, match="cyclic"):
        parse_model_file(
            '{"n": 4, "period": 1.0, "cyclic": true,'
            ' "equations": ["x3", "x1", "x2", "x3"]}'
        )
    with pytest.raises(ModelFormatError, match="numbers"):
        parse_model_file(
            '{"n": 3, "period": 1.0, "equations": ["x1", "x2", "x3"],'
            ' "params": {"a": "one"}}'
        )


def test_box_validation_and_sampling():
    with pytest.raises(ModelFormatError):
        Box((0.0, 0.0), (1.0,))
    with pytest.raises(ModelFormatError):
        Box((1.0, 0.0), (1.0, 2.0))
    box = Box((0.0, -1.0), (1.0, 1.0))
    pts = box.sample(np.random.default_rng(0), 100)
    assert pts.shape == (100, 2)
    assert (pts >= box.lo).all() and (pts <= box.hi).all()


def test_model_hash_distinguishes_models():
    a = antithetic_controller()
    b = antithetic_controller((1, 1, 1, 1, 1, 1, 1, 2))
    assert a.model_hash != b.model_hash
    assert a.model_hash == antithetic_controller().model_hash
