import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gqtoda import evaluable as ev
from gqtoda.errors import DomainError, PoleError

EPS = 0.2


def sample_expr():
    """exp(x t) / (2 + y^2) + log(3 + sin-free polynomial) shifted once."""
    core = ev.add(ev.div(ev.exp(ev.mul(ev.X, ev.T)), ev.add(2.0, ev.power(ev.Y, 2))), ev.log(ev.add(3.0, ev.power(ev.T, 2))))
    return ev.add(core, ev.mul(0.5, ev.shift(core, 1, EPS)))


def mp_sample(x, t):
    def core(xx, tt):
        y = -1 / xx
        return mpmath.exp(xx * tt) / (2 + y**2) + mpmath.log(3 + tt**2)

    xs = x / (1 - EPS * x)
    return core(x, t) + core(xs, t) / 2


def test_constants_fold():
    assert isinstance(ev.add(1, 2), ev.Const) and ev.add(1, 2).value == 3.0
    assert ev.mul(0.0, ev.X) is ev.ZERO
    assert ev.power(ev.X, 0) is ev.ONE
    assert ev.exp(0.0).value == 1.0
    with pytest.raises(DomainError):
        ev.log(-1.0)
    with pytest.raises(DomainError):
        ev.div(ev.X, 0.0)


def test_like_terms_cancel():
    a = ev.mul(ev.field("u", ev.X), ev.shift(ev.exp(ev.X), 1, EPS))
    b = ev.mul(ev.shift(ev.exp(ev.X), 1, EPS), ev.field("u", ev.X))
    # separately built copies do not merge (Field identity); the same node does
    assert isinstance(ev.add(a, ev.mul(-1.0, a)), ev.Const)
    assert ev.add(a, ev.mul(-1.0, a)).value == 0.0
    assert ev.add(a, b)(0.3) == pytest.approx(2 * a(0.3))


def test_nested_shift_collapses():
    f = ev.exp(ev.X)
    s = ev.shift(ev.shift(f, 2, EPS), -2, EPS)
    assert s is f
    assert ev.shift(ev.T, 3, EPS) is ev.T


def test_value_against_mpmath():
    mpmath.mp.dps = 30
    e = sample_expr()
    for x, t in [(-0.7, 0.3), (0.9, -1.2), (2.5, 0.0)]:
        assert e(x, t) == pytest.approx(float(mp_sample(mpmath.mpf(x), mpmath.mpf(t))), rel=1e-14)


def test_time_derivatives_against_mpmath():
    mpmath.mp.dps = 30
    e = sample_expr()
    for x, t in [(-0.7, 0.3), (0.9, -1.2)]:
        xm, tm = mpmath.mpf(x), mpmath.mpf(t)
        d1 = mpmath.diff(lambda s: mp_sample(xm, s), tm)
        d2 = mpmath.diff(lambda s: mp_sample(xm, s), tm, 2)
        assert e.dt()(x, t) == pytest.approx(float(d1), rel=1e-13)
        assert e.dt2()(x, t) == pytest.approx(float(d2), rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(k=st.integers(-3, 3), y=st.floats(-3, 3).filter(lambda v: abs(v) > 0.05))
def test_shift_matches_translation(k, y):
    g = ev.exp(ev.mul(-1.0, ev.power(ev.Y, 2)))
    if abs(y + k * EPS) < 1e-9:
        return
    assert ev.shift(g, k, EPS)(-1.0 / y) == pytest.approx(math.exp(-((y + k * EPS) ** 2)), rel=1e-12, abs=1e-300)


def test_broadcasting_shapes():
    e = ev.mul(ev.X, ev.T)
    out = e(np.array([1.0, 2.0])[None, :], np.array([0.0, 1.0, 2.0])[:, None])
    assert out.shape == (3, 2)
    assert ev.ONE(np.zeros(4)).shape == (4,)
    assert isinstance(e(1.0, 2.0), float)


def test_pole_guard():
    with pytest.raises(PoleError):
        ev.shift(ev.X, 1, 0.5)(2.0)


def test_domain_guards():
    with pytest.raises(DomainError):
        ev.log(ev.X)(-1.0)
    with pytest.raises(DomainError):
        ev.positive(ev.X, "f")(np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        ev.div(1.0, ev.X)(0.0)


def test_printing():
    u = ev.field("u", ev.X)
    assert str(ev.shift(u, 1, EPS)) == "u(x/(1-eps*x))"
    assert str(ev.shift(u, -2, EPS)) == "u(x/(1+2*eps*x))"
    assert str(ev.add(ev.shift(u, 1, EPS), ev.mul(-1.0, u))) == "u(x/(1-eps*x)) - u(x)"


def test_field_derivative_named():
    u = ev.field("u", ev.mul(ev.X, ev.T))
    assert str(u.dt()) == "u_t(x)"
    assert u.dt()(3.0, 1.0) == 3.0


def test_as_expr_rejects():
    with pytest.raises(TypeError):
        ev.as_expr("x")
    with pytest.raises(ValueError):
        ev.Var("z")
