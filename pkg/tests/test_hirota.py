import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gqtoda import evaluable as ev
from gqtoda.errors import DispersionError, DomainError, ResonanceError
from gqtoda.hirota import (
    SolitonMode,
    SolitonSpec,
    bilinear_residual,
    dispersion_beta,
    field_V,
    gqte_residual,
    gqte_soliton,
    hirota_P,
    log_tau,
    one_soliton_field,
    pairwise_A,
    random_spec,
    soliton_field,
    tau_function,
    triple_A_direct,
    triple_A_product,
)
from gqtoda.qshift import ShiftParams

# mpmath (dps=40), e^eps = 1.25
BETA_1 = -1.174494705181764538038918469501102842665
BETA_2 = -1.441125  # 1.25^3 - 1.25^-3 exactly
BETA_3 = 2.004575058346730330383077497539472847641
A_12 = 1.421834282297183204746544825608926634565
A_13 = 0.6356043961932613186938859590025756272586
A_23 = 64.10097479371220216164243623001865903628
A_123 = 57.92959706776718584108938384595856714142


def grid(n=50, y=(-3.0, -0.5), t=(-2.0, 2.0)):
    ys = np.linspace(*y, n)
    ts = np.linspace(*t, n)
    X, T = np.meshgrid(-1.0 / ys, ts)
    return X, T


def test_dispersion_frozen(p125):
    assert dispersion_beta(-5, p125, -1) == pytest.approx(BETA_1, rel=1e-14)
    assert dispersion_beta(6, p125, -1) == pytest.approx(BETA_2, rel=1e-14)
    assert dispersion_beta(-7.9141, p125, 1) == pytest.approx(BETA_3, rel=1e-14)
    with pytest.raises(ValueError):
        dispersion_beta(1.0, p125, 0)


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(-10, 10), eps=st.floats(0.05, 1.0))
def test_dispersion_relation_holds(alpha, eps):
    p = ShiftParams(eps)
    b = dispersion_beta(alpha, p)
    assert b >= 0
    assert hirota_P(b, alpha, p) == pytest.approx(0.0, abs=1e-12 * (1 + b * b))
    # even symbol
    assert hirota_P(-b, -alpha, p) == hirota_P(b, alpha, p)


def test_pairwise_frozen(p125):
    spec = SolitonSpec.preset("fig3")
    pair = spec.pairwise()
    assert pair[(1, 2)] == pytest.approx(A_12, rel=1e-13)
    assert pair[(1, 3)] == pytest.approx(A_13, rel=1e-13)
    assert pair[(2, 3)] == pytest.approx(A_23, rel=1e-13)
    assert triple_A_product(spec) == pytest.approx(A_123, rel=1e-13)
    assert triple_A_direct(spec) == pytest.approx(A_123, rel=1e-12)


def test_pairwise_symmetric(p125):
    a = SolitonMode.from_dispersion(2.0, p125, 1)
    b = SolitonMode.from_dispersion(-3.0, p125, -1)
    assert pairwise_A(a, b, p125) == pytest.approx(pairwise_A(b, a, p125), rel=1e-15)


def test_resonance_detected(p125):
    a = SolitonMode.from_dispersion(2.0, p125, 1)
    with pytest.raises(ResonanceError):
        pairwise_A(a, -a, p125)


def test_spec_validation(p125):
    with pytest.raises(DispersionError):
        SolitonSpec(p125, (SolitonMode(1.0, 0.5),))
    with pytest.raises(DispersionError):
        SolitonSpec(p125, (SolitonMode(0.0, 0.0),))
    with pytest.raises(ValueError):
        SolitonSpec(p125, ())
    SolitonSpec(p125, (SolitonMode(1.0, 0.5),), validate=False)


def test_one_soliton_peak(p125):
    spec = SolitonSpec.preset("fig1")
    m = spec.modes[0]
    V = field_V(tau_function(spec))
    # theta = 0 at y = -beta t / alpha
    t = 0.7
    y = -m.beta * t / m.alpha
    assert V(-1.0 / y, t) == pytest.approx(0.344859453125, rel=1e-12)
    X, T = grid()
    np.testing.assert_allclose(V(X, T), one_soliton_field(m)(X, T), rtol=1e-11, atol=1e-15)


@pytest.mark.parametrize("name", ["fig1", "fig2", "fig3"])
def test_bilinear_annihilation_presets(name):
    spec = SolitonSpec.preset(name)
    X, T = grid()
    assert np.max(np.abs(bilinear_residual(tau_function(spec), X, T, spec.params))) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_bilinear_annihilation_random(p125, n):
    rng = np.random.default_rng(100 + n)
    X, T = grid(20)
    for _ in range(10):
        spec = random_spec(p125, n, rng)
        assert np.max(np.abs(bilinear_residual(tau_function(spec), X, T, p125))) < 1e-11


def test_bilinear_against_mpmath_oracle(p125):
    """Residual of the tau function rebuilt in mpmath with numeric t-derivatives."""
    mpmath.mp.dps = 40
    spec = SolitonSpec.preset("fig2")
    e = mpmath.log(mpmath.mpf("1.25"))
    al = [mpmath.mpf(-5), mpmath.mpf(6)]
    be = [-2 * abs(mpmath.sinh(a * e / 2)) for a in al]
    P = lambda b, a: b**2 - mpmath.exp(a * e) - mpmath.exp(-a * e) + 2
    A = -P(be[0] - be[1], al[0] - al[1]) / P(be[0] + be[1], al[0] + al[1])

    def f(x, t):
        th = [-a / x + b * t for a, b in zip(al, be)]
        return 1 + mpmath.exp(th[0]) + mpmath.exp(th[1]) + A * mpmath.exp(th[0] + th[1])

    for x0, t0 in [(0.8, 0.2), (0.5, -0.6)]:
        x, t = mpmath.mpf(x0), mpmath.mpf(t0)
        ft = mpmath.diff(lambda s: f(x, s), t)
        ftt = mpmath.diff(lambda s: f(x, s), t, 2)
        r = 2 * (ftt * f(x, t) - ft**2) - 2 * f(x / (1 - e * x), t) * f(x / (1 + e * x), t) + 2 * f(x, t) ** 2
        assert abs(r) < mpmath.mpf(10) ** -25
        raw = bilinear_residual(tau_function(spec), x0, t0, p125, raw=True)
        assert abs(raw) < 1e-13 * float(f(x, t) ** 2)


def test_broken_beta_residual_scales(p125):
    beta = dispersion_beta(-5, p125, -1)
    X, T = grid()
    out = []
    for d in (1e-3, 1e-4):
        spec = SolitonSpec(p125, (SolitonMode(-5.0, beta * (1 + d)),), validate=False)
        out.append(np.max(np.abs(bilinear_residual(tau_function(spec), X, T, p125))))
    assert out[0] > 1e-9
    assert out[0] / out[1] == pytest.approx(10.0, rel=0.05)


@pytest.mark.parametrize("name", ["fig1", "fig2", "fig3"])
def test_gqte_residual(name):
    spec = SolitonSpec.preset(name)
    X, T = grid(30, t=(-0.5, 0.5))
    assert np.max(np.abs(gqte_residual(gqte_soliton(spec), X, T, spec.params))) < 1e-11


def test_gqte_is_time_rescaled_field(p125):
    spec = SolitonSpec.preset("fig2")
    e = p125.epsilon
    x, t = 0.9, 0.3
    # eps^2 from the chain rule cancels the eps^2 prefactor
    assert gqte_soliton(spec)(x, t) == pytest.approx(field_V(tau_function(spec))(x, t / e), rel=1e-13)


def test_triple_factorises_random(p125):
    rng = np.random.default_rng(7)
    for _ in range(50):
        spec = random_spec(p125, 3, rng, positive=False)
        assert triple_A_direct(spec) == pytest.approx(triple_A_product(spec), rel=1e-9)


def test_random_spec_positive(p125):
    rng = np.random.default_rng(3)
    spec = random_spec(p125, 3, rng)
    assert all(a > 0 for a in spec.pairwise().values())
    a, b = random_spec(p125, 2, np.random.default_rng(5)), random_spec(p125, 2, np.random.default_rng(5))
    assert a == b


def test_field_V_requires_positive_tau():
    f = ev.add(-1.0, ev.exp(ev.T))
    assert field_V(f)(1.0, 1.0) == pytest.approx(-np.e / (np.e - 1) ** 2)
    with pytest.raises(DomainError):
        field_V(f)(1.0, np.array([-1.0, 1.0]))


def test_dispersion_modes_give_positive_coefficients(p125):
    rng = np.random.default_rng(11)
    for _ in range(200):
        spec = random_spec(p125, 2, rng, positive=False)
        assert spec.pairwise()[(1, 2)] > 0


@pytest.mark.parametrize("name", ["fig1", "fig2", "fig3"])
def test_soliton_field_matches_quotient_form(name):
    spec = SolitonSpec.preset(name)
    X, T = grid()
    direct = field_V(tau_function(spec))
    stable = soliton_field(spec)
    np.testing.assert_allclose(stable(X, T), direct(X, T), rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(stable.dt()(X, T), direct.dt()(X, T), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(log_tau(spec)(X, T), np.log(tau_function(spec)(X, T)), rtol=1e-13)


def test_log_tau_derivatives_against_mpmath():
    mpmath.mp.dps = 40
    spec = SolitonSpec.preset("fig3")
    K = log_tau(spec)
    f = tau_function(spec)
    x0, t0 = 0.6, 0.4
    # the tau function is a plain exponential sum, so mpmath differentiates it exactly
    m = spec.modes
    pair = spec.pairwise()

    def fm(t):
        th = [-mm.alpha / x0 + mm.beta * t + mm.eta for mm in m]
        e = [mpmath.exp(v) for v in th]
        return (
            1 + e[0] + e[1] + e[2]
            + pair[(1, 2)] * e[0] * e[1] + pair[(1, 3)] * e[0] * e[2] + pair[(2, 3)] * e[1] * e[2]
            + pair[(1, 2)] * pair[(1, 3)] * pair[(2, 3)] * e[0] * e[1] * e[2]
        )

    assert float(fm(mpmath.mpf(t0))) == pytest.approx(f(x0, t0), rel=1e-14)
    node = K
    for n in range(0, 6):
        ref = mpmath.diff(lambda s: mpmath.log(fm(s)), mpmath.mpf(t0), n)
        assert node(x0, t0) == pytest.approx(float(ref), rel=1e-11, abs=1e-13), n
        node = node.dt()


def test_soliton_field_survives_overflow(p125):
    rng = np.random.default_rng(5)
    spec = random_spec(p125, 3, rng)
    X, T = grid(30, y=(-3, 3), t=(-5, 5))
    V = gqte_soliton(spec)
    assert np.all(np.isfinite(V.dt2()(X, T)))
    assert np.max(np.abs(gqte_residual(V, X, T, p125))) < 1e-10


def test_log_tau_rejects_negative_coefficient(p125):
    a = SolitonMode(1.0, 3.0)
    b = SolitonMode(-1.0, 0.1)
    spec = SolitonSpec(p125, (a, b), validate=False)
    assert spec.pairwise()[(1, 2)] < 0
    with pytest.raises(DomainError):
        log_tau(spec)
    assert soliton_field(spec)(0.5, 0.0) == pytest.approx(field_V(tau_function(spec))(0.5, 0.0))


def test_triple_direct_near_degenerate(p125):
    spec = SolitonSpec.from_alphas(p125, [-6.655067683309714, -6.614564305972462, -7.375251596314175], [1, 1, 1])
    assert spec.pairwise()[(1, 2)] < 1e-4
    assert triple_A_direct(spec) == pytest.approx(triple_A_product(spec), rel=1e-12)
    loose = SolitonSpec(p125, spec.modes, validate=False)
    assert triple_A_direct(loose) == pytest.approx(triple_A_product(loose), rel=1e-8)


def test_trivial_residuals(p125):
    X, T = grid(10)
    assert np.all(bilinear_residual(ev.ONE, X, T, p125) == 0.0)
    assert np.all(gqte_residual(ev.ZERO, X, T, p125) == 0.0)
    assert np.all(gqte_residual(ev.Const(0.7), X, T, p125) == 0.0)
    assert np.all(field_V(ev.ONE)(X, T) == 0.0)


def test_single_exponential_residual_is_symbol(p125):
    m = SolitonMode(-5.0, -1.3, 0.2)
    th = m.theta()
    X, T = grid(10)
    # a lone exponential is annihilated whatever beta is (its bilinear symbol is P(0) = 0)
    lone = bilinear_residual(ev.exp(th), X, T, p125)
    assert np.max(np.abs(lone)) < 1e-14
    # with the constant term, the cross term carries the dispersion symbol
    raw = bilinear_residual(ev.add(1.0, ev.exp(th)), X, T, p125, raw=True)
    e = np.exp(th(X, T))
    assert np.all(np.abs(raw - 2 * e * m.P(p125)) <= 1e-13 * (1 + e) ** 2)


def test_tau_value_at_zero_phase(p125):
    spec = SolitonSpec.preset("fig1")
    m = spec.modes[0]
    t = 1.1
    assert tau_function(spec)(-1.0 / (-m.beta * t / m.alpha), t) == pytest.approx(2.0, rel=1e-14)


def test_two_soliton_degenerates(p125):
    a = SolitonMode.from_dispersion(-5.0, p125, -1)
    b = SolitonMode.from_dispersion(6.0, p125, -1, eta=-40.0)
    X, T = grid(20)
    f2 = tau_function(SolitonSpec(p125, (a, b)))(X, T)
    f1 = tau_function(SolitonSpec(p125, (a,)))(X, T)
    assert np.max(np.abs(f2 - f1)) <= 1e-12


def test_repeated_mode_triple_is_zero(p125):
    a = SolitonMode.from_dispersion(-5.0, p125, -1)
    b = SolitonMode.from_dispersion(2.0, p125, 1)
    spec = SolitonSpec(p125, (a, a, b))
    assert spec.pairwise()[(1, 2)] == 0.0
    assert triple_A_direct(spec) == pytest.approx(0.0, abs=1e-15)
    assert hirota_P(0.0, 0.0, p125) == 0.0


def test_fig2_phase_coefficient_numerator(p125):
    spec = SolitonSpec.preset("fig2")
    a, b = spec.modes
    # mpmath (dps=40): P(p1 - p2) for the fig2 parameters
    assert (a - b).P(p125) == pytest.approx(-9.656339814498622, rel=1e-13)
