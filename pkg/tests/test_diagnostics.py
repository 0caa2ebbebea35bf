import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from nonlocal_analytic import diagnostics as dg
from nonlocal_analytic.spectral_core import Field, GridSpec


def bump_field(N=4096, L=2.0):
    g = GridSpec(1, L, N)
    x = g.x1d
    v = np.zeros_like(x)
    inside = np.abs(x) < 1
    v[inside] = np.exp(-1 / (1 - x[inside] ** 2))
    return Field(g, v)


def bump_derivatives(x, order):
    """Derivatives of exp(g), g = -1/(1-x^2), by the recursion f' = g' f."""
    g = [None] + [
        -0.5 * math.factorial(m) * (1 / (1 - x) ** (m + 1) + (-1) ** m / (1 + x) ** (m + 1))
        for m in range(1, order + 1)
    ]
    f = [np.exp(-1 / (1 - x**2))]
    for k in range(order):
        f.append(sum(special.comb(k, i) * g[i + 1] * f[k - i] for i in range(k + 1)))
    return f


@pytest.fixture(scope="module")
def gaussian():
    return Field.from_function(GridSpec(1, 8.0, 512), lambda x: np.exp(-(x**2)))


# ---------------------------------------------------------------------------
# scaled norms

def test_plane_wave_closed_form():
    # ball edges sit on grid nodes, so the measure of |phi| = 1 is exact
    g = GridSpec(1, math.pi, 64)
    k0, R = 8, math.pi / 2
    phi = Field.from_function(g, lambda x: np.exp(1j * k0 * x))
    rep = dg.derivative_growth_report(phi, 0.0, R, 10)
    assert rep.truncated_at is None
    assert rep.q0 == pytest.approx(math.sqrt(R), rel=1e-12)
    for o in rep.orders:
        expected = (o.eps * k0) ** o.j * math.sqrt(R)
        assert o.q_exact == pytest.approx(expected, rel=1e-6)
    assert rep.B == pytest.approx(R * k0 / 2, rel=1e-6)
    assert rep.verdict == dg.CONSISTENT


def test_bump_against_closed_form_derivatives():
    phi = bump_field()
    x0, R = 0.75, 0.5
    rep = dg.derivative_growth_report(phi, x0, R, 8)
    x = phi.grid.x1d
    sel = (np.abs(x - x0) <= R / 2 + 1e-12) & (np.abs(x) < 1)
    xs = x[sel]
    exact = bump_derivatives(xs, 8)
    for o in rep.orders:
        ref = math.sqrt(np.trapezoid(exact[o.j] ** 2, xs))
        assert o.q_exact / o.eps**o.j == pytest.approx(ref, rel=1e-5)


def test_gaussian_consistent_and_stable(gaussian):
    a = dg.derivative_growth_report(gaussian, 0.0, 0.5, 8)
    b = dg.derivative_growth_report(gaussian, 0.0, 0.5, 10)
    assert a.verdict == b.verdict == dg.CONSISTENT
    assert abs(b.B / a.B - 1) <= 0.2


def test_bump_growth_detected():
    rep = dg.derivative_growth_report(bump_field(), 0.75, 0.5, 10)
    assert rep.verdict == dg.GROWTH


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.01, 100.0), sign=st.sampled_from([1.0, -1.0]))
def test_scalar_covariance(gaussian, c, sign):
    base = dg.derivative_growth_report(gaussian, 0.0, 0.5, 8)
    rep = dg.derivative_growth_report(Field(gaussian.grid, sign * c * gaussian.values), 0.0, 0.5, 8)
    assert rep.C == pytest.approx(c * base.C, rel=1e-9)
    assert rep.B == pytest.approx(base.B, rel=1e-9)


def test_translation_covariance():
    g = GridSpec(1, 8.0, 512)
    shift = 37 * g.h
    a = Field.from_function(g, lambda x: np.exp(-(x**2)))
    b = Field(g, np.roll(a.values, 37))
    ra = dg.derivative_growth_report(a, 0.0, 0.5, 8)
    rb = dg.derivative_growth_report(b, shift, 0.5, 8)
    for oa, ob in zip(ra.orders, rb.orders):
        assert ob.q == pytest.approx(oa.q, rel=1e-12, abs=1e-300)
    assert rb.B == pytest.approx(ra.B, rel=1e-12)


def test_report_deterministic(gaussian):
    a = json.dumps(dg.derivative_growth_report(gaussian, 0.0, 0.5, 8).as_dict(), sort_keys=True)
    b = json.dumps(dg.derivative_growth_report(gaussian, 0.0, 0.5, 8).as_dict(), sort_keys=True)
    assert a == b
    assert dg.LIMITATION in a


def test_j_max_validation(gaussian):
    with pytest.raises(ValueError):
        dg.derivative_growth_report(gaussian, 0.0, 0.5, 0)
    with pytest.raises(ValueError):
        dg.derivative_growth_report(gaussian, 0.0, 0.5, 15)


def test_noisy_field_truncates_orders():
    rng = np.random.default_rng(0)
    g = GridSpec(1, 8.0, 512)
    phi = Field(g, np.exp(-g.x1d**2) + 1e-3 * rng.standard_normal(512))
    rep = dg.derivative_growth_report(phi, 0.0, 0.5, 10)
    assert rep.truncated_at is not None and rep.truncated_at < 10


# ---------------------------------------------------------------------------
# envelope fit

@settings(max_examples=50, deadline=None)
@given(q0=st.floats(1e-3, 1e3), q=st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=10))
def test_fit_envelope_properties(q0, q):
    C, B, active = dg.fit_envelope(q0, q)
    assert C == q0 and B >= 1
    for k, qk in enumerate(q, start=1):
        assert qk <= C * B**k * (1 + 1e-12)
    if active:
        assert C * B**active == pytest.approx(q[active - 1], rel=1e-9)
    # dropping the top order never raises B
    _, B_less, _ = dg.fit_envelope(q0, q[:-1])
    assert B_less <= B


def test_fit_envelope_rejects_zero():
    with pytest.raises(dg.DiagnosticError):
        dg.fit_envelope(0.0, [1.0])


# ---------------------------------------------------------------------------
# Fourier decay

def test_decay_rate_of_exponential_spectrum():
    g = GridSpec(1, 64.0, 4096)
    spec = np.exp(-g.kabs)
    fit = dg.fourier_decay_radius(Field.from_spectrum(g, spec.astype(complex)))
    assert fit.rate == pytest.approx(1.0, abs=1e-3)
    assert fit.r_squared > 0.999
    assert not fit.convex


def test_gaussian_spectrum_is_convex(gaussian):
    assert dg.fourier_decay_radius(gaussian).convex


def test_white_noise_has_no_band():
    rng = np.random.default_rng(1)
    g = GridSpec(1, 8.0, 256)
    with pytest.raises(dg.DiagnosticError):
        dg.fourier_decay_radius(Field(g, rng.standard_normal(256)))
    with pytest.raises(dg.DiagnosticError):
        dg.fourier_decay_radius(Field(g, np.zeros(256)))
