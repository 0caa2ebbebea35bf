import csv
import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_analytic import bounds, kernels
from nonlocal_analytic.spectral_core import Ball, Field, GridSpec, MultiIndex, OperatorSpec


# ---------------------------------------------------------------------------
# potentials

def _mp_term(term, n):
    c = [mpmath.mpf(v) for v in (term.center or (0.0,) * n)]

    def f(*x):
        d2 = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
        if term.kind == "gaussian":
            return term.amp * mpmath.exp(-term.a * d2)
        if term.kind == "rational":
            return term.amp / (1 + d2)
        if term.kind == "coulomb":
            return term.amp / mpmath.sqrt(d2)
        if term.kind == "trig":
            kv = term.wavevector or (1.0,) * n
            return term.amp * mpmath.cos(sum(k * xi for k, xi in zip(kv, x)) + term.phase)
        return mpmath.mpf(term.amp)

    return f


@pytest.mark.parametrize("term", [
    bounds.AnalyticTerm("gaussian", 1.5, center=(0.2, -0.1), a=0.7),
    bounds.AnalyticTerm("rational", -2.0, center=(0.3, 0.0)),
    bounds.AnalyticTerm("coulomb", 1.0, center=(2.0, 1.0)),
    bounds.AnalyticTerm("trig", 0.5, wavevector=(1.3, -0.4), phase=0.2),
])
def test_catalog_derivatives_match_mpmath(term):
    mpmath.mp.dps = 30
    f = _mp_term(term, 2)
    pts = np.array([[0.1, 0.2], [-0.4, 0.35]])
    order = 5
    table = term.derivatives(pts, order)
    for p, x in enumerate(pts):
        for s1 in range(order + 1):
            for s2 in range(order + 1 - s1):
                ref = float(mpmath.diff(f, (mpmath.mpf(x[0]), mpmath.mpf(x[1])), (s1, s2)))
                assert table[p, s1, s2] == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_three_dimensional_rational_derivatives():
    mpmath.mp.dps = 30
    term = bounds.AnalyticTerm("rational", 1.0, center=(0.1, 0.0, -0.2))
    f = _mp_term(term, 3)
    x = np.array([[0.3, -0.2, 0.1]])
    table = term.derivatives(x, 4)
    for sig in [(1, 0, 0), (2, 1, 0), (1, 1, 1), (0, 0, 4), (2, 0, 2)]:
        ref = float(mpmath.diff(f, tuple(mpmath.mpf(v) for v in x[0]), sig))
        assert table[(0,) + sig] == pytest.approx(ref, rel=1e-10)


def test_admissible_t_rules():
    assert bounds.admissible_t(3, 0.5) == ("eq", 1.5)
    assert bounds.admissible_t(3, 0.75) == ("gt", 1.0)
    assert bounds.admissible_t(2, 0.5) == ("gt", 1.0)
    assert bounds.admissible_t(1, 0.5) == ("eq", 1.0)
    assert bounds.admissible_t(3, 0.9) == ("eq", 1.0)


def test_potential_validation():
    om = Ball((0.0,), 1.0)
    with pytest.raises(bounds.PotentialError):
        bounds.PotentialSpec(3, (), Ball((0.0, 0.0, 0.0), 1.0), s=0.5, t=1.0)
    # singular part must be in L^t and away from the analyticity region
    with pytest.raises(bounds.PotentialError):
        bounds.PotentialSpec(1, (), om, singular=bounds.SingularPart(1.2, 0.5, (3.0,)))
    with pytest.raises(bounds.PotentialError):
        bounds.PotentialSpec(1, (), om, singular=bounds.SingularPart(0.5, 0.5, (1.2,)))
    with pytest.raises(bounds.PotentialError):
        bounds.PotentialSpec(1, (bounds.AnalyticTerm("coulomb", center=(0.5,)),), om)
    V = bounds.PotentialSpec(1, (bounds.AnalyticTerm("constant", 1.0),), om,
                             singular=bounds.SingularPart(0.5, 0.5, (3.0,)))
    assert V.value(np.array([[3.25]]))[0] == pytest.approx(1 + 0.25**-0.5)


def test_from_string():
    V = bounds.PotentialSpec.from_string(1, "gaussian:4")
    assert V.value(np.array([[0.0], [1.0]])) == pytest.approx([4.0, 4 * math.exp(-1)])
    with pytest.raises(bounds.PotentialError):
        bounds.PotentialSpec.from_string(1, "bogus:1")


# ---------------------------------------------------------------------------
# analyticity constant

def test_analyticity_constant_of_constant():
    V = bounds.PotentialSpec.constant(2, 0.8)
    assert bounds.analyticity_constant(V, Ball((0.0, 0.0), 0.5)) == 1.0


def _inverse_linear():
    # 1/(1 - x) = |x - 1|^{-1} for x < 1
    return bounds.PotentialSpec(1, (bounds.AnalyticTerm("coulomb", 1.0, center=(1.0,)),), Ball((0.0,), 0.75))


@pytest.mark.parametrize("order", [0, 1, 3, 6, 12])
def test_analyticity_constant_inverse_linear(order):
    A = bounds.analyticity_constant(_inverse_linear(), Ball((0.0,), 0.5), max_order=order)
    assert A == pytest.approx(2.0, rel=1e-12)


def test_analyticity_constant_monotone_in_order():
    V = bounds.PotentialSpec.from_string(2, "rational:3")
    values = [bounds.analyticity_constant(V, Ball((0.0, 0.0), 0.5), max_order=k) for k in range(0, 9)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_analyticity_constant_errors():
    V = _inverse_linear()
    with pytest.raises(bounds.PotentialError):
        bounds.analyticity_constant(V, Ball((0.5,), 0.5))
    with pytest.raises(ValueError):
        bounds.analyticity_constant(V, Ball((0.0,), 0.5), max_order=13)


def test_scaled_check_ell_one_and_vacuous():
    V = _inverse_linear()
    ball = Ball((0.0,), 0.5)
    A = bounds.analyticity_constant(V, ball, max_order=8)
    checks = bounds.scaled_derivative_bound_check(V, ball, A, range(9), eps_values=(0.1, 0.6), ells=(1,))
    assert all(c.passed for c in checks)
    vac = [c for c in checks if c.eps == 0.6]
    assert vac and all(c.vacuous for c in vac)


def test_scaled_check_rational_sweep():
    V = bounds.PotentialSpec.from_string(2, "rational:1")
    ball = Ball((0.0, 0.0), 0.5)
    A = bounds.analyticity_constant(V, ball, max_order=6)
    R = ball.R
    checks = []
    for ell in (1, 2, 3):
        eps_values = [R / 2 / ell * f for f in (0.25, 0.5, 1.0)]
        checks += bounds.scaled_derivative_bound_check(V, ball, A, range(7), eps_values, (ell,))
    assert all(c.passed for c in checks)


def test_scaled_check_detects_small_A():
    V = _inverse_linear()
    # with A = 1 the order-0 bound sup |V| <= 1 fails on B_{0.4}, where sup V = 1/0.6
    checks = bounds.scaled_derivative_bound_check(V, Ball((0.0,), 0.5), 1.0, [0], [0.1], [1])
    assert checks[0].lhs == pytest.approx(1 / 0.6)
    assert not checks[0].passed


# ---------------------------------------------------------------------------
# triples and right-hand sides

@pytest.mark.parametrize("n,s", [(1, 0.5), (1, 0.7), (3, 0.5), (3, 0.7), (2, 0.5)])
def test_triple_table_valid(n, s):
    table = bounds.triple_table(n, s)
    assert table[0].p == 2 and table[0].r == 1
    assert table[-1].p == 1 and table[-1].r == 2
    for t in table:
        assert 1 / t.p + 1 / t.q + 1 / t.r == pytest.approx(2)


def test_triple_table_values():
    assert [t.r for t in bounds.triple_table(3, 0.5)] == pytest.approx([1.0, 1.5, 2.0])
    assert [t.r for t in bounds.triple_table(3, 0.7)] == pytest.approx([1.0, 1.875, 2.0])
    assert [t.r for t in bounds.triple_table(1, 0.5)] == pytest.approx([1.0, 2.0])


def test_norm_triple_rejects_invalid():
    with pytest.raises(ValueError):
        bounds.NormTriple(2.0, 2.0, 2.0)
    with pytest.raises(ValueError):
        bounds.NormTriple(1.0, 1.0, 1.0)
    assert bounds.NormTriple(1.0, 2.0, 2.0).q_star == 2.0


def test_exponent_example():
    op = OperatorSpec(3, 0.5, 1.0)
    assert bounds.smoothing_exponent(op, MultiIndex.of(2, 0, 0), 1.0) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(n=st.sampled_from([1, 2, 3]), flavor=st.sampled_from(["s05", "s07", "massless"]),
       order=st.integers(2, 6), rr=st.floats(1.0, 2.0), d=st.floats(0.05, 4.0))
def test_rhs_scaling(n, flavor, order, rr, d):
    op = {"s05": OperatorSpec(n, 0.5, 1.0), "s07": OperatorSpec(n, 0.7, 1.0), "massless": OperatorSpec.massless(n)}[flavor]
    beta = MultiIndex((order,) + (0,) * (n - 1))
    e = bounds.smoothing_exponent(op, beta, rr)
    ratio = bounds.predicted_rhs(op, beta, d / 2, rr) / bounds.predicted_rhs(op, beta, d, rr)
    assert ratio == pytest.approx(2**e, rel=1e-12)


def test_rhs_log_affine_in_inverse_d():
    op = OperatorSpec(3, 0.7, 1.0)
    beta = MultiIndex.of(3, 0, 0)
    ds = np.array([0.1, 0.25, 0.5, 1.0, 2.0])
    vals = [bounds.predicted_rhs(op, beta, float(d), 1.875) for d in ds]
    slope, _ = np.polyfit(np.log(1 / ds), np.log(vals), 1)
    assert slope == pytest.approx(bounds.smoothing_exponent(op, beta, 1.875), abs=1e-12)


@pytest.mark.parametrize("op", [OperatorSpec(1, 0.5, 1.0), OperatorSpec(1, 0.7, 2.0), OperatorSpec.massless(1)])
def test_one_dimension_base_four(op):
    # the one-dimensional estimate is written with base 4, which is 2n + 2 at n = 1
    beta = MultiIndex.of(3)
    for rr in (1.0, 2.0):
        const = kernels.smoothing_constants(op, rr)
        assert const["base"] == 4 == 2 * op.n + 2
        direct = const["c"] * beta.factorial * (4 / 0.5) ** (3 - 2 * op.s + (1 - 1 / rr))
        assert bounds.predicted_rhs(op, beta, 0.5, rr) == pytest.approx(direct, rel=1e-15)


def test_rhs_needs_order_two():
    with pytest.raises(ValueError):
        bounds.predicted_rhs(OperatorSpec(1, 0.5, 1.0), MultiIndex.of(1), 1.0, 1.0)


# ---------------------------------------------------------------------------
# Young bounds

def test_young_bound_pure_power():
    prof = kernels.HProfile.from_function(lambda r: r**-3.0, 0.5, 3, 3.0)
    tr = bounds.NormTriple(1.0, 2.0, 2.0)
    assert bounds.young_bound_from_H(prof, tr) == pytest.approx(kernels.H_tail_norm(prof, 2.0), rel=1e-15)
    assert bounds.young_bound_from_H(prof, tr, 0.5, 2.0) == pytest.approx(kernels.H_tail_norm(prof, 2.0), rel=1e-15)


@pytest.mark.parametrize("op", [OperatorSpec(3, 0.5, 1.0), OperatorSpec(1, 0.7, 1.0), OperatorSpec.massless(3)])
def test_young_bound_one_two_two_finite(op):
    beta = MultiIndex((2,) + (0,) * (op.n - 1))
    prof = kernels.build_H_profile(op, beta, 0.5)
    val = bounds.young_bound_from_H(prof, bounds.NormTriple(1.0, 2.0, 2.0))
    assert math.isfinite(val) and val > 0
    assert val <= bounds.predicted_rhs(op, beta, 0.5, 2.0) * (1 + bounds.REL_SLACK)


def test_certificate_margin():
    c = bounds.BoundCertificate(1.0, 2.0, {"stage": "x"})
    assert c.margin == 2.0 and c.passed
    assert not bounds.BoundCertificate(2.0, 1.0).passed
    assert bounds.BoundCertificate(0.0, 1.0).margin == math.inf
    assert c.row()["stage"] == "x"


# ---------------------------------------------------------------------------
# operator norms

def test_norm_beta_zero_massive():
    grid = GridSpec(1, 4.0, 256)
    one = Field(grid, np.ones(256))
    for s, m in ((0.5, 1.0), (0.7, 2.0)):
        est = bounds.operator_norm_L2(one, MultiIndex.of(0), one, OperatorSpec(1, s, m), tol=1e-10)
        assert est.converged
        assert est.value == pytest.approx(m ** (-2 * s), rel=1e-6)


@pytest.mark.parametrize("s,m", [(0.5, 1.0), (0.7, 1.0), (0.9, 0.5)])
def test_norm_first_order_below_C_s(s, m):
    grid = GridSpec(2, 4.0, 64)
    one = Field(grid, np.ones(grid.shape))
    for nu in (0, 1):
        est = bounds.operator_norm_L2(one, MultiIndex.unit(2, nu), one, OperatorSpec(2, s, m), filter_fraction=None)
        assert est.value <= bounds.C_s(m, s) * (1 + 1e-9)


def test_C_s_closed_form():
    # maximiser k* = m / sqrt(2s - 1)
    for s, m in ((0.7, 1.0), (0.9, 2.0)):
        k = m / math.sqrt(2 * s - 1)
        assert bounds.C_s(m, s) == pytest.approx(k / (k * k + m * m) ** s, rel=1e-10)
    assert bounds.C_s(3.0, 0.5) == 1.0


def test_separated_pair_geometry():
    grid = GridSpec(1, 2.0, 4096)
    phi, chi = bounds.separated_pair(grid, 0.5, 0.25, 0.1)
    x = grid.x1d
    right_phi = x[phi.values.real > 0].max()
    left_chi = x[chi.values.real > 0].min()
    assert left_chi - right_phi >= 0.5 - 1e-12
    assert phi.values.real.max() == 1.0 and chi.values.real.max() == 1.0


def test_certificate_one_dimension_half_distance():
    op = OperatorSpec(1, 0.5, 1.0)
    beta = MultiIndex.of(2)
    grid = GridSpec(1, 2.0, 8192)
    phi, chi = bounds.separated_pair(grid, 0.5, 0.125, 0.0625)
    est = bounds.operator_norm_L2(phi, beta, chi, op, tol=1e-8)
    cert = bounds.BoundCertificate(est.value, bounds.predicted_rhs(op, beta, 0.5, 1.0))
    assert cert.passed
    young = bounds.young_bound_from_H(kernels.build_H_profile(op, beta, 0.5), bounds.NormTriple(2.0, 2.0, 1.0))
    assert est.value <= young


def test_norm_monotone_in_distance():
    op = OperatorSpec(1, 0.7, 1.0)
    beta = MultiIndex.of(3)
    grid = GridSpec(1, 3.0, 8192)
    vals = []
    for d in (0.25, 0.5, 1.0, 2.0):
        phi, chi = bounds.separated_pair(grid, d, 0.25, 0.1)
        vals.append(bounds.operator_norm_L2(phi, beta, chi, op, tol=1e-8).value)
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_slab_norm_matches_full_grid_in_two_dimensions():
    op = OperatorSpec(2, 0.5, 1.0)
    beta = MultiIndex.of(2, 0)
    d = 0.5
    g1 = GridSpec(1, 2.0, 512)
    phi1, chi1 = bounds.separated_pair(g1, d, 0.25, 0.1)
    slab = bounds.operator_norm_slab(phi1, beta, chi1, op, tol=1e-9, d=d).value
    g2 = GridSpec(2, 2.0, 512)
    phi2, chi2 = bounds.separated_pair(g2, d, 0.25, 0.1)
    full = bounds.operator_norm_L2(phi2, beta, chi2, op, tol=1e-9, starts=1).value
    # the full grid samples the transverse wavenumbers the slab route maximises over
    assert full <= slab * (1 + 1e-6)
    assert full >= 0.95 * slab


def test_transverse_weight():
    assert bounds.transverse_weight([0, 0]) == 1.0
    assert bounds.transverse_weight([2]) == 1.0
    assert bounds.transverse_weight([1, 1]) == pytest.approx(0.5)


def test_norm_estimate_deterministic():
    grid = GridSpec(1, 2.0, 1024)
    phi, chi = bounds.separated_pair(grid, 0.5, 0.25, 0.1)
    op = OperatorSpec(1, 0.5, 1.0)
    a = bounds.operator_norm_L2(phi, MultiIndex.of(2), chi, op, seed=7)
    b = bounds.operator_norm_L2(phi, MultiIndex.of(2), chi, op, seed=7)
    assert a == b


# ---------------------------------------------------------------------------
# combinatorial inequalities

def test_beta_factorial_example():
    # n = 1, j = 1, beta = (2,): 2! (4/1.25)^2 = 20.48 <= 16^2
    assert 2 * (4 / 1.25) ** 2 == pytest.approx(20.48)
    assert 20.48 <= 16**2
    assert not bounds.check_beta_factorial(1, 1).violations


@pytest.mark.parametrize("n", [1, 2, 3])
def test_beta_factorial_all_dimensions(n):
    assert not bounds.check_beta_factorial(12 if n == 3 else 20, n).violations


def test_leibniz_sum_exact():
    tally = bounds.check_leibniz_sum(40, 1.0, 2.5)
    assert tally.checked > 40 and not tally.violations
    with pytest.raises(ValueError):
        bounds.check_leibniz_sum(5, 1.0, 2.0)


@settings(max_examples=30, deadline=None)
@given(J=st.integers(1, 25), a=st.integers(1, 10), extra=st.integers(1, 20))
def test_leibniz_geometric_bound(J, a, extra):
    ratio = Fraction(a, 2 * a + extra)
    total = sum(Fraction(math.comb(J, m) * math.factorial(m) * (J - m) ** (J - m), J**J) * ratio**m for m in range(J + 1))
    assert total <= sum(ratio**m for m in range(J + 1)) <= 2


def test_stirling_and_integral_checks():
    assert not bounds.check_stirling_step(60).violations
    assert not bounds.check_last_integral(60).violations


def test_combinatorial_report():
    rep = bounds.combinatorial_checks(10, 2, 1.0, 3.0, 20)
    assert rep.passed
    d = rep.as_dict()
    assert d["passed"] and len(d["checks"]) == 4


# ---------------------------------------------------------------------------
# certificate export

def test_write_certificates(tmp_path):
    rows = [bounds.BoundCertificate(1.0, 2.0, {"n": 1, "stage": "a"}).row(),
            bounds.BoundCertificate(1.0, 1.5, {"n": 3, "stage": "b"}).row()]
    bounds.write_certificates(rows, tmp_path / "c.csv", tmp_path / "c.json")
    with open(tmp_path / "c.csv") as fh:
        got = list(csv.DictReader(fh))
    assert list(got[0]) == list(bounds.CERT_COLUMNS) and len(got) == 2
    summary = json.loads((tmp_path / "c.json").read_text())
    assert summary == {"cases": 2, "failed": 0, "min_margin": 1.5}


def test_smoothing_chain_small():
    settings_ = bounds.ChainSettings(N1=4096)
    rows, slope = bounds.smoothing_chain(OperatorSpec(1, 0.5, 1.0), 2, ds=(0.5, 1.0), settings=settings_)
    assert all(r["pass"] for r in rows)
    stages = {r["stage"] for r in rows}
    assert stages == {"norm<=young_quadrature", "young_quadrature<=young_majorant", "young_majorant<=rhs"}
    assert abs(slope - 1.0) <= 0.3
