import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharpnorm.kernels import (
    SHARP_CONSTANT,
    KernelSpec,
    MomentumKernel,
    PartialWaveIndex,
    PhysicalParams,
    critical_charge,
    energy,
    g0,
    g1,
    g_l_of_log_ratio,
    kernel_t,
)
from sharpnorm.quadrature import QuadSpec
from sharpnorm.variational import (
    ChiOverSqrt,
    CustomTestFunction,
    RadialChannelFunction,
    ZeroNorm,
    dominated_limit_integrand,
    dominating_bound,
    fit_log_deficit,
    homogeneous_rayleigh_1d,
    lhopital_integral,
    pointwise_limit,
    quadratic_form,
    random_bumps,
    rayleigh_quotient,
    rayleigh_scan,
    stability_check,
    stability_form,
)

T = KernelSpec.massive()
PARAMS = PhysicalParams()
ZC = critical_charge(PARAMS.alpha)


def test_chi_over_sqrt_basics():
    f = ChiOverSqrt(100.0)
    assert f.norm_sq() == pytest.approx(math.log(100.0), rel=1e-15)
    assert f(0.5) == 0 and f(4.0) == 0.5
    with pytest.raises(ValueError):
        ChiOverSqrt(1.0)


def test_quotient_at_delta_100():
    q = rayleigh_quotient(T, ChiOverSqrt(100.0))
    assert 0 < q < SHARP_CONSTANT
    # frozen; the adaptive iterated double integral gives 2.998821882754834
    assert q == pytest.approx(2.998821882733415, rel=1e-10)


def test_scale_invariance():
    f = ChiOverSqrt(30.0)
    assert rayleigh_quotient(T, f.scaled(5.0)) == pytest.approx(rayleigh_quotient(T, f), rel=1e-14)


def test_custom_function_matches_builtin():
    custom = CustomTestFunction(lambda x: 1 / np.sqrt(x), (1.0, 30.0))
    assert custom.norm_sq() == pytest.approx(math.log(30.0), rel=1e-12)
    assert rayleigh_quotient(T, custom) == pytest.approx(rayleigh_quotient(T, ChiOverSqrt(30.0)), rel=1e-9)


def test_generic_callable_matches_channel_path():
    f = ChiOverSqrt(10.0)
    direct = rayleigh_quotient(kernel_t, f, QuadSpec(rel_tol=1e-9))
    assert direct == pytest.approx(rayleigh_quotient(T, f), rel=1e-7)


@pytest.mark.parametrize("delta", [math.e, 10.0, 1e3])
@pytest.mark.parametrize("l", [0, 1])
def test_homogeneous_two_paths_agree(delta, l):
    two_d = rayleigh_quotient(KernelSpec.homogeneous(l), ChiOverSqrt(delta))
    one_d = homogeneous_rayleigh_1d(lambda w: g_l_of_log_ratio(l, w), delta)
    assert two_d == pytest.approx(one_d, rel=1e-7)


def test_massless_quotient_is_the_homogeneous_average():
    delta = 50.0
    t0 = rayleigh_quotient(KernelSpec.massless(), ChiOverSqrt(delta))
    half = [homogeneous_rayleigh_1d(lambda w, l=l: g_l_of_log_ratio(l, w), delta) for l in (0, 1)]
    assert t0 == pytest.approx(0.5 * sum(half), rel=1e-7)


def test_massless_quotient_against_mpmath():
    # in log variables the massless form is a convolution with
    # k(w) = (Q0 + Q1)(cosh w) / 2, Q0 = log coth(|w|/2), Q1 = cosh(w) Q0 - 1
    delta = 50.0
    L = mp.log(delta)

    def k(w):
        q0 = mp.log(mp.coth(w / 2))
        return (q0 + mp.cosh(w) * q0 - 1) / 2

    with mp.workdps(30):
        exact = 2 * mp.quad(lambda w: k(w) * (L - w), [0, 1, L]) / L
    got = rayleigh_quotient(KernelSpec.massless(), ChiOverSqrt(delta), QuadSpec(rel_tol=1e-12))
    assert got == pytest.approx(float(exact), rel=1e-10)


def test_zero_norm():
    with pytest.raises(ZeroNorm):
        rayleigh_quotient(T, CustomTestFunction(lambda x: 0 * x, (1.0, 2.0)))


def test_custom_support_validation():
    with pytest.raises(ValueError):
        CustomTestFunction(lambda x: x, (0.0, 1.0))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(1.5, 5.0), st.floats(0.0, 2.0))
def test_quotient_below_sharp_constant(lo, ratio_decades, power):
    hi = lo * 10**ratio_decades
    phi = CustomTestFunction(lambda x: x**-power * np.log(x / lo), (lo, hi))
    q = rayleigh_quotient(T, phi, QuadSpec(rel_tol=1e-8))
    assert 0 < q < SHARP_CONSTANT


def test_scan_approaches_from_below():
    scan = rayleigh_scan(T, [10.0, 1e2, 1e3, 1e4])
    assert scan.bound == pytest.approx(SHARP_CONSTANT)
    assert scan.below_bound and scan.increasing
    assert all(d > 0 for d in scan.deficits)
    assert np.all(np.diff(scan.deficits) < 0)


def test_massless_scan_behaves_alike():
    scan = rayleigh_scan(KernelSpec.massless(), [10.0, 1e2, 1e3, 1e4])
    assert scan.below_bound and scan.increasing
    assert np.all(np.diff(scan.deficits) < 0)


def test_homogeneous_scan_limit():
    scan = rayleigh_scan(KernelSpec.homogeneous(0), [1e2, 1e3, 1e4, 1e5, 1e6])
    assert scan.bound == pytest.approx(math.pi**2 / 2, rel=1e-9)
    assert scan.below_bound and scan.increasing
    assert scan.fit_limit == pytest.approx(math.pi**2 / 2, abs=0.02)


def test_scan_validation():
    with pytest.raises(ValueError):
        rayleigh_scan(T, [10.0, 5.0, 100.0])
    with pytest.raises(ValueError):
        rayleigh_scan(T, [10.0, 100.0])


def test_fit_recovers_a_synthetic_limit():
    d = np.geomspace(10, 1e8, 8)
    L = np.log(d)
    q = 3.0 - 0.7 / L + 0.2 / L**2
    limit, (c1, c2), resid = fit_log_deficit(d, q)
    assert limit == pytest.approx(3.0, abs=1e-12)
    assert (c1, c2) == pytest.approx((0.7, -0.2), abs=1e-10)
    assert resid < 1e-13


# dominated convergence ------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0001, 1e8), st.floats(1e-6, 0.999999))
def test_domination(delta, u):
    assert dominated_limit_integrand(delta, u) <= dominating_bound(u) * (1 + 1e-12) + 1e-12


def test_near_singularity_is_finite():
    v = dominated_limit_integrand(10.0, 0.99)
    assert math.isfinite(v) and v <= dominating_bound(0.99)


def test_pointwise_limit_rate():
    # the gap closes like 1/delta
    gaps = [abs(dominated_limit_integrand(d, 0.5) - pointwise_limit(0.5)) for d in (1e2, 1e3, 1e4, 1e8)]
    assert gaps[3] < 2e-8
    for a, b in zip(gaps[:2], gaps[1:3]):
        assert b / a == pytest.approx(0.1, rel=0.05)
    assert pointwise_limit(0.5) == pytest.approx((g0(0.5) + g1(0.5)) / 1.0, rel=1e-15)


def test_dominated_integrand_domain():
    with pytest.raises(ValueError):
        dominated_limit_integrand(10.0, 1.0)
    with pytest.raises(ValueError):
        dominated_limit_integrand(1.0, 0.5)


def test_lhopital_integral_tends_to_constant():
    # approached from above, at rate roughly 1/sqrt(delta)
    gaps = [lhopital_integral(d) - SHARP_CONSTANT for d in (1e2, 1e4, 1e6)]
    assert gaps[0] > gaps[1] > gaps[2] > 0
    assert gaps[2] < 2e-5


# change of variables p = m c x ------------------------------------------------


def test_momentum_form_equals_reduced_form():
    a = random_bumps(1, seed=3)[0]
    phi = CustomTestFunction(lambda x: np.sqrt(energy(x, PARAMS)) * a.a(x), a.support, knots=a.knots)
    spec = QuadSpec(rel_tol=1e-10)
    lhs = quadratic_form(MomentumKernel(PartialWaveIndex(0, 0.5), PARAMS), a.as_test_function(), spec).value
    rhs = quadratic_form(T, phi, spec).value
    assert lhs == pytest.approx(rhs, rel=1e-8)


# stability -------------------------------------------------------------------


def test_random_bumps_are_seeded_and_normalized():
    a = random_bumps(5, seed=11)
    b = random_bumps(5, seed=11)
    p = np.geomspace(1e-2, 1e2, 200)
    for x, y in zip(a, b):
        assert x.support == y.support
        np.testing.assert_array_equal(x.a(p), y.a(p))
        assert 1e-2 <= x.support[0] < x.support[1] <= 1e2
        assert x.as_test_function().norm_sq() == pytest.approx(1.0, rel=1e-9)
    assert random_bumps(1, seed=12)[0].support != a[0].support


def test_zero_charge():
    a = random_bumps(1, seed=5)[0]
    kinetic = stability_form(a, 0.0)
    assert kinetic > PARAMS.rest_energy
    rep = stability_check(a, 0.0)
    assert rep.margin == pytest.approx(kinetic - PARAMS.rest_energy, rel=1e-12)
    assert rep.margin >= 0


def test_half_critical_charge():
    a = random_bumps(1, seed=8)[0]
    assert stability_form(a, ZC / 2) >= 0.5 * PARAMS.rest_energy * a.as_test_function().norm_sq()


def test_critical_charge_with_flat_log_profile():
    a = RadialChannelFunction(lambda p: 1 / np.sqrt(p), (1.0, 100.0))
    assert stability_form(a, ZC) >= 0


def test_critical_charge_near_zero_momentum():
    a = RadialChannelFunction(lambda p: np.sin(np.pi * (p - 1e-3) / 9e-3) ** 2, (1e-3, 1e-2))
    rep = stability_check(a, ZC)
    assert rep.margin >= -1e-8
    # the potential term scales with p here, so the kinetic part dominates
    assert rep.margin == pytest.approx(PARAMS.rest_energy * rep.norm_sq, rel=0.01)


def test_margins_for_a_few_bumps():
    for a in random_bumps(4, seed=21):
        reps = stability_check(a, [0.3 * ZC, 0.7 * ZC, ZC])
        assert len(reps) == 3
        assert all(r.ok(1e-8) for r in reps)


def test_supercritical_charge_rejected():
    a = random_bumps(1, seed=1)[0]
    with pytest.raises(ValueError):
        stability_check(a, 1.01 * ZC)
