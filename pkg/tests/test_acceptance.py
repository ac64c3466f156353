"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import time

import numpy as np

from sharpnorm.kernels import SHARP_CONSTANT, KernelSpec, dominance_check, g0, g1, kernel_t, t_from_k
from sharpnorm.quadrature import QuadSpec, integrate_semi_infinite
from sharpnorm.schur import F, WeightPair, schur_bound, sup_F_analysis, trig_f, trig_g
from sharpnorm.spectral import build_nystrom, extremal_escape_diagnostic, largest_eigenvalue
from sharpnorm.variational import ChiOverSqrt, fit_log_deficit, random_bumps, rayleigh_quotient, stability_check

T = KernelSpec.massive()


def report(log, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  AC{number:<2d} {title}: {detail}"
    log.append(line)
    print(line)
    assert ok, line


def test_ac01_closed_form_integrals(acceptance_log):
    worst, slowest = 0.0, 0.0
    for g, exact in ((g0, math.pi**2 / 2), (g1, 2.0)):
        t0 = time.perf_counter()
        val = integrate_semi_infinite(lambda u, g=g: np.asarray(g(u)) / u, QuadSpec(singular_points=(1.0,))).value
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, abs(val - exact) / exact)
    report(acceptance_log, 1, "row integrals of g0 and g1", worst <= 1e-8 and slowest < 1.0,
           f"max rel err {worst:.2e}, slowest {slowest:.3f} s")


def test_ac02_residue_oracle(acceptance_log):
    worst = 0.0
    for x in (0.1, 0.5, 1.0, 2.0, 10.0, 100.0):
        spec = QuadSpec(singular_points=(x,))
        lhs = integrate_semi_infinite(lambda y, x=x: y / (y * y + 1) * np.asarray(g0(y / x)), spec).value
        worst = max(worst, abs(lhs - math.pi * math.atan(x)) / (math.pi * math.atan(x)))
        one = integrate_semi_infinite(lambda y, x=x: np.asarray(g1(y / x)) / y, spec).value
        worst = max(worst, abs(one - 2.0) / 2.0)
    report(acceptance_log, 2, "weighted integrals against pi arctan x and 2", worst <= 1e-7,
           f"max rel err {worst:.2e} over 6 points")


def test_ac03_schur_upper_bound(acceptance_log):
    rep = schur_bound(WeightPair.optimal())
    x = np.geomspace(1e-6, 1e12, 4000)
    below = bool(np.all(F(x) < SHARP_CONSTANT)) and bool(np.all(F(rep.grid) < SHARP_CONSTANT))
    gap = abs(rep.sup_value - SHARP_CONSTANT)
    ok = gap <= 1e-6 and not rep.attained and below and rep.grid.size >= 400
    report(acceptance_log, 3, "weighted Schur bound", ok,
           f"sup {rep.sup_value:.10f} (|diff| {gap:.1e}), attained={rep.attained}, F < C at {x.size + rep.grid.size} x")


def test_ac04_trig_reduction(acceptance_log):
    rep = sup_F_analysis()
    (a1, b1), (a2, b2) = rep.roots
    widths = max(b1 - a1, b2 - a2)
    mid = 0.5 * (b1 + a2)
    pattern = trig_g(0.5 * a1) < 0 < trig_g(mid) and trig_g(0.5 * (b2 + math.pi / 4)) < 0
    ends = max(abs(trig_f(0.0)), abs(trig_f(math.pi / 4)))
    fmax = float(trig_f(np.linspace(0, math.pi / 4, 4000)).max())
    ok = widths <= 1e-12 and pattern and ends <= 1e-12 and fmax <= 1e-10
    report(acceptance_log, 4, "two roots of g and f <= 0", ok,
           f"roots {a1:.12f}, {a2:.12f} (width {widths:.1e}), |f| at ends {ends:.1e}, max f {fmax:.1e}")


def test_ac05_rayleigh_lower_bound(acceptance_log):
    t0 = time.perf_counter()
    deltas = [10.0**k for k in range(1, 7)]
    q = [rayleigh_quotient(T, ChiOverSqrt(d)) for d in deltas]
    limit, _, _ = fit_log_deficit(deltas, q)
    elapsed = time.perf_counter() - t0
    below = all(v < SHARP_CONSTANT for v in q)
    shrinking = SHARP_CONSTANT - q[-1] < SHARP_CONSTANT - q[1]
    ok = below and shrinking and abs(limit - SHARP_CONSTANT) <= 0.02 and elapsed < 120
    report(acceptance_log, 5, "Rayleigh quotients at chi/sqrt(x)", ok,
           f"q(1e2)={q[1]:.6f}, q(1e6)={q[-1]:.6f}, fit limit {limit:.5f}, {elapsed:.1f} s")


def test_ac06_spectral_sandwich(acceptance_log):
    lam = [largest_eigenvalue(build_nystrom(T, 10.0**-k, 10.0**k, per_decade=40)).lambda_max for k in (1, 2, 3)]
    ok = lam[0] < lam[1] < lam[2] and all(v < SHARP_CONSTANT - 1e-10 for v in lam) and lam[2] > 3.2
    report(acceptance_log, 6, "largest eigenvalue on widening domains", ok,
           ", ".join(f"{v:.10f}" for v in lam))


def test_ac07_dominance(acceptance_log):
    results = dominance_check(4, 50, 1e-2, 1e2, slack=1e-12)
    total = sum(r.violations for r in results)
    report(acceptance_log, 7, "partial-wave dominance", total == 0,
           f"{total} violations over {len(results)} channels, max ratio {max(r.max_ratio for r in results):.6f}")


def test_ac08_substitution(acceptance_log):
    x = np.geomspace(1e-2, 1e2, 40)
    xx, yy = np.meshgrid(x, x)
    off = xx != yy
    err = float(np.max(np.abs(np.asarray(t_from_k(xx[off], yy[off])) / np.asarray(kernel_t(xx[off], yy[off])) - 1)))
    report(acceptance_log, 8, "momentum kernel reduces to t", err <= 1e-12,
           f"max rel err {err:.1e} on the 40x40 grid off the diagonal")


def test_ac09_stability(acceptance_log):
    t0 = time.perf_counter()
    zc = T.params.critical_charge
    worst = math.inf
    for bump in random_bumps(50, seed=0):
        for rep in stability_check(bump, [0.3 * zc, 0.7 * zc, zc]):
            worst = min(worst, rep.margin)
    elapsed = time.perf_counter() - t0
    report(acceptance_log, 9, "stability margins", worst >= -1e-8 and elapsed < 120,
           f"worst margin {worst:.4f} over 150 cases, {elapsed:.1f} s")


def test_ac10_escape(acceptance_log):
    results = [largest_eigenvalue(build_nystrom(T, 10.0**-k, 10.0**k)) for k in (1, 2, 3)]
    rep = extremal_escape_diagnostic(results)
    report(acceptance_log, 10, "eigenvector mass moves outward", rep.strictly_increasing,
           "median ln x " + ", ".join(f"{m:.4f}" for m in rep.medians))
