"""Weighted Schur-test upper bounds for the reduced kernel and the analysis of
their supremum.

For positive weights h0, h1 the quantity

    A(h0, h1) = sup_x bound_function(x)

bounds the operator norm of ``kernel_t``.  With the weights
h0(x) = x/(x^2+1), h1(x) = 1/x the bound function has the closed form
:func:`F`, whose supremum pi^2/4 + 1 is approached only as x -> inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .kernels import SHARP_CONSTANT, g0, g1
from .quadrature import QuadSpec, double_integral, integrate_interval, integrate_semi_infinite

__all__ = [
    "WeightPair",
    "SupremumReport",
    "AnalysisFailure",
    "UnboundedAbove",
    "schur_rhs_homogeneous",
    "homogeneous_norm",
    "closed_form_h0_integral",
    "bound_function",
    "schur_bound",
    "F",
    "sup_F_analysis",
    "trig_f",
    "trig_g",
    "schur_test_sides",
    "extremal_profile_ratio",
]

Func = Callable[[np.ndarray], np.ndarray]


class AnalysisFailure(RuntimeError):
    """A sign or root condition of the supremum analysis did not hold."""


class UnboundedAbove(RuntimeError):
    """The bound function exceeded the configured ceiling during a scan."""


def _sharp_h0(x):
    x = np.asarray(x, dtype=float)
    return x / (x * x + 1.0)


def _sharp_h1(x):
    return 1.0 / np.asarray(x, dtype=float)


@dataclass(frozen=True)
class WeightPair:
    h0: Func
    h1: Func
    labels: tuple[str, str] = ("h0", "h1")

    @classmethod
    def optimal(cls) -> "WeightPair":
        """h0(x) = x/(x^2+1), h1(x) = 1/x."""
        return cls(_sharp_h0, _sharp_h1, ("x/(x^2+1)", "1/x"))

    @classmethod
    def unweighted(cls) -> "WeightPair":
        """h0 = h1 = 1/x, the plain homogeneous Schur test."""
        return cls(_sharp_h1, _sharp_h1, ("1/x", "1/x"))

    @classmethod
    def power(cls, beta: float) -> "WeightPair":
        def h(x):
            return np.asarray(x, dtype=float) ** (-beta)

        return cls(h, h, (f"x^-{beta:g}", f"x^-{beta:g}"))

    @classmethod
    def from_table(cls, x: Sequence[float], h0: Sequence[float], h1: Sequence[float]) -> "WeightPair":
        """Weights tabulated on a grid, interpolated linearly in log-log and
        extrapolated with the end slopes."""
        lx = np.log(np.asarray(x, dtype=float))
        order = np.argsort(lx)
        lx = lx[order]

        def make(vals):
            lv = np.log(np.asarray(vals, dtype=float))[order]
            s_lo = (lv[1] - lv[0]) / (lx[1] - lx[0])
            s_hi = (lv[-1] - lv[-2]) / (lx[-1] - lx[-2])

            def h(t):
                lt = np.log(np.asarray(t, dtype=float))
                out = np.interp(lt, lx, lv)
                out = np.where(lt < lx[0], lv[0] + s_lo * (lt - lx[0]), out)
                out = np.where(lt > lx[-1], lv[-1] + s_hi * (lt - lx[-1]), out)
                return np.exp(out)

            return h

        return cls(make(h0), make(h1), ("table:h0", "table:h1"))

    def validate(self, lo: float = 1e-6, hi: float = 1e6, n: int = 241) -> None:
        grid = np.geomspace(lo, hi, n)
        for h, name in zip((self.h0, self.h1), self.labels):
            vals = np.asarray(h(grid), dtype=float)
            if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
                raise ValueError(f"weight {name} is not strictly positive on [{lo:g}, {hi:g}]")


@dataclass
class SupremumReport:
    sup_value: float
    arg_candidates: list[tuple[float, float]] = field(default_factory=list)
    attained: bool = False
    roots: list[tuple[float, float]] = field(default_factory=list)
    limit_value: float | None = None
    grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "sup_value": self.sup_value,
            "attained": self.attained,
            "limit_value": self.limit_value,
            "arg_candidates": [list(c) for c in self.arg_candidates],
            "roots": [list(r) for r in self.roots],
        }


# ---------------------------------------------------------------------------
# Schur integrals
# ---------------------------------------------------------------------------


def schur_rhs_homogeneous(g: Func, h: Func, x: float, spec: QuadSpec = QuadSpec()) -> float:
    """int_0^inf h(y)/h(x) g(y/x) dy.

    Computed after the substitution y = x u, so the singularity of g sits at
    u = 1 for every x.  Weights change scale near y = 1, i.e. u = 1/x, which
    can be many decades away; every decade in between is a breakpoint so no
    panel straddles both scales.
    """
    x = float(x)
    hx = float(np.asarray(h(np.array([x])))[0])

    def integrand(u):
        return x * np.asarray(h(x * u)) / hx * np.asarray(g(u))

    decades = math.log10(1.0 / x)
    steps = np.arange(0.0, abs(decades), 1.0) * math.copysign(1.0, decades)
    points = {1.0, 1.0 / x, *(10.0**steps).tolist()}
    return integrate_semi_infinite(integrand, spec.with_points(*points)).value


def homogeneous_norm(g: Func, spec: QuadSpec = QuadSpec()) -> float:
    """int_0^inf g(u) du/u, the norm of f -> int g(x/y) f(y) dy / sqrt(xy)."""
    return integrate_semi_infinite(lambda u: np.asarray(g(u)) / u, spec.with_points(1.0)).value


def closed_form_h0_integral(x):
    """Exact value of int_0^inf y/(y^2+1) g0(y/x) dy, namely pi * arctan(x)."""
    return math.pi * np.arctan(x) if np.ndim(x) else math.pi * math.atan(x)


def _upper_coef(x):
    X = math.hypot(x, 1.0)
    return (X + 1.0) / (X * X)


def _lower_coef(x):
    X = math.hypot(x, 1.0)
    return x * x / ((X + 1.0) * X * X)


def bound_function(w: WeightPair, x: float, spec: QuadSpec = QuadSpec()) -> float:
    """Half the weighted row integral of the two channels of ``kernel_t`` at x."""
    x = float(x)
    r0 = schur_rhs_homogeneous(g0, w.h0, x, spec)
    r1 = schur_rhs_homogeneous(g1, w.h1, x, spec)
    return 0.5 * (_upper_coef(x) * r0 + _lower_coef(x) * r1)


def F(x):
    """Closed form of :func:`bound_function` for the optimal weights.

    F(x) = (pi/2)(X+1) arctan(x)/x + (X-1) x/(x^2+1),  X = sqrt(x^2+1),
    with F(0) = pi and F(inf) = pi^2/4 + 1.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise ValueError("F is defined for x >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.hypot(xa, 1.0)
        atan_ratio = np.where(xa > 0, np.arctan(xa) / np.where(xa > 0, xa, 1.0), 1.0)
        first = 0.5 * math.pi * (X + 1.0) * atan_ratio
        second = xa * xa * xa / ((X + 1.0) * (xa * xa + 1.0))
        out = first + second
    out = np.where(np.isinf(xa), SHARP_CONSTANT, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Supremum search
# ---------------------------------------------------------------------------


def _golden_refine(func, lo, hi, xtol=1e-10):
    """Maximize func(exp(s)) for s in [log lo, log hi]."""
    res = minimize_scalar(
        lambda s: -func(math.exp(s)),
        bounds=(math.log(lo), math.log(hi)),
        method="bounded",
        options={"xatol": xtol},
    )
    x = math.exp(res.x)
    return x, -float(res.fun)


def maximize_on_halfline(
    func: Callable[[float], float],
    grid: np.ndarray,
    *,
    limit_points: Sequence[float] = (1e6, 1e7, 1e8),
    ceiling: float = 1e6,
    tol: float = 1e-9,
) -> SupremumReport:
    """Scan ``func`` on ``grid``, refine each interior local max, and compare
    with the trend of func at ``limit_points`` (the x -> inf side)."""
    values = np.array([func(float(x)) for x in grid])
    if np.any(~np.isfinite(values)) or np.any(values > ceiling):
        raise UnboundedAbove(f"bound function exceeds {ceiling:g} on the scan grid")

    candidates = []
    for i in range(1, len(grid) - 1):
        if values[i] >= values[i - 1] and values[i] >= values[i + 1]:
            x, v = _golden_refine(func, grid[i - 1], grid[i + 1])
            candidates.append((x, max(v, values[i])))
    if values[0] > values[1]:
        candidates.append((float(grid[0]), float(values[0])))

    tail = [func(float(x)) for x in limit_points]
    if any(v > ceiling or not math.isfinite(v) for v in tail):
        raise UnboundedAbove("bound function exceeds the ceiling as x -> inf")
    limit = tail[-1]
    rising = tail[-1] >= tail[0] - tol

    best_finite = max([v for _, v in candidates], default=-math.inf)
    best_finite = max(best_finite, float(values.max()))
    if rising and limit >= best_finite - tol:
        sup, attained = limit, False
    else:
        sup, attained = best_finite, True
    return SupremumReport(
        sup_value=float(sup),
        arg_candidates=sorted(candidates),
        attained=attained,
        limit_value=float(limit),
        grid=np.asarray(grid),
        values=values,
    )


def schur_bound(
    w: WeightPair,
    spec: QuadSpec = QuadSpec(),
    *,
    grid: np.ndarray | None = None,
    limit_points: Sequence[float] = (1e6, 1e7, 1e8),
    ceiling: float = 1e6,
) -> SupremumReport:
    """sup over x of :func:`bound_function` (an upper bound on ||T||).

    The default grid has 400 log-uniform points on [1e-4, 1e4].
    """
    w.validate()
    if grid is None:
        grid = np.geomspace(1e-4, 1e4, 400)
    return maximize_on_halfline(
        lambda x: bound_function(w, x, spec),
        grid,
        limit_points=limit_points,
        ceiling=ceiling,
    )


# ---------------------------------------------------------------------------
# Trigonometric analysis of sup F
# ---------------------------------------------------------------------------


def trig_f(v):
    """f(v) = pi v + 4 sin^4 v - (pi^2/4 + 1) tan v; F(tan 2v) <= C iff f(v) <= 0."""
    v = np.asarray(v, dtype=float)
    return math.pi * v + 4.0 * np.sin(v) ** 4 - SHARP_CONSTANT * np.tan(v)


def trig_f2(v):
    """Second derivative of :func:`trig_f` in product form 2 sin v sec^3 v g(v)."""
    v = np.asarray(v, dtype=float)
    return 2.0 * np.sin(v) / np.cos(v) ** 3 * trig_g(v)


def trig_g(v):
    v = np.asarray(v, dtype=float)
    return 3 * np.sin(2 * v) + 3 * np.sin(4 * v) + np.sin(6 * v) - SHARP_CONSTANT


def trig_g_prime(v):
    v = np.asarray(v, dtype=float)
    return 12 * np.cos(4 * v) * (1 + np.cos(2 * v))


def _bisect(func, lo, hi, width):
    flo = func(lo)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        fm = func(mid)
        if fm == 0:
            return mid, mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo, hi


def sup_F_analysis(
    *, scan_points: int = 4000, root_width: float = 1e-12, grid_points: int = 4000, tol: float = 1e-10
) -> SupremumReport:
    """Verify sup F = pi^2/4 + 1 through x = tan 2v.

    Isolates the two sign changes of g on (0, pi/4), checks the sign pattern
    (-, +, -), and checks f <= 0 on a dense grid with f = 0 at both ends.
    """
    quarter = math.pi / 4
    scan = np.linspace(0.0, quarter, scan_points + 1)
    gs = trig_g(scan)
    sign_changes = np.nonzero(np.sign(gs[:-1]) != np.sign(gs[1:]))[0]
    if len(sign_changes) != 2:
        raise AnalysisFailure(f"expected two roots of g on (0, pi/4), found {len(sign_changes)}")
    g_scalar = lambda v: float(trig_g(v))  # noqa: E731
    roots = [_bisect(g_scalar, scan[i], scan[i + 1], root_width) for i in sign_changes]
    (a1, b1), (a2, b2) = roots
    v1, v2 = 0.5 * (a1 + b1), 0.5 * (a2 + b2)

    # sign pattern of g on [0, v1), (v1, v2), (v2, pi/4]
    pattern = [
        float(trig_g(scan[scan < a1]).max()),
        float(trig_g(scan[(scan > b1) & (scan < a2)]).min()),
        float(trig_g(scan[scan > b2]).max()),
    ]
    if not (pattern[0] < 0 and pattern[1] > 0 and pattern[2] < 0):
        raise AnalysisFailure(f"sign pattern of g violated: {pattern}")
    if not (trig_g_prime(scan[scan < math.pi / 8]) > 0).all():
        raise AnalysisFailure("g' not positive on [0, pi/8)")
    if not (trig_g_prime(scan[scan > math.pi / 8 + 1e-12]) < 0).all():
        raise AnalysisFailure("g' not negative on (pi/8, pi/4]")

    f0, fq = float(trig_f(0.0)), float(trig_f(quarter))
    if abs(f0) > 1e-12 or abs(fq) > 1e-12:
        raise AnalysisFailure(f"f(0) = {f0}, f(pi/4) = {fq}")
    dense = np.linspace(0.0, quarter, grid_points)
    fmax = float(trig_f(dense).max())
    if fmax > tol:
        raise AnalysisFailure(f"f exceeds {tol:g} on the grid: max {fmax}")

    return SupremumReport(
        sup_value=SHARP_CONSTANT,
        arg_candidates=[],
        attained=False,
        roots=[(a1, b1), (a2, b2)],
        limit_value=SHARP_CONSTANT,
        grid=np.tan(2 * dense[:-1]),
        values=None,
    )


# ---------------------------------------------------------------------------
# Inequality checks
# ---------------------------------------------------------------------------


def schur_test_sides(
    f: Func,
    support: tuple[float, float],
    g: Func,
    h: Func,
    spec: QuadSpec = QuadSpec(rel_tol=1e-8),
) -> tuple[float, float]:
    """Both sides of the weighted Schur inequality for a trial function f:

    lhs = int int f(x) g(x/y) f(y) dx dy,
    rhs = int f(x)^2 [int h(y)/h(x) g(y/x) dy] dx.
    """
    a, b = support

    def kern(x, y):
        return np.asarray(f(np.array([x])))[0] * np.asarray(g(x / y)) * np.asarray(f(y))

    lhs = double_integral(kern, True, spec, bounds=(a, b)).value

    def outer(xs):
        return np.array(
            [float(np.asarray(f(np.array([x])))[0]) ** 2 * schur_rhs_homogeneous(g, h, x, spec) for x in xs]
        )

    rhs = integrate_interval(outer, a, b, spec).value
    return lhs, rhs


def extremal_profile_ratio(w: WeightPair, x):
    """Ratio of the two profiles an extremal function would have to match,

    h0(x) sqrt((x^2+1)/(X+1))  /  h1(x) sqrt((x^2+1)/(X-1)).

    An extremal function exists only if this is constant.
    """
    x = np.asarray(x, dtype=float)
    X = np.hypot(x, 1.0)
    p0 = w.h0(x) * np.sqrt((x * x + 1) / (X + 1))
    p1 = w.h1(x) * np.sqrt((x * x + 1) * (X + 1)) / x
    return p0 / p1
