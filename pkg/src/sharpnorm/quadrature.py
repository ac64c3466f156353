"""Adaptive Gauss quadrature on intervals and half-lines.

Panels carry a 15-point Gauss-Legendre estimate and the sum of the two
half-panel estimates; their difference is the panel error.  Each refinement
sweep bisects the panels holding most of the error, so panels pile up
geometrically toward integrable endpoint singularities.  Declared singular
points become panel boundaries and are never used as nodes.

Integrands are vectorized: ``f(x)`` receives a 1-d array and must return an
array of the same shape.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuadSpec",
    "IntegralResult",
    "QuadratureError",
    "NonConvergence",
    "DivergentTail",
    "integrate_interval",
    "integrate_semi_infinite",
    "double_integral",
    "graded_rule",
]

GAUSS_ORDER = 15
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_ORDER)
_EPS = np.finfo(float).eps
# per-panel error never reported below this multiple of eps * integral |f|
_ROUNDOFF_FACTOR = 50.0
# narrower panels would put GL15 nodes on the endpoints in double precision
_MIN_WIDTH = 1e-13
_EDGE_SAFETY = 3.0


class QuadratureError(ArithmeticError):
    """Integrand returned NaN/inf or the problem is malformed."""


class NonConvergence(QuadratureError):
    """Subdivision budget exhausted; ``result`` holds the best estimate."""

    def __init__(self, message: str, result: "IntegralResult"):
        super().__init__(message)
        self.result = result


class DivergentTail(QuadratureError):
    """The integrand does not decay fast enough on the half-line."""


@dataclass(frozen=True)
class QuadSpec:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 4096
    singular_points: tuple[float, ...] = ()
    tail_map: str = "exponential"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")
        pts = tuple(float(p) for p in self.singular_points)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("singular_points must be sorted and distinct")
        object.__setattr__(self, "singular_points", pts)
        if self.tail_map not in ("exponential", "rational"):
            raise ValueError(f"unknown tail_map {self.tail_map!r}")

    def with_points(self, *points: float) -> "QuadSpec":
        pts = tuple(sorted(set(float(p) for p in points)))
        return replace(self, singular_points=pts)

    def tightened(self, factor: float) -> "QuadSpec":
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)

    def target(self, value: float) -> float:
        return max(self.rel_tol * abs(value), self.abs_tol)


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    subdivisions_used: int
    converged: bool

    def __add__(self, other: "IntegralResult") -> "IntegralResult":
        return IntegralResult(
            self.value + other.value,
            self.error_estimate + other.error_estimate,
            self.subdivisions_used + other.subdivisions_used,
            self.converged and other.converged,
        )

    def __float__(self) -> float:
        return self.value


def _eval(f, x):
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][:3]
        raise QuadratureError(f"integrand not finite at x = {bad.tolist()}")
    return y


class _Panel:
    __slots__ = ("a", "b", "coarse", "halves", "abs_halves", "fine", "err")

    def __lt__(self, other):  # max-heap via negated key
        return self.err > other.err


def _gauss_batch(f, lefts, rights):
    """GL15 on each [lefts[i], rights[i]]: returns (values, abs values)."""
    half = 0.5 * (rights - lefts)
    mid = 0.5 * (rights + lefts)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    y = _eval(f, x.ravel()).reshape(x.shape)
    vals = half * (y @ _WEIGHTS)
    absv = half * (np.abs(y) @ _WEIGHTS)
    return vals, absv


def _make_panels(f, intervals, coarse=None, edges=frozenset()):
    """Panels for ``intervals``; ``coarse`` reuses known whole-panel values.

    Panels touching a point of ``edges`` (where singularities sit) get their
    error inflated: for an r^(-1/2) endpoint the halving difference
    underestimates the true error of the halves by about 1/(sqrt 2 - 1).
    """
    a = np.array([iv[0] for iv in intervals])
    b = np.array([iv[1] for iv in intervals])
    m = 0.5 * (a + b)
    if coarse is None:
        lefts = np.concatenate([a, a, m])
        rights = np.concatenate([b, m, b])
        vals, absv = _gauss_batch(f, lefts, rights)
        n = len(a)
        whole, left, right = vals[:n], vals[n : 2 * n], vals[2 * n :]
        abs_l, abs_r = absv[n : 2 * n], absv[2 * n :]
    else:
        vals, absv = _gauss_batch(f, np.concatenate([a, m]), np.concatenate([m, b]))
        n = len(a)
        whole = np.asarray(coarse)
        left, right = vals[:n], vals[n:]
        abs_l, abs_r = absv[:n], absv[n:]
    panels = []
    for i in range(len(a)):
        p = _Panel()
        p.a, p.b = float(a[i]), float(b[i])
        p.coarse = float(whole[i])
        p.halves = (float(left[i]), float(right[i]))
        p.fine = p.halves[0] + p.halves[1]
        p.abs_halves = float(abs_l[i] + abs_r[i])
        diff = abs(p.fine - p.coarse)
        if p.a in edges or p.b in edges:
            diff *= _EDGE_SAFETY
        p.err = max(diff, _ROUNDOFF_FACTOR * _EPS * p.abs_halves)
        panels.append(p)
    return panels


def _breakpoints(a, b, points):
    inner = [p for p in points if a < p < b]
    return [a, *inner, b]


def integrate_interval(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: QuadSpec = QuadSpec(),
    *,
    raise_on_failure: bool = True,
    min_width: float = 1e-300,
) -> IntegralResult:
    """Integral of ``f`` over the finite interval [a, b].

    Panels narrower than ``min_width`` (or 1e-13 relative to their
    location) are not split further.
    """
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise QuadratureError("integrate_interval needs finite limits")
    if not a < b:
        raise QuadratureError(f"need a < b, got [{a}, {b}]")
    bps = _breakpoints(a, b, spec.singular_points)
    edges = frozenset(bps)
    panels = _make_panels(f, list(zip(bps[:-1], bps[1:])), edges=edges)
    heap = list(panels)
    heapq.heapify(heap)
    frozen: list[_Panel] = []
    splits = 0

    def totals():
        items = heap + frozen
        value = math.fsum(p.fine for p in items)
        err = math.fsum(p.err for p in items)
        return value, err

    value, err = totals()
    while err > spec.target(value) and heap and splits < spec.max_subdivisions:
        # bisect every panel within a factor 4 of the current worst
        worst = heap[0].err
        batch = []
        while heap and heap[0].err >= 0.25 * worst and splits + len(batch) < spec.max_subdivisions:
            p = heapq.heappop(heap)
            width = p.b - p.a
            if width <= max(_MIN_WIDTH * max(abs(p.a), abs(p.b)), min_width):
                frozen.append(p)
                continue
            batch.append(p)
        if not batch:
            continue
        intervals, coarse = [], []
        for p in batch:
            m = 0.5 * (p.a + p.b)
            intervals += [(p.a, m), (m, p.b)]
            coarse += [p.halves[0], p.halves[1]]
        for child in _make_panels(f, intervals, coarse, edges):
            heapq.heappush(heap, child)
        splits += len(batch)
        value, err = totals()

    converged = err <= spec.target(value)
    result = IntegralResult(value, err, splits, converged)
    if not converged and raise_on_failure:
        raise NonConvergence(
            f"no convergence on [{a}, {b}] after {splits} subdivisions: "
            f"value={value!r}, error={err:.3e}, target={spec.target(value):.3e}",
            result,
        )
    return result


def _tail(f, start, spec):
    """Integral of f over [start, inf), start > 0."""
    if spec.tail_map == "rational":
        # u = start + w/(1 - w), w in [0, 1)
        def g(w):
            one_m = 1.0 - w
            return f(start + w / one_m) / (one_m * one_m)

        return integrate_interval(g, 0.0, 1.0, spec.with_points(), raise_on_failure=False, min_width=_MIN_WIDTH * start)

    # exponential map u = start * e^v; blocks [0,1], [1,3], [3,7], ... in v
    def g(v):
        u = start * np.exp(v)
        return f(u) * u

    total = IntegralResult(0.0, 0.0, 0, True)
    lo, width = 0.0, 1.0
    history: list[float] = []
    block_spec = spec.with_points()
    while True:
        # du/u = dv, so a relative width in u is an absolute width in v
        block = integrate_interval(g, lo, lo + width, block_spec, raise_on_failure=False, min_width=_MIN_WIDTH)
        total = total + block
        # mean of the mapped integrand per unit v; decays for integrable tails
        history.append(abs(block.value) / width)
        lo += width
        width *= 2.0
        if abs(block.value) + block.error_estimate <= 0.1 * spec.target(total.value):
            return total
        if lo > 60.0 and history[-1] >= 0.5 * history[-2]:
            raise DivergentTail(f"tail contributions not contracting beyond u = {start}: {history}")
        if lo > 600.0:
            raise DivergentTail(f"tail not resolved before u = {start}*e^{lo:g}")


def integrate_semi_infinite(
    f: Callable[[np.ndarray], np.ndarray],
    spec: QuadSpec = QuadSpec(),
    *,
    raise_on_failure: bool = True,
) -> IntegralResult:
    """Integral of ``f`` over (0, inf).

    The finite part is split at u = 1 and at every declared singular point;
    beyond the last breakpoint the tail map of ``spec`` takes over.
    """
    pts = [p for p in spec.singular_points if p > 0]
    last = max([1.0, *pts])
    finite = integrate_interval(
        f, 0.0, last, spec.with_points(*pts, 1.0), raise_on_failure=False
    )
    result = finite + _tail(f, last, spec)
    converged = result.error_estimate <= spec.target(result.value) * 2.0
    result = replace(result, converged=converged and finite.converged)
    if not result.converged and raise_on_failure:
        raise NonConvergence(
            f"no convergence on (0, inf): value={result.value!r}, "
            f"error={result.error_estimate:.3e}",
            result,
        )
    return result


def _integrate(f, lo, hi, spec):
    if math.isinf(hi):
        if lo != 0.0:
            shifted = lambda u: f(u + lo)  # noqa: E731
            pts = tuple(p - lo for p in spec.singular_points if p > lo)
            return integrate_semi_infinite(shifted, spec.with_points(*pts))
        return integrate_semi_infinite(f, spec)
    return integrate_interval(f, lo, hi, spec)


def double_integral(
    f: Callable[[float, np.ndarray], np.ndarray],
    diag_singular: bool = False,
    spec: QuadSpec = QuadSpec(),
    *,
    bounds: Sequence[float] = (0.0, math.inf),
    symmetric: bool = False,
    outer_points: Sequence[float] = (),
    inner_points: Sequence[float] = (),
) -> IntegralResult:
    """Iterated integral of ``f(x, y)`` over ``bounds`` x ``bounds``.

    ``f`` is called with a scalar ``x`` and an array ``y``.  With
    ``diag_singular`` the inner integral over y declares a singular point at
    y = x.  With ``symmetric`` only y >= x is integrated and the result is
    doubled, so the diagonal singularity sits at an inner endpoint.
    ``outer_points`` and ``inner_points`` are extra breakpoints (kinks of the
    integrand) for the two levels.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise QuadratureError("empty integration domain")
    inner_spec = spec.tightened(0.1)
    worst_rel = [0.0]
    kinks = sorted(float(p) for p in inner_points if lo < p < hi)

    def inner(x):
        g = lambda y: f(x, y)  # noqa: E731
        if symmetric:
            res = _integrate(g, x, hi, inner_spec.with_points(*[p for p in kinks if p > x]))
        else:
            pts = [x] if diag_singular else []
            res = _integrate(g, lo, hi, inner_spec.with_points(*pts, *kinks))
        scale = max(abs(res.value), inner_spec.abs_tol)
        worst_rel[0] = max(worst_rel[0], res.error_estimate / scale)
        return res.value

    def outer(xs):
        return np.array([inner(float(x)) for x in xs])

    outer_spec = spec.with_points(*[p for p in outer_points if lo < p < hi])
    res = _integrate(outer, lo, hi, outer_spec)
    if symmetric:
        res = IntegralResult(2 * res.value, 2 * res.error_estimate, res.subdivisions_used, res.converged)
    extra = worst_rel[0] * abs(res.value)
    return replace(res, error_estimate=res.error_estimate + extra)


def graded_rule(
    lo: float,
    hi: float,
    *,
    breaks: Sequence[float] = (),
    width: float = 0.5,
    grade: Sequence[float] = (),
    depth: int = 12,
    ratio: float = 0.15,
):
    """Nodes and weights of a fixed composite GL15 rule on [lo, hi].

    Panels are at most ``width`` wide and end at every break.  Around each
    point in ``grade`` extra edges sit at distances ``width * ratio**k``,
    k = 0..depth, so panels shrink geometrically toward it no matter where
    the breaks fall.  Returns ``(nodes, weights, n_panels)``.
    """
    if not hi > lo:
        return np.empty(0), np.empty(0), 0
    cuts = sorted({lo, hi, *(float(b) for b in breaks if lo < b < hi)})
    parts = [np.linspace(a, b, max(1, math.ceil((b - a) / width)) + 1) for a, b in zip(cuts, cuts[1:])]
    reach = min(width, hi - lo) * ratio ** np.arange(depth + 1)
    for g in grade:
        parts.append(g - reach)
        parts.append(g + reach)
    edges = np.concatenate(parts)
    edges = np.unique(edges[(edges >= lo) & (edges <= hi)])
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    weights = (half[:, None] * _WEIGHTS[None, :]).ravel()
    return nodes, weights, int(left.size)
