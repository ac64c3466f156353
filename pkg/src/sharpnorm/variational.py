"""Lower bounds from trial functions, and the scalar-channel stability form.

Quadratic forms are integrated in logarithmic coordinates x = e^s, where the
trial functions chi_(1,delta)(x)/sqrt(x) become flat and the kernels vary on
an O(1) scale.  The diagonal singularity is handled by integrating only the
half y >= x and doubling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import BSpline

from .kernels import (
    SHARP_CONSTANT,
    KernelSpec,
    PartialWaveIndex,
    PhysicalParams,
    critical_charge,
    g0,
    g1,
    g_l,
    g_l_of_log_ratio,
    MomentumKernel,
    kernel_t,
)
from .quadrature import (
    IntegralResult,
    NonConvergence,
    QuadratureError,
    QuadSpec,
    graded_rule,
    integrate_interval,
)
from .schur import homogeneous_norm

__all__ = [
    "ChiOverSqrt",
    "CustomTestFunction",
    "RadialChannelFunction",
    "ZeroNorm",
    "quadratic_form",
    "rayleigh_quotient",
    "homogeneous_rayleigh_1d",
    "reference_norm",
    "RayleighScan",
    "rayleigh_scan",
    "fit_log_deficit",
    "dominated_limit_integrand",
    "dominating_bound",
    "pointwise_limit",
    "lhopital_integral",
    "stability_form",
    "StabilityReport",
    "stability_check",
    "random_bumps",
]


class ZeroNorm(ValueError):
    """Trial function has zero L^2 norm."""


# ---------------------------------------------------------------------------
# Trial functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChiOverSqrt:
    """chi_(1, delta)(x) / sqrt(x), with squared norm ln(delta)."""

    delta: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.delta > 1:
            raise ValueError("delta must exceed 1")

    @property
    def support(self) -> tuple[float, float]:
        return (1.0, float(self.delta))

    @property
    def knots(self) -> tuple[float, ...]:
        return ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 1.0) & (x <= self.delta)
        return np.where(inside, self.scale / np.sqrt(x), 0.0)

    def log_density(self, s):
        """e^(s/2) phi(e^s): constant on the support."""
        return np.full_like(np.asarray(s, dtype=float), self.scale)

    def norm_sq(self, spec: QuadSpec = QuadSpec()) -> float:
        return self.scale**2 * math.log(self.delta)

    def scaled(self, c: float) -> "ChiOverSqrt":
        return ChiOverSqrt(self.delta, self.scale * c)


@dataclass(frozen=True)
class CustomTestFunction:
    """A user-supplied square-integrable function with compact support."""

    func: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    label: str = "custom"
    knots: tuple[float, ...] = ()

    def __post_init__(self):
        a, b = self.support
        if not 0 < a < b < math.inf:
            raise ValueError("support must be a bounded interval inside (0, inf)")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.support
        inside = (x >= a) & (x <= b)
        return np.where(inside, self.func(np.clip(x, a, b)), 0.0)

    def log_density(self, s):
        x = np.exp(s)
        return self(x) * np.sqrt(x)

    def norm_sq(self, spec: QuadSpec = QuadSpec()) -> float:
        a, b = self.support
        res = integrate_interval(
            lambda s: self.log_density(s) ** 2,
            math.log(a),
            math.log(b),
            spec.with_points(*[math.log(k) for k in self.knots]),
        )
        return res.value

    def scaled(self, c: float) -> "CustomTestFunction":
        f = self.func
        return CustomTestFunction(lambda x: c * f(x), self.support, f"{c:g}*{self.label}", self.knots)


@dataclass(frozen=True)
class RadialChannelFunction:
    """A radial amplitude a(p) on the momentum axis."""

    a: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    label: str = "a"
    knots: tuple[float, ...] = ()

    def as_test_function(self) -> CustomTestFunction:
        return CustomTestFunction(self.a, self.support, self.label, self.knots)


# ---------------------------------------------------------------------------
# Quadratic forms and Rayleigh quotients
# ---------------------------------------------------------------------------


_FORM_LEVELS = 4


def _offset_kernel(kernel):
    """Return K~(s, w) = K(e^s, e^(s+w)) e^(s + w/2) for offsets w > 0.

    Kernels exposing ``channels()`` are evaluated from the exact offset, so
    nothing is lost to rounding of e^(s+w) - e^s near the diagonal.
    """
    if hasattr(kernel, "channels"):
        chans = kernel.channels()

        def K(s, w):
            r = s + w
            total = np.zeros_like(s)
            for ch in chans:
                alpha_s = ch.coef(np.exp(s)) * np.exp(0.5 * s)
                alpha_r = ch.coef(np.exp(r)) * np.exp(0.5 * r)
                total += ch.weight * alpha_s * alpha_r * g_l_of_log_ratio(ch.order, w)
            return total

        return K

    def K(s, w):
        # offsets below one ulp would put y on the diagonal; their weight is negligible
        x = np.exp(s)
        y = np.maximum(np.exp(s + w), np.nextafter(x, np.inf))
        return np.asarray(kernel(x, y), dtype=float) * np.sqrt(x) * np.sqrt(y)

    return K


def _log_form_once(K, density, a, b, breaks, width, depth):
    s, ws, n_out = graded_rule(a, b, breaks=breaks, width=width, grade=[b, *breaks], depth=depth)
    offsets, weights, owner = [], [], []
    panels = n_out
    for i, si in enumerate(s):
        inner = [k - si for k in breaks if k > si]
        w, wt, n_in = graded_rule(0.0, b - si, breaks=inner, width=width, grade=[0.0], depth=depth)
        offsets.append(w)
        weights.append(wt)
        owner.append(np.full(w.size, i))
        panels += n_in
    w = np.concatenate(offsets)
    wt = np.concatenate(weights)
    owner = np.concatenate(owner)
    s_rep = s[owner]
    vals = K(s_rep, w) * density(s_rep + w) * wt
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("quadratic form integrand not finite")
    inner_sums = np.bincount(owner, weights=vals, minlength=s.size)
    return 2.0 * math.fsum(ws * density(s) * inner_sums), panels


def _log_form(kernel, density, support, knots, spec):
    """int int K(x, y) phi(x) phi(y) dx dy in log coordinates, where
    ``density(s) = e^(s/2) phi(e^s)`` and K is symmetric.

    Only the half r >= s is integrated (then doubled), with the inner rule
    graded toward the diagonal.  The estimate is repeated on finer meshes
    until two successive levels agree.
    """
    a, b = math.log(support[0]), math.log(support[1])
    breaks = sorted({math.log(k) for k in knots} | {0.0})
    breaks = [k for k in breaks if a < k < b]
    K = _offset_kernel(kernel)
    prev, used = None, 0
    for level in range(_FORM_LEVELS):
        val, panels = _log_form_once(K, density, a, b, breaks, 0.5 / 2**level, 10 + 4 * level)
        used += panels
        if prev is not None:
            err = abs(val - prev)
            if err <= spec.target(val):
                return IntegralResult(val, err, used, True)
        prev = val
    res = IntegralResult(val, err, used, False)
    raise NonConvergence(f"quadratic form not converged (error {err:.3g})", res)


def quadratic_form(kernel: Callable, phi, spec: QuadSpec = QuadSpec()) -> IntegralResult:
    """(K phi, phi) for a symmetric kernel with a diagonal log singularity."""
    return _log_form(kernel, phi.log_density, phi.support, phi.knots, spec)


def rayleigh_quotient(kernel: Callable, phi, spec: QuadSpec = QuadSpec()) -> float:
    """(K phi, phi) / ||phi||^2."""
    norm = phi.norm_sq(spec)
    if not norm > 0:
        raise ZeroNorm("trial function has zero norm")
    return quadratic_form(kernel, phi, spec).value / norm


def homogeneous_rayleigh_1d(g: Callable, delta: float, spec: QuadSpec = QuadSpec()) -> float:
    """Quotient of g(x/y)/sqrt(xy) at chi_(1,delta)/sqrt(x), reduced to one
    dimension:  (2/L) int_0^L g(e^w) (L - w) dw  with L = ln(delta).

    ``g`` here takes the log-ratio w.
    """
    L = math.log(delta)
    res = integrate_interval(lambda w: g(w) * (L - w), 0.0, L, spec)
    return 2.0 * res.value / L


def reference_norm(kernel: KernelSpec, spec: QuadSpec = QuadSpec()) -> float | None:
    """Known operator norm of a kernel family, where one is available."""
    if kernel.family in ("t", "t0"):
        return kernel.factor * SHARP_CONSTANT
    if kernel.family == "g":
        return kernel.factor * homogeneous_norm(lambda u: g_l(kernel.l, u), spec)
    return None


@dataclass
class RayleighScan:
    deltas: list[float]
    quotients: list[float]
    bound: float | None
    fit_limit: float
    fit_coeffs: tuple[float, float]
    fit_residual: float
    rows: list[tuple[float, float]] = field(default_factory=list)

    @property
    def deficits(self) -> list[float]:
        if self.bound is None:
            return []
        return [self.bound - q for q in self.quotients]

    @property
    def below_bound(self) -> bool:
        return self.bound is None or all(q < self.bound for q in self.quotients)

    @property
    def increasing(self) -> bool:
        return all(b > a for a, b in zip(self.quotients, self.quotients[1:]))


def fit_log_deficit(deltas: Sequence[float], quotients: Sequence[float]):
    """Least-squares fit  q = limit - c1/ln(delta) - c2/ln(delta)^2.

    Returns (limit, (c1, c2), rms residual).
    """
    L = np.log(np.asarray(deltas, dtype=float))
    q = np.asarray(quotients, dtype=float)
    A = np.column_stack([np.ones_like(L), -1.0 / L, -1.0 / L**2])
    coef, *_ = np.linalg.lstsq(A, q, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - q) ** 2)))
    return float(coef[0]), (float(coef[1]), float(coef[2])), resid


def rayleigh_scan(kernel: KernelSpec, deltas: Sequence[float], spec: QuadSpec = QuadSpec()) -> RayleighScan:
    """Quotients at f_delta for increasing delta, with the 1/ln(delta) fit."""
    deltas = [float(d) for d in deltas]
    if any(d <= 1 for d in deltas) or any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be increasing and > 1")
    if len(deltas) < 3:
        raise ValueError("need at least three deltas for the fit")
    quotients = [rayleigh_quotient(kernel, ChiOverSqrt(d), spec) for d in deltas]
    limit, coeffs, resid = fit_log_deficit(deltas, quotients)
    return RayleighScan(
        deltas=deltas,
        quotients=quotients,
        bound=reference_norm(kernel, spec),
        fit_limit=limit,
        fit_coeffs=coeffs,
        fit_residual=resid,
        rows=list(zip(deltas, quotients)),
    )


# ---------------------------------------------------------------------------
# Dominated convergence for f_delta
# ---------------------------------------------------------------------------


def dominated_limit_integrand(delta, u):
    """delta t(delta, delta u) / sqrt(u) for 0 < u < 1."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u >= 1):
        raise ValueError("u must lie in (0, 1)")
    if not delta > 1:
        raise ValueError("delta must exceed 1")
    val = delta * np.asarray(kernel_t(delta, delta * u)) / np.sqrt(u)
    return float(val) if val.ndim == 0 else val


def dominating_bound(u):
    """(g0(u) + g1(u)) / u, integrable on (0, 1)."""
    u = np.asarray(u, dtype=float)
    val = (np.asarray(g0(u)) + np.asarray(g1(u))) / u
    return float(val) if val.ndim == 0 else val


def pointwise_limit(u):
    """(g0(u) + g1(u)) / (2u), the delta -> inf limit of the integrand."""
    return 0.5 * dominating_bound(u)


def lhopital_integral(delta: float, spec: QuadSpec = QuadSpec()) -> float:
    """2 int_{1/delta}^1 delta t(delta, delta u) u^(-1/2) du; tends to pi^2/4 + 1."""
    res = integrate_interval(lambda u: dominated_limit_integrand(delta, u), 1.0 / delta, 1.0, spec)
    return 2.0 * res.value


# ---------------------------------------------------------------------------
# Stability of the scalar channel
# ---------------------------------------------------------------------------


def _stability_parts(a: RadialChannelFunction, params: PhysicalParams, spec: QuadSpec):
    """(int e a^2, int int a k_{0,1/2} a, int a^2)."""
    phi = a.as_test_function()
    lo, hi = math.log(a.support[0]), math.log(a.support[1])
    pts = [math.log(k) for k in a.knots]
    s_spec = spec.with_points(*pts)

    def weighted(s, w):
        p = np.exp(s)
        return w(p) * phi(p) ** 2 * p

    kinetic = integrate_interval(
        lambda s: weighted(s, lambda p: np.hypot(params.c * p, params.rest_energy)), lo, hi, s_spec
    ).value
    norm = integrate_interval(lambda s: weighted(s, np.ones_like), lo, hi, s_spec).value
    potential = quadratic_form(MomentumKernel(PartialWaveIndex(0, 0.5), params), phi, spec).value
    return kinetic, potential, norm


def stability_form(
    a: RadialChannelFunction, Z: float, params: PhysicalParams = PhysicalParams(), spec: QuadSpec = QuadSpec()
) -> float:
    """int e |a|^2 dp - (alpha c Z / pi) int int a(p') k_{0,1/2}(p', p) a(p) dp dp'."""
    kinetic, potential, _ = _stability_parts(a, params, spec)
    return kinetic - params.alpha * params.c * Z / math.pi * potential


@dataclass
class StabilityReport:
    Z: float
    form_value: float
    bound_value: float
    margin: float
    norm_sq: float

    @property
    def z_fraction(self) -> float:
        return self.Z

    def ok(self, tol: float = 1e-8) -> bool:
        return self.margin >= -tol


def stability_check(
    a: RadialChannelFunction,
    Z: float | Sequence[float],
    params: PhysicalParams = PhysicalParams(),
    spec: QuadSpec = QuadSpec(),
):
    """Margin  form - (1 - Z/Z_c) m c^2 ||a||^2, which must be >= 0 for Z <= Z_c.

    ``Z`` may be a sequence; the double integral is computed once and
    reused.  Returns one report, or a list for sequence input.
    """
    zs = [float(z) for z in np.atleast_1d(Z)]
    zc = critical_charge(params.alpha)
    if any(z < 0 or z > zc * (1 + 1e-12) for z in zs):
        raise ValueError(f"stability bound needs 0 <= Z <= Z_c = {zc}")
    kinetic, potential, norm = _stability_parts(a, params, spec)
    reports = []
    for z in zs:
        form = kinetic - params.alpha * params.c * z / math.pi * potential
        bound = (1.0 - z / zc) * params.rest_energy * norm
        reports.append(StabilityReport(z, form, bound, form - bound, norm))
    return reports if np.ndim(Z) else reports[0]


def random_bumps(
    n: int, seed: int, lo: float = 1e-2, hi: float = 1e2, min_decades: float = 0.2
) -> list[RadialChannelFunction]:
    """Normalized cubic B-spline bumps (cubic in log p) with log-uniform
    random supports inside [lo, hi]."""
    rng = np.random.default_rng(seed)
    llo, lhi = math.log10(lo), math.log10(hi)
    bumps = []
    for i in range(n):
        while True:
            ends = np.sort(rng.uniform(llo, lhi, 2))
            if ends[1] - ends[0] >= min_decades:
                break
        inner = np.sort(rng.uniform(ends[0], ends[1], 3))
        knots10 = np.concatenate([[ends[0]], inner, [ends[1]]])
        t = knots10 * math.log(10.0)
        spline = BSpline.basis_element(t, extrapolate=False)

        def amp(p, spline=spline, t=t):
            s = np.log(np.asarray(p, dtype=float))
            return np.nan_to_num(spline(np.clip(s, t[0], t[-1])))

        support = (10.0 ** ends[0], 10.0 ** ends[1])
        knots = tuple(float(k) for k in 10.0**inner)
        raw = RadialChannelFunction(amp, support, f"bump{i}", knots)
        norm = raw.as_test_function().norm_sq(QuadSpec(rel_tol=1e-12))
        scale = 1.0 / math.sqrt(norm)
        bumps.append(
            RadialChannelFunction(lambda p, f=amp, c=scale: c * f(p), support, f"bump{i}", knots)
        )
    return bumps

