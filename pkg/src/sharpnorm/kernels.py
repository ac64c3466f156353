"""Kernel functions, Legendre functions of the second kind and physical constants.

Every kernel here is a function of positive arguments with a logarithmic
singularity on the diagonal.  Diagonal evaluations return ``+inf`` instead of
raising so that quadrature layers can detect them; nonpositive arguments raise
:class:`DomainError`.

All functions accept scalars or numpy arrays and broadcast.  Scalars in give
Python floats out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

__all__ = [
    "DomainError",
    "L_MAX",
    "PhysicalParams",
    "PartialWaveIndex",
    "KernelSpec",
    "Channel",
    "MomentumKernel",
    "g0",
    "g1",
    "g_l",
    "g_l_of_log_ratio",
    "legendre_q",
    "energy",
    "kernel_t",
    "kernel_t0",
    "kernel_k",
    "t_from_k",
    "critical_charge",
    "dominance_check",
    "DominanceResult",
    "index_set",
    "SHARP_CONSTANT",
    "FINE_STRUCTURE",
]

#: Largest Legendre index supported by :func:`legendre_q`.
L_MAX = 8

#: pi^2/4 + 1, the norm of the reduced Brown-Ravenhall operator.
SHARP_CONSTANT = math.pi**2 / 4 + 1

#: CODATA 2018 value.
FINE_STRUCTURE = 7.2973525693e-3

# below this ratio min/max the series form of Q_l is used, above it the
# closed form P_l*Q_0 - W_{l-1} (which is well conditioned only near z = 1)
_SERIES_SWITCH = 0.8
# g1 switches to its power series below this ratio
_G1_SERIES_SWITCH = 0.5
_G1_SERIES_TERMS = 32


class DomainError(ValueError):
    """Argument outside the domain of a kernel or special function."""


def _as_array(*args):
    arrs = [np.asarray(a, dtype=float) for a in args]
    scalar = all(a.ndim == 0 for a in arrs)
    return arrs, scalar


def _out(value, scalar):
    if scalar:
        return float(value)
    return value


def _require_positive(name, *arrays):
    for a in arrays:
        if np.any(np.isnan(a)):
            raise DomainError(f"{name}: NaN argument")
        if np.any(a <= 0):
            raise DomainError(f"{name}: arguments must be positive")


# ---------------------------------------------------------------------------
# g0, g1 written in terms of the ordered pair lo <= hi (lo/hi is the ratio
# reflected into (0, 1]); this keeps g(u) = g(1/u) exact and avoids forming
# u - 1 from a rounded quotient.
# ---------------------------------------------------------------------------


def _g0_pair(lo, hi):
    diff = hi - lo
    with np.errstate(divide="ignore"):
        return np.log1p(2.0 * lo / diff)


def _g1_pair(lo, hi):
    v = lo / hi
    g0v = _g0_pair(lo, hi)
    with np.errstate(invalid="ignore"):
        direct = 0.5 * (v + 1.0 / v) * g0v - 1.0
    # sum_{k>=1} 4k/(4k^2-1) v^{2k}; avoids the cancellation 1 - 1 for small v
    v2 = np.minimum(v, _G1_SERIES_SWITCH) ** 2
    series = np.zeros_like(v2)
    for k in range(_G1_SERIES_TERMS, 0, -1):
        series = (series + 4.0 * k / (4.0 * k * k - 1.0)) * v2
    return np.where(v < _G1_SERIES_SWITCH, series, direct)


def _ordered(u):
    lo = np.minimum(u, 1.0)
    hi = np.maximum(u, 1.0)
    return lo, hi


def g0(u):
    """log|(u+1)/(u-1)| for u > 0; ``inf`` at u = 1."""
    (u,), scalar = _as_array(u)
    _require_positive("g0", u)
    lo, hi = _ordered(u)
    return _out(_g0_pair(lo, hi), scalar)


def g1(u):
    """(u + 1/u)/2 * log|(u+1)/(u-1)| - 1 for u > 0; ``inf`` at u = 1."""
    (u,), scalar = _as_array(u)
    _require_positive("g1", u)
    lo, hi = _ordered(u)
    return _out(_g1_pair(lo, hi), scalar)


# ---------------------------------------------------------------------------
# Legendre functions of the second kind
# ---------------------------------------------------------------------------


def _legendre_p_all(l, z):
    """[P_0(z), ..., P_l(z)] by the three-term recurrence (stable for P)."""
    out = [np.ones_like(z), z]
    for n in range(1, l):
        out.append(((2 * n + 1) * z * out[n] - n * out[n - 1]) / (n + 1))
    return out[: l + 1]


def _q_closed_form(l, z, q0):
    """Q_l = P_l Q_0 - W_{l-1} with W_{l-1} = sum_k P_{k-1} P_{l-k} / k."""
    if l == 0:
        return q0
    p = _legendre_p_all(l, z)
    w = np.zeros_like(z)
    for k in range(1, l + 1):
        w = w + p[k - 1] * p[l - k] / k
    return p[l] * q0 - w


def _q_series(l, v):
    """Q_l(cosh eta) with v = exp(-eta) < 1, from the hypergeometric series

    Q_l = 2^(2l+1) (l!)^2/(2l+1)! * v^(l+1) * 2F1(1/2, l+1; l+3/2; v^2).
    """
    pref = 2.0 ** (2 * l + 1) * math.factorial(l) ** 2 / math.factorial(2 * l + 1)
    v2 = v * v
    term = np.ones_like(v)
    total = np.ones_like(v)
    k = 0
    while True:
        k += 1
        term = term * ((k - 0.5) * (l + k) / (k * (l + k + 0.5))) * v2
        total = total + term
        if np.all(term <= 1e-18 * total):
            break
        if k > 2000:  # unreachable for v <= _SERIES_SWITCH
            break
    return pref * v ** (l + 1) * total


def _q_from_ratio(l, lo, hi):
    """Q_l((lo/hi + hi/lo)/2) for 0 < lo <= hi, i.e. g_l at ratio lo/hi."""
    v = lo / hi
    out = np.empty_like(v)
    near = v >= _SERIES_SWITCH
    far = ~near
    if np.any(far):
        out[far] = _q_series(l, v[far])
    if np.any(near):
        vn, lon, hin = v[near], lo[near], hi[near]
        z = 0.5 * (vn + 1.0 / vn)
        with np.errstate(divide="ignore", invalid="ignore"):
            q0 = _g0_pair(lon, hin)  # Q_0(z) = log((1+v)/(1-v))
            q = _q_closed_form(l, z, q0)
        out[near] = np.where(np.isinf(q0), np.inf, q)
    return out


def legendre_q(l: int, z):
    """Legendre function of the second kind Q_l(z) for real z > 1.

    Near z = 1 the closed form ``P_l(z) Q_0(z) - W_{l-1}(z)`` is used; further
    out, where that form cancels catastrophically, the hypergeometric series
    in ``v = z - sqrt(z^2 - 1)`` is summed instead.
    """
    _check_order(l)
    (z,), scalar = _as_array(z)
    if np.any(np.isnan(z)) or np.any(z <= 1.0):
        raise DomainError("legendre_q: requires z > 1")
    z1 = np.atleast_1d(z)
    root = np.sqrt((z1 - 1.0) * (z1 + 1.0))
    v = 1.0 / (z1 + root)
    out = np.empty_like(z1)
    near = v >= _SERIES_SWITCH
    if np.any(~near):
        out[~near] = _q_series(l, v[~near])
    if np.any(near):
        zn = z1[near]
        q0 = 0.5 * np.log1p(2.0 / (zn - 1.0))
        out[near] = _q_closed_form(l, zn, q0)
    return _out(out.reshape(z.shape), scalar)


def _check_order(l):
    if int(l) != l or l < 0 or l > L_MAX:
        raise DomainError(f"Legendre index must be an integer in [0, {L_MAX}], got {l}")


def g_l(l: int, u):
    """Q_l((u + 1/u)/2); reduces to :func:`g0` for l = 0 and :func:`g1` for l = 1."""
    _check_order(l)
    (u,), scalar = _as_array(u)
    _require_positive("g_l", u)
    lo, hi = _ordered(np.atleast_1d(u))
    return _out(_q_from_ratio(l, lo, hi).reshape(u.shape), scalar)


def g_l_of_log_ratio(l: int, d):
    """g_l(exp(d)), accurate for small |d| (no rounding of exp(d) - 1)."""
    _check_order(l)
    (d,), scalar = _as_array(d)
    ad = np.abs(np.atleast_1d(d))
    return _out(_q_from_log_ratio(l, ad).reshape(d.shape), scalar)


def _q_from_log_ratio(l, ad):
    v = np.exp(-ad)
    out = np.empty_like(v)
    far = v < _SERIES_SWITCH
    if np.any(far):
        out[far] = _q_series(l, v[far])
    near = ~far
    if np.any(near):
        a = ad[near]
        with np.errstate(divide="ignore"):
            q0 = -np.log(np.tanh(0.5 * a))
        z = np.cosh(a)
        q = _q_closed_form(l, z, q0)
        out[near] = np.where(np.isinf(q0), np.inf, q)
    return out


# ---------------------------------------------------------------------------
# Physics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhysicalParams:
    """Units and couplings; hbar = 1 throughout."""

    m: float = 1.0
    c: float = 1.0
    alpha: float = FINE_STRUCTURE
    Z: float = 0.0

    def __post_init__(self):
        if not self.m >= 0:
            raise DomainError("mass must be nonnegative")
        if not self.c > 0:
            raise DomainError("light speed must be positive")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not self.Z >= 0:
            raise DomainError("Z must be nonnegative")

    @property
    def rest_energy(self) -> float:
        return self.m * self.c**2

    @property
    def critical_charge(self) -> float:
        return critical_charge(self.alpha)


@dataclass(frozen=True)
class PartialWaveIndex:
    """Channel label (l, m, s).  ``m`` is optional and only checked, never used."""

    l: int
    s: float
    m: float | None = None

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 0:
            raise DomainError(f"l must be a nonnegative integer, got {self.l}")
        if self.s not in (0.5, -0.5):
            raise DomainError(f"s must be +1/2 or -1/2, got {self.s}")
        if self.s == -0.5 and self.l < 1:
            raise DomainError("s = -1/2 requires l >= 1")
        if self.m is not None:
            if (2 * self.m) % 2 != 1:
                raise DomainError("m must be a half-integer")
            top = self.l + 0.5
            if abs(self.m) > top:
                raise DomainError("|m| exceeds l + 1/2")
            if self.s == -0.5 and abs(self.m) == top:
                raise DomainError("|m| = l + 1/2 is excluded when s = -1/2")

    @property
    def partner(self) -> int:
        """Legendre index l + 2s of the lower-component term."""
        return int(self.l + 2 * self.s)


def index_set(l_max: int) -> Iterator[PartialWaveIndex]:
    """All admissible (l, m, s) with l <= l_max."""
    for l in range(l_max + 1):
        for s in (0.5, -0.5):
            for twice_m in range(-(2 * l + 1), 2 * l + 2, 2):
                m = twice_m / 2
                if s == -0.5 and abs(m) == l + 0.5:
                    continue
                yield PartialWaveIndex(l, s, m)


def energy(p, params: PhysicalParams = PhysicalParams()):
    """Free relativistic energy sqrt(c^2 p^2 + m^2 c^4)."""
    (p,), scalar = _as_array(p)
    if np.any(np.isnan(p)) or np.any(p < 0):
        raise DomainError("energy: momentum must be nonnegative")
    c, m = params.c, params.m
    return _out(np.hypot(c * p, m * c * c), scalar)


def _upper_weight(x):
    # sqrt((X+1)/X^2), X = sqrt(x^2+1)
    X = np.hypot(x, 1.0)
    return np.sqrt(X + 1.0) / X


def _lower_weight(x):
    # sqrt((X-1)/X^2) with X - 1 = x^2/(X+1)
    X = np.hypot(x, 1.0)
    return x / (X * np.sqrt(X + 1.0))


def kernel_t(x, y):
    """The reduced Brown-Ravenhall kernel t(x, y) on (0, inf)^2."""
    (x, y), scalar = _as_array(x, y)
    _require_positive("kernel_t", x, y)
    x, y = np.broadcast_arrays(x, y)
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    val = 0.5 * (
        _upper_weight(x) * _upper_weight(y) * _g0_pair(lo, hi)
        + _lower_weight(x) * _lower_weight(y) * _g1_pair(lo, hi)
    )
    return _out(val, scalar)


def kernel_t0(x, y):
    """Massless kernel (g0(x/y) + g1(x/y)) / (2 sqrt(xy)); homogeneous of degree -1."""
    (x, y), scalar = _as_array(x, y)
    _require_positive("kernel_t0", x, y)
    x, y = np.broadcast_arrays(x, y)
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    val = (_g0_pair(lo, hi) + _g1_pair(lo, hi)) / (2.0 * np.sqrt(x) * np.sqrt(y))
    return _out(val, scalar)


def _g_pair(l, lo, hi):
    if l == 0:
        return _g0_pair(lo, hi)
    if l == 1:
        return _g1_pair(lo, hi)
    shape = lo.shape
    return _q_from_ratio(l, lo.ravel(), hi.ravel()).reshape(shape)


def kernel_k(idx: PartialWaveIndex, p_prime, p, params: PhysicalParams = PhysicalParams()):
    """Partial-wave kernel k_{l,s}(p', p) in momentum space.

    The Legendre argument is (p/p' + p'/p)/2.  Only ``m`` and ``c`` of
    ``params`` enter, through e(p) and e(0).
    """
    if idx.partner > L_MAX or idx.l > L_MAX:
        raise DomainError(f"Legendre index above {L_MAX}")
    (pp, p), scalar = _as_array(p_prime, p)
    _require_positive("kernel_k", pp, p)
    pp, p = np.broadcast_arrays(pp, p)
    lo, hi = np.minimum(pp, p), np.maximum(pp, p)
    c = params.c
    e0 = params.rest_energy
    e, ep = np.hypot(c * p, e0 * 1.0), np.hypot(c * pp, e0 * 1.0)
    num = (ep + e0) * _g_pair(idx.l, lo, hi) * (e + e0) + c * c * pp * _g_pair(idx.partner, lo, hi) * p
    den = np.sqrt(2.0 * e * (e + e0)) * np.sqrt(2.0 * ep * (ep + e0))
    return _out(num / den, scalar)


def t_from_k(x, y, params: PhysicalParams = PhysicalParams()):
    """Reduced kernel obtained from k_{0,1/2} by p = mcx and phi = sqrt(e) a.

    Equals :func:`kernel_t` for every m, c > 0; the factor m c^2 makes the
    result independent of units.
    """
    if params.m <= 0:
        raise DomainError("t_from_k needs m > 0; use the massless reduction instead")
    (x, y), scalar = _as_array(x, y)
    _require_positive("t_from_k", x, y)
    mc = params.m * params.c
    k = kernel_k(PartialWaveIndex(0, 0.5), mc * y, mc * x, params)
    ex = np.hypot(params.c * mc * x, params.rest_energy)
    ey = np.hypot(params.c * mc * y, params.rest_energy)
    return _out(params.rest_energy * np.asarray(k) / np.sqrt(ex * ey), scalar)


@dataclass(frozen=True)
class MomentumKernel:
    """k_{l,s}(p', p) as a callable with its separable channel form

    k = A(p') A(p) g_l + B(p') B(p) g_{l+2s},
    A = sqrt((e + e0) / 2e),  B = c p / sqrt(2e (e + e0)).
    """

    index: PartialWaveIndex
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def _upper(self, p):
        e0 = self.params.rest_energy
        e = np.hypot(self.params.c * p, e0)
        return np.sqrt((e + e0) / (2.0 * e))

    def _lower(self, p):
        c, e0 = self.params.c, self.params.rest_energy
        e = np.hypot(c * p, e0)
        return c * p / np.sqrt(2.0 * e * (e + e0))

    def channels(self) -> list["Channel"]:
        return [Channel(1.0, self._upper, self.index.l), Channel(1.0, self._lower, self.index.partner)]

    def __call__(self, p_prime, p):
        return kernel_k(self.index, p_prime, p, self.params)


@dataclass(frozen=True)
class DominanceResult:
    index: PartialWaveIndex
    max_ratio: float
    violations: int


def dominance_check(
    l_max: int = 4,
    n: int = 50,
    lo: float = 1e-2,
    hi: float = 1e2,
    params: PhysicalParams = PhysicalParams(),
    slack: float = 1e-12,
) -> list[DominanceResult]:
    """Compare every k_{l,s}, 1 <= l <= l_max, with k_{0,1/2} on an n x n log grid.

    A violation is a grid point with k_{l,s} > k_{0,1/2} (1 + slack).  The
    diagonal is skipped.
    """
    p = np.geomspace(lo, hi, n)
    pp, qq = np.meshgrid(p, p, indexing="ij")
    off = pp != qq
    top = np.asarray(kernel_k(PartialWaveIndex(0, 0.5), pp[off], qq[off], params))
    out = []
    for l in range(1, l_max + 1):
        for s in (0.5, -0.5):
            idx = PartialWaveIndex(l, s)
            if idx.partner > L_MAX:
                continue
            val = np.asarray(kernel_k(idx, pp[off], qq[off], params))
            out.append(DominanceResult(idx, float(np.max(val / top)), int(np.sum(val > top * (1 + slack)))))
    return out


def critical_charge(alpha: float) -> float:
    """Z_c = 2 / ((pi/2 + 2/pi) alpha)."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return 2.0 / ((math.pi / 2 + 2 / math.pi) * alpha)


# ---------------------------------------------------------------------------
# Kernel families
# ---------------------------------------------------------------------------


def _inv_sqrt(x):
    return 1.0 / np.sqrt(x)


@dataclass(frozen=True)
class Channel:
    """One separable log-singular piece  weight * a(x) a(y) g_l(x/y)."""

    weight: float
    coef: Callable[[np.ndarray], np.ndarray]
    order: int


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family on (0, inf)^2.

    family
        ``"t"`` (massive reduced kernel), ``"t0"`` (massless), ``"g"``
        (homogeneous g_l(x/y)/sqrt(xy)) or ``"k"`` (reduced partial-wave
        kernel built from k_{l,s}; for l = 0, s = 1/2 this is ``"t"``).
    factor
        Overall multiplier, e.g. 0.5 for the halved homogeneous kernel.
    """

    family: str = "t"
    l: int = 0
    index: PartialWaveIndex | None = None
    params: PhysicalParams = field(default_factory=PhysicalParams)
    factor: float = 1.0

    def __post_init__(self):
        if self.family not in ("t", "t0", "g", "k"):
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.family == "g":
            _check_order(self.l)
        if self.family == "k":
            if self.index is None:
                raise DomainError("family 'k' needs a PartialWaveIndex")
            if self.index.partner > L_MAX:
                raise DomainError(f"Legendre index above {L_MAX}")

    @classmethod
    def massive(cls) -> "KernelSpec":
        return cls("t")

    @classmethod
    def massless(cls) -> "KernelSpec":
        return cls("t0")

    @classmethod
    def homogeneous(cls, l: int = 0, factor: float = 1.0) -> "KernelSpec":
        return cls("g", l=l, factor=factor)

    @classmethod
    def partial_wave(cls, l: int, s: float, params: PhysicalParams | None = None) -> "KernelSpec":
        return cls("k", index=PartialWaveIndex(l, s), params=params or PhysicalParams())

    @property
    def label(self) -> str:
        if self.family == "g":
            base = f"g{self.l}"
        elif self.family == "k":
            base = f"k[l={self.index.l},s={self.index.s:+.1f}]"
        else:
            base = self.family
        return base if self.factor == 1.0 else f"{self.factor:g}*{base}"

    def channels(self) -> list[Channel]:
        f = self.factor
        if self.family == "t":
            return [Channel(0.5 * f, _upper_weight, 0), Channel(0.5 * f, _lower_weight, 1)]
        if self.family == "t0":
            return [Channel(0.5 * f, _inv_sqrt, 0), Channel(0.5 * f, _inv_sqrt, 1)]
        if self.family == "g":
            return [Channel(f, _inv_sqrt, self.l)]
        return [
            Channel(0.5 * f, _upper_weight, self.index.l),
            Channel(0.5 * f, _lower_weight, self.index.partner),
        ]

    def __call__(self, x, y):
        if self.family == "t":
            return self.factor * np.asarray(kernel_t(x, y)) if self.factor != 1.0 else kernel_t(x, y)
        if self.family == "t0":
            return self.factor * np.asarray(kernel_t0(x, y)) if self.factor != 1.0 else kernel_t0(x, y)
        (x, y), scalar = _as_array(x, y)
        _require_positive("kernel", x, y)
        x, y = np.broadcast_arrays(x, y)
        lo, hi = np.minimum(x, y), np.maximum(x, y)
        val = np.zeros(np.broadcast(x, y).shape)
        for ch in self.channels():
            val = val + ch.weight * ch.coef(x) * ch.coef(y) * _g_pair(ch.order, lo, hi)
        return _out(val, scalar)
