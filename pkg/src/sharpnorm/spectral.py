"""Nystrom discretization of the kernels and their largest eigenvalue.

The operator on L^2(0, inf) is conjugated to log coordinates, where
K~(s, r) = K(e^s, e^r) e^((s+r)/2) acts on L^2(ds).  The mesh is composite
Gauss-Legendre on panels of equal width in s (a fixed number of nodes per
decade), with a few geometrically shrinking panels at each end.

Off-diagonal entries are plain kernel values.  The log singularity is
absorbed in the diagonal by singularity subtraction: for each channel
alpha(s) alpha(r) g(s - r),

    int g(s_i - r) alpha(r) u(r) dr
      = int g(s_i - r) [alpha(r) u(r) - alpha(s_i) u_i] dr
        + alpha(s_i) u_i int g(s_i - r) dr,

where the first integral is left to the quadrature (its integrand vanishes
at r = s_i) and the second is done accurately over the node's own panel
and its neighbours.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse.linalg

from .kernels import KernelSpec, g_l_of_log_ratio
from .quadrature import graded_rule
from .variational import reference_norm

__all__ = [
    "MeshTooCoarse",
    "NoConvergence",
    "InsufficientData",
    "NystromDiscretization",
    "SpectralResult",
    "build_nystrom",
    "largest_eigenvalue",
    "discretization_estimate",
    "ConvergenceStudy",
    "norm_convergence_study",
    "fit_effective_length",
    "EscapeReport",
    "extremal_escape_diagnostic",
    "mass_median",
    "export_csv",
    "load_csv",
]

PANEL_ORDER = 8
DENSE_LIMIT = 2000
CORRECTION_LIMIT = 0.2
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(PANEL_ORDER)


class MeshTooCoarse(ValueError):
    """The diagonal correction dominates some row; refine the mesh."""


class NoConvergence(ArithmeticError):
    """Eigen-solver residual above tolerance; ``result`` holds the best iterate."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NystromDiscretization:
    kernel: KernelSpec
    domain: tuple[float, float]
    nodes: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    per_decade: int
    diagonal: str
    correction_fraction: float

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass(frozen=True, eq=False)
class SpectralResult:
    lambda_max: float
    eigenvector: np.ndarray
    residual: float
    iterations: int
    domain: tuple[float, float] = (math.nan, math.nan)
    nodes: np.ndarray = field(default_factory=lambda: np.empty(0))


def _panel_edges(a: float, b: float, per_decade: int, end_levels: int, ratio: float) -> np.ndarray:
    panels_per_decade = max(1, round(per_decade / PANEL_ORDER))
    width = math.log(10.0) / panels_per_decade
    n = max(2, math.ceil((b - a) / width - 1e-9))
    edges = np.linspace(a, b, n + 1)
    h = edges[1] - edges[0]
    if end_levels:
        steps = h * ratio ** np.arange(end_levels, 0, -1)
        edges = np.unique(np.concatenate([edges, a + steps, b - steps]))
    return edges


def _local_log_integral(order: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """int_{-lo}^{hi} g_order(e^w) dw for each pair (lo, hi) of positive reaches."""
    out = np.empty(lo.size)
    for i, (p, q) in enumerate(zip(lo, hi)):
        total = 0.0
        for reach in (p, q):
            w, wt, _ = graded_rule(0.0, reach, width=0.25, grade=[0.0], depth=24)
            total += float(wt @ g_l_of_log_ratio(order, w))
        out[i] = total
    return out


def build_nystrom(
    kernel: KernelSpec,
    eps: float,
    R: float,
    n: int | None = None,
    *,
    per_decade: int = 40,
    diagonal: str = "product",
    end_levels: int = 4,
    end_ratio: float = 0.25,
) -> NystromDiscretization:
    """Symmetric Nystrom matrix for ``kernel`` on [eps, R].

    Resolution is ``per_decade`` nodes per decade of x.  If ``n`` is given
    it overrides that, spreading about ``n`` nodes over the whole domain.
    ``diagonal="ignore"`` zeroes the diagonal instead of correcting it.
    """
    if not 0 < eps < R < math.inf:
        raise ValueError("need 0 < eps < R < inf")
    if diagonal not in ("product", "ignore"):
        raise ValueError(f"unknown diagonal mode {diagonal!r}")
    a, b = math.log(eps), math.log(R)
    decades = (b - a) / math.log(10.0)
    if n is not None:
        if n < 16:
            raise ValueError("n must be at least 16")
        per_decade = max(PANEL_ORDER, round(n / decades))
    edges = _panel_edges(a, b, per_decade, end_levels, end_ratio)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    s = ((left + right)[:, None] * 0.5 + half[:, None] * _NODES[None, :]).ravel()
    w = (half[:, None] * _WEIGHTS[None, :]).ravel()
    panel = np.repeat(np.arange(left.size), PANEL_ORDER)

    chans = kernel.channels()
    diff = s[:, None] - s[None, :]
    off = ~np.eye(s.size, dtype=bool)
    B = np.zeros((s.size, s.size))
    diag = np.zeros(s.size)
    for ch in chans:
        alpha = ch.coef(np.exp(s)) * np.exp(0.5 * s)
        g = np.zeros_like(diff)
        g[off] = g_l_of_log_ratio(ch.order, diff[off])
        B += ch.weight * np.outer(alpha, alpha) * g
        if diagonal == "product":
            lo_panel = np.maximum(panel - 1, 0)
            hi_panel = np.minimum(panel + 1, left.size - 1)
            lo, hi = left[lo_panel], right[hi_panel]
            exact = _local_log_integral(ch.order, s - lo, hi - s)
            local = (panel[None, :] >= lo_panel[:, None]) & (panel[None, :] <= hi_panel[:, None])
            assigned = np.sum(np.where(local, g * w[None, :], 0.0), axis=1)
            diag += ch.weight * alpha**2 * (exact - assigned) / w
    sq = np.sqrt(w)
    M = sq[:, None] * B * sq[None, :]
    M[np.diag_indices_from(M)] = diag * w
    M = 0.5 * (M + M.T)

    row = np.sum(np.abs(M), axis=1)
    frac = float(np.max(np.abs(np.diag(M)) / row)) if diagonal == "product" else 0.0
    if frac > CORRECTION_LIMIT:
        raise MeshTooCoarse(f"diagonal correction is {frac:.0%} of a row; increase per_decade")
    return NystromDiscretization(
        kernel=kernel,
        domain=(float(eps), float(R)),
        nodes=np.exp(s),
        weights=w * np.exp(s),
        matrix=M,
        per_decade=int(per_decade),
        diagonal=diagonal,
        correction_fraction=frac,
    )


def largest_eigenvalue(d: NystromDiscretization | np.ndarray, tol: float = 1e-10) -> SpectralResult:
    """Largest eigenvalue of the symmetric matrix, with a residual check.

    Dense symmetric solver up to 2000 unknowns, Lanczos (ARPACK) above.
    The eigenvector is returned with unit norm and nonnegative sum.
    """
    M = d.matrix if isinstance(d, NystromDiscretization) else np.atleast_2d(np.asarray(d, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    n = M.shape[0]
    if n <= DENSE_LIMIT:
        vals, vecs = scipy.linalg.eigh(M, subset_by_index=[n - 1, n - 1])
        lam, v, iterations = float(vals[0]), vecs[:, 0], 1
    else:
        count = [0]

        def matvec(x):
            count[0] += 1
            return M @ x

        op = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec, dtype=float)
        vals, vecs = scipy.sparse.linalg.eigsh(op, k=1, which="LA", tol=tol * 1e-2, v0=np.ones(n))
        lam, v, iterations = float(vals[0]), vecs[:, 0], count[0]
    v = v / np.linalg.norm(v)
    if v.sum() < 0:
        v = -v
    residual = float(np.linalg.norm(M @ v - lam * v) / abs(lam)) if lam != 0 else float(np.linalg.norm(M @ v))
    domain, nodes = ((d.domain, d.nodes) if isinstance(d, NystromDiscretization) else ((math.nan, math.nan), np.empty(0)))
    res = SpectralResult(lam, v, residual, iterations, domain, nodes)
    if residual > tol:
        raise NoConvergence(f"eigen residual {residual:.3g} above {tol:.3g}", res)
    return res


def discretization_estimate(d: NystromDiscretization, tol: float = 1e-10) -> float:
    """|lambda(mesh) - lambda(mesh at half resolution)|."""
    coarse = build_nystrom(d.kernel, *d.domain, per_decade=max(PANEL_ORDER, d.per_decade // 2), diagonal=d.diagonal)
    return abs(largest_eigenvalue(d, tol).lambda_max - largest_eigenvalue(coarse, tol).lambda_max)


@dataclass
class ConvergenceStudy:
    rows: list[dict]
    bound: float | None
    below_bound: bool
    nondecreasing: bool
    fit_limit: float | None
    fit_error: float | None
    consistent: bool | None


def _effective_length_model(L, limit, a, b):
    return limit - a / (L + b) ** 2


def fit_effective_length(L, lam) -> tuple[float, float]:
    """Fit lam = limit - a/(L + b)^2 in L = ln(R/eps).

    The error is the larger of the least-squares standard error and the
    shift in the limit when the narrowest domain is dropped, so smooth
    but misspecified data do not get a falsely tight error bar.
    """

    def fit(L, lam):
        p0 = [lam[-1], (lam[-1] - lam[0]) * L[0] ** 2 + 1e-12, 1.0]
        lower = [-np.inf, 0.0, -0.9 * L[0]]
        with warnings.catch_warnings():
            # three points fit exactly and have no covariance
            warnings.simplefilter("ignore", scipy.optimize.OptimizeWarning)
            p, cov = scipy.optimize.curve_fit(
                _effective_length_model, L, lam, p0=p0, bounds=(lower, np.inf), maxfev=20000
            )
        return float(p[0]), float(np.sqrt(cov[0, 0])) if np.isfinite(cov[0, 0]) else 0.0

    limit, sigma = fit(L, lam)
    trimmed, _ = fit(L[1:], lam[1:])
    return limit, max(sigma, abs(limit - trimmed))


def norm_convergence_study(
    kernel: KernelSpec,
    domains: Sequence[tuple[float, float]],
    per_decade: Sequence[int] = (40,),
    tol: float = 1e-10,
    slack: float = 1e-8,
) -> ConvergenceStudy:
    """lambda_max over nested domains at each resolution per decade.

    With four or more domains the finest resolution is extrapolated in
    ln(R/eps) and compared with the known norm.
    """
    domains = [(float(e), float(r)) for e, r in domains]
    for (e0, r0), (e1, r1) in zip(domains, domains[1:]):
        if not (e1 <= e0 and r1 >= r0 and (e1, r1) != (e0, r0)):
            raise ValueError("domains must be strictly nested and widening")
    if list(per_decade) != sorted(set(per_decade)):
        raise ValueError("resolutions must be increasing")
    bound = reference_norm(kernel)
    rows = []
    for p in per_decade:
        for eps, R in domains:
            d = build_nystrom(kernel, eps, R, per_decade=p)
            res = largest_eigenvalue(d, tol)
            rows.append(
                {"eps": eps, "R": R, "per_decade": p, "n": d.n, "lambda_max": res.lambda_max, "residual": res.residual}
            )
    below = bound is None or all(r["lambda_max"] < bound for r in rows)
    nondec = True
    for p in per_decade:
        lam = [r["lambda_max"] for r in rows if r["per_decade"] == p]
        nondec &= all(b >= a - slack for a, b in zip(lam, lam[1:]))
    finest = [r for r in rows if r["per_decade"] == per_decade[-1]]
    limit = err = consistent = None
    if len(finest) >= 4:
        L = np.array([math.log(r["R"] / r["eps"]) for r in finest])
        limit, err = fit_effective_length(L, np.array([r["lambda_max"] for r in finest]))
        if bound is not None:
            consistent = abs(limit - bound) <= 3.0 * err
    return ConvergenceStudy(rows, bound, below, nondec, limit, err, consistent)


def mass_median(result: SpectralResult) -> float:
    """Median of the eigenvector's mass distribution, as ln x."""
    if result.nodes.size != result.eigenvector.size:
        raise ValueError("result carries no nodes")
    mass = result.eigenvector**2
    # each node's mass sits at its own abscissa, so interpolate on cell midpoints
    cum = (np.cumsum(mass) - 0.5 * mass) / mass.sum()
    logx = np.log(result.nodes)
    return float(np.interp(0.5, cum, logx))


@dataclass
class EscapeReport:
    domains: list[tuple[float, float]]
    medians: list[float]
    increments: list[float]
    strictly_increasing: bool


def extremal_escape_diagnostic(results: Sequence[SpectralResult]) -> EscapeReport:
    """Track where the top eigenvector's mass sits as the domain widens."""
    if len(results) < 3:
        raise InsufficientData("need at least three nested-domain results")
    med = [mass_median(r) for r in results]
    inc = [b - a for a, b in zip(med, med[1:])]
    return EscapeReport([r.domain for r in results], med, inc, all(x > 0 for x in inc))


def export_csv(d: NystromDiscretization, path) -> None:
    """Long-format CSV, one row per entry: i, j, x_i, x_j, w_i, w_j, entry."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["i", "j", "x_i", "x_j", "w_i", "w_j", "entry"])
        x, w, M = d.nodes, d.weights, d.matrix
        for i in range(d.n):
            for j in range(d.n):
                out.writerow([i, j, *("%.17g" % v for v in (x[i], x[j], w[i], w[j], M[i, j]))])


def load_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`export_csv`: (nodes, weights, matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = max(int(r["i"]) for r in rows) + 1
    x = np.empty(n)
    w = np.empty(n)
    M = np.empty((n, n))
    for r in rows:
        i, j = int(r["i"]), int(r["j"])
        x[i], w[i] = float(r["x_i"]), float(r["w_i"])
        M[i, j] = float(r["entry"])
    return x, w, M
