"""Turning points, the period function and its logarithmic growth near saddles.

One-degree-of-freedom motion ``p^2 / 2 + w(x) = h`` on the invariant plane
``z = p_z = 0`` is described by a :class:`Well`: the potential measured from
the critical level, the equilibrium, its curvature, and the interval the
bounded orbits live in.  The period

    T(h) = 2 * integral dx / sqrt(2 (h - w(x)))      (physical)

is evaluated after the substitution ``x = mid + half sin(theta)``, which turns
the inverse-square-root endpoints into a smooth integrand, followed by
adaptive Gauss-Legendre panels.  The ``printed`` convention drops the factor 2
under the root and is exactly ``sqrt(2)`` times the physical value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq, minimize_scalar

from .dynamics import OrbitConstants, equilibrium_solve, grad_v, stability_class, v_second_derivative
from .errors import (
    ConvergenceError,
    InsufficientDataError,
    NoBracketError,
    NonDivergentError,
)

__all__ = [
    "CONVENTIONS",
    "Well",
    "PeriodSample",
    "LogFit",
    "toy_well",
    "chazy_curzon_well",
    "turning_points",
    "period_quadrature",
    "period_scan",
    "log_fit",
]

CONVENTIONS = ("physical", "printed")
_CONVENTION_FACTOR = {"physical": 1.0, "printed": math.sqrt(2.0)}

ROOT_TOL = 1e-12
_EPS = np.finfo(float).eps
_MAX_PANELS = 20000
# e^{2/rho} overflows a double below rho ~ 2.8e-3
_RHO_FLOOR = 1e-2


@dataclass(frozen=True)
class Well:
    """Potential well attached to an equilibrium.

    ``potential`` returns ``v - level`` and must accept numpy arrays.  For a
    center the bounded orbits surround ``x0``; for a saddle they live in the
    adjacent well on ``side`` (+1 or -1), whose minimum is ``bottom``.
    ``lo``/``hi`` are hard limits for the turning-point search and ``scale`` is
    the magnitude of the terms that cancel in ``potential`` (sets the rounding
    floor of the quadrature).
    """

    potential: Callable
    x0: float
    curvature: float
    kind: str
    bottom: float
    lo: float
    hi: float
    side: int = 0
    derivative: Callable | None = None
    scale: float = 1.0
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in ("center", "saddle"):
            raise ValueError(f"kind must be 'center' or 'saddle', got {self.kind!r}")
        if not self.lo < self.bottom < self.hi:
            raise ValueError(f"bottom {self.bottom} must lie inside ({self.lo}, {self.hi})")

    @property
    def depth(self) -> float:
        """``|w(bottom)|``: height of the saddle above the adjacent well floor."""
        return abs(float(self.potential(self.bottom)))

    def slope(self, x: float) -> float:
        if self.derivative is not None:
            return float(self.derivative(x))
        d = 1e-6 * max(1.0, abs(x))
        return float((self.potential(x + d) - self.potential(x - d)) / (2 * d))


@dataclass(frozen=True)
class PeriodSample:
    h: float
    rho_minus: float
    rho_plus: float
    eps: float
    delta: float
    eta: float
    T: float
    quad_error: float
    convention: str


@dataclass(frozen=True)
class LogFit:
    slope: float
    intercept: float
    r_squared: float
    implied_g: float
    g_reference: float
    against: str
    convention: str
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "implied_g": self.implied_g,
            "g_reference": self.g_reference,
            "against": self.against,
            "convention": self.convention,
            "n_samples": self.n_samples,
        }


def toy_well(
    potential: Callable,
    x0: float,
    curvature: float,
    *,
    kind: str | None = None,
    bottom: float | None = None,
    lo: float = -1e3,
    hi: float = 1e3,
    side: int = 0,
    derivative: Callable | None = None,
) -> Well:
    """Well for an arbitrary one-dimensional potential with critical level 0."""
    kind = kind or ("center" if curvature > 0 else "saddle")
    if bottom is None:
        if kind == "saddle":
            raise ValueError("a saddle well needs the position of the adjacent minimum")
        bottom = x0
    return Well(potential, float(x0), float(curvature), kind, float(bottom), lo, hi, side, derivative)


def _saddle_side(dv: Callable[[float], float], rho0: float) -> int:
    """Side of a saddle whose ``v'`` changes sign (adjacent well)."""
    reach = 5.0 * abs(rho0)
    for side in (1, -1):
        if side < 0:
            grid = np.linspace(rho0, max(_RHO_FLOOR, rho0 - reach), 400)[1:]
        else:
            grid = np.linspace(rho0, rho0 + reach, 400)[1:]
        d = np.array([dv(x) for x in grid])
        # leaving a maximum v' has sign -side; a minimum shows up as a flip
        if np.any(np.sign(d) == side):
            return side
    raise NoBracketError(f"no adjacent well found within 5|rho0| of the saddle at {rho0}")


def chazy_curzon_well(rho0: float, oc: OrbitConstants | None = None) -> Well:
    """In-plane well at the equilibrium ``rho0`` of the Chazy-Curzon ``v``.

    By default the orbit constants are the solved pair, so the critical level
    is ``f_level`` of that equilibrium (zero up to rounding).
    """
    rec = equilibrium_solve(rho0)
    oc = oc or rec.solved
    e2, l2 = oc.E2, oc.L2

    def v(x):
        x = np.asarray(x, dtype=float)
        return 0.5 - 0.5 * e2 * np.exp(2.0 / x) + 0.5 * l2 / (x * x) * np.exp(-2.0 / x)

    level = float(v(rho0))

    def w(x):
        return v(x) - level

    def dv(x):
        return grad_v(float(x), 0.0, oc)[0]

    vpp = v_second_derivative(rho0, oc)
    kind = stability_class(vpp)
    if kind == "degenerate":
        raise ValueError(f"equilibrium at rho0 = {rho0} is degenerate (v'' = {vpp:.3e})")
    scale = max(1.0, abs(0.5 * e2 * math.exp(2.0 / rho0)), abs(0.5 * l2 / rho0**2 * math.exp(-2.0 / rho0)))
    lo, hi = _RHO_FLOOR, 1e6
    if kind == "center":
        return Well(w, rho0, vpp, kind, rho0, lo, hi, 0, dv, scale, level)
    side = _saddle_side(dv, rho0)
    far = rho0 + side * 5.0 * abs(rho0)
    a, b = sorted((rho0, max(far, lo)))
    span = b - a
    res = minimize_scalar(w, bounds=(a + 1e-6 * span, b - 1e-6 * span), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(b))})
    bottom = float(res.x)
    if side > 0:
        return Well(w, rho0, vpp, kind, bottom, rho0, hi, side, dv, scale, level)
    return Well(w, rho0, vpp, kind, bottom, lo, rho0, side, dv, scale, level)


def _root_side(g: Callable[[float], float], start: float, limit: float) -> float:
    """Root of ``g`` between ``start`` (where g < 0) and ``limit``, found by expanding outward."""
    g0 = g(start)
    if not g0 < 0:
        raise NoBracketError(f"energy is not above the potential at x = {start}")
    d = 1e-6 * max(1.0, abs(limit - start))
    inner = start
    while True:
        x = start + math.copysign(min(d, abs(limit - start)), limit - start)
        gx = g(x)
        if gx > 0:
            break
        if gx == 0:
            return x
        inner = x
        if x == limit:
            raise NoBracketError(
                f"no turning point between {start} and {limit}: orbit is unbounded on that side"
            )
        d *= 2.0
    return brentq(g, *sorted((inner, x)), xtol=1e-15, rtol=4 * _EPS, maxiter=200)


def turning_points(h: float, well: Well, bracket: tuple[float, float] | None = None) -> tuple[float, float]:
    """Turning points ``x- < x+`` of the orbit at energy ``h`` above the critical level."""
    lo, hi = bracket if bracket is not None else (well.lo, well.hi)
    if not lo < well.bottom < hi:
        raise NoBracketError(f"bracket ({lo}, {hi}) does not contain the well bottom {well.bottom}")
    if well.kind == "center" and not h > 0:
        raise NoBracketError(f"a center needs h > 0 for a bounded orbit, got h = {h}")
    if well.kind == "saddle" and not h < 0:
        raise NoBracketError(f"orbits near a saddle are bounded for h < 0 only, got h = {h}")

    def g(x):
        return float(well.potential(x)) - h

    left = _root_side(g, well.bottom, lo)
    right = _root_side(g, well.bottom, hi)
    for x in (left, right):
        if abs(g(x)) >= ROOT_TOL:
            raise NoBracketError(f"turning point at {x} has residual {abs(g(x)):.3e}")
    return left, right


def period_quadrature(
    h: float,
    well: Well,
    convention: str = "physical",
    *,
    rtol: float = 1e-10,
    order: int = 16,
    bracket: tuple[float, float] | None = None,
) -> PeriodSample:
    """Period of the bounded orbit at energy ``h``.

    Each panel is integrated with ``order`` and ``2 * order`` Gauss-Legendre
    nodes; the panel is accepted when the two agree to ``rtol`` of the total
    or to ten times the propagated rounding error.  ``quad_error`` sums the
    accepted differences and the rounding estimate.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    a, b = turning_points(h, well, bracket)
    half = 0.5 * (b - a)
    sa = abs(well.slope(a))
    sb = abs(well.slope(b))
    noise = 8.0 * _EPS * well.scale
    pot = well.potential

    def integrand(th):
        # x measured from the nearer turning point, without cancellation
        lo_d = 2.0 * np.sin(0.5 * th + 0.25 * np.pi) ** 2
        hi_d = 2.0 * np.sin(0.25 * np.pi - 0.5 * th) ** 2
        left = th < 0
        dist = half * np.where(left, lo_d, hi_d)
        x = np.where(left, a + dist, b - dist)
        gap = h - pot(x)
        lin = np.where(left, sa, sb) * dist
        # below the rounding floor the linear model of the gap is more accurate
        gap = np.where(gap <= noise, np.maximum(lin, 1e-300), gap)
        val = half * np.cos(th) / np.sqrt(2.0 * gap)
        return val, val * noise / (2.0 * gap)

    x_lo, w_lo = leggauss(order)
    x_hi, w_hi = leggauss(2 * order)

    def panel(p, q, nodes, weights):
        mid, hw = 0.5 * (p + q), 0.5 * (q - p)
        val, nz = integrand(mid + hw * nodes)
        return hw * float(np.dot(weights, val)), hw * float(np.dot(weights, nz))

    span = math.pi
    coarse = panel(-0.5 * span, 0.5 * span, x_hi, w_hi)[0]
    stack = [(-0.5 * span, 0.5 * span)]
    total = err = rounding = 0.0
    n_panels = 0
    while stack:
        p, q = stack.pop()
        i1, _ = panel(p, q, x_lo, w_lo)
        i2, nz = panel(p, q, x_hi, w_hi)
        width = q - p
        if abs(i2 - i1) <= max(rtol * abs(coarse) * width / span, 10.0 * nz) or width < 1e-9 * span:
            total += i2
            err += abs(i2 - i1)
            rounding += nz
            n_panels += 1
            if n_panels > _MAX_PANELS:
                raise ConvergenceError(f"period quadrature needed more than {_MAX_PANELS} panels at h = {h}")
        else:
            mid = 0.5 * (p + q)
            stack.extend(((p, mid), (mid, q)))
    factor = _CONVENTION_FACTOR[convention]
    period = 2.0 * total * factor
    quad_error = 2.0 * factor * (err + rounding) + 4.0 * _EPS * period
    if well.kind == "center":
        eps_, delta = b - well.x0, well.x0 - a
    else:
        # both turning points lie on one side; distances from the saddle
        near, far_ = (a, b) if well.side > 0 else (b, a)
        eps_, delta = abs(far_ - well.x0), abs(well.x0 - near)
    return PeriodSample(
        h=float(h),
        rho_minus=float(a),
        rho_plus=float(b),
        eps=float(eps_),
        delta=float(delta),
        eta=float(eps_ / delta),
        T=float(period),
        quad_error=float(quad_error),
        convention=convention,
    )


def default_scan_start(well: Well) -> float:
    """Decade exponent of the first |h| of a scan.

    Saddle scans start two decades below the well depth so that the samples
    sit in the logarithmic regime; center scans start two decades below
    ``v''`` times the squared well size.
    """
    if well.kind == "saddle":
        return math.ceil(-math.log10(well.depth)) + 2.0
    return math.ceil(-math.log10(abs(well.curvature) * max(1.0, abs(well.x0)) ** 2)) + 2.0


def period_scan(
    well: Well,
    decades: float = 4,
    per_decade: int = 5,
    convention: str = "physical",
    *,
    start: float | None = None,
    rtol: float = 1e-10,
) -> list[PeriodSample]:
    """Samples at ``|h| = 10^-(start + j / per_decade)``, approaching the critical level.

    ``h < 0`` on the adjacent well of a saddle, ``h > 0`` around a center.
    """
    if per_decade < 1:
        raise ValueError(f"per_decade must be >= 1, got {per_decade}")
    if decades <= 0:
        raise ValueError(f"decades must be positive, got {decades}")
    start = default_scan_start(well) if start is None else float(start)
    n = int(round(decades * per_decade)) + 1
    sign = -1.0 if well.kind == "saddle" else 1.0
    if well.kind == "saddle" and 10.0**-start >= well.depth:
        raise InsufficientDataError(
            f"scan starts at |h| = {10.0**-start:.3g}, above the well depth {well.depth:.3g}: "
            "no bounded orbits on the chosen side"
        )
    hs = sign * 10.0 ** -(start + np.arange(n) / per_decade)
    return [period_quadrature(float(h), well, convention, rtol=rtol) for h in hs]


def log_fit(
    samples: Sequence[PeriodSample],
    curvature: float | None = None,
    against: str = "h",
) -> LogFit:
    """Least-squares fit of ``T`` against ``ln(1/|h|)`` (or ``ln(eta)``).

    ``implied_g`` rescales the slope to the coefficient ``g`` of
    ``T ~ sqrt(2) g ln(1/|h|)`` in the physical convention; against
    ``ln(eta)`` the log argument is a square root of ``1/|h|`` so the slope is
    halved first.
    """
    if against not in ("h", "eta"):
        raise ValueError(f"against must be 'h' or 'eta', got {against!r}")
    if len(samples) < 6:
        raise InsufficientDataError(f"need at least 6 samples, got {len(samples)}")
    conventions = {s.convention for s in samples}
    if len(conventions) != 1:
        raise ValueError(f"samples mix conventions {sorted(conventions)}")
    convention = conventions.pop()
    hs = np.array([abs(s.h) for s in samples])
    if np.log10(hs.max() / hs.min()) < 3.0 - 1e-9:
        raise InsufficientDataError(
            f"samples span {np.log10(hs.max() / hs.min()):.2f} decades of |h|; need at least 3"
        )
    order = np.argsort(hs)[::-1]
    t = np.array([samples[i].T for i in order])
    if against == "h":
        x = np.log(1.0 / hs[order])
    else:
        x = np.log(np.array([samples[i].eta for i in order]))
    slope, intercept = np.polyfit(x, t, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((t - fitted) ** 2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    r2 = min(1.0, max(0.0, r2))
    growth = slope * (x.max() - x.min())
    if not (slope > 0 and growth > 1e-3 * abs(t.mean()) and r2 > 0.5):
        raise NonDivergentError(
            f"no logarithmic growth: slope {slope:.3e}, growth {growth:.3e}, r^2 {r2:.3f}"
        )
    factor = _CONVENTION_FACTOR[convention] / math.sqrt(2.0)
    if against == "eta":
        factor *= 2.0
    g_ref = math.sqrt(2.0) / math.sqrt(-curvature) if curvature is not None and curvature < 0 else math.nan
    return LogFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        implied_g=float(slope / factor),
        g_reference=g_ref,
        against=against,
        convention=convention,
        n_samples=len(samples),
    )
