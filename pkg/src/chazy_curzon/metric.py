"""Weyl potentials of the single-particle Chazy-Curzon space-time.

The static axisymmetric line element in Weyl coordinates (t, rho, z, phi) is

    ds^2 = -e^{2 psi} dt^2 + e^{-2 psi} (e^{2 gamma} (drho^2 + dz^2) + rho^2 dphi^2)

with ``psi = -m / r`` and ``r = sqrt(rho^2 + z^2)``.  Two forms of ``gamma``
are provided:

* ``standard``: ``-m^2 rho^2 / (2 r^4)``, the usual Curzon potential;
* ``paper``:    ``-m^2 rho^2 / (2 r^8)``, the variant with denominator
  exponent 4 on ``rho^2 + z^2``.

Both agree on the unit sphere ``r = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .errors import DomainError

__all__ = [
    "R_MIN",
    "RHO_MIN",
    "GAMMA_MODES",
    "SIGN_MODES",
    "MetricParams",
    "FieldPoint",
    "psi",
    "grad_psi",
    "gamma_fn",
    "grad_gamma",
    "omega",
    "laplace_residual",
    "weyl_residuals",
]

#: smallest admissible distance from the point mass
R_MIN = 1e-8
#: smallest admissible cylindrical radius for derivative evaluations
RHO_MIN = 1e-8

GAMMA_MODES = ("standard", "paper")
SIGN_MODES = ("standard_minus", "paper_plus")

# exponent k in gamma = -m^2 rho^2 / (2 r^(2k))
_GAMMA_EXPONENT = {"standard": 2, "paper": 4}


@dataclass(frozen=True)
class MetricParams:
    """Mass and the choice of ``gamma`` formula."""

    m: float = 1.0
    gamma_mode: str = "standard"

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError(f"m must be positive and finite, got {self.m!r}")
        if self.gamma_mode not in GAMMA_MODES:
            raise ValueError(
                f"gamma_mode must be one of {GAMMA_MODES}, got {self.gamma_mode!r}"
            )


DEFAULT_PARAMS = MetricParams()


class FieldPoint(NamedTuple):
    rho: float
    z: float


def _radius(pt, *, need_rho: bool = False) -> tuple[float, float, float]:
    rho, z = float(pt[0]), float(pt[1])
    r = math.hypot(rho, z)
    if not r >= R_MIN:
        raise DomainError(f"r = {r!r} is below r_min = {R_MIN} at (rho={rho}, z={z})")
    if rho < 0:
        raise DomainError(f"rho must be non-negative, got {rho}")
    if need_rho and rho < RHO_MIN:
        raise DomainError(
            f"rho = {rho!r} is below rho_min = {RHO_MIN}; derivatives are not "
            "evaluated on the axis"
        )
    return rho, z, r


def psi(pt, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Newtonian-like potential ``-m / r``."""
    _, _, r = _radius(pt)
    return -params.m / r


def grad_psi(pt, params: MetricParams = DEFAULT_PARAMS) -> tuple[float, float]:
    """Analytic gradient ``(m rho / r^3, m z / r^3)``."""
    rho, z, r = _radius(pt, need_rho=True)
    r3 = r * r * r
    return params.m * rho / r3, params.m * z / r3


def gamma_fn(pt, params: MetricParams = DEFAULT_PARAMS) -> float:
    rho, _, r = _radius(pt)
    k = _GAMMA_EXPONENT[params.gamma_mode]
    return -params.m**2 * rho * rho / (2.0 * (r * r) ** k)


def grad_gamma(pt, params: MetricParams = DEFAULT_PARAMS) -> tuple[float, float]:
    """Analytic gradient of :func:`gamma_fn` for the selected mode."""
    rho, z, r = _radius(pt, need_rho=True)
    k = _GAMMA_EXPONENT[params.gamma_mode]
    r2 = r * r
    m2 = params.m**2
    r2k = r2**k
    d_rho = -m2 * (rho / r2k - k * rho**3 / (r2k * r2))
    d_z = k * m2 * rho * rho * z / (r2k * r2)
    return d_rho, d_z


def omega(pt, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Conformal factor ``exp(psi - gamma)``."""
    expo = psi(pt, params) - gamma_fn(pt, params)
    if expo > 700.0:
        raise DomainError(
            f"omega overflows at (rho={pt[0]}, z={pt[1]}): exponent {expo:.3g}"
        )
    return math.exp(expo)


def _fd_laplacian(field: Callable[[float, float], float], rho: float, z: float) -> float:
    # fourth-order central differences
    h = 1e-3 * max(1.0, abs(rho), abs(z))
    h = min(h, 0.5 * rho)

    def d1(f):
        return (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h)

    def d2(f, f0):
        return (-f(2) + 16 * f(1) - 30 * f0 + 16 * f(-1) - f(-2)) / (12 * h * h)

    f0 = field(rho, z)
    along_rho = lambda k: field(rho + k * h, z)  # noqa: E731
    along_z = lambda k: field(rho, z + k * h)  # noqa: E731
    return d2(along_rho, f0) + d1(along_rho) / rho + d2(along_z, f0)


def laplace_residual(
    pt,
    params: MetricParams = DEFAULT_PARAMS,
    field: Callable[[float, float], float] | None = None,
) -> float:
    """Cylindrical Laplacian ``f_rr + f_r / rho + f_zz``.

    With ``field=None`` the analytic second derivatives of ``psi`` are summed.
    Any other callable ``field(rho, z)`` is differentiated with fourth-order
    central differences, which is how non-harmonic controls are checked.
    """
    rho, z, r = _radius(pt, need_rho=True)
    if field is not None:
        return _fd_laplacian(field, rho, z)
    m = params.m
    r3 = r**3
    r5 = r**5
    d_rho = m * rho / r3
    d_rr = m * (1.0 / r3 - 3.0 * rho * rho / r5)
    d_zz = m * (1.0 / r3 - 3.0 * z * z / r5)
    return d_rr + d_rho / rho + d_zz


def weyl_residuals(
    pt,
    params: MetricParams = DEFAULT_PARAMS,
    sign_mode: str = "standard_minus",
) -> tuple[float, float]:
    """Residuals of the first-order equations for ``gamma``.

    Returns ``(gamma_rho - rho (psi_rho^2 -/+ psi_z^2), gamma_z - 2 rho psi_rho psi_z)``
    where the sign inside the first bracket is ``-`` for ``standard_minus`` and
    ``+`` for ``paper_plus``.
    """
    if sign_mode not in SIGN_MODES:
        raise ValueError(f"sign_mode must be one of {SIGN_MODES}, got {sign_mode!r}")
    rho = float(pt[0])
    p_rho, p_z = grad_psi(pt, params)
    g_rho, g_z = grad_gamma(pt, params)
    sign = -1.0 if sign_mode == "standard_minus" else 1.0
    r_rho = g_rho - rho * (p_rho * p_rho + sign * p_z * p_z)
    r_z = g_z - 2.0 * rho * p_rho * p_z
    return r_rho, r_z
