"""Reduced geodesic dynamics in the meridian plane (m = 1).

After the time change ``d tau = Omega^2 dt`` the motion is governed by

    F = (p_rho^2 + p_z^2) / 2 + v(rho, z),
    v = 1/2 - (E^2 / 2) e^{2/r} + (L^2 / (2 rho^2)) e^{-2/r},

which is separable, so every symplectic splitting applies.  The vector field is
available in two forms: ``gradient`` (the exact ``-grad v``) and ``printed``,
whose ``p_rho'`` carries ``rho^2`` instead of ``rho`` in its first term.

The reduced Hamiltonian ``H2`` also comes in two forms: ``printed`` builds it
as ``Omega^2 (|p|^2 / 2 + V_eff)`` with ``V_eff = -Phi / 2`` and
``Phi = e^{-2 gamma} (E^2 - e^{2 psi} - rho^-2 e^{4 psi} L^2)``; ``canonical``
rebuilds it from ``H4 + 1/2`` using the inverse Weyl metric.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

from . import metric
from .errors import DegenerateSystemError, DomainError, SingularParameterError
from .metric import DEFAULT_PARAMS, R_MIN, MetricParams

__all__ = [
    "FIELD_MODES",
    "H2_MODES",
    "TOL_DEG",
    "H_PB",
    "OrbitConstants",
    "PhasePoint",
    "EquilibriumRecord",
    "v_potential",
    "grad_v",
    "hessian_v",
    "f_hamiltonian",
    "f_vector_field",
    "v_eff",
    "h2_hamiltonian",
    "h4_residual",
    "solve_p_rho",
    "equilibrium_closed_form",
    "equilibrium_solve",
    "printed_minus_vpp",
    "v_second_derivative",
    "v_second_derivative_fd",
    "stability_class",
    "classify_equilibrium",
    "poisson_bracket",
]

FIELD_MODES = ("gradient", "printed")
H2_MODES = ("canonical", "printed")

#: curvature magnitude below which an equilibrium is called degenerate
TOL_DEG = 1e-9
#: relative finite-difference step of the Poisson bracket
H_PB = 1e-5
#: smallest determinant accepted by the equilibrium solve
DET_MIN = 1e-14


@dataclass(frozen=True)
class OrbitConstants:
    """Squares of the Killing integrals; signs are kept as computed."""

    E2: float
    L2: float

    @property
    def admissible(self) -> bool:
        return self.E2 >= 0.0 and self.L2 >= 0.0


@dataclass(frozen=True)
class PhasePoint:
    rho: float
    z: float
    p_rho: float = 0.0
    p_z: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if not self.rho >= R_MIN:
            raise DomainError(f"rho = {self.rho!r} is below r_min = {R_MIN}")


@dataclass(frozen=True)
class EquilibriumRecord:
    rho0: float
    E2_solved: float
    L2_solved: float
    E2_closed: float
    L2_closed: float
    f_level: float
    f_level_closed: float
    vpp: float
    vpp_printed: float
    g: float
    vzz: float
    stability_class: str
    sign_agreement: bool

    @property
    def solved(self) -> OrbitConstants:
        return OrbitConstants(self.E2_solved, self.L2_solved)

    @property
    def closed(self) -> OrbitConstants:
        return OrbitConstants(self.E2_closed, self.L2_closed)


def _check(rho: float, z: float) -> float:
    if not rho >= R_MIN:
        raise DomainError(f"rho = {rho!r} is below r_min = {R_MIN}")
    r = math.hypot(rho, z)
    if not r >= R_MIN:
        raise DomainError(f"r = {r!r} is below r_min = {R_MIN}")
    return r


def v_potential(rho: float, z: float, oc: OrbitConstants) -> float:
    r = _check(rho, z)
    return 0.5 - 0.5 * oc.E2 * math.exp(2.0 / r) + 0.5 * oc.L2 * math.exp(-2.0 / r) / (rho * rho)


def grad_v(rho: float, z: float, oc: OrbitConstants) -> tuple[float, float]:
    """Exact gradient ``(dv/drho, dv/dz)``."""
    r = _check(rho, z)
    r3 = r * r * r
    a = oc.E2 * math.exp(2.0 / r)
    b = oc.L2 * math.exp(-2.0 / r)
    d_rho = a * rho / r3 + b / (rho * r3) - b / rho**3
    d_z = z * (a + b / (rho * rho)) / r3
    return d_rho, d_z


def hessian_v(rho: float, z: float, oc: OrbitConstants) -> tuple[float, float, float]:
    """Analytic second derivatives ``(v_rr, v_zz, v_rz)``."""
    r = _check(rho, z)
    A = math.exp(2.0 / r)
    B = math.exp(-2.0 / r)
    r2, r3, r4 = r * r, r**3, r**4
    # radial derivatives of A = e^{2/r} and B = e^{-2/r}
    A1, A2 = -2.0 * A / r2, A * (4.0 / r4 + 4.0 / r3)
    B1, B2 = 2.0 * B / r2, B * (4.0 / r4 - 4.0 / r3)
    r_p, r_z = rho / r, z / r
    r_pp, r_zz, r_pz = z * z / r3, rho * rho / r3, -rho * z / r3

    def second(f1, f2, a, b, ab):
        return f2 * a * b + f1 * ab

    A_pp, A_zz, A_pz = second(A1, A2, r_p, r_p, r_pp), second(A1, A2, r_z, r_z, r_zz), second(A1, A2, r_p, r_z, r_pz)
    B_p, B_z = B1 * r_p, B1 * r_z
    B_pp, B_zz, B_pz = second(B1, B2, r_p, r_p, r_pp), second(B1, B2, r_z, r_z, r_zz), second(B1, B2, r_p, r_z, r_pz)

    E2, L2 = oc.E2, oc.L2
    v_pp = -0.5 * E2 * A_pp + 0.5 * L2 * (6.0 * B / rho**4 - 4.0 * B_p / rho**3 + B_pp / rho**2)
    v_zz = -0.5 * E2 * A_zz + 0.5 * L2 * B_zz / rho**2
    v_pz = -0.5 * E2 * A_pz + 0.5 * L2 * (-2.0 * B_z / rho**3 + B_pz / rho**2)
    return v_pp, v_zz, v_pz


def f_hamiltonian(p: PhasePoint, oc: OrbitConstants) -> float:
    return 0.5 * (p.p_rho**2 + p.p_z**2) + v_potential(p.rho, p.z, oc)


def printed_force(rho: float, z: float, oc: OrbitConstants) -> tuple[float, float]:
    """Right-hand sides of ``p_rho'`` and ``p_z'`` exactly as typeset."""
    r = _check(rho, z)
    r3 = r * r * r
    a = oc.E2 * math.exp(2.0 / r)
    b = oc.L2 * math.exp(-2.0 / r)
    f_rho = -a * rho * rho / r3 - b / (r3 * rho) + b / rho**3
    f_z = -z * (a * rho * rho + b) / (r3 * rho * rho)
    return f_rho, f_z


def f_vector_field(
    p: PhasePoint, oc: OrbitConstants, field_mode: str = "gradient"
) -> tuple[float, float, float, float]:
    """``(rho', z', p_rho', p_z')`` in reparametrized time."""
    if field_mode == "gradient":
        d_rho, d_z = grad_v(p.rho, p.z, oc)
        f_rho, f_z = -d_rho, -d_z
    elif field_mode == "printed":
        f_rho, f_z = printed_force(p.rho, p.z, oc)
    else:
        raise ValueError(f"field_mode must be one of {FIELD_MODES}, got {field_mode!r}")
    return p.p_rho, p.p_z, f_rho, f_z


def v_eff(rho: float, z: float, oc: OrbitConstants, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Printed effective potential ``-Phi / 2``; motion is allowed where it is <= 0."""
    _check(rho, z)
    pt = (rho, z)
    ps = metric.psi(pt, params)
    ga = metric.gamma_fn(pt, params)
    phi = math.exp(-2.0 * ga) * (oc.E2 - math.exp(2.0 * ps) - math.exp(4.0 * ps) * oc.L2 / (rho * rho))
    return -0.5 * phi


def h4_residual(p: PhasePoint, oc: OrbitConstants, params: MetricParams = DEFAULT_PARAMS) -> float:
    """``H4 + 1/2`` with ``p_t = -E`` and ``p_phi = L``."""
    _check(p.rho, p.z)
    pt = (p.rho, p.z)
    ps = metric.psi(pt, params)
    ga = metric.gamma_fn(pt, params)
    g_tt = -math.exp(-2.0 * ps)
    g_pp = math.exp(2.0 * ps - 2.0 * ga)
    g_phph = math.exp(2.0 * ps) / (p.rho * p.rho)
    h4 = 0.5 * (g_tt * oc.E2 + g_pp * (p.p_rho**2 + p.p_z**2) + g_phph * oc.L2)
    return h4 + 0.5


def _canonical_potential(rho: float, z: float, oc: OrbitConstants, params: MetricParams) -> float:
    # V such that H4 + 1/2 = Omega^2 (|p|^2 / 2 + V)
    at_rest = h4_residual(PhasePoint(rho, z), oc, params)
    return at_rest / metric.omega((rho, z), params) ** 2


def h2_hamiltonian(
    p: PhasePoint,
    oc: OrbitConstants,
    params: MetricParams = DEFAULT_PARAMS,
    h2_mode: str = "canonical",
) -> float:
    if h2_mode == "canonical":
        return h4_residual(p, oc, params)
    if h2_mode == "printed":
        om = metric.omega((p.rho, p.z), params)
        return om * om * (0.5 * (p.p_rho**2 + p.p_z**2) + v_eff(p.rho, p.z, oc, params))
    raise ValueError(f"h2_mode must be one of {H2_MODES}, got {h2_mode!r}")


def solve_p_rho(
    rho: float,
    z: float,
    p_z: float,
    oc: OrbitConstants,
    params: MetricParams = DEFAULT_PARAMS,
    h2_mode: str = "canonical",
) -> float:
    """Non-negative ``p_rho`` placing the state on ``H2 = 0``."""
    if h2_mode == "canonical":
        pot = _canonical_potential(rho, z, oc, params)
    elif h2_mode == "printed":
        pot = v_eff(rho, z, oc, params)
    else:
        raise ValueError(f"h2_mode must be one of {H2_MODES}, got {h2_mode!r}")
    p2 = -2.0 * pot - p_z * p_z
    if p2 < 0:
        raise DomainError(f"(rho={rho}, z={z}, p_z={p_z}) lies in the forbidden region")
    return math.sqrt(p2)


def equilibrium_closed_form(rho0: float) -> OrbitConstants:
    """The printed closed forms, signs included:
    ``L2 = -rho^2 e^{2/rho} / (rho - 2)``, ``E2 = -(rho - 1) e^{-2/rho} / (rho - 2)``.
    """
    if not rho0 > 0:
        raise DomainError(f"rho0 must be positive, got {rho0!r}")
    if rho0 == 2.0:
        raise SingularParameterError("closed forms are singular at rho0 = 2")
    L2 = -(rho0 * rho0) * math.exp(2.0 / rho0) / (rho0 - 2.0)
    E2 = -(rho0 - 1.0) * math.exp(-2.0 / rho0) / (rho0 - 2.0)
    return OrbitConstants(E2, L2)


def printed_minus_vpp(rho0: float) -> float:
    """The printed curvature expression ``-v'' = (rho^2 - 6 rho + 4) / (rho^4 (rho - 2))``."""
    if rho0 == 2.0:
        raise SingularParameterError("printed curvature is singular at rho0 = 2")
    return (rho0 * rho0 - 6.0 * rho0 + 4.0) / (rho0**4 * (rho0 - 2.0))


def v_second_derivative(rho0: float, oc: OrbitConstants, which: str = "rho") -> float:
    """Analytic ``d^2 v / d rho^2`` or ``d^2 v / dz^2`` at ``(rho0, 0)``."""
    v_pp, v_zz, _ = hessian_v(rho0, 0.0, oc)
    if which == "rho":
        return v_pp
    if which == "z":
        return v_zz
    raise ValueError(f"which must be 'rho' or 'z', got {which!r}")


def v_second_derivative_fd(rho0: float, oc: OrbitConstants, which: str = "rho", step: float | None = None) -> float:
    """Five-point central difference of ``v`` along ``rho`` or ``z`` at ``(rho0, 0)``.

    The default step ``1e-3 * max(1, rho0)`` keeps rounding below truncation
    error where the curvature is small compared with ``v`` itself.
    """
    if step is None:
        step = 1e-3 * max(1.0, rho0)
    if which == "rho":
        f = lambda k: v_potential(rho0 + k * step, 0.0, oc)  # noqa: E731
    elif which == "z":
        f = lambda k: v_potential(rho0, k * step, oc)  # noqa: E731
    else:
        raise ValueError(f"which must be 'rho' or 'z', got {which!r}")
    return (-f(2) + 16 * f(1) - 30 * f(0) + 16 * f(-1) - f(-2)) / (12.0 * step * step)


def stability_class(vpp: float, tol: float = TOL_DEG) -> str:
    if vpp > tol:
        return "center"
    if vpp < -tol:
        return "saddle"
    return "degenerate"


def _affine_coefficients(fn: Callable[[OrbitConstants], float]) -> tuple[float, float, float]:
    # fn is affine in (E2, L2): fn = c0 + c1 E2 + c2 L2
    c0 = fn(OrbitConstants(0.0, 0.0))
    return c0, fn(OrbitConstants(1.0, 0.0)) - c0, fn(OrbitConstants(0.0, 1.0)) - c0


def equilibrium_solve(rho0: float) -> EquilibriumRecord:
    """Solve ``{F(0,0,rho0,0) = 0, dF/drho(0,0,rho0,0) = 0}`` for ``(E2, L2)``.

    The coefficients of the 2x2 linear system are read off the implemented
    potential and its exact gradient, so the solve does not reuse the closed
    forms.  Signs come out as the algebra dictates.
    """
    if not rho0 >= R_MIN:
        raise DomainError(f"rho0 must be >= r_min, got {rho0!r}")
    f0, f1, f2 = _affine_coefficients(lambda oc: v_potential(rho0, 0.0, oc))
    d0, d1, d2 = _affine_coefficients(lambda oc: grad_v(rho0, 0.0, oc)[0])
    det = f1 * d2 - f2 * d1
    if abs(det) < DET_MIN:
        raise DegenerateSystemError(f"equilibrium system is singular at rho0 = {rho0} (det = {det:.3e})")
    E2 = (-f0 * d2 + f2 * d0) / det
    L2 = (-d0 * f1 + d1 * f0) / det
    # one step of iterative refinement
    rf = f0 + f1 * E2 + f2 * L2
    rd = d0 + d1 * E2 + d2 * L2
    E2 -= (rf * d2 - f2 * rd) / det
    L2 -= (f1 * rd - d1 * rf) / det

    solved = OrbitConstants(E2, L2)
    try:
        closed = equilibrium_closed_form(rho0)
    except SingularParameterError:
        closed = OrbitConstants(math.nan, math.nan)
    vpp = v_second_derivative(rho0, solved, "rho")
    vzz = v_second_derivative(rho0, solved, "z")
    return EquilibriumRecord(
        rho0=rho0,
        E2_solved=E2,
        L2_solved=L2,
        E2_closed=closed.E2,
        L2_closed=closed.L2,
        f_level=v_potential(rho0, 0.0, solved),
        f_level_closed=v_potential(rho0, 0.0, closed) if math.isfinite(closed.E2) else math.nan,
        vpp=vpp,
        vpp_printed=-printed_minus_vpp(rho0) if rho0 != 2.0 else math.nan,
        g=math.sqrt(2.0) / math.sqrt(-vpp) if vpp < 0 else math.nan,
        vzz=vzz,
        stability_class=stability_class(vpp),
        sign_agreement=(math.copysign(1.0, E2) == math.copysign(1.0, closed.E2)
                        and math.copysign(1.0, L2) == math.copysign(1.0, closed.L2)),
    )


def classify_equilibrium(rho0: float, potential: Callable[[float], float] | None = None) -> EquilibriumRecord:
    """Equilibrium record with its stability class.

    ``potential`` replaces the Chazy-Curzon well by an arbitrary 1-D function of
    ``rho``; its curvature at ``rho0`` is then taken by five-point differences
    and the constants fields are NaN.
    """
    if potential is None:
        return equilibrium_solve(rho0)
    h = 1e-4 * max(1.0, abs(rho0))
    f = lambda k: potential(rho0 + k * h)  # noqa: E731
    vpp = (-f(2) + 16 * f(1) - 30 * f(0) + 16 * f(-1) - f(-2)) / (12.0 * h * h)
    nan = math.nan
    return EquilibriumRecord(
        rho0=rho0, E2_solved=nan, L2_solved=nan, E2_closed=nan, L2_closed=nan,
        f_level=f(0), f_level_closed=nan, vpp=vpp, vpp_printed=nan,
        g=math.sqrt(2.0) / math.sqrt(-vpp) if vpp < 0 else nan, vzz=nan,
        stability_class=stability_class(vpp), sign_agreement=False,
    )


_COORDS = ("rho", "z")
_MOMENTA = ("p_rho", "p_z")


def _partial(f: Callable[[PhasePoint], float], p: PhasePoint, name: str, h_rel: float) -> float:
    x = getattr(p, name)
    h = h_rel * max(1.0, abs(x))

    def central(step):
        up = f(dataclasses.replace(p, **{name: x + step}))
        down = f(dataclasses.replace(p, **{name: x - step}))
        return (up - down) / (2.0 * step)

    coarse, fine = central(h), central(0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def poisson_bracket(
    f: Callable[[PhasePoint], float],
    g: Callable[[PhasePoint], float],
    p: PhasePoint,
    h_rel: float = H_PB,
) -> float:
    """``{f, g} = sum(df/dp dg/dq - df/dq dg/dp)`` by Richardson-refined central differences."""
    total = 0.0
    for q_name, p_name in zip(_COORDS, _MOMENTA):
        total += _partial(f, p, p_name, h_rel) * _partial(g, p, q_name, h_rel)
        total -= _partial(f, p, q_name, h_rel) * _partial(g, p, p_name, h_rel)
    return total
