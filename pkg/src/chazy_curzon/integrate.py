"""Time integration of the meridian-plane flows and surface-of-section tools.

Flows are small objects exposing ``rhs(y)`` and ``energy(y)`` on the state
``y = (rho, z, p_rho, p_z)``.  Separable flows (kinetic term ``|p|^2 / 2``)
also expose ``force(rho, z)`` and can be stepped with kick-drift-kick
leapfrog; everything can be stepped with the adaptive Dormand-Prince 5(4)
pair, whose dense output is used to locate section crossings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45

from . import metric
from .dynamics import (
    OrbitConstants,
    PhasePoint,
    grad_v,
    h2_hamiltonian,
    h4_residual,
    printed_force,
    v_eff,
    v_potential,
)
from .errors import (
    ConvergenceError,
    DegenerateGeometryError,
    DomainError,
    EscapeError,
    InsufficientDataError,
    NoCrossingError,
    SingularityError,
    StepFailureError,
)
from .metric import DEFAULT_PARAMS, R_MIN, MetricParams

__all__ = [
    "METHODS",
    "EscapeBounds",
    "Flow",
    "SeparableFlow",
    "FFlow",
    "H2Flow",
    "ReparametrizedFlow",
    "PotentialFlow",
    "DecoupledOscillator",
    "Trajectory",
    "SectionPoint",
    "step_leapfrog",
    "integrate",
    "poincare_section",
    "rotation_number",
]

METHODS = ("leapfrog", "adaptive_rk")

#: |z| accepted at a refined crossing
SECTION_TOL = 1e-10
#: iteration cap of the crossing refinement
REFINE_MAXITER = 80


@dataclass(frozen=True)
class EscapeBounds:
    rho_max: float = 1e3
    z_max: float = 1e3

    def check(self, rho: float, z: float) -> None:
        if not (rho >= R_MIN and math.hypot(rho, z) >= R_MIN):
            raise SingularityError(f"orbit reached rho = {rho:.3e}, z = {z:.3e} (below r_min)")
        if rho > self.rho_max or abs(z) > self.z_max:
            raise EscapeError(
                f"orbit escaped to rho = {rho:.6g}, z = {z:.6g} "
                f"(bounds rho_max = {self.rho_max}, z_max = {self.z_max})"
            )


class Flow:
    """Hamiltonian flow on ``(rho, z, p_rho, p_z)``."""

    separable = False
    name = "flow"

    def rhs(self, y: Sequence[float]) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def energy(self, y: Sequence[float]) -> float:
        raise NotImplementedError


class SeparableFlow(Flow):
    """Flow of ``|p|^2 / 2 + U(rho, z)``."""

    separable = True

    def force(self, rho: float, z: float) -> tuple[float, float]:
        raise NotImplementedError

    def potential(self, rho: float, z: float) -> float:
        raise NotImplementedError

    def rhs(self, y):
        f_rho, f_z = self.force(y[0], y[1])
        return y[2], y[3], f_rho, f_z

    def energy(self, y):
        return 0.5 * (y[2] * y[2] + y[3] * y[3]) + self.potential(y[0], y[1])


class FFlow(SeparableFlow):
    """The reparametrized Chazy-Curzon system ``F``."""

    name = "F"

    def __init__(self, oc: OrbitConstants, field_mode: str = "gradient"):
        if field_mode not in ("gradient", "printed"):
            raise ValueError(f"field_mode must be 'gradient' or 'printed', got {field_mode!r}")
        self.oc = oc
        self.field_mode = field_mode

    def force(self, rho, z):
        if self.field_mode == "printed":
            return printed_force(rho, z, self.oc)
        d_rho, d_z = grad_v(rho, z, self.oc)
        return -d_rho, -d_z

    def potential(self, rho, z):
        return v_potential(rho, z, self.oc)


def _psi_gamma_parts(rho, z, params):
    pt = (rho, z)
    return (
        metric.psi(pt, params),
        metric.gamma_fn(pt, params),
        metric.grad_psi(pt, params),
        metric.grad_gamma(pt, params),
    )


def _rest_energy_and_grad(rho, z, oc, params):
    """``w = (1 - E2 e^{-2psi} + L2 e^{2psi} / rho^2) / 2`` and its gradient."""
    ps, _, (ps_r, ps_z), _ = _psi_gamma_parts(rho, z, params)
    em = math.exp(-2.0 * ps)
    ep = math.exp(2.0 * ps)
    w = 0.5 * (1.0 - oc.E2 * em + oc.L2 * ep / (rho * rho))
    w_r = oc.E2 * em * ps_r + oc.L2 * ep * ps_r / (rho * rho) - oc.L2 * ep / rho**3
    w_z = oc.E2 * em * ps_z + oc.L2 * ep * ps_z / (rho * rho)
    return w, w_r, w_z


class H2Flow(Flow):
    """Flow of the reduced Hamiltonian ``H2`` in coordinate time ``t``."""

    name = "H2"

    def __init__(self, oc: OrbitConstants, params: MetricParams = DEFAULT_PARAMS, h2_mode: str = "canonical"):
        if h2_mode not in ("canonical", "printed"):
            raise ValueError(f"h2_mode must be 'canonical' or 'printed', got {h2_mode!r}")
        self.oc = oc
        self.params = params
        self.h2_mode = h2_mode

    def rhs(self, y):
        rho, z, pr, pz = y
        oc = self.oc
        ps, ga, (ps_r, ps_z), (ga_r, ga_z) = _psi_gamma_parts(rho, z, self.params)
        om2 = math.exp(2.0 * ps - 2.0 * ga)
        om2_r = 2.0 * om2 * (ps_r - ga_r)
        om2_z = 2.0 * om2 * (ps_z - ga_z)
        kin = 0.5 * (pr * pr + pz * pz)
        if self.h2_mode == "canonical":
            # H2 = Omega^2 |p|^2 / 2 + w
            _, w_r, w_z = _rest_energy_and_grad(rho, z, oc, self.params)
            dh_r = kin * om2_r + w_r
            dh_z = kin * om2_z + w_z
        else:
            e2g = math.exp(-2.0 * ga)
            e2p = math.exp(2.0 * ps)
            e4p = math.exp(4.0 * ps)
            q = oc.E2 - e2p - e4p * oc.L2 / (rho * rho)
            q_r = -2.0 * e2p * ps_r - 4.0 * e4p * oc.L2 * ps_r / (rho * rho) + 2.0 * e4p * oc.L2 / rho**3
            q_z = -2.0 * e2p * ps_z - 4.0 * e4p * oc.L2 * ps_z / (rho * rho)
            ve = -0.5 * e2g * q
            ve_r = e2g * q * ga_r - 0.5 * e2g * q_r
            ve_z = e2g * q * ga_z - 0.5 * e2g * q_z
            dh_r = om2_r * (kin + ve) + om2 * ve_r
            dh_z = om2_z * (kin + ve) + om2 * ve_z
        return om2 * pr, om2 * pz, -dh_r, -dh_z

    def energy(self, y):
        return h2_hamiltonian(PhasePoint(y[0], y[1], y[2], y[3]), self.oc, self.params, self.h2_mode)


class ReparametrizedFlow(SeparableFlow):
    """Canonical ``H2`` divided by ``Omega^2``: ``|p|^2 / 2 + w / Omega^2``.

    On ``H2 = 0`` its flow in ``tau`` traces the same curves as the canonical
    ``H2`` flow in ``t``, with ``d tau = Omega^2 dt``.
    """

    name = "K"

    def __init__(self, oc: OrbitConstants, params: MetricParams = DEFAULT_PARAMS):
        self.oc = oc
        self.params = params

    def potential(self, rho, z):
        w, _, _ = _rest_energy_and_grad(rho, z, self.oc, self.params)
        return w / metric.omega((rho, z), self.params) ** 2

    def force(self, rho, z):
        ps, ga, (ps_r, ps_z), (ga_r, ga_z) = _psi_gamma_parts(rho, z, self.params)
        inv = math.exp(2.0 * ga - 2.0 * ps)
        w, w_r, w_z = _rest_energy_and_grad(rho, z, self.oc, self.params)
        return (
            -(w_r * inv + w * 2.0 * inv * (ga_r - ps_r)),
            -(w_z * inv + w * 2.0 * inv * (ga_z - ps_z)),
        )


class PotentialFlow(SeparableFlow):
    """Separable flow with a user-supplied potential and gradient."""

    name = "potential"

    def __init__(self, potential: Callable[[float, float], float], gradient: Callable[[float, float], tuple[float, float]]):
        self._potential = potential
        self._gradient = gradient

    def potential(self, rho, z):
        return self._potential(rho, z)

    def force(self, rho, z):
        g_rho, g_z = self._gradient(rho, z)
        return -g_rho, -g_z


class DecoupledOscillator(SeparableFlow):
    """``U = (w_rho^2 (rho - rho_c)^2 + w_z^2 z^2) / 2``, used to calibrate the section tools."""

    name = "oscillator"

    def __init__(self, omega_rho: float, omega_z: float, rho_c: float = 5.0):
        self.omega_rho = omega_rho
        self.omega_z = omega_z
        self.rho_c = rho_c

    def potential(self, rho, z):
        return 0.5 * (self.omega_rho**2 * (rho - self.rho_c) ** 2 + self.omega_z**2 * z * z)

    def force(self, rho, z):
        return -self.omega_rho**2 * (rho - self.rho_c), -self.omega_z**2 * z


@dataclass(frozen=True)
class Trajectory:
    tau: np.ndarray
    states: np.ndarray  # shape (n, 4): rho, z, p_rho, p_z
    f_values: np.ndarray
    drift_max: float
    method: str
    step: float

    @property
    def samples(self) -> list[PhasePoint]:
        return [PhasePoint(*row, tau=t) for row, t in zip(self.states.tolist(), self.tau.tolist())]

    @property
    def drift(self) -> np.ndarray:
        return self.f_values - self.f_values[0]

    def __len__(self):
        return len(self.tau)


@dataclass(frozen=True)
class SectionPoint:
    rho: float
    p_rho: float
    tau_cross: float
    refine_residual: float


def _default_flow(oc, flow, field_mode):
    if flow is not None:
        return flow
    if oc is None:
        raise ValueError("either orbit constants or a flow must be given")
    return FFlow(oc, field_mode)


def step_leapfrog(
    p: PhasePoint,
    dt: float,
    oc: OrbitConstants | None = None,
    *,
    field_mode: str = "gradient",
    flow: SeparableFlow | None = None,
) -> PhasePoint:
    """One kick-drift-kick step of size ``dt``."""
    flow = _default_flow(oc, flow, field_mode)
    if not flow.separable:
        raise TypeError(f"leapfrog needs a separable flow, got {flow.name!r}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    f_rho, f_z = flow.force(p.rho, p.z)
    pr = p.p_rho + 0.5 * dt * f_rho
    pz = p.p_z + 0.5 * dt * f_z
    rho = p.rho + dt * pr
    z = p.z + dt * pz
    if not rho >= R_MIN:
        raise DomainError(f"drift left the domain: rho = {rho!r}")
    f_rho, f_z = flow.force(rho, z)
    return PhasePoint(rho, z, pr + 0.5 * dt * f_rho, pz + 0.5 * dt * f_z, p.tau + dt)


def _run_leapfrog(flow, y0, tau0, dt, n_steps, record_every, bounds):
    force = flow.force
    rho, z, pr, pz = y0
    n_rec = n_steps // record_every + 1
    out = np.empty((n_rec, 4))
    taus = np.empty(n_rec)
    out[0] = y0
    taus[0] = tau0
    half = 0.5 * dt
    f_rho, f_z = force(rho, z)
    k = 1
    for i in range(1, n_steps + 1):
        pr += half * f_rho
        pz += half * f_z
        rho += dt * pr
        z += dt * pz
        bounds.check(rho, z)
        f_rho, f_z = force(rho, z)
        pr += half * f_rho
        pz += half * f_z
        if i % record_every == 0:
            out[k] = (rho, z, pr, pz)
            taus[k] = tau0 + i * dt
            k += 1
    return taus[:k], out[:k]


class _Stepper:
    """Thin wrapper over scipy's RK45 that raises this package's errors."""

    def __init__(self, flow, y0, tau0, tau_end, rtol, atol, bounds):
        self.flow = flow
        self.bounds = bounds
        self.solver = RK45(self._rhs, tau0, np.asarray(y0, dtype=float), tau_end, rtol=rtol, atol=atol)

    def _rhs(self, t, y):
        return np.array(self.flow.rhs(y))

    def step(self):
        s = self.solver
        t_old, y_old = s.t, s.y.copy()
        try:
            s.step()
        except DomainError as exc:
            raise SingularityError(str(exc)) from exc
        if s.status == "failed":
            raise StepFailureError(f"adaptive step failed at tau = {t_old:.6g}")
        self.bounds.check(s.y[0], s.y[1])
        return t_old, y_old, s.t, s.y.copy(), s.dense_output()

    @property
    def finished(self):
        return self.solver.status == "finished"


def _run_adaptive(flow, y0, tau0, dt, n_steps, record_every, bounds, rtol, atol):
    sample_dt = dt * record_every
    n_rec = n_steps // record_every + 1
    grid = tau0 + sample_dt * np.arange(n_rec)
    out = np.empty((n_rec, 4))
    out[0] = y0
    stepper = _Stepper(flow, y0, tau0, grid[-1], rtol, atol, bounds)
    k = 1
    while k < n_rec:
        _, _, t_new, _, dense = stepper.step()
        while k < n_rec and grid[k] <= t_new:
            out[k] = dense(grid[k])
            k += 1
        if stepper.finished and k < n_rec:
            out[k:] = stepper.solver.y
            k = n_rec
    return grid, out


def integrate(
    p0: PhasePoint,
    oc: OrbitConstants | None = None,
    dt: float = 1e-3,
    n_steps: int = 1000,
    method: str = "leapfrog",
    *,
    field_mode: str = "gradient",
    flow: Flow | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    bounds: EscapeBounds = EscapeBounds(),
    record_every: int = 1,
) -> Trajectory:
    """Integrate from ``p0`` for ``n_steps`` steps of size ``dt``.

    For ``adaptive_rk``, ``dt`` only sets the output grid; the solver picks its
    own steps under ``rtol``/``atol``.  Samples are stored every
    ``record_every`` steps and ``drift_max`` is taken over stored samples.
    """
    flow = _default_flow(oc, flow, field_mode)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    y0 = (p0.rho, p0.z, p0.p_rho, p0.p_z)
    bounds.check(p0.rho, p0.z)
    if method == "leapfrog":
        if not flow.separable:
            raise TypeError(f"leapfrog needs a separable flow, got {flow.name!r}")
        taus, states = _run_leapfrog(flow, y0, p0.tau, dt, n_steps, record_every, bounds)
    else:
        taus, states = _run_adaptive(flow, y0, p0.tau, dt, n_steps, record_every, bounds, rtol, atol)
    energy = np.array([flow.energy(row) for row in states])
    return Trajectory(
        tau=taus,
        states=states,
        f_values=energy,
        drift_max=float(np.max(np.abs(energy - energy[0]))),
        method=method,
        step=dt,
    )


def _refine_crossing(zfun, a, b, za, zb, tol=SECTION_TOL, maxiter=REFINE_MAXITER):
    """Root of ``zfun`` on ``[a, b]`` with ``za < 0 <= zb``.

    A few bisections shrink the bracket, then safeguarded secant steps finish.
    """
    if zb == 0.0:
        return b, 0.0
    x, zx = b, zb
    for it in range(maxiter):
        if it < 6:
            x = 0.5 * (a + b)
        else:
            x = b - zb * (b - a) / (zb - za)
            if not a < x < b:
                x = 0.5 * (a + b)
        zx = zfun(x)
        if abs(zx) < 1e-3 * tol or b - a <= 4 * np.finfo(float).eps * max(1.0, abs(b)):
            break
        if zx < 0:
            a, za = x, zx
        else:
            b, zb = x, zx
    if abs(zx) >= tol:
        raise ConvergenceError(f"crossing refinement stalled at |z| = {abs(zx):.3e}")
    return x, zx


def poincare_section(
    p0: PhasePoint,
    oc: OrbitConstants | None = None,
    n_crossings: int = 100,
    *,
    flow: Flow | None = None,
    field_mode: str = "gradient",
    max_tau: float = 1e5,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    bounds: EscapeBounds = EscapeBounds(),
) -> list[SectionPoint]:
    """Crossings of ``z = 0`` with ``p_z > 0``, in order of ``tau``.

    Integration stops after ``n_crossings`` crossings or at ``p0.tau + max_tau``,
    whichever comes first.  Raises :class:`NoCrossingError` if none was found.
    """
    if n_crossings < 1:
        raise ValueError(f"n_crossings must be >= 1, got {n_crossings}")
    flow = _default_flow(oc, flow, field_mode)
    bounds.check(p0.rho, p0.z)
    y0 = (p0.rho, p0.z, p0.p_rho, p0.p_z)
    stepper = _Stepper(flow, y0, p0.tau, p0.tau + max_tau, rtol, atol, bounds)
    points: list[SectionPoint] = []
    while len(points) < n_crossings and not stepper.finished:
        t_old, y_old, t_new, y_new, dense = stepper.step()
        if y_old[1] < 0.0 <= y_new[1]:
            tc, zc = _refine_crossing(lambda t: dense(t)[1], t_old, t_new, y_old[1], y_new[1])
            state = dense(tc)
            if state[3] <= 0:
                continue
            points.append(SectionPoint(float(state[0]), float(state[2]), float(tc), abs(float(zc))))
    if not points:
        raise NoCrossingError(f"no upward crossing of z = 0 within tau = {max_tau}")
    return points


def _ellipse_frame(xy: np.ndarray, tol: float = 1e-8):
    """Centre and whitening matrix of the conic through ``xy``, or None.

    Returns None unless the least-squares conic is an ellipse that fits every
    point to ``tol`` (relative).
    """
    scale = xy.std(axis=0)
    u = xy / scale
    design = np.column_stack([u[:, 0] ** 2, u[:, 0] * u[:, 1], u[:, 1] ** 2, u[:, 0], u[:, 1]])
    coef, *_ = np.linalg.lstsq(design, np.ones(len(u)), rcond=None)
    if np.max(np.abs(design @ coef - 1.0)) > tol:
        return None
    a, b, c, d, e = coef
    quad = np.array([[a, 0.5 * b], [0.5 * b, c]])
    if b * b - 4 * a * c >= 0:
        return None
    centre = np.linalg.solve(2.0 * quad, [-d, -e])
    if quad[0, 0] < 0:
        quad = -quad
    evals, evecs = np.linalg.eigh(quad)
    if evals[0] <= 0:
        return None
    root = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    return centre * scale, root @ np.diag(1.0 / scale)


def rotation_number(points: Sequence[SectionPoint]) -> float:
    """Mean clockwise angular advance per return, in turns, in ``[0, 1)``.

    Angles are measured in a frame where the invariant curve is a circle.
    When the points lie on one ellipse, its fitted centre and shape define the
    frame and the advance is exactly uniform for a linear twist; otherwise the
    points are centred on their centroid and whitened by their covariance.
    The clockwise sense matches the Hamiltonian flow in the ``(rho, p_rho)``
    plane.
    """
    if len(points) < 8:
        raise InsufficientDataError(f"need at least 8 section points, got {len(points)}")
    xy = np.array([(p.rho, p.p_rho) for p in points], dtype=float)
    centred = xy - xy.mean(axis=0)
    cov = np.cov(centred, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0 or evals[0] <= 1e-12 * evals[-1]:
        raise DegenerateGeometryError("section points are coincident or collinear")
    frame = _ellipse_frame(xy)
    if frame is None:
        u = centred @ (evecs @ np.diag(evals**-0.5) @ evecs.T).T
    else:
        centre, whiten = frame
        u = (xy - centre) @ whiten.T
    theta = np.arctan2(u[:, 1], u[:, 0])
    advance = np.mod(theta[:-1] - theta[1:], 2.0 * np.pi) / (2.0 * np.pi)
    return float(np.mean(advance)) % 1.0
