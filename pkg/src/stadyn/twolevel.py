"""Inverse engineering of a driven spin-1/2 on the Bloch sphere.

The Hamiltonian is ``H = (h/2) n.sigma`` (h >= 0, |n| = 1) and the invariant
``I = e.sigma`` with a unit Bloch vector ``e``; the invariant equation reduces
to ``de/dt = h n x e``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .invariant import (ProtocolPair, Schedule, VerificationReport, boundary_check, eigentrack,
                        invariant_residual, lr_phase)
from .operators import PAULI, pauli_basis
from .propagate import TimeGrid, fidelity_trace, unitary_propagate

THRESHOLD_RTOL = 1e-12
DEFAULT_MARGIN = 1e-3


class ThresholdError(ValueError):
    """Field amplitude below |dtheta/dt| somewhere on the grid."""

    def __init__(self, message: str, node: int, time: float, required_h: float):
        super().__init__(message)
        self.node = node
        self.time = time
        self.required_h = required_h


class SingularityError(ValueError):
    pass


class UnsupportedSchedule(ValueError):
    pass


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


def bloch_vector(theta, phi=0.0) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def pauli_dot(v) -> np.ndarray:
    """v . sigma for v of shape (..., 3)."""
    return np.tensordot(np.asarray(v, dtype=float), PAULI, axes=([-1], [0]))


@dataclass(frozen=True)
class BlochSchedule:
    """Polar angles of the invariant axis as vectorized functions of time."""

    grid: TimeGrid
    theta_fn: Callable
    theta_dot_fn: Callable
    phi_fn: Callable = _zero
    phi_dot_fn: Callable = _zero
    boundary_compliant: bool = False

    def __post_init__(self):
        if self.boundary_compliant:
            td = self.theta_dot_fn(np.array([self.grid.t0, self.grid.tf]))
            if np.max(np.abs(td)) > 1e-8:
                raise ValueError("schedule flagged boundary-compliant but dtheta/dt != 0 at an end")

    @property
    def theta(self) -> np.ndarray:
        return self.theta_fn(self.grid.times)

    @property
    def theta_dot(self) -> np.ndarray:
        return self.theta_dot_fn(self.grid.times)

    @property
    def phi(self) -> np.ndarray:
        return self.phi_fn(self.grid.times)

    @property
    def has_phi(self) -> bool:
        return self.phi_fn is not _zero

    def e(self, t) -> np.ndarray:
        return bloch_vector(self.theta_fn(t), self.phi_fn(t))

    def e_dot(self, t) -> np.ndarray:
        th, ph = self.theta_fn(t), self.phi_fn(t)
        thd, phd = self.theta_dot_fn(t), self.phi_dot_fn(t)
        return np.stack([
            np.cos(th) * np.cos(ph) * thd - np.sin(th) * np.sin(ph) * phd,
            np.cos(th) * np.sin(ph) * thd + np.sin(th) * np.cos(ph) * phd,
            -np.sin(th) * thd,
        ], axis=-1)

    def invariant(self, t) -> np.ndarray:
        return pauli_dot(self.e(t))


def polynomial_theta(theta0: float, thetaf: float, grid: TimeGrid) -> BlochSchedule:
    """theta(t) = theta0 + (thetaf - theta0) (3 s^2 - 2 s^3), s = (t - t0) / T."""
    t0, T = grid.t0, grid.duration
    delta = thetaf - theta0

    def theta(t):
        s = (np.asarray(t, dtype=float) - t0) / T
        return theta0 + delta * (3 * s**2 - 2 * s**3)

    def theta_dot(t):
        s = (np.asarray(t, dtype=float) - t0) / T
        return delta * 6 * (s - s**2) / T

    return BlochSchedule(grid, theta, theta_dot, boundary_compliant=True)


def linear_theta(theta0: float, thetaf: float, grid: TimeGrid) -> BlochSchedule:
    """Linear ramp; violates the endpoint conditions (a negative control)."""
    rate = (thetaf - theta0) / grid.duration
    return BlochSchedule(grid, lambda t: theta0 + rate * (np.asarray(t, float) - grid.t0),
                         lambda t: np.full_like(np.asarray(t, float), rate))


def threshold_field(theta0: float, thetaf: float, tf: float) -> float:
    """Smallest constant h for the polynomial schedule: 3 |thetaf - theta0| / (2 tf)."""
    return 1.5 * abs(thetaf - theta0) / tf


@dataclass(frozen=True)
class FieldProtocol:
    """h(t) >= 0 and unit n(t) as vectorized functions, plus the grid they are used on."""

    grid: TimeGrid
    h_fn: Callable
    n_fn: Callable

    def __post_init__(self):
        h, n = self.h, self.n
        if np.any(h < 0):
            raise ValueError("field amplitude must be nonnegative")
        if np.max(np.abs(np.linalg.norm(n, axis=1) - 1.0)) > 1e-10:
            raise ValueError("field direction is not a unit vector")

    @property
    def h(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.h_fn(self.grid.times), dtype=float), (len(self.grid),))

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.n_fn(self.grid.times), dtype=float)

    def field(self, t) -> np.ndarray:
        """h(t) n(t), shape (..., 3)."""
        return np.asarray(self.h_fn(t), dtype=float)[..., None] * np.asarray(self.n_fn(t), dtype=float)

    def hamiltonian(self, t) -> np.ndarray:
        return 0.5 * pauli_dot(self.field(t))


def _as_field_fn(h) -> Callable:
    if callable(h):
        return lambda t: np.asarray(h(t), dtype=float) * np.ones_like(np.asarray(t, dtype=float))
    value = float(h)
    return lambda t: np.full_like(np.asarray(t, dtype=float), value)


def field_from_invariant(sched: BlochSchedule, h) -> FieldProtocol:
    """Field direction n(t) for a prescribed amplitude h(t) (constant or callable).

    n = (sqrt(1 - r^2) sin(theta), r, sqrt(1 - r^2) cos(theta)), r = theta_dot / h.
    Raises ThresholdError at the first node with |theta_dot| > h.
    """
    if sched.has_phi:
        raise UnsupportedSchedule("field_from_invariant needs e(t) in the x-z plane (phi = 0)")
    h_fn = _as_field_fn(h)
    hs = h_fn(sched.grid.times)
    td = np.abs(sched.theta_dot)
    bad = np.flatnonzero(td > hs * (1.0 + THRESHOLD_RTOL))
    if len(bad):
        k = int(bad[0])
        t = float(sched.grid.times[k])
        need = float(np.max(td))
        raise ThresholdError(
            f"|dtheta/dt| = {td[k]:.6g} exceeds h = {hs[k]:.6g} at node {k} (t={t:.6g}); "
            f"need h >= {need:.6g}", k, t, need)

    def n_fn(t):
        hv = h_fn(t)
        r = np.clip(np.divide(sched.theta_dot_fn(t), hv, out=np.zeros_like(hv), where=hv > 0), -1.0, 1.0)
        c = np.sqrt(1.0 - r**2)
        th = sched.theta_fn(t)
        return np.stack([c * np.sin(th), r, c * np.cos(th)], axis=-1)

    return FieldProtocol(sched.grid, h_fn, n_fn)


def y_axis_protocol(sched: BlochSchedule) -> FieldProtocol:
    """Field fixed along +-y with h = |theta_dot| (sign follows the sweep direction)."""
    if sched.has_phi:
        raise UnsupportedSchedule("y-axis driving needs e(t) in the x-z plane")
    td = sched.theta_dot
    if np.any(td > 1e-12) and np.any(td < -1e-12):
        raise UnsupportedSchedule("theta(t) is not monotone; a fixed y-axis field cannot follow it")
    sign = -1.0 if np.any(td < -1e-12) else 1.0

    def n_fn(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        out[..., 1] = sign
        return out

    return FieldProtocol(sched.grid, lambda t: np.abs(sched.theta_dot_fn(t)), n_fn)


def restricted_field(sched: BlochSchedule, margin: float = DEFAULT_MARGIN) -> FieldProtocol:
    """Field confined to the x-z plane, n = (sin Theta, 0, cos Theta), for a general e(theta, phi).

    h cos Theta = -theta_dot / (tan theta tan phi) + phi_dot,
    h sin Theta = -theta_dot / sin phi.
    """
    interior = sched.grid.times[1:-1]
    th = sched.theta_fn(interior)
    ph = sched.phi_fn(interior)
    bad = np.flatnonzero((np.abs(np.sin(ph)) < margin) | (np.abs(np.tan(th)) < margin))
    if len(bad):
        k = int(bad[0]) + 1
        raise SingularityError(
            f"|sin phi| or |tan theta| below margin {margin:g} at node {k} (t={sched.grid.times[k]:.6g})")

    def components(t):
        th, ph = sched.theta_fn(t), sched.phi_fn(t)
        thd, phd = sched.theta_dot_fn(t), sched.phi_dot_fn(t)
        thd = np.asarray(thd, dtype=float)
        denom = np.tan(th) * np.tan(ph)
        a = -np.divide(thd, denom, out=np.zeros_like(thd), where=thd != 0) + phd
        b = -np.divide(thd, np.sin(ph), out=np.zeros_like(thd), where=thd != 0)
        return a, b  # h cos(Theta), h sin(Theta)

    def h_fn(t):
        a, b = components(t)
        return np.hypot(a, b)

    def n_fn(t):
        a, b = components(t)
        angle = np.arctan2(b, a)
        return np.stack([np.sin(angle), np.zeros_like(angle), np.cos(angle)], axis=-1)

    return FieldProtocol(sched.grid, h_fn, n_fn)


def bloch_residual(proto: FieldProtocol, sched: BlochSchedule, interior: bool = True) -> float:
    """max ||de/dt - h n x e|| relative to max ||de/dt|| (or 1 if e is static)."""
    t = sched.grid.times[1:-1] if interior else sched.grid.times
    ed = sched.e_dot(t)
    r = ed - np.cross(proto.field(t), sched.e(t))
    scale = float(np.max(np.linalg.norm(ed, axis=1)))
    return float(np.max(np.linalg.norm(r, axis=1))) / (scale if scale > 0 else 1.0)


def as_pair(proto: FieldProtocol, sched: BlochSchedule) -> ProtocolPair:
    """Pauli-basis coefficient schedules: H = sum (h n_mu / 2) sigma_mu, I = sum e_mu sigma_mu."""
    t = sched.grid.times
    h = Schedule(sched.grid, 0.5 * proto.field(t), labels=("x", "y", "z"))
    b = Schedule(sched.grid, sched.e(t), rates=sched.e_dot(t), labels=("x", "y", "z"))
    return ProtocolPair(pauli_basis(), h, b)


def _wrap(a):
    return np.angle(np.exp(1j * np.asarray(a)))


def verify_protocol(proto: FieldProtocol, sched: BlochSchedule, branch: int = -1,
                    fidelity_tol: float = 1e-6) -> VerificationReport:
    """Propagate the invariant eigenstate and compare it with the exact transport.

    ``branch`` selects the eigenvalue (-1 or +1) of e.sigma that is tracked.
    """
    if proto.grid != sched.grid:
        raise ValueError("protocol and schedule use different grids")
    if branch not in (-1, 1):
        raise ValueError("branch must be -1 or +1")
    grid = sched.grid
    track = eigentrack(sched.invariant, grid)
    idx = 0 if branch == -1 else 1
    phi = track.state(idx)
    psi = unitary_propagate(proto.hamiltonian, phi[0], grid)
    fid = fidelity_trace(phi, psi)
    phase = lr_phase(proto.hamiltonian, phi, grid)
    overlap = np.einsum("ki,ki->k", np.conj(phi), psi)
    phase_err = float(np.max(np.abs(_wrap(np.angle(overlap) - phase.alpha))))
    residual = invariant_residual(proto.hamiltonian, sched.invariant, grid)
    ok, offending = boundary_check(as_pair(proto, sched))
    report = VerificationReport(
        residual_max=residual,
        eigenvalue_drift_max=track.drift,
        fidelity_min=float(np.min(fid)),
        phase_error=phase_err,
        boundary_ok=ok,
        warnings=list(track.warnings) + [f"boundary: {o}" for o in offending],
        extra={"fidelity_final": float(fid[-1]), "branch": branch,
               "bloch_residual": bloch_residual(proto, sched)},
    )
    report.passed = report.fidelity_min >= 1.0 - fidelity_tol
    return report
