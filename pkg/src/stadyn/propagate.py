"""Fixed-step integrators: classical RK4 for real ODEs and a midpoint
(second-order Magnus) exponential propagator for the Schrodinger equation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operators import ValidationError, as_hermitian

STATE_NORM_TOL = 1e-10


class DivergenceError(RuntimeError):
    """Integration produced a non-finite value."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    tf: float
    steps: int

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"need tf > t0, got t0={self.t0}, tf={self.tf}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"steps must be an integer >= 2, got {self.steps}")

    @classmethod
    def span(cls, tf: float, steps: int) -> "TimeGrid":
        return cls(0.0, float(tf), int(steps))

    @property
    def dt(self) -> float:
        return (self.tf - self.t0) / self.steps

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.t0 + self.dt * (np.arange(self.steps) + 0.5)

    def __len__(self) -> int:
        return self.steps + 1


def integrate_ode(rhs: Callable, y0, grid: TimeGrid) -> np.ndarray:
    """Classical RK4 for ``y' = rhs(t, y)``; returns shape ``(steps + 1, *y0.shape)``."""
    y = np.array(y0, dtype=float)
    out = np.empty((grid.steps + 1,) + y.shape)
    out[0] = y
    dt = grid.dt
    t = grid.t0
    for k in range(grid.steps):
        t = grid.t0 + k * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state at t={t + dt:.6g}", t + dt)
        out[k + 1] = y
    return out


def sample_operator(op_fn: Callable, times) -> np.ndarray:
    """Evaluate an operator-valued function at ``times`` -> ``(n, d, d)``.

    Vectorized callables (returning a stacked array for array input) are used
    directly; anything else is called once per time.
    """
    times = np.asarray(times, dtype=float)
    try:
        out = np.asarray(op_fn(times))
    except Exception:
        out = None
    if out is None or out.ndim != 3 or out.shape[0] != len(times):
        out = np.stack([np.asarray(op_fn(float(t))) for t in times])
    return out.astype(complex, copy=False)


def check_state(psi, dim: int | None = None) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("state must be a vector")
    if dim is not None and len(psi) != dim:
        raise ValueError(f"state has dim {len(psi)}, expected {dim}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > STATE_NORM_TOL:
        raise ValidationError(f"state not normalized (|psi| = {norm:.12g})")
    return psi


def expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) for a stack of Hermitian matrices ``(n, d, d)``.

    2x2 blocks use the closed Pauli form, larger ones an eigendecomposition.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape[-1] == 2:
        a0 = 0.5 * np.real(h[..., 0, 0] + h[..., 1, 1])
        az = 0.5 * np.real(h[..., 0, 0] - h[..., 1, 1])
        ax = np.real(h[..., 1, 0])
        ay = np.imag(h[..., 1, 0])
        r = np.sqrt(ax**2 + ay**2 + az**2)
        c = np.cos(r * dt)
        s = dt * np.sinc(r * dt / np.pi)  # sin(r dt) / r
        ph = np.exp(-1j * a0 * dt)
        u = np.empty(h.shape, dtype=complex)
        u[..., 0, 0] = ph * (c - 1j * s * az)
        u[..., 1, 1] = ph * (c + 1j * s * az)
        u[..., 0, 1] = ph * (-1j * s * (ax - 1j * ay))
        u[..., 1, 0] = ph * (-1j * s * (ax + 1j * ay))
        return u
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def unitary_propagate(hamiltonian: Callable, psi0, grid: TimeGrid) -> np.ndarray:
    """Solve i d/dt psi = H(t) psi with one exact exponential of H(t_mid) per step.

    Returns the state at every grid node, shape ``(steps + 1, dim)``.
    """
    hs = sample_operator(hamiltonian, grid.midpoints)
    as_hermitian(hs, name="H(t)")
    psi = check_state(psi0, hs.shape[-1])
    us = expm_hermitian(hs, grid.dt)
    out = np.empty((grid.steps + 1, len(psi)), dtype=complex)
    out[0] = psi
    for k in range(grid.steps):
        psi = us[k] @ psi
        out[k + 1] = psi
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=1)))
        raise DivergenceError("non-finite amplitude", float(grid.times[bad]))
    return out


def fidelity(a, b) -> float:
    """|<a|b>|^2 for normalized vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)) ** 2)


def fidelity_trace(a, b) -> np.ndarray:
    """Row-wise |<a_k|b_k>|^2 for two trajectories."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.abs(np.einsum("ki,ki->k", np.conj(a), b)) ** 2


def split_operator_propagate(potential: Callable, psi0, x: np.ndarray, grid: TimeGrid,
                             mass: float = 1.0, record=None) -> np.ndarray:
    """Strang-split FFT propagation of a 1D wavefunction on a periodic grid.

    ``potential(x, t)`` returns V on the grid.  Returns the states at the
    node indices in ``record`` (default: final state only), shape
    ``(len(record), len(x))``.
    """
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    k = 2.0 * np.pi * np.fft.fftfreq(len(x), d=dx)
    dt = grid.dt
    kinetic = np.exp(-1j * dt * k**2 / (2.0 * mass))
    record = [grid.steps] if record is None else list(record)
    want = set(record)
    psi = np.array(psi0, dtype=complex)
    snaps = {}
    if 0 in want:
        snaps[0] = psi.copy()
    for n in range(grid.steps):
        tm = grid.t0 + (n + 0.5) * dt
        half = np.exp(-0.5j * dt * potential(x, tm))
        psi = half * np.fft.ifft(kinetic * np.fft.fft(half * psi))
        if n + 1 in want:
            snaps[n + 1] = psi.copy()
    return np.stack([snaps[i] for i in record])
