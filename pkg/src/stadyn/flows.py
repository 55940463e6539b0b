"""Isospectral flows sharing the invariant equation: Wegner's flow equation,
the open Toda chain (tridiagonal and many-spin Lax pairs) and the KdV
one-soliton potential of a Schrodinger operator."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .operators import ID2, SX, SY, SZ, as_hermitian, commutator, hs_norm
from .propagate import DivergenceError, TimeGrid, integrate_ode

log = logging.getLogger(__name__)

SPIN_N_MAX = 8
STALL_ETA = 1e-12
STALL_OFFDIAG = 1e-8


@dataclass(frozen=True)
class TridiagonalMatrix:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        e = np.asarray(self.offdiag, dtype=float)
        if e.shape != (max(len(d) - 1, 0),):
            raise ValueError("offdiag must have length n - 1")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def n(self) -> int:
        return len(self.diag)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def eigenvalues(self) -> np.ndarray:
        return eigh_tridiagonal(self.diag, self.offdiag, eigvals_only=True)


@dataclass
class FlowTrace:
    times: np.ndarray
    offdiag_norm_sq: np.ndarray
    eigenvalue_snapshots: np.ndarray
    snapshot_times: np.ndarray
    decay_rate: np.ndarray | None = None   # -2 sum (e_n - e_m)^2 |H_mn|^2 per time (Wegner)
    warnings: list[str] = field(default_factory=list)

    @property
    def drift(self) -> float:
        ev = self.eigenvalue_snapshots
        return float(np.max(np.abs(ev - ev[0])))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.offdiag_norm_sq) <= 1e-12))


def random_hermitian(n: int, seed: int, scale: float = 1 / np.sqrt(2)) -> np.ndarray:
    """(A + A^H)/2 * scale with A complex standard normal; E|H_mn|^2 = scale^2 off the diagonal."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T) * scale


# --- Wegner flow ---------------------------------------------------------

def wegner_generator(H) -> np.ndarray:
    """eta = i [H_diag, H]."""
    h = as_hermitian(H)
    d = np.real(np.diag(h))
    return 1j * (d[:, None] - d[None, :]) * h


def _wegner_rhs(h: np.ndarray) -> np.ndarray:
    # dH/ds = [[H_d, H], H] = X + X^H with X = [H_d, H] H
    d = h.diagonal().real
    x = ((d[:, None] - d[None, :]) * h) @ h
    return x + x.conj().T


def _decay_formula(h: np.ndarray) -> float:
    d = h.diagonal().real
    return float(-2.0 * np.sum((d[:, None] - d[None, :]) ** 2 * np.abs(h) ** 2))


def default_horizon(H) -> float:
    """20 / (smallest nonzero level spacing)^2."""
    ev = np.linalg.eigvalsh(as_hermitian(H))
    gaps = np.diff(ev)
    gaps = gaps[gaps > 1e-12]
    if not len(gaps):
        return 1.0
    return 20.0 / float(np.min(gaps)) ** 2


@dataclass
class WegnerResult:
    trace: FlowTrace
    final: np.ndarray
    stalled: bool


def wegner_flow(H0, s_max: float | None = None, steps: int | None = None, dt: float = 1e-3,
                record_every: int | None = None) -> WegnerResult:
    """Integrate dH/ds = [[H_diag, H], H] with RK4.

    Either ``steps`` or ``dt`` fixes the step size.  The off-diagonal weight
    and the decay-rate formula are recorded at every step; spectra every
    ``record_every`` steps (and at the end).
    """
    h = np.array(as_hermitian(H0), dtype=complex)
    s_max = default_horizon(h) if s_max is None else float(s_max)
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    steps = int(np.ceil(s_max / dt)) if steps is None else int(steps)
    grid = TimeGrid(0.0, s_max, steps)
    ds = grid.dt
    record_every = max(1, steps // 200) if record_every is None else int(record_every)
    n = h.shape[0]
    mask = ~np.eye(n, dtype=bool)
    scale = max(hs_norm(h), 1.0)

    # |H_mn|^2 and the diagonal at every step; weights and rates are reduced afterwards
    abs2 = np.empty((steps + 1, n, n))
    diag = np.empty((steps + 1, n))
    np.abs(h, out=abs2[0])
    diag[0] = h.diagonal().real
    snaps = [np.linalg.eigvalsh(h)]
    snap_t = [0.0]
    stalled = False
    warnings = []
    check_every = 256
    for k in range(steps):
        k1 = _wegner_rhs(h)
        k2 = _wegner_rhs(h + 0.5 * ds * k1)
        k3 = _wegner_rhs(h + 0.5 * ds * k2)
        k4 = _wegner_rhs(h + ds * k3)
        h = h + (ds / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        h = 0.5 * (h + h.conj().T)
        np.abs(h, out=abs2[k + 1])
        diag[k + 1] = h.diagonal().real
        if (k + 1) % check_every == 0 and not np.isfinite(abs2[k + 1]).all():
            raise DivergenceError("Wegner flow diverged", (k + 1) * ds)
        if (k + 1) % record_every == 0 or k + 1 == steps:
            snaps.append(np.linalg.eigvalsh(h))
            snap_t.append((k + 1) * ds)
    if not np.isfinite(h).all() or hs_norm(h) > 10 * scale:
        raise DivergenceError("Wegner flow diverged", s_max)
    abs2 **= 2
    offd = abs2[:, mask].sum(axis=1)
    gaps2 = (diag[:, :, None] - diag[:, None, :]) ** 2
    rate = -2.0 * np.einsum("kmn,kmn->k", gaps2, abs2)
    del abs2, gaps2
    eta = wegner_generator(h)
    if hs_norm(eta) < STALL_ETA and offd[-1] > STALL_OFFDIAG:
        stalled = True
        warnings.append("flow stalled: generator vanished with off-diagonal weight left (degenerate diagonal)")
    snaps = np.array(snaps)
    if np.any(np.diff(snaps, axis=1) < 1e-8):
        warnings.append("eigenvalue crossing or near-degeneracy in snapshots")
    trace = FlowTrace(grid.times, offd, snaps, np.array(snap_t), rate, warnings)
    return WegnerResult(trace, h, stalled)


@dataclass
class DecayCheck:
    ok: bool
    max_violation: float
    max_relative_mismatch: float


def offdiag_decay_check(trace: FlowTrace, snapshots=None, min_weight: float = 1e-10,
                        rel_tol: float = 1e-4) -> DecayCheck:
    """Compare a central finite difference of the off-diagonal weight with the
    closed-form decay rate, and check monotone nonincrease.

    ``snapshots`` (matrices at ``trace.times``) override the rate stored in
    the trace.  Points whose weight is below ``min_weight`` are skipped in the
    rate comparison; there round-off in the weight swamps the difference.
    """
    s = trace.offdiag_norm_sq
    if snapshots is not None:
        rate = np.array([_decay_formula(np.asarray(h)) for h in snapshots])
    else:
        rate = trace.decay_rate
    t = trace.times
    viol = float(max(np.max(np.diff(s)), 0.0)) if len(s) > 1 else 0.0
    mism = 0.0
    if len(s) >= 3 and rate is not None:
        fd = (s[2:] - s[:-2]) / (t[2:] - t[:-2])
        r = rate[1:-1]
        use = (s[1:-1] > min_weight) & (np.abs(r) > 0)
        if np.any(use):
            mism = float(np.max(np.abs(fd[use] - r[use]) / np.abs(r[use])))
        zero = np.abs(r) == 0
        if np.any(zero):
            mism = max(mism, float(np.max(np.abs(fd[zero]))))
    return DecayCheck(viol <= 1e-12 and mism <= rel_tol, viol, mism)


# --- Toda lattice ---------------------------------------------------------

def toda_rhs(J, h) -> tuple[np.ndarray, np.ndarray]:
    """Open-chain Toda equations (J_0 = J_N = 0).

    dJ_n/dt = J_n (h_{n+1} - h_n),  dh_n/dt = 2 (J_n^2 - J_{n-1}^2).
    """
    J = np.asarray(J, dtype=float)
    h = np.asarray(h, dtype=float)
    if J.shape != (len(h) - 1,):
        raise ValueError(f"need len(J) = len(h) - 1, got {J.shape} and {h.shape}")
    dJ = J * (h[1:] - h[:-1])
    j2 = np.concatenate([[0.0], J**2, [0.0]])
    dh = 2.0 * (j2[1:] - j2[:-1])
    return dJ, dh


def _toda_vec_rhs(n: int):
    def rhs(t, y):
        dJ, dh = toda_rhs(y[: n - 1], y[n - 1:])
        return np.concatenate([dJ, dh])
    return rhs


@dataclass
class TodaResult:
    trace: FlowTrace
    J: np.ndarray   # (nodes, n-1)
    h: np.ndarray   # (nodes, n)

    def matrix(self, node: int) -> TridiagonalMatrix:
        return TridiagonalMatrix(self.h[node], self.J[node])

    @property
    def sum_h_drift(self) -> float:
        s = self.h.sum(axis=1)
        return float(np.max(np.abs(s - s[0])))


def toda_flow(J0, h0, grid: TimeGrid) -> TodaResult:
    J0 = np.asarray(J0, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    n = len(h0)
    toda_rhs(J0, h0)  # shape check
    y = integrate_ode(_toda_vec_rhs(n), np.concatenate([J0, h0]), grid)
    J, h = y[:, : n - 1], y[:, n - 1:]
    ev = np.array([eigh_tridiagonal(h[k], J[k], eigvals_only=True) if n > 1 else h[k] for k in range(len(y))])
    trace = FlowTrace(grid.times, 2.0 * np.sum(J**2, axis=1), ev, grid.times)
    return TodaResult(trace, J, h)


def toda_step(J, h, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One RK4 step of the Toda chain (signed dt allowed)."""
    n = len(h)
    f = _toda_vec_rhs(n)
    y = np.concatenate([J, h]).astype(float)
    k1 = f(0.0, y)
    k2 = f(0.0, y + 0.5 * dt * k1)
    k3 = f(0.0, y + 0.5 * dt * k2)
    k4 = f(0.0, y + dt * k3)
    y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[: n - 1], y[n - 1:]


def _site_op(op: np.ndarray, site: int, n: int) -> np.ndarray:
    return reduce(np.kron, [op if k == site else ID2 for k in range(n)])


def spin_lax_build(J, h) -> tuple[np.ndarray, np.ndarray]:
    """Many-spin Lax pair of the open Toda chain.

    L = 1/2 sum J_n (X_n X_{n+1} + Y_n Y_{n+1}) + 1/2 sum h_n Z_n
    M = -i/2 sum J_n (X_n Y_{n+1} - Y_n X_{n+1})
    """
    J = np.asarray(J, dtype=float)
    h = np.asarray(h, dtype=float)
    n = len(h)
    if n > SPIN_N_MAX:
        raise ValueError(f"N={n} exceeds dense capacity N <= {SPIN_N_MAX}")
    if J.shape != (n - 1,):
        raise ValueError("need len(J) = len(h) - 1 (open chain)")
    x = [_site_op(SX, k, n) for k in range(n)]
    y = [_site_op(SY, k, n) for k in range(n)]
    z = [_site_op(SZ, k, n) for k in range(n)]
    dim = 2**n
    L = np.zeros((dim, dim), complex)
    M = np.zeros((dim, dim), complex)
    for k in range(n - 1):
        L += 0.5 * J[k] * (x[k] @ x[k + 1] + y[k] @ y[k + 1])
        M += -0.5j * J[k] * (x[k] @ y[k + 1] - y[k] @ x[k + 1])
    for k in range(n):
        L += 0.5 * h[k] * z[k]
    return L, M


def free_fermion_spectrum(J, h) -> np.ndarray:
    """Many-body spectrum of the spin L from its single-particle tridiagonal image:
    all subset sums of single-particle levels minus sum(h)/2."""
    eps = TridiagonalMatrix(h, J).eigenvalues()
    n = len(eps)
    occ = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    return np.sort(occ @ eps - 0.5 * np.sum(h))


def spin_lax_residual(J, h, delta: float = 1e-4) -> float:
    """||dL/dt - [M, L]||_HS / ||L||_HS at the state (J, h).

    dL/dt is a central difference over +-delta, with the neighbouring states
    obtained by one RK4 step of the Toda equations.
    """
    Jp, hp = toda_step(J, h, delta)
    Jm, hm = toda_step(J, h, -delta)
    L, M = spin_lax_build(J, h)
    dL = (spin_lax_build(Jp, hp)[0] - spin_lax_build(Jm, hm)[0]) / (2 * delta)
    return hs_norm(dL - commutator(M, L)) / max(hs_norm(L), 1e-300)


# --- KdV -------------------------------------------------------------------

class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SolitonField:
    kappa: float
    x: np.ndarray
    t: float
    u: np.ndarray


def kdv_profile(kappa: float, x, t) -> np.ndarray:
    """u(x, t) = -2 kappa^2 / cosh^2(kappa x - 4 kappa^3 t)."""
    arg = kappa * np.asarray(x, dtype=float) - 4.0 * kappa**3 * np.asarray(t, dtype=float)
    return -2.0 * kappa**2 / np.cosh(arg) ** 2


def kdv_soliton(kappa: float, x, t: float, tail_tol: float = 1e-12) -> SolitonField:
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x = np.asarray(x, dtype=float)
    u = kdv_profile(kappa, x, t)
    if max(abs(u[0]), abs(u[-1])) >= tail_tol:
        raise DomainError(f"soliton tail {max(abs(u[0]), abs(u[-1])):.2e} at the grid edge; widen the domain")
    return SolitonField(kappa, x, float(t), u)


def kdv_residual(kappa: float, x, t: float, dt: float) -> float:
    """RMS of u_t - 6 u u_x + u_xxx on interior points, by central differences
    (second order in space and time)."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    u = kdv_profile(kappa, x, t)
    ut = (kdv_profile(kappa, x, t + dt) - kdv_profile(kappa, x, t - dt)) / (2 * dt)
    ux = (u[3:-1] - u[1:-3]) / (2 * dx)
    uxxx = (u[4:] - 2 * u[3:-1] + 2 * u[1:-3] - u[:-4]) / (2 * dx**3)
    r = ut[2:-2] - 6 * u[2:-2] * ux + uxxx
    return float(np.sqrt(np.mean(r**2)))


def schrodinger_tridiagonal(u, dx: float) -> TridiagonalMatrix:
    """-d^2/dx^2 + u with Dirichlet ends and the three-point stencil."""
    u = np.asarray(u, dtype=float)
    return TridiagonalMatrix(2.0 / dx**2 + u, -np.ones(len(u) - 1) / dx**2)


def lowest_eigenvalue(u, dx: float) -> float:
    m = schrodinger_tridiagonal(u, dx)
    return float(eigh_tridiagonal(m.diag, m.offdiag, eigvals_only=True, select="i", select_range=(0, 0))[0])


@dataclass
class BoundStateTrace:
    times: np.ndarray
    energies: np.ndarray
    warnings: list[str]

    @property
    def drift(self) -> float:
        return float(np.max(self.energies) - np.min(self.energies))


def kdv_boundstate_check(kappa: float, x, times, tail_tol: float = 1e-12) -> BoundStateTrace:
    """Lowest eigenvalue of the discretized -d^2 + u(x, t) at each time."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    warnings = []
    energies = []
    for t in times:
        u = kdv_profile(kappa, x, t)
        edge = max(abs(u[0]), abs(u[-1]))
        if edge >= tail_tol:
            warnings.append(f"tail leakage {edge:.2e} at t={t:.6g}")
        energies.append(lowest_eigenvalue(u, dx))
    return BoundStateTrace(np.asarray(times, dtype=float), np.array(energies), warnings)
