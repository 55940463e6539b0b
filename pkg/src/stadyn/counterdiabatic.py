"""Counterdiabatic (transitionless) driving and its relation to dynamical invariants."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .invariant import DEGENERACY_GAP, DegeneracyError, VerificationReport, invariant_residual, time_derivative
from .operators import BasisSet, as_hermitian, commutator, hs_norm
from .propagate import TimeGrid, sample_operator


def _check_gaps(E: np.ndarray, gap: float, t: float | None = None) -> None:
    d = np.diff(E)
    if d.size and np.min(d) < gap:
        k = int(np.argmin(d))
        where = "" if t is None else f" at t={t:.6g}"
        raise DegeneracyError(f"levels {k} and {k + 1} cross{where} (gap {d[k]:.3e})")


def cd_from_eigensystem(E: np.ndarray, V: np.ndarray, hdot: np.ndarray,
                        degeneracy_gap: float = DEGENERACY_GAP) -> np.ndarray:
    """i sum_{m != n} |m><m|dH0/dt|n><n| / (E_n - E_m) for eigenpairs (E, V[:, n]).

    The result does not depend on the phases of the eigenvectors.
    """
    E = np.asarray(E, dtype=float)
    order = np.argsort(E)
    _check_gaps(E[order], degeneracy_gap)
    m = V.conj().T @ hdot @ V
    denom = E[None, :] - E[:, None]
    np.fill_diagonal(denom, 1.0)
    k = 1j * m / denom
    np.fill_diagonal(k, 0.0)
    h1 = V @ k @ V.conj().T
    return 0.5 * (h1 + h1.conj().T)


def cd_term(H0: Callable, t: float, dt: float = 1e-5,
            degeneracy_gap: float = DEGENERACY_GAP) -> np.ndarray:
    """Spectral counterdiabatic term of H0 at time t (dH0/dt by central difference)."""
    h = as_hermitian(H0(t), name="H0(t)")
    E, V = np.linalg.eigh(h)
    _check_gaps(E, degeneracy_gap, t)
    return cd_from_eigensystem(E, V, time_derivative(H0, t, dt), degeneracy_gap)


def h01_residual(H0: Callable, H1: Callable, t: float, dt: float = 1e-5) -> float:
    """||[H0, i dH0/dt - [H1, H0]]||_HS."""
    h0 = np.asarray(H0(t), dtype=complex)
    inner = 1j * time_derivative(H0, t, dt) - commutator(np.asarray(H1(t), dtype=complex), h0)
    return hs_norm(commutator(h0, inner))


def invariant_cd_identify(I: Callable, H: Callable, grid: TimeGrid, epsilon: float = 1.0,
                          dt: float | None = None, drift_tol: float = 1e-8,
                          comm_tol: float = 1e-6) -> VerificationReport:
    """Check that H0 = epsilon I is driven exactly by H up to terms commuting with I.

    Reports the spectral drift of epsilon I and, per node, the commutator
    ||[D, I]|| / (scale ||I||) with D = H - cd_term(epsilon I) and
    scale = max(||D||, ||H||).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = min(grid.dt / 10.0, 1e-5) if dt is None else dt
    times = grid.times
    i_all = as_hermitian(sample_operator(I, times), name="I(t)")
    ev = np.linalg.eigvalsh(epsilon * i_all)
    drift = float(np.max(np.abs(ev - ev[0])))

    def h0(t):
        return epsilon * np.asarray(I(t), dtype=complex)

    worst = 0.0
    notes = []
    for k, t in enumerate(times):
        try:
            h1 = cd_term(h0, t, d)
        except DegeneracyError as exc:
            notes.append(f"node {k}: {exc}")
            continue
        hk = np.asarray(H(t), dtype=complex)
        D = hk - h1
        scale = max(hs_norm(D), hs_norm(hk), 1e-300) * max(hs_norm(i_all[k]), 1e-300)
        worst = max(worst, hs_norm(commutator(D, i_all[k])) / scale)
    res = invariant_residual(H, I, grid, step=d)
    passed = drift < drift_tol and worst < comm_tol and not notes
    return VerificationReport(residual_max=res, eigenvalue_drift_max=drift, passed=passed, warnings=notes,
                              extra={"commutator_ratio_max": worst, "epsilon": epsilon})


@dataclass
class VariationalFit:
    coefficients: np.ndarray
    objective: float
    h01: float
    rank: int
    warnings: list[str] = field(default_factory=list)

    def operator(self, ansatz: BasisSet) -> np.ndarray:
        return ansatz.combine(self.coefficients)


def _objective_system(h0: np.ndarray, hdot: np.ndarray, ansatz: BasisSet):
    cols = commutator(ansatz.operators, h0[None])          # (K, d, d)
    target = 1j * hdot
    a = cols.reshape(len(ansatz), -1).T
    a = np.concatenate([a.real, a.imag])
    y = target.reshape(-1)
    y = np.concatenate([y.real, y.imag])
    return a, y


def variational_cd(H0: Callable, ansatz: BasisSet, t: float, dt: float = 1e-5,
                   rcond: float = 1e-10) -> VariationalFit:
    """Minimize ||i dH0/dt - [H1, H0]||_HS over H1 = sum_mu c_mu X_mu (real c).

    The objective is quadratic in c, so this is a real linear least-squares
    problem.  A rank-deficient system (for example an ansatz containing an
    operator that commutes with H0) gets the minimum-norm solution and a
    warning.
    """
    h0 = as_hermitian(H0(t), name="H0(t)")
    if ansatz.dim != h0.shape[0]:
        raise ValueError(f"ansatz acts on dim {ansatz.dim}, H0 on dim {h0.shape[0]}")
    hdot = time_derivative(H0, t, dt)
    a, y = _objective_system(h0, hdot, ansatz)
    c, _, rank, sv = np.linalg.lstsq(a, y, rcond=rcond)
    notes = []
    if rank < len(ansatz):
        notes.append(f"rank-deficient system (rank {rank} < {len(ansatz)}); minimum-norm coefficients returned")
        warnings.warn(notes[-1], stacklevel=2)
    h1 = ansatz.combine(c)
    obj = hs_norm(1j * hdot - commutator(h1, h0))
    h01 = h01_residual(H0, lambda s: h1, t, dt)
    return VariationalFit(c, obj, h01, int(rank), notes)


def variational_objective(H0: Callable, h1: np.ndarray, t: float, dt: float = 1e-5) -> float:
    """||i dH0/dt - [H1, H0]||_HS for a given operator H1."""
    h0 = np.asarray(H0(t), dtype=complex)
    return hs_norm(1j * time_derivative(H0, t, dt) - commutator(np.asarray(h1), h0))
