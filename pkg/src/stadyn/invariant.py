"""Dynamical (Lewis-Riesenfeld) invariants: residual checks, inverse
engineering in coefficient space, eigenstate tracking and phases.

Conventions
-----------
* hbar = 1, so an invariant satisfies ``i dI/dt = [H, I]``.
* ``H = sum h_mu X_mu`` and ``I = sum b_mu X_mu`` over a trace-orthonormal
  basis; then ``db_mu/dt = sum f_{mu nu lam} h_nu b_lam``.
* The overall scale of ``I`` is free.  We never rescale a caller's invariant;
  designed invariants are built with ||I(0)||_HS fixed by their
  parametrization (unit Bloch vector for two-level systems).
* Eigenvector phases at the first node: the largest-magnitude component is
  made real positive.  Later nodes are aligned to their predecessor.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .operators import (BasisSet, StructureConstants, ValidationError, as_hermitian, commutator, hs_norm,
                        structure_constants)
from .propagate import TimeGrid, sample_operator

DEGENERACY_GAP = 1e-8
PHASE_NORM_TOL = 1e-8
PHASE_ALIGN_MIN = 0.5


class InconsistencyError(ValueError):
    """Prescribed invariant trajectory is not reachable with the basis."""

    def __init__(self, message: str, node: int, time: float, residual: float):
        super().__init__(message)
        self.node = node
        self.time = time
        self.residual = residual


class DegeneracyError(ValueError):
    pass


def fd_derivative(values, dt: float) -> np.ndarray:
    """Second-order central differences along axis 0, one-sided second order at the ends."""
    return np.gradient(np.asarray(values), dt, axis=0, edge_order=2)


@dataclass(frozen=True)
class Schedule:
    """Real coefficient trajectory sampled on a grid.

    ``rates`` and ``accels`` hold known first/second derivatives at every node
    (analytic when the caller has them); if absent, ``rate()`` falls back to
    finite differences.
    """

    grid: TimeGrid
    values: np.ndarray
    rates: np.ndarray | None = None
    accels: np.ndarray | None = None
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != len(self.grid):
            raise ValueError(f"schedule has {v.shape[0]} nodes, grid has {len(self.grid)}")
        object.__setattr__(self, "values", v)
        for name in ("rates", "accels"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float).reshape(v.shape)
                object.__setattr__(self, name, arr)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"c{k}" for k in range(v.shape[1])))

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def rate(self) -> np.ndarray:
        return self.rates if self.rates is not None else fd_derivative(self.values, self.grid.dt)

    def accel(self) -> np.ndarray:
        return self.accels if self.accels is not None else fd_derivative(self.rate(), self.grid.dt)

    def derivative_mismatch(self) -> float:
        """Largest gap between the stored endpoint rates and one-sided finite differences,
        relative to the largest stored rate (or 1)."""
        if self.rates is None:
            return 0.0
        fd = fd_derivative(self.values, self.grid.dt)
        scale = max(1.0, float(np.max(np.abs(self.rates))))
        return float(max(np.max(np.abs(fd[0] - self.rates[0])), np.max(np.abs(fd[-1] - self.rates[-1]))) / scale)


@dataclass(frozen=True)
class ProtocolPair:
    basis: BasisSet
    h: Schedule
    b: Schedule

    def __post_init__(self):
        if self.h.grid != self.b.grid:
            raise ValueError("h and b schedules live on different grids")
        if self.h.channels != len(self.basis) or self.b.channels != len(self.basis):
            raise ValueError("schedule channel count does not match basis length")

    def hamiltonian(self, node: int) -> np.ndarray:
        return self.basis.combine(self.h.values[node])

    def invariant(self, node: int) -> np.ndarray:
        return self.basis.combine(self.b.values[node])


@dataclass
class VerificationReport:
    residual_max: float = 0.0
    eigenvalue_drift_max: float = 0.0
    fidelity_min: float = 1.0
    phase_error: float = 0.0
    boundary_ok: bool = True
    passed: bool | None = None
    warnings: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("residual_max", "eigenvalue_drift_max", "phase_error"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def invariant_residual(H: Callable, I: Callable, grid: TimeGrid, step: float | None = None) -> float:
    """max_t ||i dI/dt - [H, I]||_HS over the grid nodes.

    dI/dt is a central difference with step ``dt/10`` unless ``step`` is given.
    """
    t = grid.times
    d = grid.dt / 10.0 if step is None else step
    h = as_hermitian(sample_operator(H, t), name="H(t)")
    i0 = as_hermitian(sample_operator(I, t), name="I(t)")
    ip = sample_operator(I, t + d)
    im = sample_operator(I, t - d)
    r = 1j * (ip - im) / (2.0 * d) - commutator(h, i0)
    return float(np.max(np.linalg.norm(r, axis=(-2, -1))))


def coefficient_rhs(sc: StructureConstants, h, b) -> np.ndarray:
    """db_mu/dt = sum_{nu,lam} f_{mu nu lam} h_nu b_lam (batched over leading axes)."""
    h = np.asarray(h, dtype=float)
    b = np.asarray(b, dtype=float)
    k = len(sc)
    if h.shape[-1] != k or b.shape[-1] != k:
        raise ValueError(f"expected vectors of length {k}, got {h.shape} and {b.shape}")
    return np.einsum("mnl,...n,...l->...m", sc.f, h, b)


@dataclass(frozen=True)
class FieldSolution:
    h: Schedule
    residual: np.ndarray

    @property
    def residual_max(self) -> float:
        return float(np.max(self.residual))


def solve_fields(sc: StructureConstants, b: Schedule, null_fields=None, tol: float = 1e-8,
                 rcond: float = 1e-10) -> FieldSolution:
    """Inverse engineering: solve A[b] h = db/dt node by node.

    A[b]_{mu nu} = sum_lam f_{mu nu lam} b_lam is antisymmetric and singular, so
    the minimum-norm least-squares solution is taken.  ``null_fields`` (one
    row per node) is added afterwards, e.g. a field along the Bloch vector.
    Raises InconsistencyError at the first node whose residual exceeds
    ``tol * max(1, max|db/dt|)``.
    """
    if b.channels < 2:
        raise ValueError("need at least two invariant channels")
    if b.channels != len(sc):
        raise ValueError("schedule channels do not match structure constants")
    bdot = b.rate()
    a = sc.matrix(b.values)
    h = np.einsum("kmn,kn->km", np.linalg.pinv(a, rcond=rcond), bdot)
    if null_fields is not None:
        h = h + np.asarray(null_fields, dtype=float).reshape(h.shape)
    res = np.linalg.norm(np.einsum("kmn,kn->km", a, h) - bdot, axis=1)
    limit = tol * max(1.0, float(np.max(np.abs(bdot))))
    bad = np.flatnonzero(res > limit)
    if len(bad):
        k = int(bad[0])
        t = float(b.grid.times[k])
        raise InconsistencyError(
            f"b(t) not reachable at node {k} (t={t:.6g}): residual {res[k]:.3e} > {limit:.3e}", k, t, float(res[k]))
    return FieldSolution(Schedule(b.grid, h, labels=b.labels), res)


def endpoint_rates_ok(rates: dict[str, np.ndarray], tol: float = 1e-8) -> tuple[bool, list[str]]:
    """Check that every named derivative trajectory vanishes at both ends."""
    offending = []
    for name, arr in rates.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        for end, row in (("t0", arr[0]), ("tf", arr[-1])):
            for ch in np.flatnonzero(np.abs(row) > tol):
                offending.append(f"{name}[{ch}]@{end}")
    return not offending, offending


def boundary_check(pair: ProtocolPair, tol_comm: float = 1e-9, tol_rate: float = 1e-8) -> tuple[bool, list[str]]:
    """[H, I] = 0 at both ends, checked on operators and on db/dt."""
    offending = []
    for end, node in (("t0", 0), ("tf", -1)):
        h = pair.hamiltonian(node)
        i = pair.invariant(node)
        c = hs_norm(commutator(h, i))
        if c > tol_comm * hs_norm(h) * hs_norm(i):
            offending.append(f"[H,I]@{end}")
    bdot = pair.b.rate()
    for end, row in (("t0", bdot[0]), ("tf", bdot[-1])):
        for ch in np.flatnonzero(np.abs(row) > tol_rate):
            offending.append(f"db[{pair.basis.labels[ch]}]@{end}")
    return not offending, offending


def _fix_initial_phase(v: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column real positive."""
    idx = np.argmax(np.abs(v), axis=0)
    lead = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(lead) / lead)[None, :]


@dataclass
class EigenTrack:
    times: np.ndarray
    values: np.ndarray      # (nodes, d), ascending
    vectors: np.ndarray     # (nodes, d, d), column n = eigenvector n
    drift: float
    min_gap: float
    warnings: list[str] = field(default_factory=list)

    def state(self, n: int) -> np.ndarray:
        return self.vectors[:, :, n]


def align_phases(vectors: np.ndarray) -> np.ndarray:
    """Phase-align eigenvector columns between adjacent nodes (max Re overlap)."""
    v = np.array(vectors, dtype=complex)
    v[0] = _fix_initial_phase(v[0])
    ov = np.einsum("kin,kin->kn", np.conj(v[:-1]), v[1:])
    mag = np.abs(ov)
    ph = np.where(mag > 0, np.conj(ov) / np.where(mag > 0, mag, 1.0), 1.0)
    corr = np.cumprod(ph, axis=0)
    v[1:] *= corr[:, None, :]
    return v


def eigentrack(I: Callable, grid: TimeGrid, degeneracy_gap: float = DEGENERACY_GAP) -> EigenTrack:
    ops = as_hermitian(sample_operator(I, grid.times), name="I(t)")
    w, v = np.linalg.eigh(ops)
    v = align_phases(v)
    drift = float(np.max(np.abs(w - w[0])))
    gaps = np.diff(w, axis=1)
    min_gap = float(np.min(gaps)) if gaps.size else np.inf
    warnings = []
    if min_gap < degeneracy_gap:
        k = int(np.unravel_index(np.argmin(gaps), gaps.shape)[0])
        warnings.append(f"near-degenerate eigenvalues (gap {min_gap:.2e}) at t={grid.times[k]:.6g}")
    return EigenTrack(grid.times, w, v, drift, min_gap, warnings)


@dataclass(frozen=True)
class LRPhase:
    alpha: np.ndarray
    geometric: np.ndarray
    dynamical: np.ndarray
    imag_max: float


def _cumtrapz(y: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
    return out


def lr_phase(H: Callable, phi: np.ndarray, grid: TimeGrid, method: str = "overlap") -> LRPhase:
    """alpha(t) = int_0^t <phi|(i d/ds - H)|phi> ds.

    ``phi`` is the eigenvector trajectory ``(nodes, d)``.  The dynamical part
    uses the trapezoid rule.  The geometric part is accumulated either from
    step overlaps, -arg <phi_k|phi_{k+1}>, which transforms exactly under a
    change of eigenvector gauge (``method="overlap"``), or from central
    differences of phi and the trapezoid rule (``method="difference"``).
    Both are second order.  The states must be normalized and consecutive
    nodes aligned (|<phi_k|phi_{k+1}>| > 1/2); the imaginary part of the
    difference-based integrand, an O(dt^2) quantity for valid input, is
    reported as ``imag_max``.
    """
    if method not in ("overlap", "difference"):
        raise ValueError("method must be 'overlap' or 'difference'")
    phi = np.asarray(phi, dtype=complex)
    if phi.shape[0] != len(grid):
        raise ValueError("phi trajectory does not match grid")
    norm_err = float(np.max(np.abs(np.linalg.norm(phi, axis=1) - 1.0)))
    if norm_err > PHASE_NORM_TOL:
        raise ValidationError(f"eigenvector trajectory not normalized (max error {norm_err:.3e})")
    step = np.einsum("ki,ki->k", np.conj(phi[:-1]), phi[1:])
    if np.min(np.abs(step)) < PHASE_ALIGN_MIN:
        k = int(np.argmin(np.abs(step)))
        raise ValidationError(f"eigenvector jumps between nodes {k} and {k + 1}; grid too coarse or levels swap")
    h = sample_operator(H, grid.times)
    dphi = fd_derivative(phi, grid.dt)
    geo = 1j * np.einsum("ki,ki->k", np.conj(phi), dphi)
    dyn = -np.einsum("ki,kij,kj->k", np.conj(phi), h, phi)
    imag = float(np.max(np.abs((geo + dyn).imag)))
    if method == "overlap":
        g = np.zeros(len(grid))
        g[1:] = np.cumsum(-np.angle(step))
    else:
        g = _cumtrapz(geo.real, grid.dt)
    d = _cumtrapz(dyn.real, grid.dt)
    return LRPhase(g + d, g, d, imag)


def berry_phase(phi: np.ndarray, grid: TimeGrid) -> float:
    """Gauge-invariant geometric phase of a closed eigenvector loop, in (-pi, pi]."""
    phi = np.asarray(phi, dtype=complex)
    geo = 1j * np.einsum("ki,ki->k", np.conj(phi), fd_derivative(phi, grid.dt))
    total = _cumtrapz(geo.real, grid.dt)[-1] + np.angle(np.vdot(phi[0], phi[-1]))
    return float(np.angle(np.exp(1j * total)))


def adiabatic_solution(track: EigenTrack, phases, c) -> np.ndarray:
    """psi(t) = sum_n c_n exp(i alpha_n(t)) |phi_n(t)>.

    ``phases`` is a sequence of alpha_n trajectories (or LRPhase objects),
    one per eigenvector.
    """
    c = np.asarray(c, dtype=complex)
    if abs(np.linalg.norm(c) - 1.0) > 1e-10:
        raise ValueError("coefficients must satisfy sum |c_n|^2 = 1")
    if track.min_gap < DEGENERACY_GAP:
        raise DegeneracyError("invariant has degenerate eigenvalues; superposition is ill-defined")
    alpha = np.stack([p.alpha if isinstance(p, LRPhase) else np.asarray(p, float) for p in phases], axis=1)
    if alpha.shape[1] != len(c):
        raise ValueError("need one phase trajectory per coefficient")
    weights = c[None, :] * np.exp(1j * alpha)
    return np.einsum("kin,kn->ki", track.vectors[:, :, : len(c)], weights)


def time_derivative(op_fn: Callable, t: float, dt: float) -> np.ndarray:
    """Central difference (op(t+dt) - op(t-dt)) / 2dt."""
    return (np.asarray(op_fn(t + dt), dtype=complex) - np.asarray(op_fn(t - dt), dtype=complex)) / (2.0 * dt)


@dataclass
class PairCheck:
    residual: float       # max_t |db/dt - f h b| / max(1, max|db/dt|)
    spectrum_drift: float
    node: int             # node of the largest residual


def sampled_pair_check(pair: ProtocolPair, sc: StructureConstants | None = None) -> PairCheck:
    """Coefficient-space invariant equation for a sampled (H, I) pair.

    Stored rates are used when present; otherwise db/dt comes from a cubic
    spline through the samples, which is fourth-order accurate in the interior.
    """
    sc = structure_constants(pair.basis) if sc is None else sc
    b = pair.b.values
    bdot = pair.b.rates if pair.b.rates is not None else CubicSpline(pair.b.grid.times, b, axis=0)(pair.b.grid.times, 1)
    r = np.linalg.norm(bdot - coefficient_rhs(sc, pair.h.values, b), axis=1)
    scale = max(1.0, float(np.max(np.abs(bdot))))
    ev = np.linalg.eigvalsh(pair.basis.combine(b))
    drift = float(np.max(np.abs(ev - ev[0])))
    return PairCheck(float(np.max(r)) / scale, drift, int(np.argmax(r)))
