"""Time-dependent harmonic oscillator: Ermakov scale factor, frequency
protocols, the Gaussian ground-state wavefunction and coordinate-grid checks
of the quadratic, linear and generalized invariants (m = hbar = 1)."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, sparse

from .invariant import VerificationReport, endpoint_rates_ok
from .propagate import DivergenceError, TimeGrid, integrate_ode

log = logging.getLogger(__name__)


class CollapseError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class PolynomialScale:
    """b(t) = 1 + (sqrt(w0/wf) - 1)(10 s^3 - 15 s^4 + 6 s^5), s = (t - t0)/T."""

    omega0: float
    omegaf: float
    t0: float
    duration: float

    @property
    def amplitude(self) -> float:
        return np.sqrt(self.omega0 / self.omegaf) - 1.0

    def _s(self, t):
        return (np.asarray(t, dtype=float) - self.t0) / self.duration

    def b(self, t):
        s = self._s(t)
        return 1.0 + self.amplitude * (10 * s**3 - 15 * s**4 + 6 * s**5)

    def bdot(self, t):
        s = self._s(t)
        return self.amplitude * 30 * (s**2 - 2 * s**3 + s**4) / self.duration

    def bddot(self, t):
        s = self._s(t)
        return self.amplitude * 60 * (s - 3 * s**2 + 2 * s**3) / self.duration**2

    def omega_sq(self, t):
        b = self.b(t)
        return (-self.bddot(t) + self.omega0**2 / b**3) / b


@dataclass(frozen=True)
class ErmakovSolution:
    grid: TimeGrid
    b: np.ndarray
    bdot: np.ndarray
    bddot: np.ndarray
    omega0: float
    path: PolynomialScale | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.b) <= 0):
            raise InputError("scale factor b(t) must stay positive")

    def at(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(b, bdot, bddot) at arbitrary times; closed form when available,
        otherwise cubic Hermite interpolation of the samples."""
        if self.path is not None:
            return self.path.b(t), self.path.bdot(t), self.path.bddot(t)
        times = self.grid.times
        bi = interpolate.CubicHermiteSpline(times, self.b, self.bdot)
        di = interpolate.CubicHermiteSpline(times, self.bdot, self.bddot)
        return bi(t), di(t), di.derivative()(t)

    def omega_sq_fn(self) -> Callable:
        """omega^2(t) implied by the Ermakov relation, as a function of t."""
        if self.path is not None:
            return self.path.omega_sq

        def w2(t):
            b, _, bdd = self.at(t)
            return (-bdd + self.omega0**2 / b**3) / b
        return w2

    def boundary_ok(self, tol: float = 1e-8) -> tuple[bool, list[str]]:
        return endpoint_rates_ok({"bdot": self.bdot, "bddot": self.bddot}, tol)


def polynomial_b(omega0: float, omegaf: float, grid: TimeGrid) -> ErmakovSolution:
    if omega0 <= 0 or omegaf <= 0:
        raise InputError("omega0 and omegaf must be positive")
    path = PolynomialScale(float(omega0), float(omegaf), grid.t0, grid.duration)
    t = grid.times
    return ErmakovSolution(grid, path.b(t), path.bdot(t), path.bddot(t), float(omega0), path)


@dataclass(frozen=True)
class OscillatorProtocol:
    grid: TimeGrid
    omega_sq: np.ndarray
    omega0: float
    omegaf: float

    @property
    def negative(self) -> bool:
        """True when the trap turns into an inverted oscillator somewhere."""
        return bool(np.any(self.omega_sq < 0))

    @property
    def min_omega_sq(self) -> float:
        return float(np.min(self.omega_sq))

    def endpoint_errors(self) -> tuple[float, float]:
        """Relative mismatch of omega^2 at t0 and tf with omega0^2 and omegaf^2."""
        return (abs(self.omega_sq[0] - self.omega0**2) / self.omega0**2,
                abs(self.omega_sq[-1] - self.omegaf**2) / self.omegaf**2)


def omega_from_b(sol: ErmakovSolution) -> OscillatorProtocol:
    """omega^2 = (-b'' + omega0^2 / b^3) / b.  Negative values are kept and flagged."""
    b = np.asarray(sol.b, dtype=float)
    if np.any(b <= 0):
        raise InputError("b(t) must be positive")
    w2 = (-sol.bddot + sol.omega0**2 / b**3) / b
    omegaf = sol.omega0 / b[-1] ** 2
    proto = OscillatorProtocol(sol.grid, w2, sol.omega0, float(omegaf))
    if proto.negative:
        log.info("omega^2 goes negative (min %.4g)", proto.min_omega_sq)
    return proto


def ermakov_solve(omega_sq: Callable, b0: float, bdot0: float, grid: TimeGrid,
                  omega0: float | None = None) -> ErmakovSolution:
    """RK4 for b'' = -omega^2(t) b + omega0^2 / b^3.

    ``omega0`` defaults to sqrt(omega_sq(t0)).
    """
    if b0 <= 0:
        raise InputError("b0 must be positive")
    if omega0 is None:
        w20 = float(omega_sq(grid.t0))
        if w20 <= 0:
            raise InputError("omega^2(t0) must be positive, or pass omega0")
        omega0 = np.sqrt(w20)
    w02 = float(omega0) ** 2

    def rhs(t, y):
        if y[0] <= 0:
            raise CollapseError(f"b(t) reached {y[0]:.3g} at t={t:.6g}", t)
        return np.array([y[1], -omega_sq(t) * y[0] + w02 / y[0] ** 3])

    try:
        y = integrate_ode(rhs, [b0, bdot0], grid)
    except DivergenceError as exc:
        raise CollapseError(f"Ermakov integration diverged at t={exc.time:.6g}", exc.time) from exc
    if np.any(y[:, 0] <= 0):
        k = int(np.argmax(y[:, 0] <= 0))
        raise CollapseError(f"b(t) collapsed at t={grid.times[k]:.6g}", float(grid.times[k]))
    t = grid.times
    w2 = np.array([omega_sq(tk) for tk in t], dtype=float)
    bdd = -w2 * y[:, 0] + w02 / y[:, 0] ** 3
    return ErmakovSolution(grid, y[:, 0], y[:, 1], bdd, float(omega0))


# --- wavefunctions -----------------------------------------------------------

def default_x_grid(sol: ErmakovSolution, points: int = 1024) -> np.ndarray:
    """x in [-L, L] with L = 8 max(b) / sqrt(omega_f)."""
    omegaf = sol.omega0 / sol.b[-1] ** 2
    half = 8.0 * float(np.max(sol.b)) / np.sqrt(omegaf)
    return np.linspace(-half, half, points)


def ground_phase(sol: ErmakovSolution, t: float) -> float:
    """alpha(t) = -(omega0/2) int_{t0}^t ds / b(s)^2."""
    if t == sol.grid.t0:
        return 0.0
    val, _ = integrate.quad(lambda s: 1.0 / sol.at(s)[0] ** 2, sol.grid.t0, t, epsabs=1e-14, epsrel=1e-13, limit=200)
    return -0.5 * sol.omega0 * val


def gaussian_state(x, b, bdot, omega0) -> np.ndarray:
    """(w0/(pi b^2))^(1/4) exp[-(w0/2)(1 - i b bdot / w0)(x/b)^2], without the phase."""
    x = np.asarray(x, dtype=float)
    return (omega0 / (np.pi * b**2)) ** 0.25 * np.exp(-0.5 * omega0 * (1 - 1j * b * bdot / omega0) * (x / b) ** 2)


@dataclass
class Wavefunction:
    x: np.ndarray
    t: float
    psi: np.ndarray
    alpha: float
    norm: float
    warnings: list[str] = field(default_factory=list)


def ground_wavefunction(sol: ErmakovSolution, x, t: float) -> Wavefunction:
    x = np.asarray(x, dtype=float)
    notes = []
    ok, offending = sol.boundary_ok()
    if not ok:
        notes.append("scale factor not boundary-compliant: " + ", ".join(offending))
        warnings.warn(notes[-1], stacklevel=2)
    b, bd, _ = sol.at(t)
    alpha = ground_phase(sol, t)
    psi = np.exp(1j * alpha) * gaussian_state(x, float(b), float(bd), sol.omega0)
    norm = float(integrate.trapezoid(np.abs(psi) ** 2, x))
    return Wavefunction(x, float(t), psi, alpha, norm, notes)


def schrodinger_residual(sol: ErmakovSolution, x, t: float, dt: float) -> float:
    """||(i d/dt - H) psi|| / ||psi|| for the analytic ground Gaussian, with
    central differences in t (step dt) and x (three-point Laplacian)."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    w2 = sol.omega_sq_fn()
    psi = ground_wavefunction(sol, x, t).psi
    dpsi = (ground_wavefunction(sol, x, t + dt).psi - ground_wavefunction(sol, x, t - dt).psi) / (2 * dt)
    lap = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / dx**2
    hpsi = -0.5 * lap + 0.5 * float(w2(t)) * x[1:-1] ** 2 * psi[1:-1]
    r = 1j * dpsi[1:-1] - hpsi
    return float(np.sqrt(np.sum(np.abs(r) ** 2) / np.sum(np.abs(psi[1:-1]) ** 2)))


def invariant_expectation(sol: ErmakovSolution, x, t: float) -> float:
    """<psi| I |psi> for I = (b p - bdot x)^2 / 2 + (omega0^2/2)(x/b)^2, by quadrature
    with the analytic derivative of the Gaussian."""
    x = np.asarray(x, dtype=float)
    b, bd, _ = (float(v) for v in sol.at(t))
    psi = ground_wavefunction(sol, x, t).psi
    dpsi = (-sol.omega0 / b**2 + 1j * bd / b) * x * psi
    q = -1j * b * dpsi - bd * x * psi   # (b p - bdot x) psi
    dens = 0.5 * np.abs(q) ** 2 + 0.5 * sol.omega0**2 * (x / b) ** 2 * np.abs(psi) ** 2
    return float(integrate.trapezoid(dens, x) / integrate.trapezoid(np.abs(psi) ** 2, x))


# --- coordinate-grid operator checks ---------------------------------------

def _grid_ops(x: np.ndarray):
    n = len(x)
    dx = x[1] - x[0]
    d1 = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2 * dx)
    d2 = sparse.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / dx**2
    return d1.tocsr(), d2.tocsr()


def _test_states(x: np.ndarray, centre: float = 0.0, width: float = 1.0) -> list[np.ndarray]:
    """Smooth normalized probes: Gaussian, its first excitation and a moving packet."""
    y = (x - centre) / width
    probes = [np.exp(-0.5 * y**2), y * np.exp(-0.5 * y**2), np.exp(-0.5 * (y - 0.5) ** 2 + 0.7j * y)]
    dx = x[1] - x[0]
    return [p / np.sqrt(np.sum(np.abs(p) ** 2) * dx) for p in probes]


def _residual_on_probes(apply_I: Callable, apply_H: Callable, t: float, dt: float, probes) -> float:
    worst = 0.0
    for psi in probes:
        dI = (apply_I(t + dt, psi) - apply_I(t - dt, psi)) / (2 * dt)
        ipsi = apply_I(t, psi)
        comm = apply_H(t, ipsi) - apply_I(t, apply_H(t, psi))
        r = 1j * dI - comm
        worst = max(worst, float(np.linalg.norm(r[2:-2]) / np.linalg.norm(psi)))
    return worst


@dataclass
class LinearInvariantResult:
    residual: float
    ode_residual: float
    boundary_note: str


def linear_invariant_check(b: Callable, omega_sq: Callable, grid: TimeGrid, x=None,
                           ode_tol: float = 1e-6, checkpoints: int = 9) -> LinearInvariantResult:
    """Residual of i dI/dt = [H, I] for I = b p - b' x, H = p^2/2 + omega^2 x^2/2.

    ``b`` must solve b'' = -omega^2 b; this is verified first (central
    differences at the checkpoints) and an InputError raised otherwise.
    """
    x = np.linspace(-10, 10, 801) if x is None else np.asarray(x, dtype=float)
    d1, d2 = _grid_ops(x)
    ts = np.linspace(grid.t0, grid.tf, checkpoints + 2)[1:-1]
    fd = grid.dt
    bvals = np.array([b(t) for t in ts], dtype=float)
    if np.max(np.abs(bvals)) == 0.0:
        raise InputError("b = 0 gives the zero operator; no invariant to check")
    bdd = np.array([(b(t + fd) - 2 * b(t) + b(t - fd)) / fd**2 for t in ts])
    ode = float(np.max(np.abs(bdd + np.array([omega_sq(t) for t in ts]) * bvals)))
    scale = max(1.0, float(np.max(np.abs(bvals))))
    if ode > ode_tol * scale * max(1.0, float(np.max(np.abs([omega_sq(t) for t in ts])))):
        raise InputError(f"b does not solve b'' = -omega^2 b (residual {ode:.3e})")

    def bdot(t):
        return (b(t + fd) - b(t - fd)) / (2 * fd)

    def apply_I(t, psi):
        return b(t) * (-1j * (d1 @ psi)) - bdot(t) * x * psi

    def apply_H(t, psi):
        return -0.5 * (d2 @ psi) + 0.5 * omega_sq(t) * x**2 * psi

    probes = _test_states(x)
    res = max(_residual_on_probes(apply_I, apply_H, t, fd, probes) for t in ts)
    note = ("endpoint conditions b'(0)=b'(tf)=0 and b''(0)=b''(tf)=0 force omega(0)=omega(tf)=0 "
            "for this linear invariant")
    return LinearInvariantResult(res, ode, note)


def generalized_pair_check(F: Callable, U: Callable, sol: ErmakovSolution, xc0: float, xcdot0: float,
                           x=None, checkpoints: int = 7) -> VerificationReport:
    """Forced oscillator with a scale-invariant potential.

    H = p^2/2 - F x + omega^2 x^2/2 + U((x - xc)/b) / b^2
    I = [b (p - xc') - b' (x - xc)]^2 / 2 + (omega0^2/2)((x - xc)/b)^2 + U((x - xc)/b)
    with xc'' + omega^2 xc = F.  The invariant-equation residual is evaluated
    on smooth probe states at interior grid nodes (time derivative by central
    differences over neighbouring nodes).
    """
    grid = sol.grid
    w2 = sol.omega_sq_fn()
    y = integrate_ode(lambda t, v: np.array([v[1], F(t) - w2(t) * v[0]]), [xc0, xcdot0], grid)
    if not np.all(np.isfinite(y)):
        raise DivergenceError("x_c integration diverged", grid.tf)
    xc, xcd = y[:, 0], y[:, 1]
    if x is None:
        x = default_x_grid(sol, 1024)
        x = x + float(np.mean(xc))
    x = np.asarray(x, dtype=float)
    d1, d2 = _grid_ops(x)
    w0 = sol.omega0

    def apply_I(k, psi):
        b, bd = sol.b[k], sol.bdot[k]
        yv = (x - xc[k]) / b
        q = lambda f: b * (-1j * (d1 @ f) - xcd[k] * f) - bd * (x - xc[k]) * f  # noqa: E731
        return 0.5 * q(q(psi)) + (0.5 * w0**2 * yv**2 + U(yv)) * psi

    def apply_H(k, psi):
        b = sol.b[k]
        t = grid.times[k]
        pot = -F(t) * x + 0.5 * w2(t) * x**2 + U((x - xc[k]) / b) / b**2
        return -0.5 * (d2 @ psi) + pot * psi

    nodes = np.unique(np.linspace(1, grid.steps - 1, checkpoints).astype(int))
    worst = 0.0
    for k in nodes:
        probes = _test_states(x, centre=xc[k], width=sol.b[k] / np.sqrt(w0))
        for psi in probes:
            dI = (apply_I(k + 1, psi) - apply_I(k - 1, psi)) / (2 * grid.dt)
            comm = apply_H(k, apply_I(k, psi)) - apply_I(k, apply_H(k, psi))
            r = 1j * dI - comm
            worst = max(worst, float(np.linalg.norm(r[4:-4]) / np.linalg.norm(psi)))
    return VerificationReport(residual_max=worst, extra={"xc_final": float(xc[-1]), "checkpoints": len(nodes)})


FIG_RATIOS = (0.1, 0.5, 2.0, 10.0)
FIG_OMEGA0_TF = (2.0, 1.0, 0.5)


def adiabatic_deviation(omega0: float, omegaf: float, tf: float, nodes: int = 2001) -> float:
    """max_t |omega^2 - omega0^2/b^4| / (omega0^2/b^4) for the polynomial scale factor."""
    sol = polynomial_b(omega0, omegaf, TimeGrid(0.0, tf, nodes - 1))
    ref = omega0**2 / sol.b**4
    return float(np.max(np.abs(omega_from_b(sol).omega_sq - ref) / ref))
