import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from stadyn.invariant import (DegeneracyError, InconsistencyError, ProtocolPair, Schedule, VerificationReport,
                              adiabatic_solution, berry_phase, boundary_check, coefficient_rhs, eigentrack,
                              invariant_residual, lr_phase, sampled_pair_check, solve_fields)
from stadyn.operators import SX, SZ, ValidationError, commutator, gell_mann_basis, pauli_basis, structure_constants
from stadyn.oscillator import polynomial_b
from stadyn.propagate import TimeGrid, fidelity_trace, unitary_propagate
from stadyn.twolevel import (as_pair, bloch_vector, field_from_invariant, linear_theta, pauli_dot,
                             polynomial_theta, threshold_field)

PAULI = structure_constants(pauli_basis())
GRID = TimeGrid(0.0, 1.0, 2000)


@pytest.fixture(scope="module")
def designed():
    sched = polynomial_theta(0.0, np.pi / 2, GRID)
    proto = field_from_invariant(sched, 2 * threshold_field(0.0, np.pi / 2, 1.0))
    return sched, proto


# --- invariant_residual ---------------------------------------------------------

def test_residual_static_pair_is_zero():
    h = 0.3 * SX + 0.8 * SZ
    assert invariant_residual(lambda t: h, lambda t: h, GRID) == 0.0


def test_residual_designed_pair():
    grid = TimeGrid(0.0, 1.0, 10_000)
    sched = polynomial_theta(0.0, np.pi / 2, grid)
    proto = field_from_invariant(sched, 2 * threshold_field(0.0, np.pi / 2, 1.0))
    assert invariant_residual(proto.hamiltonian, sched.invariant, grid) < 1e-8 * np.sqrt(2)


def test_residual_negative_control(designed):
    sched, proto = designed
    assert invariant_residual(proto.hamiltonian, lambda t: sched.invariant(t) + 0.1 * SX, GRID) > 1e-3


def test_residual_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        invariant_residual(lambda t: SX, lambda t: 1j * SZ, GRID)


# --- coefficient_rhs ------------------------------------------------------------

def test_parallel_coefficients_are_static():
    assert np.array_equal(coefficient_rhs(PAULI, [0, 0, 1], [0, 0, 2]), [0, 0, 0])


def _operator_rate(basis, h, b):
    H, I = basis.combine(h), basis.combine(b)
    # i dI/dt = [H, I]  =>  db_mu/dt = Tr(-i [H, I] X_mu) / d
    rate = -1j * commutator(H, I)
    return np.array([np.trace(rate @ x).real / basis.dim for x in basis.operators])


@pytest.mark.parametrize("theta", [0.0, 0.4, 1.3])
def test_y_field_rotates_bloch_vector(theta):
    h = 0.7
    b = np.array([np.sin(theta), 0.0, np.cos(theta)])
    got = coefficient_rhs(PAULI, [0.0, h, 0.0], b)
    assert np.allclose(got, _operator_rate(pauli_basis(), [0.0, h, 0.0], b), atol=1e-14)
    # f = 2 epsilon: db/dt = 2 h_vec x b
    assert np.allclose(got, 2 * h * np.array([np.cos(theta), 0.0, -np.sin(theta)]), atol=1e-14)


@given(st.integers(0, 100_000))
def test_coefficient_rhs_matches_operator_oracle(seed):
    rng = np.random.default_rng(seed)
    basis = gell_mann_basis(3)
    sc = structure_constants(basis)
    h, b = rng.normal(size=8), rng.normal(size=8)
    assert np.max(np.abs(coefficient_rhs(sc, h, b) - _operator_rate(basis, h, b))) < 1e-10


# --- solve_fields ---------------------------------------------------------------

def test_constant_schedule_gives_zero_field():
    b = Schedule(GRID, np.tile([0.2, 0.3, 0.9], (len(GRID), 1)))
    sol = solve_fields(PAULI, b)
    assert np.max(np.abs(sol.h.values)) == 0.0 and sol.residual_max == 0.0


def test_two_level_fields_recovered(designed):
    sched, proto = designed
    pair = as_pair(proto, sched)
    e = pair.b.values
    target = pair.h.values
    null = np.einsum("km,km->k", target, e)[:, None] * e     # component along e, fixed by gauge choice
    sol = solve_fields(PAULI, pair.b, null_fields=null)
    assert np.max(np.abs(sol.h.values - target)) < 1e-8


def test_unreachable_schedule_names_node():
    t = GRID.times
    growing = (1 + t)[:, None] * bloch_vector(0.3 * t)     # |e| not conserved
    with pytest.raises(InconsistencyError) as exc:
        solve_fields(PAULI, Schedule(GRID, growing, rates=bloch_vector(0.3 * t) + 0.3 * (1 + t)[:, None]
                                     * np.stack([np.cos(0.3 * t), 0 * t, -np.sin(0.3 * t)], 1)))
    assert exc.value.node == 0 and exc.value.residual > 0


@given(st.integers(0, 100_000))
def test_solve_fields_feeds_back(seed):
    """A rotated invariant in dim 3 is reachable; solved fields regenerate db/dt."""
    rng = np.random.default_rng(seed)
    basis = gell_mann_basis(3)
    sc = structure_constants(basis)
    k = basis.combine(rng.normal(size=8))
    i0 = basis.combine(rng.normal(size=8))
    grid = TimeGrid(0.0, 1.0, 20)
    ops = [expm(-1j * k * t) @ i0 @ expm(1j * k * t) for t in grid.times]
    b = np.array([[np.trace(o @ x).real / 3 for x in basis.operators] for o in ops])
    rates = np.array([coefficient_rhs(sc, np.array([np.trace(k @ x).real / 3 for x in basis.operators]), bb)
                      for bb in b])
    sol = solve_fields(sc, Schedule(grid, b, rates=rates))
    back = coefficient_rhs(sc, sol.h.values, b)
    assert np.all(np.linalg.norm(back - rates, axis=1) <= sol.residual + 1e-12)
    assert sol.residual_max < 1e-8 * max(1, np.max(np.abs(rates)))


# --- boundary_check -------------------------------------------------------------

def test_boundary_polynomial_passes(designed):
    ok, offending = boundary_check(as_pair(*reversed(designed)))
    assert ok and offending == []


def test_boundary_linear_ramp_fails_at_both_ends():
    sched = linear_theta(0.0, np.pi / 2, GRID)
    proto = field_from_invariant(sched, 2 * np.pi)
    ok, offending = boundary_check(as_pair(proto, sched))
    assert not ok
    assert any("@t0" in o for o in offending) and any("@tf" in o for o in offending)


def test_boundary_oscillator_scale_factor():
    ok, offending = polynomial_b(1.0, 0.3, GRID).boundary_ok()
    assert ok, offending


# --- eigentrack -----------------------------------------------------------------

def test_eigentrack_static():
    tr = eigentrack(lambda t: SZ, GRID)
    assert np.array_equal(tr.values, np.tile([-1.0, 1.0], (len(GRID), 1))) and tr.drift == 0


def test_eigentrack_two_level(designed):
    tr = eigentrack(designed[0].invariant, GRID)
    assert tr.drift < 1e-12 and not tr.warnings
    # adjacent nodes aligned: overlaps real and positive
    ov = np.einsum("ki,ki->k", tr.state(0)[:-1].conj(), tr.state(0)[1:])
    assert np.min(ov.real) > 0.99 and np.max(np.abs(ov.imag)) < 1e-12


def test_eigentrack_degeneracy_warning():
    tr = eigentrack(lambda t: np.diag([1.0, 1.0 + 1e-10]), GRID)
    assert tr.warnings and "degenerate" in tr.warnings[0]


# --- phases ---------------------------------------------------------------------

def test_lr_phase_static():
    h = np.diag([-0.7, 1.2]).astype(complex)
    tr = eigentrack(lambda t: h, GRID)
    ph = lr_phase(lambda t: h, tr.state(0), GRID)
    assert np.max(np.abs(ph.alpha - 0.7 * GRID.times)) < 1e-12 and np.max(np.abs(ph.geometric)) == 0


def _wrap(a):
    return np.angle(np.exp(1j * a))


def test_lr_phase_methods_agree(designed):
    sched, proto = designed
    phi = eigentrack(sched.invariant, GRID).state(0) * np.exp(0.5j * GRID.times**2)[:, None]
    a = lr_phase(proto.hamiltonian, phi, GRID, method="overlap").alpha
    b = lr_phase(proto.hamiltonian, phi, GRID, method="difference").alpha
    assert np.max(np.abs(a - b)) < 1e-6


def test_lr_phase_gauge_invariance(designed):
    sched, proto = designed
    phi = eigentrack(sched.invariant, GRID).state(0)
    psi = unitary_propagate(proto.hamiltonian, phi[0], GRID)
    t = GRID.times
    extra = 0.8 * np.sin(2 * t) + 0.3 * t**2      # smooth, zero at t = 0
    results = []
    for p in (phi, phi * np.exp(1j * extra)[:, None]):
        alpha = lr_phase(proto.hamiltonian, p, GRID).alpha
        results.append(_wrap(np.angle(np.einsum("ki,ki->k", p.conj(), psi)) - alpha))
    assert np.max(np.abs(results[0] - results[1])) < 1e-8


def test_lr_phase_rejects_unnormalized(designed):
    sched, proto = designed
    phi = eigentrack(sched.invariant, GRID).state(0) * (1 + 0.01 * GRID.times)[:, None]
    with pytest.raises(ValidationError):
        lr_phase(proto.hamiltonian, phi, GRID)


@pytest.mark.parametrize("chi", [0.3, 0.7, 1.2])
def test_berry_phase_cone(chi):
    grid = TimeGrid(0.0, 1.0, 4000)

    def I(t):
        t = np.asarray(t, float)
        return pauli_dot(bloch_vector(np.full_like(t, chi), 2 * np.pi * t))
    tr = eigentrack(I, grid)
    solid = 2 * np.pi * (1 - np.cos(chi))
    assert abs(_wrap(berry_phase(tr.state(0), grid) - solid / 2)) < 1e-5
    assert abs(_wrap(berry_phase(tr.state(1), grid) + solid / 2)) < 1e-5


# --- adiabatic_solution -----------------------------------------------------------

@pytest.mark.parametrize("c", [(1, 0), (0, 1), (1 / np.sqrt(2), 1 / np.sqrt(2)), (0.6, 0.8j)])
def test_adiabatic_solution_matches_propagation(designed, c):
    sched, proto = designed
    tr = eigentrack(sched.invariant, GRID)
    phases = [lr_phase(proto.hamiltonian, tr.state(n), GRID) for n in range(2)]
    psi_a = adiabatic_solution(tr, phases, c)
    psi = unitary_propagate(proto.hamiltonian, psi_a[0], GRID)
    assert np.min(fidelity_trace(psi_a, psi)) > 1 - 1e-8


def test_adiabatic_solution_static_is_stationary():
    h = np.diag([-1.0, 2.0]).astype(complex)
    tr = eigentrack(lambda t: h, GRID)
    phases = [lr_phase(lambda t: h, tr.state(n), GRID) for n in range(2)]
    psi = adiabatic_solution(tr, phases, [0.6, 0.8])
    assert np.allclose(psi[-1], [0.6 * np.exp(1j), 0.8 * np.exp(-2j)], atol=1e-12)


def test_adiabatic_solution_refuses_degenerate_and_bad_norm(designed):
    tr = eigentrack(lambda t: np.eye(2), GRID)
    with pytest.raises(DegeneracyError):
        adiabatic_solution(tr, [np.zeros(len(GRID))] * 2, [1, 0])
    tr = eigentrack(designed[0].invariant, GRID)
    with pytest.raises(ValueError):
        adiabatic_solution(tr, [np.zeros(len(GRID))] * 2, [1, 1])


# --- containers -------------------------------------------------------------------

def test_report_rejects_negative_norms():
    with pytest.raises(ValueError):
        VerificationReport(residual_max=-1.0)


def test_schedule_endpoint_rates_agree_with_differences(designed):
    pair = as_pair(*reversed(designed))
    assert pair.b.derivative_mismatch() < 1e-6


def test_pair_requires_matching_grids():
    a = Schedule(GRID, np.zeros((len(GRID), 3)))
    b = Schedule(TimeGrid(0.0, 2.0, 2000), np.zeros((len(GRID), 3)))
    with pytest.raises(ValueError):
        ProtocolPair(pauli_basis(), a, b)


def test_sampled_pair_check_detects_corruption(designed):
    pair = as_pair(*reversed(designed))
    clean = sampled_pair_check(ProtocolPair(pair.basis, pair.h, Schedule(GRID, pair.b.values)))
    assert clean.residual < 1e-6 and clean.spectrum_drift < 1e-12
    bad_b = pair.b.values.copy()
    bad_b[1000] *= 1.01
    bad = sampled_pair_check(ProtocolPair(pair.basis, pair.h, Schedule(GRID, bad_b)))
    assert bad.residual > 1e-3 and bad.spectrum_drift > 1e-3


def test_lr_phase_rejects_level_swap(designed):
    sched, proto = designed
    tr = eigentrack(sched.invariant, GRID)
    phi = tr.state(0).copy()
    k = len(GRID) // 2
    phi[k:] = tr.state(1)[k:]
    with pytest.raises(ValidationError, match=f"nodes {k - 1} and {k}"):
        lr_phase(proto.hamiltonian, phi, GRID)
