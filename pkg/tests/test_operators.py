import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from stadyn.operators import (ID2, SX, SY, SZ, BasisSet, ValidationError, as_hermitian, commutator,
                              diagonal_basis, expand, gell_mann_basis, hs_norm, jacobi_violation,
                              pauli_basis, structure_constants)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_pauli_commutators():
    assert np.allclose(commutator(SX, SY), 2j * SZ, atol=0)
    assert np.allclose(commutator(SZ, SX), 2j * SY, atol=0)
    assert np.count_nonzero(commutator(SX, SX)) == 0


def test_commutator_shape_mismatch():
    with pytest.raises(ValueError):
        commutator(SX, np.eye(3))


def test_hs_norm_values():
    assert hs_norm(SX) == pytest.approx(np.sqrt(2), abs=1e-15)
    assert hs_norm(np.zeros((3, 3))) == 0.0
    assert hs_norm(2 * SZ) == pytest.approx(2 * np.sqrt(2), abs=1e-15)


def test_as_hermitian_rejects_instead_of_symmetrizing():
    bad = SX + 1e-9 * np.array([[0, 1], [0, 0]])
    with pytest.raises(ValidationError):
        as_hermitian(bad)
    with pytest.raises(ValidationError):
        as_hermitian(np.array([[1.0]]))
    assert as_hermitian(SX + 1e-14 * np.array([[0, 1], [0, 0]])) is not None


def test_pauli_structure_constants():
    sc = structure_constants(pauli_basis())
    f = sc.f
    assert f[0, 1, 2] == pytest.approx(2.0, abs=1e-15)
    for (a, b, c), sign in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (1, 0, 2): -1, (0, 2, 1): -1, (2, 1, 0): -1}.items():
        assert f[a, b, c] == pytest.approx(2.0 * sign, abs=1e-15)
    assert np.count_nonzero(np.abs(f) > 1e-15) == 6


def test_diagonal_basis_is_abelian():
    assert np.max(np.abs(structure_constants(diagonal_basis(4)).f)) == 0.0


def test_gell_mann_closure():
    basis = gell_mann_basis(3)
    sc = structure_constants(basis)
    assert sc.closure_residual < 1e-10
    # brute-force: rebuild every commutator from f
    for m in range(len(basis)):
        for n in range(len(basis)):
            rebuilt = 1j * np.tensordot(sc.f[m, n], basis.operators, axes=1)
            assert np.max(np.abs(commutator(basis.operators[m], basis.operators[n]) - rebuilt)) < 1e-10
    assert jacobi_violation(sc) < 1e-8


def test_nonorthonormal_basis_names_pair():
    with pytest.raises(ValidationError, match="a.*b|b.*a"):
        BasisSet(np.stack([SX, (SX + SZ) / np.sqrt(2)]), labels=("a", "b"))


def test_expand_examples():
    basis = pauli_basis()
    c, r = expand(SZ, basis)
    assert np.allclose(c, [0, 0, 1], atol=0) and r == 0.0
    c, r = expand(ID2, basis)
    assert np.allclose(c, 0) and r == pytest.approx(np.sqrt(2))


@given(arrays(float, 3, elements=finite))
def test_expand_round_trip_pauli(c):
    op = np.tensordot(c, np.stack([SX, SY, SZ]), axes=1)
    back, r = expand(op, pauli_basis())
    assert np.max(np.abs(back - c)) < 1e-12
    assert r < 1e-12


@given(arrays(float, 8, elements=finite))
def test_expand_round_trip_gell_mann(c):
    basis = gell_mann_basis(3)
    op = basis.combine(c)
    back, r = expand(op, basis)
    assert np.max(np.abs(basis.combine(back) - op)) < 1e-12 * max(1.0, hs_norm(op))


@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_commutator_antisymmetry_exact(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert np.array_equal(commutator(a, b), -commutator(b, a))


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_structure_constants_antisymmetric_and_jacobi(dim):
    sc = structure_constants(gell_mann_basis(dim))
    f = sc.f
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
        assert np.max(np.abs(f + f.transpose(perm))) < 1e-10
    assert jacobi_violation(sc) < 1e-8
