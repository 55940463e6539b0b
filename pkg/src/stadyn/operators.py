"""Dense Hermitian operator algebra on small Hilbert spaces.

Operators are plain complex ``numpy`` arrays of shape ``(dim, dim)``.  The
helpers here validate them, build trace-orthonormal bases and extract the
structure constants of the commutator algebra.

Units are hbar = m = 1 throughout the package.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
ORTHONORMAL_TOL = 1e-12
ANTISYMMETRY_TOL = 1e-10


class ValidationError(ValueError):
    """Input operator or basis violates a structural requirement."""


def hs_norm(op) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(np.asarray(op)))


def is_hermitian(op, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(op)
    scale = max(float(np.max(np.abs(a))), 1.0) if a.size else 1.0
    return bool(np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2))), initial=0.0) <= tol * scale)


def as_hermitian(op, tol: float = HERMITIAN_TOL, name: str = "operator") -> np.ndarray:
    """Return ``op`` as a complex array after checking it is Hermitian.

    Violations are rejected rather than symmetrized.  The tolerance is
    relative to the largest entry (absolute below unit scale).
    """
    a = np.asarray(op, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    if a.shape[-1] < 2:
        raise ValidationError(f"{name} must have dim >= 2")
    if not is_hermitian(a, tol):
        dev = float(np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2)))))
        raise ValidationError(f"{name} is not Hermitian (max deviation {dev:.3e})")
    return a


def commutator(a, b) -> np.ndarray:
    """``a @ b - b @ a``; works batched over leading axes."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


# Pauli matrices
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
PAULI = np.stack([SX, SY, SZ])


@dataclass(frozen=True)
class BasisSet:
    """Ordered Hermitian basis with (1/dim) Tr(X_mu X_nu) = delta."""

    operators: np.ndarray
    labels: tuple[str, ...] = ()
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise ValidationError(f"basis operators must have shape (K, dim, dim), got {ops.shape}")
        object.__setattr__(self, "operators", ops)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"X{k}" for k in range(len(ops))))
        if len(self.labels) != len(ops):
            raise ValidationError("labels and operators differ in length")
        if len(ops) > ops.shape[1] ** 2:
            raise ValidationError("more basis operators than dim**2")
        if self.validate:
            for k, x in enumerate(ops):
                as_hermitian(x, name=f"basis element {self.labels[k]}")
            gram = self.gram()
            bad = np.argwhere(np.abs(gram - np.eye(len(ops))) > ORTHONORMAL_TOL)
            if len(bad):
                pairs = ", ".join(f"({self.labels[i]},{self.labels[j]})" for i, j in bad)
                raise ValidationError(f"basis not orthonormal; offending pairs: {pairs}")

    @property
    def dim(self) -> int:
        return self.operators.shape[1]

    def __len__(self) -> int:
        return len(self.operators)

    def gram(self) -> np.ndarray:
        ops = self.operators
        return np.real(np.einsum("mij,nji->mn", ops, ops)) / self.dim

    def combine(self, coeffs) -> np.ndarray:
        """sum_mu c_mu X_mu; ``coeffs`` may carry leading batch axes."""
        return np.tensordot(np.asarray(coeffs, dtype=float), self.operators, axes=([-1], [0]))


def pauli_basis(with_identity: bool = False) -> BasisSet:
    if with_identity:
        return BasisSet(np.stack([ID2, SX, SY, SZ]), ("1", "x", "y", "z"))
    return BasisSet(PAULI.copy(), ("x", "y", "z"))


def gell_mann_basis(dim: int, with_identity: bool = False) -> BasisSet:
    """Generalized Gell-Mann matrices rescaled to (1/dim) Tr XX = 1."""
    if dim < 2:
        raise ValidationError("dim must be >= 2")
    ops, labels = [], []
    for j, k in itertools.combinations(range(dim), 2):
        s = np.zeros((dim, dim), complex)
        s[j, k] = s[k, j] = 1
        a = np.zeros((dim, dim), complex)
        a[j, k] = -1j
        a[k, j] = 1j
        ops += [s, a]
        labels += [f"s{j}{k}", f"a{j}{k}"]
    for l in range(1, dim):
        d = np.zeros((dim, dim), complex)
        d[np.arange(l), np.arange(l)] = 1
        d[l, l] = -l
        ops.append(d * np.sqrt(2.0 / (l * (l + 1))))
        labels.append(f"d{l}")
    # standard normalization is Tr = 2
    ops = [o * np.sqrt(dim / 2.0) for o in ops]
    if with_identity:
        ops.insert(0, np.eye(dim, dtype=complex))
        labels.insert(0, "1")
    return BasisSet(np.stack(ops), tuple(labels))


def diagonal_basis(dim: int) -> BasisSet:
    """Commuting basis of diagonal generators (an abelian algebra)."""
    gm = gell_mann_basis(dim, with_identity=True)
    keep = [i for i, lab in enumerate(gm.labels) if lab == "1" or lab.startswith("d")]
    return BasisSet(gm.operators[keep], tuple(gm.labels[i] for i in keep))


@dataclass(frozen=True)
class StructureConstants:
    """f[mu, nu, lam] with [X_mu, X_nu] = i sum_lam f X_lam.

    ``closure_residual`` is the largest operator-norm mismatch when each
    commutator is rebuilt from ``f``; it is nonzero only for bases that do not
    close under commutation.
    """

    f: np.ndarray
    closure_residual: float = 0.0

    def __len__(self) -> int:
        return self.f.shape[0]

    def sparse(self, tol: float = 1e-12) -> dict[tuple[int, int, int], float]:
        return {tuple(int(i) for i in idx): float(self.f[tuple(idx)]) for idx in np.argwhere(np.abs(self.f) > tol)}

    def matrix(self, b) -> np.ndarray:
        """A[b]_{mu nu} = sum_lam f_{mu nu lam} b_lam (batched over b)."""
        return np.tensordot(np.asarray(b, dtype=float), self.f, axes=([-1], [2]))


def antisymmetry_error(f: np.ndarray) -> float:
    errs = [np.max(np.abs(f + np.transpose(f, p)), initial=0.0) for p in ((1, 0, 2), (0, 2, 1), (2, 1, 0))]
    return float(max(errs))


def structure_constants(basis: BasisSet) -> StructureConstants:
    ops = basis.operators
    d = basis.dim
    comm = np.einsum("mij,njk->mnik", ops, ops) - np.einsum("nij,mjk->mnik", ops, ops)
    fc = np.einsum("mnij,lji->mnl", comm, ops) / (1j * d)
    if np.max(np.abs(fc.imag), initial=0.0) > ANTISYMMETRY_TOL:
        raise ValidationError("structure constants are not real; basis is not Hermitian")
    f = np.ascontiguousarray(fc.real)
    err = antisymmetry_error(f)
    if err > ANTISYMMETRY_TOL:
        raise ValidationError(f"structure constants not totally antisymmetric (error {err:.3e})")
    rebuilt = 1j * np.tensordot(f, ops, axes=([2], [0]))
    closure = float(np.max(np.linalg.norm(comm - rebuilt, ord=2, axis=(-2, -1)), initial=0.0))
    return StructureConstants(f, closure)


def jacobi_violation(sc: StructureConstants) -> float:
    """Largest entry of the cyclic sum f_{mu nu rho} f_{rho lam sig} + cyclic."""
    f = sc.f
    t = np.einsum("mnr,rls->mnls", f, f)
    total = t + np.transpose(t, (1, 2, 0, 3)) + np.transpose(t, (2, 0, 1, 3))
    return float(np.max(np.abs(total), initial=0.0))


def expand(op, basis: BasisSet) -> tuple[np.ndarray, float]:
    """Coefficients c_mu = (1/dim) Tr(op X_mu) and the HS norm of what is left over."""
    a = np.asarray(op, dtype=complex)
    if a.shape != (basis.dim, basis.dim):
        raise ValueError(f"operator shape {a.shape} does not match basis dim {basis.dim}")
    c = np.real(np.einsum("ij,mji->m", a, basis.operators)) / basis.dim
    residual = hs_norm(a - basis.combine(c))
    return c, residual
