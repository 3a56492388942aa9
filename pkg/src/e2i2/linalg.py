"""Small dense complex-matrix algebra.

Everything in the simulator lives in single-particle spaces of dimension
<= 4, so matrices are plain complex ndarrays and all operations are exact
dense arithmetic.  Two-party operators (joint detector projections and
joint emitter states) are held in :class:`Tensor4`, a four-index tensor
T[a1, b1, a2, b2] whose first index pair labels the "row" (ket) slots of
parties A and B and whose second pair labels the "column" (bra) slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ValidationError

HERMITIAN_TOL = 1e-12
SCHMIDT_RANK_TOL = 1e-9


def as_cmatrix(entries) -> np.ndarray:
    """Coerce input to a 2-D complex array."""
    m = np.asarray(entries, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product a @ b with an explicit shape check."""
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(
            f"cannot multiply shapes {a.shape} and {b.shape}: "
            f"{a.shape[1]} columns vs {b.shape[0]} rows"
        )
    return a @ b


def trace(a) -> complex:
    """Trace of a square matrix."""
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"trace requires a square matrix, got {a.shape}")
    return complex(np.trace(a))


def trace_product(*matrices) -> complex:
    """Trace of the chained product Tr(M1 M2 ... Mn)."""
    if not matrices:
        raise DimensionMismatchError("trace_product needs at least one matrix")
    out = as_cmatrix(matrices[0])
    for m in matrices[1:]:
        out = matmul(out, m)
    return trace(out)


def dagger(a) -> np.ndarray:
    """Conjugate transpose."""
    return as_cmatrix(a).conj().T


@dataclass(frozen=True)
class Tensor4:
    """Two-party operator with entries T[a1, b1, a2, b2].

    Index pair (a1, b1) is the joint ket label, (a2, b2) the joint bra
    label; party A has dimension ``dim_a`` and party B ``dim_b``.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim != 4 or e.shape[0] != e.shape[2] or e.shape[1] != e.shape[3]:
            raise DimensionMismatchError(
                f"Tensor4 entries must have shape (dA, dB, dA, dB), got {e.shape}"
            )
        if not np.all(np.isfinite(e)):
            raise ValidationError("Tensor4 contains non-finite entries")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def dim_a(self) -> int:
        return self.entries.shape[0]

    @property
    def dim_b(self) -> int:
        return self.entries.shape[1]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        """True if T[a1,b1,a2,b2] == conj(T[a2,b2,a1,b1]) within tol."""
        return bool(
            np.max(np.abs(self.entries - self.entries.conj().transpose(2, 3, 0, 1))) <= tol
        )

    def as_matrix(self) -> np.ndarray:
        """Reshape to the (dA*dB) x (dA*dB) matrix over the joint space."""
        d = self.dim_a * self.dim_b
        return self.entries.reshape(d, d)

    def joint_trace(self) -> complex:
        """Trace over the joint two-party space."""
        return complex(np.einsum("abab->", self.entries))

    def swap_parties(self) -> "Tensor4":
        """Exchange the A and B slots (requires dim_a == dim_b)."""
        if self.dim_a != self.dim_b:
            raise DimensionMismatchError(
                f"cannot swap parties of dimensions {self.dim_a} and {self.dim_b}"
            )
        return Tensor4(self.entries.transpose(1, 0, 3, 2).copy())


def tensor_from_matrix(m, dim_a: int, dim_b: int) -> Tensor4:
    """Build a Tensor4 from a (dA*dB) x (dA*dB) joint-space matrix."""
    m = as_cmatrix(m)
    d = dim_a * dim_b
    if m.shape != (d, d):
        raise DimensionMismatchError(
            f"joint matrix shape {m.shape} does not match dims ({dim_a}, {dim_b})"
        )
    return Tensor4(m.reshape(dim_a, dim_b, dim_a, dim_b))


def tensor_product(a, b) -> Tensor4:
    """Two-party product T[a1,b1,a2,b2] = a[a1,a2] * b[b1,b2]."""
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise DimensionMismatchError(
            f"tensor_product requires square factors, got {a.shape} and {b.shape}"
        )
    return Tensor4(np.einsum("ac,bd->abcd", a, b))


def identity_tensor(dim_a: int, dim_b: int) -> Tensor4:
    """Identity on the joint space: T[a1,b1,a2,b2] = delta(a1,a2) delta(b1,b2)."""
    return tensor_product(np.eye(dim_a), np.eye(dim_b))


@dataclass(frozen=True)
class SchmidtReport:
    """Singular-value summary of the party bipartition of a Tensor4.

    ``operator_schmidt_rank`` is 1 exactly when the operator is a tensor
    product of single-party matrices; ``residual_to_rank1`` is the
    Frobenius-norm distance to the best rank-1 (factorized) approximation.
    """

    singular_values: np.ndarray
    operator_schmidt_rank: int
    residual_to_rank1: float


def operator_schmidt(t: Tensor4, tol: float = SCHMIDT_RANK_TOL) -> SchmidtReport:
    """Operator-Schmidt decomposition of a two-party operator.

    Reshapes T[a1,b1,a2,b2] into a matrix with row index (a1, a2) and
    column index (b1, b2) and reports its singular values.  Rank counts
    singular values above ``tol`` relative to the largest one.
    """
    if tol <= 0:
        raise ValidationError(f"tolerance must be positive, got {tol}")
    da, db = t.dim_a, t.dim_b
    mat = t.entries.transpose(0, 2, 1, 3).reshape(da * da, db * db)
    svals = np.linalg.svd(mat, compute_uv=False)
    svals = np.sort(svals)[::-1]
    if svals.size == 0 or svals[0] == 0.0:
        return SchmidtReport(svals, 0, 0.0)
    rank = int(np.count_nonzero(svals > tol * svals[0]))
    residual = float(np.sqrt(np.sum(svals[1:] ** 2)))
    return SchmidtReport(svals, rank, residual)


def schmidt_factors(t: Tensor4) -> tuple[float, np.ndarray, np.ndarray]:
    """Leading singular triple (s, A, B) with t ~= s * A (x) B.

    A and B are Frobenius-normalized single-party matrices; the
    reconstruction error equals ``residual_to_rank1``.
    """
    da, db = t.dim_a, t.dim_b
    mat = t.entries.transpose(0, 2, 1, 3).reshape(da * da, db * db)
    u, s, vh = np.linalg.svd(mat)
    a = u[:, 0].reshape(da, da)
    b = vh[0, :].reshape(db, db)
    return float(s[0]), a, b


@dataclass(frozen=True)
class DensityReport:
    """validate_density output: deficits against the density-matrix invariants."""

    hermiticity_deficit: float
    min_eigenvalue: float
    trace_deviation: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        ok = (
            self.hermiticity_deficit <= self.tol
            and self.min_eigenvalue >= -self.tol
            and abs(self.trace_deviation) <= self.tol
        )
        object.__setattr__(self, "passed", bool(ok))

    def deficits(self) -> list[str]:
        out = []
        if self.hermiticity_deficit > self.tol:
            out.append(f"hermiticity deficit {self.hermiticity_deficit:.3e}")
        if self.min_eigenvalue < -self.tol:
            out.append(f"negative eigenvalue {self.min_eigenvalue:.3e}")
        if abs(self.trace_deviation) > self.tol:
            out.append(f"trace deviates from 1 by {self.trace_deviation:.3e}")
        return out


def validate_density(m, tol: float = 1e-9) -> DensityReport:
    """Check Hermiticity, positive semidefiniteness and unit trace."""
    m = as_cmatrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"density matrix must be square, got {m.shape}")
    herm_deficit = float(np.max(np.abs(m - m.conj().T)))
    eigvals = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
    return DensityReport(
        hermiticity_deficit=herm_deficit,
        min_eigenvalue=float(eigvals.min()),
        trace_deviation=float(abs(np.trace(m) - 1.0)),
        tol=tol,
    )


@dataclass(frozen=True)
class ProjectorReport:
    """validate_projector output: Hermiticity and idempotency deficits."""

    hermiticity_deficit: float
    idempotency_deficit: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        ok = self.hermiticity_deficit <= self.tol and self.idempotency_deficit <= self.tol
        object.__setattr__(self, "passed", bool(ok))

    def deficits(self) -> list[str]:
        out = []
        if self.hermiticity_deficit > self.tol:
            out.append(f"hermiticity deficit {self.hermiticity_deficit:.3e}")
        if self.idempotency_deficit > self.tol:
            out.append(f"idempotency deficit {self.idempotency_deficit:.3e}")
        return out


def validate_projector(m, tol: float = 1e-12) -> ProjectorReport:
    """Check that m is a Hermitian idempotent (an orthogonal projector)."""
    m = as_cmatrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"projector must be square, got {m.shape}")
    herm = float(np.max(np.abs(m - m.conj().T)))
    idem = float(np.max(np.abs(m @ m - m)))
    return ProjectorReport(hermiticity_deficit=herm, idempotency_deficit=idem, tol=tol)


def require_density(m, tol: float = 1e-9, name: str = "density matrix") -> np.ndarray:
    """Return m as an array, raising ValidationError listing any deficits."""
    m = as_cmatrix(m)
    report = validate_density(m, tol)
    if not report.passed:
        raise ValidationError(f"{name} is not a valid state: " + "; ".join(report.deficits()))
    return m


def require_projector(m, tol: float = 1e-9, name: str = "projector") -> np.ndarray:
    """Return m as an array, raising ValidationError listing any deficits."""
    m = as_cmatrix(m)
    report = validate_projector(m, tol)
    if not report.passed:
        raise ValidationError(f"{name} is not a projector: " + "; ".join(report.deficits()))
    return m
