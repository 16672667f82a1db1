"""Dense operator algebra on the joint qubit + spin-bath Hilbert space.

Site 0 is always the system qubit; sites 1..K are bath spins.  All operators
are plain ``numpy`` complex arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as la

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
MAX_SITES = 11


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    unitary: float = 1e-10
    branch_cut: float = 1e-6
    symmetry: float = 1e-10


TOL = Tolerances()


class ValidationError(ValueError):
    """An operator failed a structural check (Hermiticity, unitarity, shape)."""


class BranchCutError(ValueError):
    """An eigenphase sits too close to -pi for a well-defined principal log."""


def _check_square(A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")


def hermiticity_error(A: np.ndarray) -> float:
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def unitarity_error(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def is_hermitian(A: np.ndarray, tol: float | None = None) -> bool:
    return hermiticity_error(A) <= (TOL.hermitian if tol is None else tol)


def is_unitary(U: np.ndarray, tol: float | None = None) -> bool:
    return unitarity_error(U) <= (TOL.unitary if tol is None else tol)


@lru_cache(maxsize=256)
def _embed(site: int, axis: str, n_sites: int) -> np.ndarray:
    op = np.ones((1, 1), dtype=complex)
    for s in range(n_sites):
        op = np.kron(op, PAULI[axis] / 2 if s == site else np.eye(2))
    op.setflags(write=False)
    return op


def embed_spin_op(site: int, axis: str, n_sites: int) -> np.ndarray:
    """Spin-1/2 operator ``sigma_axis / 2`` acting on ``site`` of ``n_sites``."""
    if axis not in PAULI:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    if not 1 <= n_sites <= MAX_SITES:
        raise ValueError(f"n_sites must be in 1..{MAX_SITES}, got {n_sites}")
    if not 0 <= site < n_sites:
        raise ValueError(f"site {site} out of range for {n_sites} sites")
    return _embed(site, axis, n_sites)


def spin_phi(phase: float, n_sites: int) -> np.ndarray:
    """cos(phase) S_x + sin(phase) S_y on the system qubit."""
    return np.cos(phase) * embed_spin_op(0, "x", n_sites) + np.sin(phase) * embed_spin_op(
        0, "y", n_sites
    )


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return A @ B - B @ A


def hermitian_eig(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _check_square(H)
    if not is_hermitian(H):
        raise ValidationError(f"operator is not Hermitian (error {hermiticity_error(H):.3e})")
    return la.eigh((H + H.conj().T) / 2)


def propagator(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) via the eigendecomposition of the Hermitian generator."""
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"duration must be finite and non-negative, got {t}")
    w, V = hermitian_eig(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


class Evolver:
    """Cached eigendecomposition of a fixed Hamiltonian, for many durations."""

    def __init__(self, H: np.ndarray):
        self.energies, self.basis = hermitian_eig(H)
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, t: float) -> np.ndarray:
        U = self._cache.get(t)
        if U is None:
            if not np.isfinite(t) or t < 0:
                raise ValueError(f"duration must be finite and non-negative, got {t}")
            U = (self.basis * np.exp(-1j * self.energies * t)) @ self.basis.conj().T
            if len(self._cache) < 4096:
                self._cache[t] = U
        return U


def principal_log(U: np.ndarray) -> np.ndarray:
    """Anti-Hermitian L with exp(L) = U and eigenphases in (-pi, pi].

    Uses a complex Schur form; for a normal matrix the triangular factor is
    diagonal to rounding, so the Schur vectors are an orthonormal eigenbasis.
    """
    _check_square(U)
    if not is_unitary(U):
        raise ValidationError(f"operator is not unitary (error {unitarity_error(U):.3e})")
    T, Z = la.schur(U, output="complex")
    phases = np.angle(np.diag(T))
    if np.any(np.abs(phases + np.pi) < TOL.branch_cut) or np.any(
        np.abs(phases - np.pi) < TOL.branch_cut
    ):
        raise BranchCutError("eigenphase within branch-cut guard of -pi; shorten the evolution")
    L = (Z * (1j * phases)) @ Z.conj().T
    return (L - L.conj().T) / 2


def frob(A: np.ndarray) -> float:
    return float(np.linalg.norm(A))
