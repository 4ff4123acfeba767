"""Dense complex linear algebra on finite-dimensional Hilbert spaces.

States are 1-D complex arrays and operators are square 2-D complex arrays.
The inner product is conjugate-linear in its first argument.
"""

from __future__ import annotations

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import (
    DimensionMismatchError,
    InvalidStateError,
    NotHermitianError,
    NotNormalizedError,
)


def as_state(psi) -> np.ndarray:
    """Coerce ``psi`` to a finite 1-D complex vector."""
    arr = np.asarray(psi, dtype=complex)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatchError(f"state must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidStateError("state has non-finite entries")
    return arr


def as_operator(B) -> np.ndarray:
    """Coerce ``B`` to a finite square complex matrix."""
    arr = np.asarray(B, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionMismatchError(f"operator must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidStateError("operator has non-finite entries")
    return arr


def _check_dims(*dims: int) -> None:
    if len(set(dims)) != 1:
        raise DimensionMismatchError(f"dimension mismatch: {dims}")


def norm(psi) -> float:
    return float(np.linalg.norm(as_state(psi)))


def is_normalized(psi, tol: Tolerances = DEFAULT_TOL) -> bool:
    return abs(norm(psi) - 1.0) <= tol.norm


def require_normalized(psi, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    psi = as_state(psi)
    n = float(np.linalg.norm(psi))
    if abs(n - 1.0) > tol.norm:
        raise NotNormalizedError(f"state has norm {n!r}, expected 1 within {tol.norm}")
    return psi


def normalized(psi) -> np.ndarray:
    psi = as_state(psi)
    n = np.linalg.norm(psi)
    if n == 0:
        raise InvalidStateError("cannot normalize the zero vector")
    return psi / n


def inner(psi, phi) -> complex:
    """Return ``<psi|phi>``, conjugating the first argument."""
    psi, phi = as_state(psi), as_state(phi)
    _check_dims(psi.size, phi.size)
    return complex(np.vdot(psi, phi))


def matrix_element(B, psi, phi) -> complex:
    """Return ``<psi|B phi>``."""
    B, psi, phi = as_operator(B), as_state(psi), as_state(phi)
    _check_dims(B.shape[0], psi.size, phi.size)
    return complex(np.vdot(psi, B @ phi))


def quadratic_form(B, psi) -> complex:
    """Return ``<psi|B psi>``.  Real up to rounding when ``B`` is Hermitian."""
    return matrix_element(B, psi, psi)


def hermiticity_residual(B) -> float:
    B = as_operator(B)
    return float(np.max(np.abs(B - B.conj().T)))


def is_hermitian(B, tol: Tolerances = DEFAULT_TOL) -> bool:
    return hermiticity_residual(B) <= tol.hermitian


def lambda_min(B, tol: Tolerances = DEFAULT_TOL) -> float:
    """Smallest eigenvalue of a Hermitian operator.

    Raises
    ------
    NotHermitianError
        If ``max |B - B^dagger|`` exceeds ``tol.hermitian``.
    """
    B = as_operator(B)
    res = hermiticity_residual(B)
    if res > tol.hermitian:
        raise NotHermitianError(f"operator is not Hermitian (residual {res:.3e})")
    return float(np.linalg.eigvalsh(0.5 * (B + B.conj().T))[0])


def inf_norm(B) -> float:
    """Largest absolute entry."""
    return float(np.max(np.abs(as_operator(B))))


def operator_norm(B) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(as_operator(B), ord=2))


def positivity_residual(B, tol: Tolerances = DEFAULT_TOL) -> float:
    """``max(0, -lambda_min(B))``; infinite for non-Hermitian input."""
    try:
        return max(0.0, -lambda_min(B, tol))
    except NotHermitianError:
        return float("inf")


def is_positive(B, tol: Tolerances = DEFAULT_TOL) -> bool:
    B = as_operator(B)
    if not is_hermitian(B, tol):
        return False
    return lambda_min(B, tol) >= -tol.positivity * (1.0 + inf_norm(B))


def as_density_matrix(rho, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Validate a density matrix: positive with unit trace."""
    rho = as_operator(rho)
    if not is_positive(rho, tol):
        raise InvalidStateError("density matrix is not positive semidefinite")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol.norm:
        raise NotNormalizedError(f"density matrix has trace {tr!r}")
    return rho


def projector(psi) -> np.ndarray:
    psi = as_state(psi)
    return np.outer(psi, psi.conj())


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unit vector."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    a = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def operator_to_dict(B) -> dict:
    """Serialize as ``{"dim": n, "re": [[...]], "im": [[...]]}`` (row-major)."""
    B = as_operator(B)
    return {"dim": int(B.shape[0]), "re": B.real.tolist(), "im": B.imag.tolist()}


def operator_from_dict(data: dict) -> np.ndarray:
    try:
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidStateError(f"malformed operator JSON: {exc}") from exc
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise DimensionMismatchError(f"operator JSON declares dim {dim} but has shape {re.shape}/{im.shape}")
    return as_operator(re + 1j * im)


def state_to_dict(psi) -> dict:
    psi = as_state(psi)
    return {"dim": int(psi.size), "re": psi.real.tolist(), "im": psi.imag.tolist()}


def state_from_dict(data: dict) -> np.ndarray:
    try:
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidStateError(f"malformed state JSON: {exc}") from exc
    if re.shape != (dim,) or im.shape != (dim,):
        raise DimensionMismatchError(f"state JSON declares dim {dim} but has shape {re.shape}/{im.shape}")
    return as_state(re + 1j * im)
