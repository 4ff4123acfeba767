"""Recovering operators from their quadratic forms.

Given ``q(psi)`` (for example ``psi -> <psi|G(A) psi>`` evaluated only on unit
vectors), the polarization identity

    s(psi, phi) = q(psi/2 + phi/2) - q(psi/2 - phi/2)
                  + i q(psi/2 - i phi/2) - i q(psi/2 + i phi/2)

yields the sesquilinear form with ``s(psi, phi) = <psi|B phi>`` whenever
``q(psi) = <psi|B psi>``.  In finite dimension the operator is read off from
matrix elements on the standard basis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import linalg
from .config import DEFAULT_TOL, Tolerances
from .errors import NotSesquilinearError


def extend_from_sphere(q: Callable) -> Callable:
    """Extend a unit-sphere quadratic form to all vectors.

    ``q_ext(psi) = ||psi||^2 q(psi/||psi||)`` and ``q_ext(0) = 0``.
    """

    def q_ext(psi):
        psi = np.asarray(psi, dtype=complex)
        n = np.linalg.norm(psi)
        if n == 0.0:
            return 0.0
        return n * n * q(psi / n)

    return q_ext


class SesquilinearForm:
    """Lazily evaluated ``(psi, phi) -> s(psi, phi)`` built by polarization.

    Conjugate-linear in ``psi``, linear in ``phi`` (when ``q`` really is a
    quadratic form).
    """

    def __init__(self, quadratic: Callable, dim: int):
        self.quadratic = quadratic
        self.dim = int(dim)

    def __call__(self, psi, phi) -> complex:
        psi = np.asarray(psi, dtype=complex)
        phi = np.asarray(phi, dtype=complex)
        q = self.quadratic
        a, b = 0.5 * psi, 0.5 * phi
        return complex(q(a + b) - q(a - b) + 1j * q(a - 1j * b) - 1j * q(a + 1j * b))

    def diagonal(self, psi) -> complex:
        return self(psi, psi)


def polarize(q: Callable, dim: int, unit_sphere: bool = False) -> SesquilinearForm:
    """Build the polarized form of ``q``.

    Parameters
    ----------
    q : callable
        Quadratic form ``psi -> complex``.
    dim : int
        Hilbert space dimension.
    unit_sphere : bool
        ``q`` is only meaningful on unit vectors; extend it homogeneously
        (with ``q(0) = 0``) before polarizing.
    """
    return SesquilinearForm(extend_from_sphere(q) if unit_sphere else q, dim)


def _random_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    return rng.standard_normal((count, dim)) + 1j * rng.standard_normal((count, dim))


def reconstruct_operator(
    s: SesquilinearForm,
    dim: int | None = None,
    trials: int = 100,
    seed: int | np.random.Generator | None = 0,
    tol: Tolerances = DEFAULT_TOL,
) -> np.ndarray:
    """Matrix ``B`` with ``B[j, k] = s(e_j, e_k)``, round-trip checked.

    Raises
    ------
    NotSesquilinearError
        If ``|<psi|B psi> - s(psi, psi)|`` exceeds
        ``tol.norm * (1 + ||B||) * ||psi||^2`` for one of ``trials`` random,
        unnormalized vectors.  The offending vector is attached as ``witness``.
    """
    dim = s.dim if dim is None else int(dim)
    basis = np.eye(dim, dtype=complex)
    B = np.empty((dim, dim), dtype=complex)
    for j in range(dim):
        for k in range(dim):
            B[j, k] = s(basis[j], basis[k])
    rng = np.random.default_rng(seed)
    bound = 1.0 + linalg.operator_norm(B)
    for psi in _random_vectors(rng, trials, dim):
        diag = s(psi, psi)
        residual = abs(np.vdot(psi, B @ psi) - diag)
        if residual > tol.norm * bound * np.vdot(psi, psi).real:
            raise NotSesquilinearError(
                f"quadratic form is not represented by the reconstructed operator (residual {residual:.3e})",
                witness=psi,
                residual=float(residual),
            )
    return B


@dataclass
class SesquilinearReport:
    """Maximum residual per law over random trials.

    ``norm_bound`` is ``max(|s(psi,psi)| - ||psi||^2)``, so it may be negative;
    it is ``nan`` when the bound was not requested.
    """

    trials: int
    additivity: float
    homogeneity: float
    hermiticity: float
    norm_bound: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verify_sesquilinear(
    s: SesquilinearForm,
    trials: int = 1000,
    tol: float = 1e-10,
    seed: int | np.random.Generator | None = 0,
    check_norm_bound: bool = False,
) -> SesquilinearReport:
    """Randomized check of the sesquilinear-form laws.

    For unit vectors ``psi, psi', phi`` and complex ``z`` with ``|z| <= 1``:

    * additivity ``s(psi + psi', phi) = s(psi, phi) + s(psi', phi)``
    * conjugate homogeneity ``s(z psi, phi) = conj(z) s(psi, phi)``
    * Hermiticity ``s(phi, psi) = conj(s(psi, phi))``
    * with ``check_norm_bound``, ``|s(psi, psi)| <= ||psi||^2``.
    """
    rng = np.random.default_rng(seed)
    dim = s.dim
    add = hom = herm = 0.0
    bound = -np.inf if check_norm_bound else np.nan
    for _ in range(trials):
        psi, psi2, phi = (linalg.random_state(dim, rng) for _ in range(3))
        z = complex(*rng.uniform(-1, 1, size=2)) / np.sqrt(2)
        s_psi_phi = s(psi, phi)
        add = max(add, abs(s(psi + psi2, phi) - s_psi_phi - s(psi2, phi)))
        hom = max(hom, abs(s(z * psi, phi) - np.conj(z) * s_psi_phi))
        herm = max(herm, abs(s(phi, psi) - np.conj(s_psi_phi)))
        if check_norm_bound:
            bound = max(bound, abs(s(psi, psi)) - 1.0)
    passed = max(add, hom, herm) <= tol and (not check_norm_bound or bound <= tol)
    return SesquilinearReport(trials, float(add), float(hom), float(herm), float(bound), bool(passed))
