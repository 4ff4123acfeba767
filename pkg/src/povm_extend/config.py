"""Numerical tolerances shared by every module."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Single tolerance record threaded through the library.

    Attributes
    ----------
    norm : float
        Allowed deviation of ``||psi||`` (or ``tr rho``) from one.
    positivity : float
        Relative slack for ``lambda_min(B) >= -positivity * (1 + ||B||_inf)``.
    eig : float
        Relative accuracy expected from eigenvalue routines.
    hermitian : float
        Entrywise slack for ``B == B^dagger``.
    consistency : float
        Default pass threshold for family consistency residuals.
    zero_probability : float
        Prefix probabilities below this abort conditional sampling.
    """

    norm: float = 1e-9
    positivity: float = 1e-9
    eig: float = 1e-10
    hermitian: float = 1e-9
    consistency: float = 1e-10
    zero_probability: float = 1e-14

    def with_(self, **changes) -> "Tolerances":
        return replace(self, **changes)


DEFAULT_TOL = Tolerances()
