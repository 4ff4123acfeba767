"""Exception hierarchy."""


class PovmError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(PovmError, ValueError):
    pass


class NotNormalizedError(PovmError, ValueError):
    """A state vector or density matrix fails its normalization invariant."""


class NotHermitianError(PovmError, ValueError):
    pass


class InvalidStateError(PovmError, ValueError):
    pass


class OutcomeError(PovmError, KeyError):
    """An atom or event does not belong to the outcome space."""

    def __str__(self):
        return Exception.__str__(self)


class MissingEffectError(PovmError, ValueError):
    pass


class NonCommutingError(PovmError, ValueError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class SubsetError(PovmError, ValueError):
    """Requested coordinates are not a subset of (or derivable from) the available ones."""


class ConsistencyError(PovmError, ValueError):
    def __init__(self, message, n=None, residual=None):
        super().__init__(message)
        self.n = n
        self.residual = residual


class NotSesquilinearError(PovmError, ValueError):
    """Round-trip through the reconstructed operator failed; ``witness`` is the offending vector."""

    def __init__(self, message, witness, residual):
        super().__init__(message)
        self.witness = witness
        self.residual = residual


class ZeroProbabilityPrefixError(PovmError, RuntimeError):
    def __init__(self, message, prefix):
        super().__init__(message)
        self.prefix = prefix


class SizeCapError(PovmError, ValueError):
    pass
