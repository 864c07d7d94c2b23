"""Exception hierarchy shared by every module."""


class SAEError(Exception):
    """Base class for all package errors."""


class InputError(SAEError, ValueError):
    """Malformed or inconsistent input data."""


class GraphError(InputError):
    """Adjacency structure violates an ICAR requirement."""


class NumericalError(SAEError, ArithmeticError):
    """A factorization or draw failed (non-SPD matrix, negative eigenvalue, ...)."""


class SamplerError(NumericalError):
    def __init__(self, iteration, cause):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"Gibbs sweep failed at iteration {iteration}: {cause}")
