"""Exception hierarchy shared across the simulator."""


class CellFreeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CellFreeError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(DomainError):
    pass


class InvalidGeometryError(DomainError):
    pass


class InvalidResolutionError(DomainError):
    pass


class DegenerateProjectionError(CellFreeError):
    """Projection onto the semi-unitary set is not unique (rank deficient input)."""


class DegenerateChannelError(CellFreeError):
    pass


class PrecoderSingularError(CellFreeError):
    """The Gram matrix of a channel to be inverted is singular or ill-conditioned."""


class InfiniteRateError(CellFreeError):
    """Zero compression noise with a nonzero signal: the fronthaul rate is unbounded."""


class InitializationError(CellFreeError):
    """The compression noise alone already violates the power budget (t = 0 infeasible)."""


class NumericalError(CellFreeError):
    pass


class SimulationError(CellFreeError):
    """Too many Monte-Carlo trials failed."""
