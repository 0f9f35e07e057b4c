"""Exception hierarchy shared by every nflow module."""


class NflowError(Exception):
    """Base class for all errors raised by nflow."""


# domain
class InvalidDimension(NflowError, ValueError):
    pass


class NonPositiveExtent(NflowError, ValueError):
    pass


class TooFewCells(NflowError, ValueError):
    pass


class GridMismatch(NflowError, ValueError):
    pass


# model
class InvalidParameter(NflowError, ValueError):
    pass


class NonPositiveDensity(NflowError, ValueError):
    pass


class TiltTooLarge(NflowError, ValueError):
    pass


class DensityOutOfBounds(NflowError, ValueError):
    pass


# solvers
class SolverError(NflowError, RuntimeError):
    """A numerical sub-solver failed; the CLI maps these to exit status 1."""


class CflViolated(SolverError):
    pass


class SolverDiverged(SolverError):
    pass


class EigensolverFailed(SolverError):
    pass


class SingularMass(SolverError):
    pass


class PicardDiverged(SolverError):
    def __init__(self, message, ratios=()):
        super().__init__(message)
        self.ratios = tuple(ratios)


class NTooLarge(NflowError, ValueError):
    pass


class EmptyHistory(NflowError, ValueError):
    pass


class NegativeArgument(NflowError, ValueError):
    pass


class BadIndex(NflowError, IndexError):
    pass


# monitors / oracle
class WrongDimension(NflowError, ValueError):
    pass


class InadmissibleExponents(NflowError, ValueError):
    pass


class BadConstants(NflowError, ValueError):
    pass


class InadmissibleB(NflowError, ValueError):
    pass


class OracleUnavailable(NflowError, LookupError):
    pass


# cli
class ConfigInvalid(NflowError, ValueError):
    pass
