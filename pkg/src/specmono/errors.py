"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the CLI exit status
it maps to (1 computation failure, 2 configuration or regime violation,
3 input/output).
"""


class SpecMonoError(Exception):
    code = "ERROR"
    exit_status = 1


class ConfigError(SpecMonoError):
    code = "CONFIG"
    exit_status = 2


class RegimeViolation(ConfigError, ValueError):
    code = "REGIME_VIOLATION"


class ParseError(SpecMonoError):
    """Malformed input file; ``offset`` is the byte offset of the bad line."""

    code = "PARSE"
    exit_status = 2

    def __init__(self, message, *, path=None, offset=None, line=None):
        self.path = path
        self.offset = offset
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class IOFailure(SpecMonoError):
    code = "IO"
    exit_status = 3


# symbol calculus
class CutoffExceeded(SpecMonoError):
    code = "CUTOFF_EXCEEDED"


class DivergentExponential(SpecMonoError):
    code = "DIVERGENT_EXPONENTIAL"


# normal form
class ResonantMode(SpecMonoError):
    code = "RESONANT_MODE"


class SingularJacobian(SpecMonoError):
    code = "SINGULAR_JACOBIAN"


# spectra
class OutOfDomain(SpecMonoError):
    code = "OUT_OF_DOMAIN"


class EmptyRectangle(SpecMonoError):
    code = "EMPTY_RECTANGLE"


class NotCommuting(SpecMonoError):
    code = "NOT_COMMUTING"


class IllConditioned(SpecMonoError):
    code = "ILL_CONDITIONED"


# lattice detection
class InsufficientData(SpecMonoError):
    code = "INSUFFICIENT_DATA"


class NoLatticeStructure(SpecMonoError):
    code = "NO_LATTICE_STRUCTURE"


class DegenerateBasis(SpecMonoError):
    code = "DEGENERATE_BASIS"


class NotLocallyConstant(SpecMonoError):
    code = "NOT_LOCALLY_CONSTANT"


class NotUnimodular(SpecMonoError):
    code = "NOT_UNIMODULAR"


class CocycleInconsistent(SpecMonoError):
    code = "COCYCLE_INCONSISTENT"

    def __init__(self, message, triple=None):
        self.triple = triple
        super().__init__(message)


class IncompleteCover(SpecMonoError):
    code = "INCOMPLETE_COVER"

    def __init__(self, message, pair=None):
        self.pair = pair
        super().__init__(message)


# classical side
class NotRegularValue(SpecMonoError):
    code = "NOT_REGULAR_VALUE"


class QuadratureFailure(SpecMonoError):
    code = "QUADRATURE_FAILURE"


class UndersampledLoop(SpecMonoError):
    code = "UNDERSAMPLED_LOOP"
