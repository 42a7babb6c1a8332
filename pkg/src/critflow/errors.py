"""Exception hierarchy shared by all critflow modules."""


class CritflowError(Exception):
    """Base class for every error raised by the package."""


class GridError(CritflowError, ValueError):
    """Invalid grid or incompatible fields."""


class SymbolSingularity(CritflowError, ValueError):
    """A Fourier multiplier is not finite at a lattice frequency."""


class GridTooSmall(CritflowError, ValueError):
    """The grid cannot host at least two dyadic annuli."""


class EmptySeries(CritflowError, ValueError):
    """A time series with no samples was supplied."""


class IndexConstraintViolated(CritflowError, ValueError):
    """Besov indices violate the hypotheses of the selected product law."""

    def __init__(self, law, constraint):
        self.law = law
        self.constraint = constraint
        super().__init__(f"law {law}: constraint violated: {constraint}")


class CflViolation(CritflowError, RuntimeError):
    """Time step exceeds the stability limit of an explicit term."""


class VacuumApproach(CritflowError, RuntimeError):
    """Density (or 1 + a) fell below the configured floor."""


class TruncationInvalid(CritflowError, ValueError):
    """inf(1 + S_m a) dropped below b_under / 2."""


class NonFinite(CritflowError, FloatingPointError):
    """A NaN or infinity appeared in the state."""


class ParseError(CritflowError, ValueError):
    """Malformed configuration file."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(CritflowError, ValueError):
    """Configuration parsed but violates one or more gates."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
