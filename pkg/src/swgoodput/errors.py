"""Exception hierarchy shared by the analysis, simulator and CLI."""


class GoodputError(Exception):
    """Base class for every error raised by this package."""


class InvalidRate(GoodputError, ValueError):
    """A probability is outside its admissible range."""


class DegenerateChain(GoodputError, ValueError):
    """lambda + gamma == 0, so the stationary vector is not unique."""


class MalformedCdf(GoodputError, ValueError):
    pass


class EmptyRange(GoodputError, ValueError):
    pass


class ConfigError(GoodputError):
    pass


class NumericalError(GoodputError):
    """Errors that map to CLI exit code 2."""


class TimeoutTooShort(NumericalError):
    """A packet does not fit inside the retransmission timeout."""


class NoConvergence(NumericalError):
    """Success probability is (numerically) zero; E[N] is unbounded."""


class RetryCap(NumericalError):
    """Simulator hit its per-packet attempt guard."""
