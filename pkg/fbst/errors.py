from typing import Optional, Tuple


class FbstError(Exception):
    """Base class for errors raised by fbst."""


class ConfigError(FbstError, ValueError):
    """Invalid parameters or configuration."""


class NumericalError(FbstError, ArithmeticError):
    """A numerical step failed and no fallback was possible."""


class ToeplitzBreakdownError(NumericalError):
    """Levinson recursion hit a (near) singular leading minor.

    Parameters
    ----------
    step : int
        Recursion step (order of the leading minor) at which the breakdown
        occurred.
    beam : int, optional
        Index of the beam whose system broke down, if known.
    """

    def __init__(self, step: int, beam: Optional[int] = None):
        self.step = step
        self.beam = beam
        where = f" (beam {beam})" if beam is not None else ""
        super().__init__(
            f"Toeplitz system lost positive definiteness at step {step}{where}"
        )


class DenseCapError(ConfigError):
    """A dense oracle was asked to materialize a matrix above its size cap."""

    def __init__(self, dims: Tuple[int, ...], cap: int):
        self.dims = dims
        self.cap = cap
        super().__init__(
            f"Dense evaluation of size {' x '.join(map(str, dims))} exceeds "
            f"the cap of {cap} entries"
        )


class CacheError(FbstError):
    """A cached plan is missing, stale, or does not match its recorded hash."""
