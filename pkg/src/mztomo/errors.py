"""Exception and warning types.

Every error carries the process exit code the command line front-end uses
when it surfaces that error.
"""


class TomographyError(Exception):
    exit_code = 1


class InvalidDimensionError(TomographyError, ValueError):
    exit_code = 10


class InvalidDeviceError(TomographyError, ValueError):
    exit_code = 3


class InvalidSettingError(TomographyError, ValueError):
    exit_code = 9


class InvalidModeError(InvalidSettingError):
    exit_code = 11


class ProtocolMismatchError(TomographyError, ValueError):
    exit_code = 8


class InvalidRecordError(TomographyError, ValueError):
    exit_code = 12


class IncompletePlanError(TomographyError):
    exit_code = 5


class AmbiguousPlanError(TomographyError):
    exit_code = 6


class UnrecoverableRowError(TomographyError):
    """Raised when an input mode transmits too little light to recover its row."""

    exit_code = 7

    def __init__(self, mode: int, eta_hat: float, threshold: float):
        self.mode = mode
        self.eta_hat = eta_hat
        self.threshold = threshold
        super().__init__(
            f"row {mode} is unrecoverable: estimated transmissivity {eta_hat:.3g} "
            f"is at or below the deflation threshold {threshold:.3g}"
        )


class ClampWarning(UserWarning):
    pass


class LowAmplitudeWarning(UserWarning):
    pass


class SamplingCostWarning(UserWarning):
    pass


class OpaqueModeWarning(UserWarning):
    pass
