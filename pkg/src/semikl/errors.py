"""Exception and warning types shared across the package."""


class SemiklError(Exception):
    """Base class for all package-specific errors."""


class ResolutionError(SemiklError):
    """Grid too coarse to represent the requested object."""


class RankDeficiencyError(SemiklError):
    """Wavefunction family is numerically rank deficient."""

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class StabilityError(SemiklError):
    """Time step violates the stability budget."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class AdmissibilityError(SemiklError):
    """Kernel/exponent configuration fails the admissibility gate."""


class SingularityError(SemiklError):
    """Kernel evaluated at its singular point."""


class AdmissibilityWarning(UserWarning):
    """Admissibility gate failed but the run was explicitly overridden."""


class NeutralizedModeWarning(UserWarning):
    """Zero-frequency kernel mode dropped because the integral diverges."""


class WeakNormDivergenceError(SemiklError):
    """Weak Lorentz norm diverges; `regime` names the failing end."""

    def __init__(self, message: str, regime: str):
        super().__init__(message)
        self.regime = regime  # "origin" or "tail"


class HorizonError(SemiklError):
    """Boundary mass exceeds the validity horizon of the periodic box."""


class HorizonWarning(UserWarning):
    """Observable evaluated on a state that breaches the validity horizon."""


class UnsupportedDimensionError(SemiklError):
    """Operation not available in this spatial dimension."""


class CheckpointError(SemiklError):
    """Base class for checkpoint file problems."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint payload truncated or checksum mismatch."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint magic/version not understood by this reader."""


class ConfigError(SemiklError):
    """Configuration file invalid; `field` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
