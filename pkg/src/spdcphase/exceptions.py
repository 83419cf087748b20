"""Exception and warning types shared across the package."""


class CrystalFileError(ValueError):
    """A crystal-data file could not be parsed."""


class CrystalValidationError(ValueError):
    """A crystal-data file parsed but violates the schema or a physical invariant."""


class OutOfRangeError(ValueError):
    """A wavelength or temperature lies outside a model's validity range.

    Attributes name the violated bound so callers can report it precisely.
    """

    def __init__(self, quantity, value, bound, limit, where=""):
        self.quantity = quantity
        self.value = value
        self.bound = bound
        self.limit = limit
        self.where = where
        side = "below minimum" if bound == "min" else "above maximum"
        loc = f" ({where})" if where else ""
        super().__init__(f"{quantity} {value:g} is {side} {limit:g}{loc}")


class SolverError(RuntimeError):
    """Root search or tuning-curve construction failed."""


class DegenerateContinuumError(SolverError):
    """The phase mismatch vanishes identically over the search grid."""


class SpectrumError(RuntimeError):
    """Linewidth extraction failed (no center, or side-lobe ambiguity)."""


class FitError(RuntimeError):
    """A fringe fit could not be performed."""


class OverSubtractionError(ValueError):
    """Accidental subtraction drove counts negative beyond the statistical floor."""


class GridResolutionWarning(UserWarning):
    """Two roots were found closer together than one grid cell."""


class AccidentalClampWarning(UserWarning):
    """Corrected counts were clamped at zero."""
