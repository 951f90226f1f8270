"""Exception hierarchy shared by all torus_hpt modules."""


class HptError(Exception):
    """Base class for every error raised by torus_hpt."""


class DegreeOverflow(HptError, ValueError):
    """A form operation would produce a form of degree above 3."""


class DegreeError(HptError, ValueError):
    """An element has the wrong (total) degree for the requested operation."""


class MeanError(HptError, ValueError):
    """A right-hand side that must have zero mean does not."""


class BandLimitError(HptError, ValueError):
    """Requested Fourier support does not fit the grid."""


class RingMismatchError(HptError, ValueError):
    """Operands live in different parameter rings or on different grids."""


class ForeignMonomialError(HptError, ValueError):
    """A monomial is not a canonical monomial of the declared ring."""


class DensityError(HptError, ValueError):
    """A density is not strictly positive."""


class SlotError(HptError, ValueError):
    """A homotopy slot needed by an operation is not populated."""


class MassError(HptError, ValueError):
    """Two densities do not carry the same mass."""


class ConstructionError(HptError, ValueError):
    """An analytic field could not be constructed to the required accuracy."""


class FieldFileError(HptError, ValueError):
    """A field file or manifest is malformed."""


class ConfigError(HptError, ValueError):
    """Invalid run configuration."""
