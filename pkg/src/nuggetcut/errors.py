"""Exception hierarchy.

Errors that indicate bad input files or I/O map to CLI exit code 2,
everything else derived from NuggetCutError maps to exit code 3.
"""


class NuggetCutError(Exception):
    """Base class for all errors raised by this package."""


class MetaImageParseError(NuggetCutError):
    """Malformed MetaImage header; message names the offending key."""


class VolumeSizeError(NuggetCutError):
    """Raw data length does not match the declared DimSize."""


class UnsupportedFormatError(NuggetCutError):
    """Element type or byte order outside the supported subset."""


class OutOfVolumeError(NuggetCutError):
    """A world coordinate falls outside the voxel-center hull."""


class DegenerateRegionError(NuggetCutError):
    """A statistics region contains no voxel centers."""


class PhantomSpecError(NuggetCutError):
    """Phantom description violates its own invariants."""


class ConstraintConflictError(NuggetCutError):
    """A node was forced to foreground and background at once."""


class ConstraintOutOfRangeError(NuggetCutError):
    """A border seed cannot be mapped onto the ray lattice."""


class ClosedSetViolationError(NuggetCutError):
    """Cut is not a per-ray prefix; the infinity sentinel was too small
    or the forced constraints were mutually infeasible."""


class InfeasibleConstraintsError(NuggetCutError):
    """Border constraints cannot be satisfied under the smoothness bound."""


class GeometryMismatchError(NuggetCutError):
    """Two masks do not share dims/spacing/origin."""


class UndefinedDSCError(NuggetCutError):
    """Dice coefficient of two empty masks is undefined."""


class DegenerateTestError(NuggetCutError):
    """Statistical test input carries no usable information."""
