"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
physics-domain failures (no phasematching, filters killing all support)
exit 3, and numerical failures exit 4.
"""


class PairspecError(Exception):
    """Base class for all package errors."""


class ConfigError(PairspecError):
    """Malformed configuration or crystal-database input."""


class PhysicsDomainError(PairspecError):
    """The requested configuration has no physical solution."""


class DispersionRangeError(PhysicsDomainError):
    """Wavelength outside a Sellmeier form's validity range."""


class NoPhasematchingError(PhysicsDomainError):
    """Wavevector mismatch has no zero crossing on (0, 90) degrees."""


class NoGvmPointError(PhysicsDomainError):
    """Group-velocity-matching mismatch has no sign change in the scan window."""


class FilterSupportError(PhysicsDomainError):
    """A spectral filter removes all support of the joint amplitude."""


class NumericalError(PairspecError):
    """Decomposition or normalization failure on otherwise valid input."""
