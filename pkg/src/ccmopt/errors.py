"""Exception hierarchy shared across the package."""


class CCMError(Exception):
    """Base class for all package errors."""


class ParameterError(CCMError):
    """A caller-supplied parameter is out of its admissible range."""


class InvalidDesignError(CCMError):
    """A design vector produced a structure that cannot be analyzed."""


class AnalysisFailure(CCMError):
    """The nonlinear solve (Newton / contact outer loop) did not converge."""


class ElementError(CCMError):
    """Degenerate or inverted element encountered during integration."""


class DescriptorError(CCMError):
    """A path cannot be closed or described (self-intersection, zero length)."""


class ConfigError(CCMError):
    """A run configuration file is missing, malformed, or out of range."""
