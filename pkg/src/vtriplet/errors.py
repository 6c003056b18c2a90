"""Exception hierarchy shared by the library and the CLI.

Every exception carries a short machine-parsable ``error_class`` that the CLI
prints as the first token of its single-line error output.
"""


class VTripletError(Exception):
    """Base class for all errors raised by this package."""

    error_class = "error"


class ShapeError(VTripletError):
    """An input tensor or vector has incompatible dimensions."""

    error_class = "invalid-input"


class ConfigError(VTripletError):
    """A spec, hyperparameter, or config file is invalid."""

    error_class = "config-error"


class FormatError(VTripletError):
    """A binary or text artifact is corrupt or has the wrong version."""

    error_class = "format-error"


class ManifestError(VTripletError):
    """A sequence manifest fails to parse or violates its invariants."""

    error_class = "manifest-error"


class MissingArtifactError(VTripletError):
    """A required upstream file (params, descriptors, manifest) is absent."""

    error_class = "missing-artifact"


class MixedHashError(VTripletError):
    """Input artifacts were produced by different pipeline configs."""

    error_class = "mixed-hash"


class UsageError(VTripletError):
    """An operation was invoked in an unsupported way."""

    error_class = "usage-error"


class MiningError(VTripletError):
    """A triplet source persistently failed to yield."""

    error_class = "mining-error"
