"""Exception types shared across the package."""


class CausalAugError(Exception):
    """Base class for all package errors."""


class ParseError(CausalAugError):
    """A data file could not be parsed (message names the offending line)."""


class ValidationError(CausalAugError):
    """A record violates a data-model invariant (message names the record)."""


class ConfigurationError(CausalAugError):
    """A configuration value or combination of values is unusable."""


class OOVError(CausalAugError):
    """A lemma is missing from a model vocabulary (message names the lemma)."""


class StructuralError(CausalAugError):
    """A sentence layout does not support the requested construction."""


class RoutingError(CausalAugError):
    """A relation label does not select any model."""


class StageError(CausalAugError):
    """A pipeline stage cannot run (message names the missing artifact)."""
