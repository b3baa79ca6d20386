"""Exception types shared across the package."""

from __future__ import annotations


class RelmemError(Exception):
    """Base class for all errors raised by this package."""


class EmptyContext(RelmemError):
    """A source to be split or indexed contains no usable content."""


class ConfigError(RelmemError):
    """Invalid or inconsistent configuration (flags, parameters, artifact mix)."""


class DimensionError(RelmemError):
    """Vectors of different dimensionality were combined."""


class ZeroNormError(RelmemError):
    """Cosine similarity was requested for an all-zero vector."""


class ProviderError(RelmemError):
    """Base class for embedding-provider failures."""


class RetryableProviderError(ProviderError):
    """Transport-level provider failure that persisted through all retries."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class ProviderContractError(ProviderError):
    """The provider answered, but the response violates the wire contract."""


class NodeNotFound(RelmemError):
    """A graph operation referenced a node id that does not exist."""


class FragmentUnmapped(RelmemError):
    """A fragment could not be assigned to any code-graph node."""


class MatrixContractError(RelmemError):
    """A relation matrix violates its structural contract."""


class GeneratorError(RelmemError):
    """The downstream generator failed; carries any completed rounds."""

    def __init__(self, message: str, partial: list | None = None, round_index: int | None = None):
        super().__init__(message)
        self.partial = partial if partial is not None else []
        self.round_index = round_index


class IndexFormatError(RelmemError):
    """A persisted index file is unreadable, mis-versioned, or inconsistent."""
