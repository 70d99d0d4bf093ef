"""Exception hierarchy for the engine.

Errors that indicate bad user input (files, config, labels) derive from
``InputError``; errors raised mid-computation derive from ``RuntimeFailure``.
The CLI maps the former to exit code 2 and the latter to exit code 3.
"""


class CommitContrastError(Exception):
    """Base class for all engine errors."""


class InputError(CommitContrastError):
    """Invalid user-supplied input: files, schemas, config values."""


class RuntimeFailure(CommitContrastError):
    """Failure while computing: numerics, state, integrity."""


# corpus
class MissingColumn(InputError):
    pass


class UnknownLabelToken(InputError):
    pass


class DuplicateId(InputError):
    pass


class BadFractions(InputError):
    pass


class InsufficientClassSupport(InputError):
    pass


# augment
class TooFewClasses(InputError):
    pass


class EmptyClassPool(InputError):
    pass


# encoder
class NonFiniteInput(RuntimeFailure):
    pass


class DimensionMismatch(RuntimeFailure):
    pass


class RaggedDimensions(InputError):
    pass


class DuplicateKey(InputError):
    pass


class MalformedLine(InputError):
    pass


class UnsupportedEncoder(InputError):
    pass


# projection
class ZeroTarget(RuntimeFailure):
    pass


# contrastive
class ZeroVector(RuntimeFailure):
    pass


class IndexOutOfRange(RuntimeFailure):
    pass


class ZeroProjection(RuntimeFailure):
    pass


# trainer
class ShapeMismatch(RuntimeFailure):
    pass


class EmptyValidation(InputError):
    pass


class VersionMismatch(InputError):
    pass


class CorruptCheckpoint(InputError):
    pass


# evaluate
class EmptyClass(RuntimeFailure):
    pass


class EmptyPrototype(RuntimeFailure):
    pass


class UnknownLabel(RuntimeFailure):
    pass


class DigestMismatch(RuntimeFailure):
    pass


class EmptyMatrix(RuntimeFailure):
    pass


# config / cli
class ConfigError(InputError):
    pass
