"""Exception hierarchy shared by every module."""


class TreeDistillError(Exception):
    """Base class for all package errors."""


class StructureError(TreeDistillError, ValueError):
    """A model or condition set is malformed."""


class ModelFormatError(TreeDistillError, ValueError):
    """A serialized model document violates the schema.

    ``path`` locates the offending element, e.g. ``trees[0].nodes[3].left``.
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class IngestError(TreeDistillError, ValueError):
    """Raw data cannot be mapped onto a condition set."""


class PreconditionError(TreeDistillError, ValueError):
    """An operation was called outside its domain."""


class CapacityError(TreeDistillError):
    """An exhaustive enumeration would exceed its configured limit."""


class ExplanationTimeout(TreeDistillError):
    """An explanation query ran past its wall-clock budget."""
