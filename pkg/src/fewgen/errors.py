"""Exception types shared across the package.

Grouped by failure family: embedding-file format violations, episode
construction problems, shape/empty-input contract breaches, and numeric
failures.  The CLI maps the first two families to exit code 2 and
``NumericError`` to exit code 3.
"""

from __future__ import annotations


class FewgenError(Exception):
    """Base class for all package errors."""


class EmbeddingFileError(FewgenError):
    """A violation of the embedding file format.

    ``line`` is the 1-based line number in the file, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class MissingHeader(EmbeddingFileError):
    def __init__(self, message: str = "missing or invalid header line"):
        super().__init__(message, line=1)


class MalformedLine(EmbeddingFileError):
    def __init__(self, line: int, detail: str = ""):
        msg = f"malformed record at line {line}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg, line=line)


class DuplicateId(EmbeddingFileError):
    def __init__(self, record_id: str, line: int | None = None):
        super().__init__(f"duplicate record id {record_id!r}", line=line)
        self.record_id = record_id


class NonFiniteComponent(EmbeddingFileError):
    def __init__(self, line: int):
        super().__init__(f"non-finite vector component at line {line}", line=line)


class CountMismatch(EmbeddingFileError):
    """Header ``count`` does not equal the number of record lines."""

    def __init__(self, expected: int, found: int):
        super().__init__(f"header declares count={expected} but file has {found} record lines")
        self.expected = expected
        self.found = found


class DimensionMismatch(FewgenError):
    """A vector's length disagrees with the declared dimension.

    Used both by the file loader (with a line number) and by in-memory
    operations such as projection (without one).
    """

    def __init__(self, expected: int, found: int, line: int | None = None):
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"expected dimension {expected}, found {found}{where}")
        self.expected = expected
        self.found = found
        self.line = line


class NotEnoughClasses(FewgenError):
    def __init__(self, needed: int, available: int):
        super().__init__(f"need {needed} classes, only {available} available")
        self.needed = needed
        self.available = available


class NotEnoughSamples(FewgenError):
    def __init__(self, label: str, needed: int, available: int):
        super().__init__(
            f"class {label!r} needs {needed} records for this episode, has {available}"
        )
        self.label = label
        self.needed = needed
        self.available = available


class EmptyClass(FewgenError):
    def __init__(self, class_index: int):
        super().__init__(f"class index {class_index} has no members")
        self.class_index = class_index


class EmptySupport(FewgenError):
    def __init__(self):
        super().__init__("support set is empty")


class EmptyNeighbors(FewgenError):
    def __init__(self):
        super().__init__("no query neighbors available for estimation")


class NumericError(FewgenError):
    """Numeric failure during estimation, sampling, or training."""


class NotFactorizable(NumericError):
    def __init__(self, detail: str = ""):
        msg = "covariance not factorizable after jitter escalation"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteLoss(NumericError):
    def __init__(self, detail: str = ""):
        msg = "non-finite loss encountered"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
