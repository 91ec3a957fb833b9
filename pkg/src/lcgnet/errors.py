"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary bad arguments (shape/parameter
mismatches); the classes here exist where callers need to tell failure
modes apart, e.g. the CLI exit-code mapping.
"""


class SchemaError(ValueError):
    """A named-tensor archive or feature pyramid is missing/mis-shaping entries."""


class VersionError(RuntimeError):
    """A checkpoint was written by an incompatible format version."""


class CheckpointIntegrityError(RuntimeError):
    """A checkpoint archive is truncated or otherwise unreadable."""


class RegionConflictError(ValueError):
    """Two camouflage regions overlap."""


class DegenerateMaskError(ValueError):
    """A mask came out empty after the resize policy."""


class LossNanError(RuntimeError):
    """A loss term went non-finite; carries the offending term name."""

    def __init__(self, term: str):
        super().__init__(f"loss term '{term}' is not finite")
        self.term = term
