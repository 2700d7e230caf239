"""Exception types shared across the pipeline stages."""


class TypesimError(Exception):
    """Base class for all package-specific errors."""


class UnparsableAnnotation(TypesimError):
    """A raw type annotation string could not be parsed as an expression."""


class EmptyVocabulary(TypesimError):
    """No token survived the min-count cut when building an embedding vocabulary."""


class UnminableTriplets(TypesimError):
    """The label distribution admits no (anchor, positive, negative) triplet."""


class IndexBuildError(TypesimError):
    """A nearest-neighbour index cannot be built (e.g. empty training set)."""


class SplitError(TypesimError):
    """Too few files to partition into train/valid/test."""


class EmptyEvaluation(TypesimError):
    """evaluate() was called with no datapoints."""


class StageError(TypesimError):
    """A pipeline stage failed; carries the stage name for CLI reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
