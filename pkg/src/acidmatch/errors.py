"""Exception hierarchy shared across the package."""


class AcidMatchError(Exception):
    """Base class for every error raised by acidmatch."""


class ParseError(AcidMatchError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DuplicateIdError(AcidMatchError):
    pass


class CoordinateError(AcidMatchError):
    pass


class UnresolvedIdError(AcidMatchError):
    pass


class DuplicatePairError(AcidMatchError):
    pass


class UndecodableImageError(AcidMatchError):
    pass


class EmptyGroundTruthError(AcidMatchError):
    pass


class NoAvailablePairsError(AcidMatchError):
    pass


class EmptyCorpusError(AcidMatchError):
    pass


class NoImpersonatorLabelsError(AcidMatchError):
    pass


class DomainError(AcidMatchError, ValueError):
    pass


class InsufficientDataError(AcidMatchError):
    """Not enough ground truth, negatives or positives for a sampling request."""


class SingleClassError(AcidMatchError):
    pass


class NonFiniteFeatureError(AcidMatchError):
    pass


class ModelFormatError(AcidMatchError):
    """Model file is corrupt or has the wrong magic header."""


class ModelVersionError(AcidMatchError):
    pass


class ConfigError(AcidMatchError):
    pass
