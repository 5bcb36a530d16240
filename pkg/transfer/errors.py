"""Иерархия исключений тулкита. CLI: DataError/DomainError -> exit 2."""


class ToolkitError(Exception):
    pass


class DataError(ToolkitError, ValueError):
    """Входные данные не соответствуют формату"""


class DomainError(ToolkitError, ValueError):
    """Аргумент вне области определения функции"""


class CorpusError(DataError):
    pass


class AlignmentError(CorpusError):
    pass


class EmptySegmentError(CorpusError):
    pass


class CapacityError(DataError):
    pass


class RuleParseError(DataError):
    pass


class RuleSemanticError(DataError):
    pass


class TreeParseError(DataError):
    pass


class FeatureTableError(DataError):
    pass


class DimensionError(DomainError):
    pass


class LexiconError(DataError):
    pass


class ManifestError(DataError):
    pass


class TranslatorProtocolError(DataError):
    pass


class MetricInputError(DataError):
    pass
