"""Exception hierarchy shared by the pipeline stages."""


class TTRulesError(Exception):
    """Base class for all package errors."""


class SchemaError(TTRulesError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ParseError(TTRulesError, ValueError):
    pass


class CategoryError(TTRulesError, ValueError):
    pass


class StratificationError(TTRulesError, ValueError):
    pass


class ShapeError(TTRulesError, ValueError):
    pass


class TaskMismatchError(TTRulesError, ValueError):
    pass


class TrainingError(TTRulesError, RuntimeError):
    pass


class TernarizationError(TTRulesError, RuntimeError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class FanInError(TTRulesError, ValueError):
    pass


class ParameterError(TTRulesError, ValueError):
    pass


class OrderError(TTRulesError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class StoreError(TTRulesError, ValueError):
    pass


class MetricError(TTRulesError, ValueError):
    pass


class ExactnessError(TTRulesError, AssertionError):
    def __init__(self, message, rule=None):
        super().__init__(message)
        self.rule = rule


class ConfigError(TTRulesError, ValueError):
    pass


class IntegrityError(TTRulesError, ValueError):
    pass
