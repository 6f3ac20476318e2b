"""Exception hierarchy shared by all planlat modules."""


class PlanLatError(Exception):
    """Base class for every error raised by planlat."""


class DimensionError(PlanLatError, ValueError):
    pass


class UsageError(PlanLatError, ValueError):
    pass


class TrainingError(PlanLatError, RuntimeError):
    pass


class TrainingDataError(PlanLatError, ValueError):
    pass


class ParseError(PlanLatError, ValueError):
    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class SchemaError(PlanLatError, ValueError):
    pass


class EncodingError(PlanLatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InferenceError(PlanLatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class MetricError(PlanLatError, ValueError):
    pass


class FitError(PlanLatError, RuntimeError):
    pass
