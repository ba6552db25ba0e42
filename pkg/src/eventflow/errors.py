"""Exception hierarchy shared across the toolkit."""


class EventflowError(Exception):
    """Base class for domain errors raised by eventflow."""

    module = "eventflow"


# event catalog / gateway

class GatewayError(EventflowError):
    """Transport or protocol failure talking to the language model."""

    module = "llm_gateway"

    def __init__(self, message, *, cause=None, status=None, raw_output=None):
        super().__init__(message)
        self.cause = cause
        self.status = status
        self.raw_output = raw_output


class MissingBinding(EventflowError, KeyError):
    module = "llm_gateway"

    def __str__(self):
        return Exception.__str__(self)


class UnparseableAnswer(EventflowError):
    module = "llm_gateway"

    def __init__(self, message, raw_output=None):
        super().__init__(message)
        self.raw_output = raw_output


class UnparseableTime(UnparseableAnswer):
    module = "event_catalog"


class ClassificationError(UnparseableAnswer):
    module = "event_catalog"


class PreconditionError(EventflowError, ValueError):
    pass


# popularity / features

class TypeMismatch(EventflowError, TypeError):
    module = "popularity"


class CalendarOutOfRange(EventflowError, ValueError):
    module = "features"


class InsufficientHistory(EventflowError, ValueError):
    module = "features"


class DegenerateBaseline(EventflowError, ZeroDivisionError):
    module = "features"


class CoverageGap(EventflowError, ValueError):
    """Raised when an input source misses dates; ``missing`` maps source -> dates."""

    module = "features"

    def __init__(self, missing):
        self.missing = {k: list(v) for k, v in missing.items() if v}
        parts = []
        for source, dates in self.missing.items():
            head = ", ".join(str(d) for d in dates[:5])
            more = f" (+{len(dates) - 5} more)" if len(dates) > 5 else ""
            parts.append(f"{source}: {head}{more}")
        super().__init__("coverage gap in " + "; ".join(parts))


# models

class DimensionMismatch(EventflowError, ValueError):
    module = "forecast_models"


class NonFiniteInput(EventflowError, ValueError):
    module = "forecast_models"


class SingularSystem(EventflowError, ArithmeticError):
    module = "forecast_models"


class NonStationaryEstimate(UserWarning):
    """Issued (not raised) when fitted AR roots fall inside the unit circle."""


class ZeroVariance(EventflowError, ValueError):
    """R-squared is undefined for a constant target; ``mae`` is still available."""

    module = "rolling_eval"

    def __init__(self, mae):
        super().__init__(f"target has zero variance; R2 undefined (MAE={mae!r})")
        self.mae = mae


class SchemaMismatch(EventflowError, ValueError):
    module = "attribution"


class ConfigInvalid(EventflowError, ValueError):
    module = "config"
