class QSynthError(Exception):
    pass


class DimensionError(QSynthError, ValueError):
    pass


class CapacityError(QSynthError):
    pass


class ParameterShapeError(QSynthError, ValueError):
    pass


class UnsupportedGateError(QSynthError):
    pass


class InsufficientCapacityError(QSynthError, ValueError):
    """Too few circuit layers to encode every input feature."""


class TrainingError(QSynthError, FloatingPointError):
    pass


class ConfigError(QSynthError, ValueError):
    pass
