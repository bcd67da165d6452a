"""Exception types shared across the simulator."""


class XbarError(Exception):
    """Base class for all simulator errors."""


class ConfigError(XbarError, ValueError):
    pass


class ShapeError(XbarError, ValueError):
    pass


class EncodingError(XbarError, ValueError):
    """An operand contains a value outside the mapping's alphabet."""


class TileTooLarge(XbarError, ValueError):
    pass


class ModelError(XbarError, ValueError):
    pass


class EmptyInput(XbarError, ValueError):
    pass
