"""Binary/ternary neural-network inference on simulated binary RRAM crossbars."""
from .errors import ConfigError, EmptyInput, EncodingError, ModelError, ShapeError, TileTooLarge
from .mapping import Kind, MappingScheme, Variant, all_schemes, valid_names
from .xbar import AdcConfig, AdcMode, Crossbar, CrossbarConfig, CrossbarPool

__version__ = "0.1.0"
