"""flylora - frozen sparse projection adapters with implicit rank-wise routing."""

__version__ = "0.1.0"
__author__ = "flylora developers"

from .core.adapters import AdapterConfig, AdapterVariant, build_adapter
from .core.errors import FlyLoRAError
from .core.projection import ProjectionSpec, make_sparse_projection
from .main import start

__all__ = [
    'AdapterConfig',
    'AdapterVariant',
    'FlyLoRAError',
    'ProjectionSpec',
    'build_adapter',
    'make_sparse_projection',
    'start',
]
