"""DeCoNAS: densely constructed architecture search for lightweight
single-image super-resolution networks."""

from .space import ArchitectureSequence, SearchSpaceConfig

__all__ = ["ArchitectureSequence", "SearchSpaceConfig"]
__version__ = "0.1.0"
