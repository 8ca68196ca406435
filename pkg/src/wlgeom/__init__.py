"""Distance-WL degeneracy toolkit for labeled 3D point clouds."""

__version__ = "0.1.0"

from .geometry import LabeledPointCloud  # noqa: E402
from .graph_wl import NeighborhoodPolicy, Quantizer, wl_compare  # noqa: E402

__all__ = ["LabeledPointCloud", "NeighborhoodPolicy", "Quantizer", "wl_compare", "__version__"]
