"""graspfield: language-directed task-oriented grasp selection.

Core flow: load a multi-scale language feature field, localize the queried
object, grow a 3D object mask from grouping features, restrict the part query
to that mask, and re-rank geometric grasp candidates by the weighted
semantic/geometric score.
"""

from .errors import GraspFieldError
from .field import FeatureField, TextQuery, load_field, relevancy, write_field
from .geometry import Aabb
from .scene import CameraModel, DepthMap, PointCloud

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "CameraModel",
    "DepthMap",
    "FeatureField",
    "GraspFieldError",
    "PointCloud",
    "TextQuery",
    "load_field",
    "relevancy",
    "write_field",
    "__version__",
]
