"""Broken ray transforms on reflecting domains and their inversion by unfolding."""
from .errors import *  # noqa: F401,F403
from .fields import RadialProfile, ScalarField2D, integrate_segment
from .planar import (BoundaryRadius, BrokenRay, ConeDomain, RectTube, disk_star_orbit,
                     rect_tube_trace, reflect_direction, trace_broken_ray)
from .unfolding import (DihedralUnfolding, cube_fold_point, fold_field, fold_line, fold_point,
                        octant_fold_point, torus_geodesic_to_cube_orbit, unfold_broken_ray)

__version__ = "0.1.0"
