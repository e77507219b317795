"""Dense SE(2) belief-tensor localization.

A robot's pose belief is held as a ``(channels, height, width)`` tensor over
an occupancy grid. Odometry moves and blurs it, the map masks impossible
states, and lidar scans reweight it through a likelihood field.
"""

from .belief import (BeliefExtinguishedError, BeliefTensor, MotionNoise, OdometryDelta,
                     PoseEstimate, argmax_state, belief_map, build_kernels, init_uniform,
                     kernel_activation, refined_estimate, step)
from .localizer import FilterConfig, Localizer
from .maps import (DistanceField, InvalidOriginError, MapError, OccupancyMap, distance_field,
                   load_map, raycast, read_map, write_pgm)
from .observation import LidarScan, LikelihoodModel, LikelihoodParams, observation_update

__version__ = "0.1.0"

__all__ = [
    "BeliefExtinguishedError", "BeliefTensor", "MotionNoise", "OdometryDelta", "PoseEstimate",
    "argmax_state", "belief_map", "build_kernels", "init_uniform", "kernel_activation",
    "refined_estimate", "step", "FilterConfig", "Localizer", "DistanceField",
    "InvalidOriginError", "MapError", "OccupancyMap", "distance_field", "load_map", "raycast",
    "read_map", "write_pgm", "LidarScan", "LikelihoodModel", "LikelihoodParams",
    "observation_update",
]
