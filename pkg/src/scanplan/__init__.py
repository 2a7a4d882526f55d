"""Exploration planning and rotating-sensor scan control toolkit."""

from scanplan.grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from scanplan.kinematics import SensorPoseChain, compose_sensor_pose, scan_direction

__all__ = [
    "FREE",
    "OCCUPIED",
    "UNKNOWN",
    "OccupancyGrid",
    "SensorPoseChain",
    "compose_sensor_pose",
    "scan_direction",
]

__version__ = "0.1.0"
