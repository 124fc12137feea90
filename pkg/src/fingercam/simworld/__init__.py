"""Deterministic toy manipulation environments with fingertip-view rendering."""

from .expert import scripted_expert
from .geometry import Camera, Prim, box, look_at_camera, render, sphere
from .tasks import TASK_IDS, create_task, get_task, reference_tree
from .world import (
    RawSensors,
    SimulationError,
    World,
    WorldConfig,
    check_success,
    compute_joint_currents,
    render_views,
    step,
)

__all__ = [
    "Camera",
    "Prim",
    "RawSensors",
    "SimulationError",
    "TASK_IDS",
    "World",
    "WorldConfig",
    "box",
    "check_success",
    "compute_joint_currents",
    "create_task",
    "get_task",
    "look_at_camera",
    "reference_tree",
    "render",
    "render_views",
    "scripted_expert",
    "sphere",
    "step",
]
