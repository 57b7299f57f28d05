"""Deterministic planar grasping world: scenes, rendering, and the epoch protocol."""

from .blocks import BLOCK_SHAPES, N_SHAPES, BlockShape
from .gripper import (
    DEFAULT_GRIPPER,
    DESCENT_OFFSET_M,
    GraspOutcome,
    GripperSpec,
    execute_grasp,
    grasp_height,
    is_empty,
)
from .protocol import (
    DEPLOYMENT_ANGLE_COUNT,
    MAX_CONSECUTIVE_FAILURES,
    EpochRollout,
    as_policy,
    collect_experience,
    deployment_angle_indices,
    mixed_policy,
    oracle_annotator,
    oracle_policy,
    random_policy,
    run_epoch,
)
from .scene import (
    DEPTH_QUANTUM_M,
    BlockInstance,
    SceneSpec,
    pixel_to_world,
    render_heightmap,
    spawn_scene,
    world_to_pixel,
)

__all__ = [
    "BLOCK_SHAPES",
    "N_SHAPES",
    "BlockShape",
    "BlockInstance",
    "SceneSpec",
    "spawn_scene",
    "render_heightmap",
    "pixel_to_world",
    "world_to_pixel",
    "DEPTH_QUANTUM_M",
    "GripperSpec",
    "GraspOutcome",
    "DEFAULT_GRIPPER",
    "DESCENT_OFFSET_M",
    "execute_grasp",
    "grasp_height",
    "is_empty",
    "EpochRollout",
    "run_epoch",
    "collect_experience",
    "oracle_annotator",
    "oracle_policy",
    "random_policy",
    "mixed_policy",
    "as_policy",
    "deployment_angle_indices",
    "DEPLOYMENT_ANGLE_COUNT",
    "MAX_CONSECUTIVE_FAILURES",
]
