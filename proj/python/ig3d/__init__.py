"""Voxel radiance fields with instruction-guided conversion."""

from ._ig3d import (
    Resolution,
    RuntimeFailure,
    ValidationError,
    VoxelGrid,
    apply_instruction,
    dynamic_schedule,
    load_checkpoint,
    load_scene,
    orbit_poses,
    parse_instruction,
    render,
    resample,
    run_cli,
    save_checkpoint,
)

__all__ = [
    "Resolution",
    "RuntimeFailure",
    "ValidationError",
    "VoxelGrid",
    "apply_instruction",
    "dynamic_schedule",
    "load_checkpoint",
    "load_scene",
    "orbit_poses",
    "parse_instruction",
    "render",
    "resample",
    "run_cli",
    "save_checkpoint",
]
