"""Puppet-assisted non-rigid tracking and fusion of depth sequences."""

from ._core import (
    Intrinsics,
    PuppetrackError,
    TriangleMesh,
    ablate,
    backproject,
    bone_rigid_transform,
    builtin_script_names,
    default_intrinsics,
    evaluate,
    evaluate_frame,
    exp_so3,
    generate,
    hausdorff,
    log_so3,
    mae_point_to_plane,
    outlier_count,
    read_obj,
    reconstruct,
    render_depth,
    rotation_between,
    rotation_between_or_flip,
    write_obj,
)

__all__ = [
    "Intrinsics",
    "PuppetrackError",
    "TriangleMesh",
    "ablate",
    "backproject",
    "bone_rigid_transform",
    "builtin_script_names",
    "default_intrinsics",
    "evaluate",
    "evaluate_frame",
    "exp_so3",
    "generate",
    "hausdorff",
    "log_so3",
    "mae_point_to_plane",
    "outlier_count",
    "read_obj",
    "reconstruct",
    "render_depth",
    "rotation_between",
    "rotation_between_or_flip",
    "write_obj",
]
