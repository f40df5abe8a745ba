"""Depth-guided point-cloud-fusion radiance fields."""

from ._core import (
    Camera,
    DgpfError,
    Model,
    camera_ray,
    composite,
    evaluate,
    pixel_to_world,
    psnr,
    raycast,
    ssim,
    synth_dataset,
    train,
    world_to_ndc,
)

__all__ = [
    "Camera",
    "DgpfError",
    "Model",
    "camera_ray",
    "composite",
    "evaluate",
    "pixel_to_world",
    "psnr",
    "raycast",
    "ssim",
    "synth_dataset",
    "train",
    "world_to_ndc",
]
