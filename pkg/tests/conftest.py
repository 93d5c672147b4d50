"""Shared generators for randomized geometry tests."""

import numpy as np

from mono3dg.box3d import OrientedBox3D
from mono3dg.camera import CameraIntrinsics
from mono3dg.rotation import random_rotation


def random_intrinsics(rng: np.random.Generator) -> CameraIntrinsics:
    width = rng.uniform(640, 2048)
    height = width * rng.uniform(0.5, 0.8)
    fx = rng.uniform(500, 2000)
    return CameraIntrinsics(
        fx=fx,
        fy=fx * rng.uniform(0.95, 1.05),
        cx=width * rng.uniform(0.45, 0.55),
        cy=height * rng.uniform(0.45, 0.55),
        width=width,
        height=height,
    )


def random_box(rng: np.random.Generator, yaw_only: bool = False) -> OrientedBox3D:
    center = rng.uniform(-2.0, 2.0, size=3)
    dims = rng.uniform(0.3, 2.0, size=3)
    if yaw_only:
        yaw = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    else:
        rot = random_rotation(rng)
    return OrientedBox3D(center, dims, rot)


def overlapping_box_pair(rng: np.random.Generator, yaw_only: bool = False):
    a = random_box(rng, yaw_only)
    offset = rng.uniform(-0.8, 0.8, size=3)
    b_center = a.center + offset
    dims = rng.uniform(0.3, 2.0, size=3)
    if yaw_only:
        yaw = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    else:
        rot = random_rotation(rng)
    return a, OrientedBox3D(b_center, dims, rot)
