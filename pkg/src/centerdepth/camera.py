"""Rigid transforms and pinhole projection.

Points are plain numpy arrays with a trailing axis of length 3, so every
function works on a single point or a batch. Image points carry their depth
as a third component: ``(u, v, Z)``.

Camera frame: x right, y down, z along the optical axis.
"""
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .errors import BehindCamera, DegenerateProjection, FullyBehindCamera, NonPositiveDepth

# targets farther than this are dropped from annotations
MAX_RANGE = 200.0
# vertices behind this plane are pulled onto it before projecting a box hull
NEAR_PLANE = 0.1


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("intrinsics require fx > 0 and fy > 0")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def kitti_like(cls, width=1242, height=375, focal=720.0):
        """Synthetic default: KITTI-sized image, square pixels, centered principal point."""
        return cls(focal, focal, width / 2.0, height / 2.0, width, height)

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """World-to-camera extrinsics ``p_cam = R @ p_world + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.max(np.abs(r.T @ r - np.eye(3))) >= 1e-9 or np.linalg.det(r) <= 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_yaw(cls, yaw, translation=(0.0, 0.0, 0.0)):
        """Rotation about the camera y (down) axis."""
        return cls(rotation_y(yaw), np.asarray(translation, dtype=np.float64))

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def rotation_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def world_to_camera(p, x: RigidTransform):
    p = np.asarray(p, dtype=np.float64)
    return p @ x.rotation.T + x.translation


def project_to_image(p, k: CameraIntrinsics):
    """Camera point(s) -> ``(u, v, Z)``; raises :class:`BehindCamera` for Z <= 0."""
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCamera("point has non-positive camera depth")
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return np.stack([u, v, z], axis=-1)


def back_project(ip, k: CameraIntrinsics):
    """``(u, v, d)`` -> camera point with Z = d."""
    ip = np.asarray(ip, dtype=np.float64)
    d = ip[..., 2]
    if np.any(d <= 0):
        raise NonPositiveDepth("back-projection needs depth > 0")
    x = (ip[..., 0] - k.cx) * d / k.fx
    y = (ip[..., 1] - k.cy) * d / k.fy
    return np.stack([x, y, d], axis=-1)


# unit-cube corner signs, ordered bottom face then top face
_CORNERS = np.array(
    [[sx, sy, sz] for sy in (1, -1) for sz in (1, -1) for sx in (1, -1)], dtype=np.float64
)


@dataclass(frozen=True)
class Box3D:
    label: str
    vertices: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        if v.shape != (8, 3):
            raise ValueError("a box needs 8 vertices")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "center", c)

    @classmethod
    def from_pose(cls, label, center, yaw, size):
        """Cuboid from center, yaw about the vertical axis and ``(length, width, height)``.

        Length runs along the object's local z, width along x, height along y.
        """
        length, width, height = size
        half = np.array([width, height, length]) / 2.0
        local = _CORNERS * half
        verts = local @ rotation_y(yaw).T + np.asarray(center, dtype=np.float64)
        return cls(label, verts, np.asarray(center, dtype=np.float64))

    def is_cuboid(self, tol=1e-6):
        v = self.vertices
        # opposite face pairs in _CORNERS order: x-, y-, z- sign groups
        for axis in range(3):
            pos = v[_CORNERS[:, axis] > 0].mean(axis=0)
            neg = v[_CORNERS[:, axis] < 0].mean(axis=0)
            if abs(np.linalg.norm(pos - self.center) - np.linalg.norm(neg - self.center)) > tol:
                return False
            if np.linalg.norm((pos + neg) / 2.0 - self.center) > tol:
                return False
        return True


@dataclass(frozen=True)
class Annotation2D:
    label: str
    bbox: Tuple[float, float, float, float]
    center: Tuple[float, float]
    depth: float
    visibility: float

    @property
    def width(self):
        return self.bbox[2] - self.bbox[0]

    @property
    def height(self):
        return self.bbox[3] - self.bbox[1]

    def to_dict(self):
        return {
            "class": self.label,
            "bbox": [float(b) for b in self.bbox],
            "center": [float(c) for c in self.center],
            "depth_m": float(self.depth),
            "visibility": float(self.visibility),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["class"], tuple(float(b) for b in d["bbox"]), tuple(float(c) for c in d["center"]),
            float(d["depth_m"]), float(d["visibility"]),
        )


def center_depth(p_cam, mode="euclidean"):
    """Distance used as an object's depth: Euclidean range (default) or optical-axis Z."""
    p_cam = np.asarray(p_cam, dtype=np.float64)
    if mode == "euclidean":
        return float(np.linalg.norm(p_cam))
    if mode == "z":
        return float(p_cam[2])
    raise ValueError(f"unknown depth mode {mode!r}")


def project_box(b: Box3D, x: RigidTransform, k: CameraIntrinsics, depth_mode="euclidean"):
    cam = world_to_camera(b.vertices, x)
    if np.all(cam[:, 2] <= 0):
        raise FullyBehindCamera(f"{b.label} box lies behind the camera")
    c_cam = world_to_camera(b.center, x)
    if c_cam[2] <= 0:
        raise BehindCamera(f"{b.label} box center lies behind the camera")
    cam = cam.copy()
    cam[:, 2] = np.maximum(cam[:, 2], NEAR_PLANE)
    uv = project_to_image(cam, k)
    x0, y0 = uv[:, 0].min(), uv[:, 1].min()
    x1, y1 = uv[:, 0].max(), uv[:, 1].max()
    w_max, h_max = k.width - 1.0, k.height - 1.0
    cx0, cx1 = np.clip([x0, x1], 0.0, w_max)
    cy0, cy1 = np.clip([y0, y1], 0.0, h_max)
    clamped = (cx1 - cx0) * (cy1 - cy0)
    if clamped <= 0:
        raise DegenerateProjection(f"{b.label} box has no area inside the image")
    full = (x1 - x0) * (y1 - y0)
    center_px = project_to_image(c_cam, k)
    return Annotation2D(
        b.label,
        (float(cx0), float(cy0), float(cx1), float(cy1)),
        (float(center_px[0]), float(center_px[1])),
        center_depth(c_cam, depth_mode),
        float(clamped / full),
    )


def filter_targets(anns: Sequence[Annotation2D], max_range=MAX_RANGE, min_visibility=0.25):
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    if not 0.0 <= min_visibility <= 1.0:
        raise ValueError("min_visibility must lie in [0, 1]")
    return [a for a in anns if a.depth <= max_range and a.visibility >= min_visibility]
