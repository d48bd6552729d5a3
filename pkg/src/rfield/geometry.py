"""Cameras, rays, and stratified sample placement along rays.

Conventions (fixed once, used everywhere):

* Cameras store a camera-to-world rigid transform. The camera frame is
  right-handed and looks along its local -z axis; image y grows downward.
* Rays pass through pixel centers, i.e. pixel (px, py) maps to image-plane
  point (px + 0.5, py + 0.5).
* Sample placement splits [t_near, t_far] into n equal bins. Each bin
  contributes one sample (midpoint when jitter is off, uniform within the
  bin when on) and one interval length delta_i equal to the bin width, so
  the deltas always tile [t_near, t_far] exactly. This makes the renderer's
  piecewise-constant quadrature exact for media that are constant per bin.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Camera",
    "Ray",
    "SampleSet",
    "generate_ray",
    "camera_rays",
    "project_point",
    "stratified_samples",
    "stratified_t_batch",
]

_ORTHO_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a camera-to-world pose."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: np.ndarray  # (4, 4) camera-to-world, row-major

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("camera resolution must be at least 1x1")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        pose = _readonly(self.pose)
        if pose.shape != (4, 4):
            raise ValueError(f"pose must be 4x4, got {pose.shape}")
        if not np.allclose(pose[3], [0.0, 0.0, 0.0, 1.0], atol=_ORTHO_TOL):
            raise ValueError("pose bottom row must be [0, 0, 0, 1]")
        r = pose[:3, :3]
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("pose rotation block is not orthonormal")
        object.__setattr__(self, "pose", pose)

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]


@dataclass(frozen=True)
class Ray:
    """World-space ray with unit direction and scene distance bounds."""

    origin: np.ndarray  # (3,)
    direction: np.ndarray  # (3,), unit length
    t_near: float
    t_far: float

    def __post_init__(self):
        o = _readonly(self.origin)
        d = _readonly(self.direction)
        if o.shape != (3,) or d.shape != (3,):
            raise ValueError("ray origin and direction must be 3-vectors")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if not (0.0 <= self.t_near < self.t_far):
            raise ValueError("require 0 <= t_near < t_far")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t) -> np.ndarray:
        """World position(s) at parameter t (scalar or array)."""
        t = np.asarray(t)
        return self.origin + t[..., None] * self.direction


@dataclass(frozen=True)
class SampleSet:
    """Ascending sample parameters t_i and per-sample interval lengths."""

    t: np.ndarray  # (n,), ascending, within [t_near, t_far]
    delta: np.ndarray  # (n,), positive bin widths tiling [t_near, t_far]

    def __post_init__(self):
        t = _readonly(self.t)
        delta = _readonly(self.delta)
        if t.ndim != 1 or t.shape != delta.shape:
            raise ValueError("t and delta must be 1-d arrays of equal length")
        if t.size == 0:
            raise ValueError("sample set must be non-empty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t must be strictly ascending")
        if np.any(delta[:-1] <= 0):
            raise ValueError("interval lengths must be positive")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "delta", delta)

    def __len__(self) -> int:
        return self.t.size


def generate_ray(camera: Camera, px: int, py: int, bounds: tuple) -> Ray:
    """Ray through the center of pixel (px, py) of ``camera``.

    ``bounds`` is the (t_near, t_far) pair for the scene.
    """
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    d_cam = np.array([
        (px + 0.5 - camera.cx) / camera.fx,
        -(py + 0.5 - camera.cy) / camera.fy,
        -1.0,
    ])
    d_world = camera.rotation @ d_cam
    d_world /= np.linalg.norm(d_world)
    t_near, t_far = bounds
    return Ray(camera.position, d_world, float(t_near), float(t_far))


def camera_rays(camera: Camera, dtype=np.float64):
    """Ray origins and unit directions for every pixel of ``camera``.

    Returns (origins, directions), each of shape (height * width, 3) in
    row-major pixel order: flat index = py * width + px.
    """
    px = np.arange(camera.width, dtype=dtype) + 0.5
    py = np.arange(camera.height, dtype=dtype) + 0.5
    u, v = np.meshgrid(px, py)  # (H, W)
    d_cam = np.stack([
        (u - camera.cx) / camera.fx,
        -(v - camera.cy) / camera.fy,
        -np.ones_like(u),
    ], axis=-1).reshape(-1, 3)
    d_world = d_cam @ camera.rotation.T.astype(dtype)
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position.astype(dtype), d_world.shape).copy()
    return origins, d_world


def project_point(camera: Camera, point: np.ndarray) -> tuple:
    """Project a world point to continuous pixel coordinates (u, v).

    Inverse of generate_ray in the sense that the ray of pixel (px, py)
    projects back to (px + 0.5, py + 0.5). The point must lie in front of
    the camera (negative z in the camera frame).
    """
    x_cam = camera.rotation.T @ (np.asarray(point, dtype=np.float64) - camera.position)
    if x_cam[2] >= 0:
        raise ValueError("point is not in front of the camera")
    u = camera.cx + camera.fx * x_cam[0] / -x_cam[2]
    v = camera.cy - camera.fy * x_cam[1] / -x_cam[2]
    return float(u), float(v)


def stratified_samples(ray: Ray, n: int, jitter: bool,
                       rng: np.random.Generator | None = None) -> SampleSet:
    """Place n samples along ``ray``, one per equal-width bin.

    With jitter off, samples sit at bin midpoints; with jitter on, each
    sample is drawn uniformly within its bin from ``rng``. delta_i is the
    bin width for every i, so sum(delta) == t_far - t_near exactly.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    if jitter and rng is None:
        raise ValueError("jittered sampling requires a random stream")
    t, delta = stratified_t_batch(ray.t_near, ray.t_far, n, 1, jitter, rng)
    return SampleSet(t[0], delta[0])


def stratified_t_batch(t_near: float, t_far: float, n: int, count: int,
                       jitter: bool, rng: np.random.Generator | None = None,
                       dtype=np.float64):
    """Vectorized sample placement for ``count`` rays sharing one t-range.

    Returns (t, delta) with shapes (count, n); same placement rule as
    stratified_samples.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    h = (t_far - t_near) / n
    edges = t_near + h * np.arange(n, dtype=dtype)
    if jitter:
        offsets = rng.random((count, n), dtype=np.float64).astype(dtype)
    else:
        offsets = np.full((count, n), 0.5, dtype=dtype)
    t = edges + offsets * h
    delta = np.full((count, n), h, dtype=dtype)
    return t, delta
