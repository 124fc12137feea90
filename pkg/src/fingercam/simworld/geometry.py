"""Geometric primitives, vectorized ray casting, and contact queries for the
toy task worlds. Supported solids: oriented boxes, spheres, and a two-tone
ground plane at z=0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

RAY_EPS = 1e-6


@dataclass
class Prim:
    """One renderable/collidable solid."""

    name: str
    kind: str  # "box" | "sphere"
    center: np.ndarray  # (3,)
    color: np.ndarray  # (3,) in [0, 1]
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    half: np.ndarray | None = None  # box half-extents
    radius: float = 0.0  # sphere radius
    friction: str = "default"

    def copy(self) -> "Prim":
        return replace(
            self,
            center=self.center.copy(),
            color=self.color.copy(),
            rotation=self.rotation.copy(),
            half=None if self.half is None else self.half.copy(),
        )


def box(name, center, half, color, rotation=None, friction="default") -> Prim:
    return Prim(
        name=name,
        kind="box",
        center=np.asarray(center, dtype=float),
        half=np.asarray(half, dtype=float),
        color=np.asarray(color, dtype=float),
        rotation=np.eye(3) if rotation is None else np.asarray(rotation, dtype=float),
        friction=friction,
    )


def sphere(name, center, radius, color, friction="default") -> Prim:
    return Prim(
        name=name,
        kind="sphere",
        center=np.asarray(center, dtype=float),
        radius=float(radius),
        color=np.asarray(color, dtype=float),
        friction=friction,
    )


def segment_box(name, p0, p1, width, color) -> Prim:
    """Square-section box spanning p0 to p1 (used for finger segments)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    if length < 1e-9:
        return box(name, p0, (width, width, width), color)
    x = axis / length
    ref = np.array([0.0, 0.0, 1.0]) if abs(x[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    y = np.cross(ref, x)
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    R = np.column_stack([x, y, z])
    return box(name, (p0 + p1) / 2, (length / 2, width, width), color, rotation=R)


# ---------------------------------------------------------------------------
# cameras


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. +z is the optical axis, +x image-right, +y image-down."""

    position: np.ndarray
    rotation: np.ndarray
    hfov_deg: float
    width: int
    height: int

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)

    def ray_directions(self) -> np.ndarray:
        """(H*W, 3) unit ray directions in the world frame, row-major pixels."""
        f = self.focal_px
        u = (np.arange(self.width) + 0.5) - self.width / 2.0
        v = (np.arange(self.height) + 0.5) - self.height / 2.0
        uu, vv = np.meshgrid(u, v)
        dirs = np.stack([uu / f, vv / f, np.ones_like(uu)], axis=-1).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return dirs @ self.rotation.T


def look_at_camera(position, target, hfov_deg, width, height, up=(0.0, 0.0, 1.0)) -> Camera:
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    z = target - position
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    n = np.linalg.norm(x)
    if n < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = x / n
    y = np.cross(z, x)
    return Camera(position, np.column_stack([x, y, z]), hfov_deg, width, height)


# ---------------------------------------------------------------------------
# ray casting

LIGHT_DIR = np.array([0.35, -0.2, 0.91])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
BACKGROUND = np.array([0.30, 0.33, 0.38])
FLOOR_COLORS = (np.array([0.42, 0.40, 0.37]), np.array([0.50, 0.48, 0.45]))
FLOOR_CHECKER = 0.04  # meters per checker cell


def _ray_box(prim: Prim, origins, dirs):
    """t of entry hit per ray (inf when missed or origin inside)."""
    R = prim.rotation
    o = (origins - prim.center) @ R
    d = dirs @ R
    h = prim.half
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-h - o) * inv
        t2 = (h - o) * inv
    t_near_ax = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    t_far_ax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # parallel rays outside the slab never hit
    parallel_miss = (np.abs(d) < 1e-12) & (np.abs(o) > h)
    t_near_ax = np.where(parallel_miss, np.inf, t_near_ax)
    t_near = t_near_ax.max(axis=1)
    t_far = t_far_ax.min(axis=1)
    hit = (t_far >= t_near) & (t_near > RAY_EPS)
    axis = np.argmax(t_near_ax, axis=1)
    return np.where(hit, t_near, np.inf), axis, o, d


def _box_normals(prim: Prim, axis, o, d, mask):
    n_local = np.zeros((mask.sum(), 3))
    ax = axis[mask]
    sign = -np.sign(d[mask, ax])
    sign[sign == 0] = 1.0
    n_local[np.arange(n_local.shape[0]), ax] = sign
    return n_local @ prim.rotation.T


def _ray_sphere(prim: Prim, origins, dirs):
    oc = origins - prim.center
    b = np.einsum("ij,ij->i", oc, dirs)
    c = np.einsum("ij,ij->i", oc, oc) - prim.radius**2
    disc = b * b - c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = -b - sq
    return np.where(ok & (t > RAY_EPS), t, np.inf)


def render(prims: list[Prim], camera: Camera, exclude: set[str] | None = None,
           ground: bool = True) -> np.ndarray:
    """Nearest-hit ray cast of the scene, flat Lambert shading.

    Returns (H, W, 3) float32 in [0, 1]; rays that miss get the background
    color. Primitives named in ``exclude`` are skipped (used to keep a
    fingertip camera from rendering its own finger).
    """
    exclude = exclude or set()
    dirs = camera.ray_directions()
    n = dirs.shape[0]
    origins = np.broadcast_to(camera.position, (n, 3))

    best_t = np.full(n, np.inf)
    winner = np.full(n, -1, dtype=np.int32)
    cache = []

    active = [p for p in prims if p.name not in exclude]
    for i, prim in enumerate(active):
        if prim.kind == "box":
            t, axis, o, d = _ray_box(prim, origins, dirs)
            cache.append((axis, o, d))
        else:
            t = _ray_sphere(prim, origins, dirs)
            cache.append(None)
        better = t < best_t
        best_t = np.where(better, t, best_t)
        winner[better] = i

    if ground:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_floor = -camera.position[2] / dz
        hit = (dz < -1e-12) & (t_floor > RAY_EPS) & (t_floor < best_t)
        best_t = np.where(hit, t_floor, best_t)
        winner[hit] = -2

    colors = np.broadcast_to(BACKGROUND, (n, 3)).copy()
    shade_floor = 0.55 + 0.45 * max(LIGHT_DIR[2], 0.0)
    if ground:
        fmask = winner == -2
        if fmask.any():
            pts = camera.position + dirs[fmask] * best_t[fmask, None]
            parity = (np.floor(pts[:, 0] / FLOOR_CHECKER) + np.floor(pts[:, 1] / FLOOR_CHECKER)).astype(int) & 1
            colors[fmask] = np.where(parity[:, None] == 0, FLOOR_COLORS[0], FLOOR_COLORS[1]) * shade_floor

    for i, prim in enumerate(active):
        mask = winner == i
        if not mask.any():
            continue
        if prim.kind == "box":
            axis, o, d = cache[i]
            normals = _box_normals(prim, axis, o, d, mask)
        else:
            pts = camera.position + dirs[mask] * best_t[mask, None]
            normals = (pts - prim.center) / prim.radius
        shade = 0.55 + 0.45 * np.clip(normals @ LIGHT_DIR, 0.0, None)
        colors[mask] = prim.color * shade[:, None]

    img = colors.reshape(camera.height, camera.width, 3)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# contact queries


@dataclass(frozen=True)
class Contact:
    prim_name: str
    penetration: float
    normal: np.ndarray  # points out of the solid, toward the probe sphere
    point: np.ndarray


def sphere_prim_contact(prim: Prim, center: np.ndarray, radius: float) -> Contact | None:
    """Contact between a probe sphere and a solid, None when separated."""
    if prim.kind == "sphere":
        d = center - prim.center
        dist = float(np.linalg.norm(d))
        pen = prim.radius + radius - dist
        if pen <= 0:
            return None
        normal = d / dist if dist > 1e-12 else np.array([0.0, 0.0, 1.0])
        return Contact(prim.name, pen, normal, prim.center + normal * prim.radius)

    local = (center - prim.center) @ prim.rotation
    h = prim.half
    clamped = np.clip(local, -h, h)
    delta = local - clamped
    dist = float(np.linalg.norm(delta))
    if dist > 1e-12:
        pen = radius - dist
        if pen <= 0:
            return None
        n_local = delta / dist
    else:
        # sphere center inside the box: push out through the nearest face
        gaps = h - np.abs(local)
        ax = int(np.argmin(gaps))
        pen = radius + float(gaps[ax])
        n_local = np.zeros(3)
        n_local[ax] = math.copysign(1.0, local[ax]) if local[ax] != 0 else 1.0
        clamped = local.copy()
        clamped[ax] = math.copysign(h[ax], n_local[ax])
    normal = prim.rotation @ n_local
    point = prim.center + prim.rotation @ clamped
    return Contact(prim.name, float(pen), normal, point)


def point_in_aabb(point, center, half) -> bool:
    return bool((np.abs(np.asarray(point) - np.asarray(center)) <= np.asarray(half)).all())
