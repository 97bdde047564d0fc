"""Meshes, rigid transforms and the upright oriented bounding box."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

log = logging.getLogger(__name__)

__all__ = [
    "EmptyMesh",
    "Mesh",
    "Obb",
    "PlanarPose",
    "RigidTransform",
    "compute_obb",
    "footprint_area",
    "load_mesh",
    "obb_alignment_transform",
    "rot_z",
    "save_mesh",
    "transform_apply",
    "inverse_apply",
    "wrap_angle",
]

DEFAULT_DENSITY = 500.0  # kg/m^3, softwood
DEFAULT_FRICTION = 0.8


class EmptyMesh(ValueError):
    pass


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    Q = u @ vt
    if np.linalg.det(Q) < 0:
        u[:, -1] *= -1
        Q = u @ vt
    return Q


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3) acting as ``g . x = R x + t``.

    Composition re-projects the rotation onto SO(3) whenever the
    orthonormality error exceeds ``1e-12`` so long chains of products do
    not drift.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(rot_z(yaw), translation)

    @classmethod
    def yaw_about(cls, yaw: float, center) -> RigidTransform:
        """Rotation by ``yaw`` about the vertical axis through ``center``."""
        c = np.array([center[0], center[1], 0.0])
        R = rot_z(yaw)
        return cls(R, c - R @ c)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        R = self.rotation @ other.rotation
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
            R = _orthonormalize(R)
        return RigidTransform(R, self.rotation @ other.translation + self.translation)

    def inverse(self) -> RigidTransform:
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse_apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - self.translation) @ self.rotation

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> RigidTransform:
        return cls(d["rotation"], d["translation"])


def transform_apply(g: RigidTransform, p) -> np.ndarray:
    return g.apply(p)


def inverse_apply(g: RigidTransform, p) -> np.ndarray:
    return g.inverse_apply(p)


@dataclass(frozen=True)
class PlanarPose:
    x: float
    y: float
    heading: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading])

    @classmethod
    def from_array(cls, a) -> PlanarPose:
        return cls(float(a[0]), float(a[1]), float(wrap_angle(a[2])))

    def to_transform(self) -> RigidTransform:
        return RigidTransform.from_yaw(self.heading, (self.x, self.y, 0.0))

    def transformed(self, g: RigidTransform) -> PlanarPose:
        """Pose after the world is moved by the yaw-only transform ``g``."""
        x, y, _ = g.apply([self.x, self.y, 0.0])
        return PlanarPose(float(x), float(y), float(wrap_angle(self.heading + g.yaw)))

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.heading]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle surface plus the rigid-body attributes used by the simulator.

    ``com`` and ``inertia`` are expressed in the mesh frame (inertia about
    the center of mass).
    """

    vertices: np.ndarray
    faces: np.ndarray
    mass: float = 1.0
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia: np.ndarray = field(default_factory=lambda: np.eye(3) * 1e-2)
    friction: float = DEFAULT_FRICTION

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        for name, arr in (("vertices", v), ("faces", f)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        com = np.array(self.com, dtype=float).reshape(3)
        inertia = np.array(self.inertia, dtype=float).reshape(3, 3)
        com.setflags(write=False)
        inertia.setflags(write=False)
        object.__setattr__(self, "com", com)
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "friction", float(self.friction))

    @classmethod
    def from_geometry(cls, vertices, faces, density: float = DEFAULT_DENSITY,
                      friction: float = DEFAULT_FRICTION) -> Mesh:
        """Build a mesh and derive mass properties from its closed shells."""
        mass, com, inertia = mass_properties(vertices, faces, density)
        return cls(vertices, faces, mass, com, inertia, friction)

    def transformed(self, g: RigidTransform) -> Mesh:
        R = g.rotation
        return Mesh(g.apply(self.vertices), self.faces, self.mass, g.apply(self.com),
                    R @ self.inertia @ R.T, self.friction)

    @property
    def bounds(self) -> np.ndarray:
        if len(self.vertices) == 0:
            raise EmptyMesh("mesh has no vertices")
        return np.array([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        f = self.faces
        if len(f) == 0:
            return False
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def attributes(self) -> dict:
        return {"mass": self.mass, "com": self.com.tolist(),
                "inertia": self.inertia.tolist(), "friction": self.friction}

    def with_attributes(self, attrs: dict) -> Mesh:
        return Mesh(self.vertices, self.faces, attrs.get("mass", self.mass),
                    attrs.get("com", self.com), attrs.get("inertia", self.inertia),
                    attrs.get("friction", self.friction))


def mass_properties(vertices, faces, density=DEFAULT_DENSITY):
    """Mass, center of mass and inertia (about the COM) of a closed triangle soup.

    Uses the signed-tetrahedron decomposition; each connected shell is
    oriented outward independently so inconsistently wound inputs still
    give positive volume.
    """
    import trimesh

    tm = trimesh.Trimesh(vertices=np.asarray(vertices, float), faces=np.asarray(faces),
                         process=False)
    shells = tm.split(only_watertight=False) if len(tm.faces) else []
    total_m, first, second = 0.0, np.zeros(3), np.zeros((3, 3))
    for s in shells:
        s.fix_normals()
        vol = s.volume
        if not np.isfinite(vol) or abs(vol) < 1e-12:
            continue
        s.density = density
        if vol < 0:
            s.invert()
        m = s.mass
        c = s.center_mass
        I = s.moment_inertia  # about own com
        total_m += m
        first += m * c
        second += I + m * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
    if total_m <= 0:
        # open surface: fall back to a thin hull box estimate
        v = np.asarray(vertices, float)
        ext = np.maximum(np.ptp(v, axis=0), 1e-3)
        total_m = density * float(np.prod(ext)) * 0.1
        com = v.mean(axis=0)
        I = total_m / 12.0 * np.diag([ext[1] ** 2 + ext[2] ** 2, ext[0] ** 2 + ext[2] ** 2,
                                      ext[0] ** 2 + ext[1] ** 2])
        return total_m, com, I
    com = first / total_m
    I = second - total_m * (np.dot(com, com) * np.eye(3) - np.outer(com, com))
    return total_m, com, 0.5 * (I + I.T)


def load_mesh(path, attributes: str | Path | None = None, density: float = DEFAULT_DENSITY) -> Mesh:
    """Read an OBJ or STL file.

    Physical attributes come from the sidecar file when given (JSON/YAML
    with ``mass``, ``com``, ``inertia``, ``friction``); missing entries
    are derived from the geometry.
    """
    import trimesh

    tm = trimesh.load(str(path), force="mesh", process=False)
    tm.merge_vertices()  # STL stores every triangle with its own corners
    v = np.asarray(tm.vertices, dtype=float)
    f = np.asarray(tm.faces, dtype=np.int64)
    if len(v) == 0:
        raise EmptyMesh(f"{path}: no vertices")
    f = _drop_degenerate(v, f)
    mesh = Mesh.from_geometry(v, f, density=density)
    if attributes is not None:
        mesh = mesh.with_attributes(load_attributes(attributes))
    return mesh


def _drop_degenerate(v, f):
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    bad = area2 <= 1e-14
    if bad.any():
        log.warning("dropping %d degenerate triangles", int(bad.sum()))
    return f[~bad]


def load_attributes(path) -> dict:
    import yaml

    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def save_mesh(mesh: Mesh, path, attributes_path=None) -> None:
    import trimesh

    trimesh.Trimesh(vertices=mesh.vertices, faces=mesh.faces, process=False).export(str(path))
    if attributes_path is not None:
        Path(attributes_path).write_text(json.dumps(mesh.attributes(), indent=2))


@dataclass(frozen=True, eq=False)
class Obb:
    """Upright (z-aligned) bounding box; ``yaw`` is the heading of the box x axis."""

    center: np.ndarray
    yaw: float
    half_extents: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(3)
        e = np.array(self.half_extents, dtype=float).reshape(3)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", e)
        object.__setattr__(self, "yaw", float(self.yaw))

    @property
    def top(self) -> float:
        return float(self.center[2] + self.half_extents[2])

    @property
    def bottom(self) -> float:
        return float(self.center[2] - self.half_extents[2])

    def footprint_area(self) -> float:
        return float(4.0 * self.half_extents[0] * self.half_extents[1])

    def corners_xy(self) -> np.ndarray:
        ex, ey = self.half_extents[:2]
        local = np.array([[ex, ey], [-ex, ey], [-ex, -ey], [ex, -ey]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        R = np.array([[c, -s], [s, c]])
        return local @ R.T + self.center[:2]

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        p = np.asarray(points, float) - self.center
        local = p @ rot_z(self.yaw)
        return np.all(np.abs(local) <= self.half_extents + tol, axis=-1)

    def transformed(self, g: RigidTransform) -> Obb:
        """Box after a yaw-plus-translation transform of the world."""
        return Obb(g.apply(self.center), self.yaw + g.yaw, self.half_extents)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "yaw": self.yaw,
                "half_extents": self.half_extents.tolist()}


def footprint_area(xy: np.ndarray, yaw: float) -> float:
    """Area of the axis-aligned bounding rectangle of ``xy`` in a frame rotated by ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    u = xy @ np.array([c, s])
    w = xy @ np.array([-s, c])
    return float(np.ptp(u) * np.ptp(w))


def _hull_xy(xy: np.ndarray) -> np.ndarray:
    try:
        hull = ConvexHull(xy)
        return xy[hull.vertices]
    except (QhullError, ValueError):
        return xy


def compute_obb(mesh: Mesh | np.ndarray) -> Obb:
    """Minimum-footprint box with vertical z axis.

    The optimal rectangle has a side collinear with an edge of the convex
    hull of the xy projection, so every hull edge direction is tried.
    The returned yaw is normalized to ``[0, pi)`` with the box x axis along
    the longer footprint side; for square footprints the smallest
    non-negative yaw is used.
    """
    v = mesh.vertices if isinstance(mesh, Mesh) else np.asarray(mesh, float)
    if len(v) == 0:
        raise EmptyMesh("mesh has no vertices")
    xy = v[:, :2]
    hull = _hull_xy(xy)
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    angles = np.mod(angles[np.linalg.norm(edges, axis=1) > 1e-12], np.pi / 2)
    if len(angles) == 0:
        angles = np.array([0.0])
    c, s = np.cos(angles), np.sin(angles)
    u = hull @ np.stack([c, s])  # (h, k)
    w = hull @ np.stack([-s, c])
    areas = np.ptp(u, axis=0) * np.ptp(w, axis=0)
    best = areas.min()
    # among (near) ties keep the smallest yaw so the choice is reproducible
    cand = np.flatnonzero(areas <= best * (1 + 1e-12) + 1e-15)
    k = cand[np.argmin(angles[cand])]
    yaw = float(angles[k])
    umin, umax = u[:, k].min(), u[:, k].max()
    wmin, wmax = w[:, k].min(), w[:, k].max()
    ex, ey = 0.5 * (umax - umin), 0.5 * (wmax - wmin)
    cu, cw = 0.5 * (umax + umin), 0.5 * (wmax + wmin)
    scale = max(ex, ey, 1e-12)
    if ey > ex + 1e-9 * scale:
        yaw += np.pi / 2
        ex, ey = ey, ex
    yaw = float(np.mod(yaw, np.pi))
    if yaw >= np.pi - 1e-12:
        yaw = 0.0
    cyaw, syaw = math.cos(angles[k]), math.sin(angles[k])
    cx = cu * cyaw - cw * syaw
    cy = cu * syaw + cw * cyaw
    zmin, zmax = v[:, 2].min(), v[:, 2].max()
    half = np.maximum([ex, ey, 0.5 * (zmax - zmin)], 1e-9)
    return Obb(np.array([cx, cy, 0.5 * (zmin + zmax)]), yaw, half)


def obb_alignment_transform(obb: Obb) -> RigidTransform:
    """Yaw-plus-horizontal-translation moving the box onto the world axes.

    The box center lands on the z axis; heights are untouched.
    """
    R = rot_z(-obb.yaw)
    c = np.array([obb.center[0], obb.center[1], 0.0])
    return RigidTransform(R, -R @ c)
