"""Procedural chairs built from closed box shells.

Every generator works in a canonical frame: ground at z = 0, the seat
faces +x (a sitter looks towards +x) and any backrest sits at -x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Mesh, RigidTransform, rot_z

__all__ = ["ChairGenParams", "DegenerateParams", "GeneratedChair", "SeatFrame", "box_mesh",
           "generate_chair", "VARIANTS"]

VARIANTS = ("standard", "stool-no-back", "step-stool-narrow-seat", "improvised-stack")
LEG_STYLES = ("four-legs", "side-panels", "solid")


class DegenerateParams(ValueError):
    pass


@dataclass(frozen=True)
class ChairGenParams:
    variant: str = "standard"
    seat_width: tuple = (0.28, 0.38)
    seat_depth: tuple = (0.26, 0.32)
    seat_height: tuple = (0.22, 0.30)
    backrest_height: tuple = (0.22, 0.32)
    backrest_angle: tuple = (0.0, math.radians(14.0))
    leg_style: str | None = None  # random when None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DegenerateParams(f"unknown variant {self.variant!r}")
        if self.leg_style is not None and self.leg_style not in LEG_STYLES:
            raise DegenerateParams(f"unknown leg style {self.leg_style!r}")
        for name in ("seat_width", "seat_depth", "seat_height", "backrest_height"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise DegenerateParams(f"{name} must be a positive range, got {(lo, hi)}")
        lo, hi = self.backrest_angle
        if not 0 <= lo <= hi < math.pi / 3:
            raise DegenerateParams("backrest_angle must lie in [0, pi/3)")


@dataclass(frozen=True)
class SeatFrame:
    """Ground truth used by test oracles, in the chair's canonical frame."""

    center: tuple      # seat top center (x, y, z)
    normal_yaw: float  # outward seat normal (sitting direction)
    footprint: tuple   # seat polygon corners in xy
    has_back: bool

    def transformed(self, g: RigidTransform) -> SeatFrame:
        c = g.apply(np.asarray(self.center))
        fp = g.apply(np.c_[np.asarray(self.footprint), np.zeros(len(self.footprint))])[:, :2]
        return SeatFrame(tuple(c.tolist()), self.normal_yaw + g.yaw,
                         tuple(map(tuple, fp.tolist())), self.has_back)

    def contains_xy(self, xy, margin: float = 0.0) -> bool:
        poly = np.asarray(self.footprint)
        p = np.asarray(xy, float)[:2]
        edges = np.roll(poly, -1, axis=0) - poly
        rel = p - poly
        cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
        lens = np.linalg.norm(edges, axis=1)
        sign = 1.0 if cross.sum() >= 0 else -1.0
        return bool(np.all(sign * cross / lens >= margin))

    def to_dict(self) -> dict:
        return {"center": list(self.center), "normal_yaw": self.normal_yaw,
                "footprint": [list(c) for c in self.footprint], "has_back": self.has_back}


@dataclass(frozen=True)
class GeneratedChair:
    mesh: Mesh
    seat: SeatFrame
    params: ChairGenParams
    boxes: tuple = field(default=(), repr=False)


_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
    [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
])


def box_mesh(lo, hi, transform: RigidTransform | None = None):
    """Vertices and outward-wound faces of an axis-aligned box."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]], dtype=float)
    if transform is not None:
        v = transform.apply(v)
    return v, _BOX_FACES.copy()


class _Builder:
    def __init__(self):
        self.parts = []

    def box(self, lo, hi, transform=None):
        self.parts.append(box_mesh(lo, hi, transform))

    def mesh(self, density: float) -> Mesh:
        verts, faces, off = [], [], 0
        for v, f in self.parts:
            verts.append(v)
            faces.append(f + off)
            off += len(v)
        return Mesh.from_geometry(np.vstack(verts), np.vstack(faces), density=density)


def _u(rng, lohi):
    lo, hi = lohi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _legs(b: _Builder, style, x0, x1, hw, h, rng):
    t = 0.03
    if style == "four-legs":
        for x in (x0, x1 - t):
            for y in (-hw, hw - t):
                b.box((x, y, 0.0), (x + t, y + t, h))
    elif style == "side-panels":
        for y in (-hw, hw - 0.02):
            b.box((x0, y, 0.0), (x1, y + 0.02, h))
    else:
        inset = 0.02
        b.box((x0 + inset, -hw + inset, 0.0), (x1 - inset, hw - inset, h))


def generate_chair(params: ChairGenParams, density: float = 500.0) -> GeneratedChair:
    """Deterministic chair mesh for ``params.seed``."""
    rng = np.random.default_rng(params.seed)
    style = params.leg_style or LEG_STYLES[int(rng.integers(len(LEG_STYLES)))]
    w = _u(rng, params.seat_width)
    d = _u(rng, params.seat_depth)
    h = _u(rng, params.seat_height)
    back_h = _u(rng, params.backrest_height)
    tilt = _u(rng, params.backrest_angle)
    hw = w / 2
    b = _Builder()
    seat_t = 0.03
    has_back = True
    variant = params.variant
    if variant in ("standard", "stool-no-back"):
        x0, x1 = -d / 2, d / 2
        _legs(b, style, x0, x1, hw, h - seat_t, rng)
        b.box((x0, -hw, h - seat_t), (x1, hw, h))
        seat_x0 = x0
        if variant == "standard":
            bt = 0.03
            # backrest hinged at the rear seat edge, tilted back by ``tilt``
            hinge = RigidTransform(np.eye(3), (x0, 0.0, h))
            tilt_tf = hinge @ RigidTransform(_rot_y(-tilt)) @ RigidTransform(np.eye(3), (-x0, 0, -h))
            b.box((x0, -hw, h), (x0 + bt, hw, h + back_h), tilt_tf)
            seat_x0 = x0 + bt
        else:
            has_back = False
        footprint = ((x1, hw), (seat_x0, hw), (seat_x0, -hw), (x1, -hw))
        center = ((seat_x0 + x1) / 2, 0.0, h)
    elif variant == "step-stool-narrow-seat":
        top_d = float(rng.uniform(0.08, 0.11))
        low_d = float(rng.uniform(0.08, 0.11))
        x_back = -(top_d + low_d) / 2
        x_mid = x_back + top_d
        x_front = x_mid + low_d
        low_h = h * 0.5
        for y in (-hw, hw - 0.02):
            b.box((x_back, y, 0.0), (x_mid, y + 0.02, h - seat_t))
            b.box((x_mid, y, 0.0), (x_front, y + 0.02, low_h - seat_t))
        b.box((x_back, -hw, h - seat_t), (x_mid, hw, h))
        b.box((x_mid, -hw, low_h - seat_t), (x_front, hw, low_h))
        has_back = False
        footprint = ((x_mid, hw), (x_back, hw), (x_back, -hw), (x_mid, -hw))
        center = ((x_back + x_mid) / 2, 0.0, h)
    else:  # improvised-stack: storage box + books, a taller box as backrest
        base_h = h - 0.06
        x0, x1 = -d / 2, d / 2
        b.box((x0, -hw, 0.0), (x1, hw, base_h))
        z = base_h
        for k in range(2):
            shrink = 0.01 * (k + 1)
            jitter = float(rng.uniform(-0.008, 0.008))
            b.box((x0 + shrink + jitter, -hw + shrink, z), (x1 - shrink + jitter, hw - shrink, z + 0.03))
            z += 0.03
        bd = float(rng.uniform(0.08, 0.12))
        b.box((x0 - bd, -hw, 0.0), (x0, hw, h + back_h))
        seat_x0 = x0 + 0.02
        footprint = ((x1 - 0.02, hw - 0.02), (seat_x0, hw - 0.02), (seat_x0, -hw + 0.02),
                     (x1 - 0.02, -hw + 0.02))
        center = ((seat_x0 + x1) / 2, 0.0, z)
    mesh = b.mesh(density)
    seat = SeatFrame(center, 0.0, footprint, has_back)
    return GeneratedChair(mesh, seat, params, tuple(b.parts))


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def place(chair: GeneratedChair, x: float, y: float, yaw: float) -> GeneratedChair:
    """Chair moved so its canonical origin is at ``(x, y)`` with the seat facing ``yaw``."""
    g = RigidTransform(rot_z(yaw), (x, y, 0.0))
    return GeneratedChair(chair.mesh.transformed(g), chair.seat.transformed(g), chair.params,
                          chair.boxes)
