"""SE(2) navigation for the walking robot: goal pose, RRT-Connect planning
with an elliptic footprint, and a kinematic waypoint follower.

All collision queries are batched over poses, so a whole densified edge
is checked with a handful of numpy operations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .geometry import Obb, PlanarPose, wrap_angle

__all__ = ["Arena", "Disc", "Footprint", "GoalOutsideArena", "NavParams", "NoPlan", "Polygon",
           "Se2Trajectory", "compute_goal", "default_arena", "follow_waypoints", "footprint_collides",
           "footprint_collides_batch", "plan_se2"]


class NoPlan(RuntimeError):
    pass


class GoalOutsideArena(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Polygon:
    """Convex polygon; vertices are stored counter-clockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v) < 3:
            raise ValueError("a polygon needs at least three vertices")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if abs(area) < 1e-12:
            raise ValueError("degenerate polygon")
        if area < 0:
            v = v[::-1].copy()
        e = np.roll(v, -1, axis=0) - v
        turn = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.any(turn < -1e-12):
            raise ValueError("polygon must be convex")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "next_index", np.roll(np.arange(len(v)), -1))

    @classmethod
    def rectangle(cls, xmin: float, ymin: float, xmax: float, ymax: float) -> Polygon:
        return cls(np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]]))

    @classmethod
    def from_obb(cls, obb: Obb) -> Polygon:
        return cls(obb.corners_xy())

    def contains(self, xy) -> bool:
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        r = np.asarray(xy, float)[:2] - v
        return bool(np.all(e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0] >= 0))

    def bounds(self) -> tuple:
        return (*self.vertices.min(axis=0), *self.vertices.max(axis=0))

    def to_dict(self) -> dict:
        return {"type": "polygon", "vertices": self.vertices.tolist()}


@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("disc radius must be positive")

    def bounds(self) -> tuple:
        x, y = self.center
        r = self.radius
        return (x - r, y - r, x + r, y + r)

    def to_dict(self) -> dict:
        return {"type": "disc", "center": list(self.center), "radius": self.radius}


def _obstacle_from_dict(d: dict):
    if d["type"] == "disc":
        return Disc(tuple(d["center"]), d["radius"])
    return Polygon(np.asarray(d["vertices"], float))


@dataclass(frozen=True)
class Arena:
    """Rectangular room with static obstacles and an optional chair footprint."""

    bounds: tuple  # (xmin, ymin, xmax, ymax)
    obstacles: tuple = ()
    chair: Polygon | None = None

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("arena bounds are degenerate")
        for ob in self.all_obstacles:
            bx0, by0, bx1, by1 = ob.bounds()
            if bx1 < xmin or bx0 > xmax or by1 < ymin or by0 > ymax:
                raise ValueError("obstacle lies outside the arena bounds")

    @property
    def all_obstacles(self) -> tuple:
        return self.obstacles + ((self.chair,) if self.chair is not None else ())

    def with_chair(self, obb: Obb | Polygon | None) -> Arena:
        chair = Polygon.from_obb(obb) if isinstance(obb, Obb) else obb
        return replace(self, chair=chair)

    def to_dict(self) -> dict:
        return {"bounds": list(self.bounds), "obstacles": [o.to_dict() for o in self.obstacles],
                "chair": self.chair.to_dict() if self.chair is not None else None}

    @classmethod
    def from_dict(cls, d: dict) -> Arena:
        chair = _obstacle_from_dict(d["chair"]) if d.get("chair") else None
        return cls(tuple(d["bounds"]), tuple(_obstacle_from_dict(o) for o in d.get("obstacles", ())), chair)


def default_arena() -> Arena:
    """Tabletop-scale room with the arm base at the origin (a 0.85 m x 0.7 m block)."""
    return Arena((-0.4, -0.6, 2.0, 0.6), (Polygon.rectangle(-0.4, -0.35, 0.45, 0.35),))


@dataclass(frozen=True)
class Footprint:
    """Ellipse with semi-axis ``a`` along the heading and ``b`` across it."""

    a: float = 0.1
    b: float = 0.15

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("footprint semi-axes must be positive")

    def inflated(self, margin: float) -> Footprint:
        """Scaled copy containing every point within ``margin`` of this ellipse."""
        if margin <= 0:
            return self
        s = 1.0 + margin / min(self.a, self.b)
        return Footprint(self.a * s, self.b * s)


@dataclass(frozen=True)
class NavParams:
    l_init: float = 0.25
    d_max_reach: float = 0.35
    metric_weight: float = 0.3      # m per rad of heading
    budget: int = 20000             # samples
    step: float = 0.15              # extension length in the metric
    resolution_xy: float = 0.01
    resolution_heading: float = math.radians(2.0)
    margin: float = 0.01            # planning clearance on top of the footprint
    shortcut_attempts: int = 200
    waypoint_step: float = 0.1      # metric spacing of returned waypoints
    advance_step: float = 0.005

    def to_dict(self) -> dict:
        return asdict(self)


# -- collision --------------------------------------------------------------

def _ellipse_frame(poses: np.ndarray, pts: np.ndarray, fp: Footprint) -> np.ndarray:
    """Points (k, 2) expressed in each pose's ellipse frame scaled to the unit circle: (N, k, 2)."""
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    d = pts[None, :, :] - poses[:, None, :2]
    u = (c[:, None] * d[..., 0] + s[:, None] * d[..., 1]) / fp.a
    v = (-s[:, None] * d[..., 0] + c[:, None] * d[..., 1]) / fp.b
    return np.stack([u, v], axis=-1)


def _polygon_hits(poses, poly: Polygon, fp: Footprint) -> np.ndarray:
    # an affine map sends the ellipse to the unit circle and keeps the polygon convex
    P = _ellipse_frame(poses, poly.vertices, fp)
    E = P[:, poly.next_index] - P
    inside = np.all(E[..., 0] * (-P[..., 1]) - E[..., 1] * (-P[..., 0]) >= 0, axis=1)
    t = np.clip(-np.einsum("nkd,nkd->nk", P, E) / np.maximum(np.einsum("nkd,nkd->nk", E, E), 1e-300), 0, 1)
    closest = P + t[..., None] * E
    dmin = np.sqrt(np.einsum("nkd,nkd->nk", closest, closest)).min(axis=1)
    return inside | (dmin <= 1.0)


def _ellipse_distance(q: np.ndarray, a: float, b: float) -> np.ndarray:
    """Distance from points ``q`` (N, 2), given in the ellipse frame, to the ellipse boundary."""
    n = 64
    ts = np.linspace(0, 2 * np.pi, n, endpoint=False)
    bx, by = a * np.cos(ts), b * np.sin(ts)
    d2 = (q[:, 0:1] - bx) ** 2 + (q[:, 1:2] - by) ** 2
    t = ts[np.argmin(d2, axis=1)]
    for _ in range(8):
        ct, st = np.cos(t), np.sin(t)
        ex, ey = a * ct - q[:, 0], b * st - q[:, 1]
        g = -ex * a * st + ey * b * ct
        h = (a * st) ** 2 + (b * ct) ** 2 - ex * a * ct - ey * b * st
        t = t - g / np.where(np.abs(h) > 1e-12, h, 1e-12)
    return np.hypot(a * np.cos(t) - q[:, 0], b * np.sin(t) - q[:, 1])


def _disc_hits(poses, disc: Disc, fp: Footprint) -> np.ndarray:
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    d = np.asarray(disc.center, float)[None, :] - poses[:, :2]
    q = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=1)
    inside = (q[:, 0] / fp.a) ** 2 + (q[:, 1] / fp.b) ** 2 <= 1.0
    return inside | (_ellipse_distance(q, fp.a, fp.b) <= disc.radius)


def _out_of_bounds(poses, bounds, fp: Footprint) -> np.ndarray:
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    hx = np.sqrt((fp.a * c) ** 2 + (fp.b * s) ** 2)
    hy = np.sqrt((fp.a * s) ** 2 + (fp.b * c) ** 2)
    xmin, ymin, xmax, ymax = bounds
    return ((poses[:, 0] - hx < xmin) | (poses[:, 0] + hx > xmax)
            | (poses[:, 1] - hy < ymin) | (poses[:, 1] + hy > ymax))


def _obstacle_hits(poses, arena: Arena, fp: Footprint) -> np.ndarray:
    hit = np.zeros(len(poses), dtype=bool)
    for ob in arena.all_obstacles:
        hit |= _disc_hits(poses, ob, fp) if isinstance(ob, Disc) else _polygon_hits(poses, ob, fp)
    return hit


def footprint_collides_batch(poses, arena: Arena, footprint: Footprint) -> np.ndarray:
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    return _out_of_bounds(poses, arena.bounds, footprint) | _obstacle_hits(poses, arena, footprint)


def footprint_collides(pose: PlanarPose, arena: Arena, footprint: Footprint) -> bool:
    """True iff the footprint at ``pose`` touches an obstacle or leaves the arena."""
    arr = pose.as_array() if isinstance(pose, PlanarPose) else np.asarray(pose, float)
    return bool(footprint_collides_batch(arr[None, :], arena, footprint)[0])


# -- goal -------------------------------------------------------------------

def compute_goal(g, arena: Arena, footprint: Footprint, params: NavParams = NavParams(),
                 max_advance: float = 5.0) -> tuple[PlanarPose, np.ndarray]:
    """Goal pose facing the sitter, and the (possibly pulled-in) bear position.

    The goal starts ``l_init`` along the sitting direction from ``p`` and is
    pushed further out along that ray until the inflated footprint is free.
    """
    p = np.asarray(g.p, dtype=float)
    d = np.array([math.cos(g.gamma), math.sin(g.gamma)])
    heading = float(wrap_angle(g.gamma + math.pi))
    fp = footprint.inflated(params.margin)
    n = int(math.ceil(max_advance / params.advance_step)) + 1
    dist = params.l_init + params.advance_step * np.arange(n)
    cand = np.column_stack([p[0] + dist * d[0], p[1] + dist * d[1], np.full(n, heading)])
    out = _out_of_bounds(cand, arena.bounds, fp)
    free = ~out & ~_obstacle_hits(cand, arena, fp)
    if not free.any():
        raise GoalOutsideArena("no collision-free goal on the approach ray")
    k = int(np.argmax(free))
    if out[:k].any():
        raise GoalOutsideArena("the approach ray leaves the arena before it clears the chair")
    s_goal = PlanarPose(float(cand[k, 0]), float(cand[k, 1]), heading)
    adjusted = p.copy()
    excess = dist[k] - params.d_max_reach
    if excess > 0:
        adjusted[:2] += excess * d
    return s_goal, adjusted


# -- planning ---------------------------------------------------------------

@dataclass(frozen=True)
class Se2Trajectory:
    waypoints: tuple
    resolution_xy: float = 0.01
    resolution_heading: float = math.radians(2.0)

    def as_array(self) -> np.ndarray:
        return np.array([w.as_array() for w in self.waypoints]).reshape(-1, 3)

    def densified(self, res_xy: float | None = None, res_heading: float | None = None) -> np.ndarray:
        arr = self.as_array()
        if len(arr) < 2:
            return arr
        return _densify_path(arr, res_xy or self.resolution_xy, res_heading or self.resolution_heading)

    def length(self, weight: float = 0.0) -> float:
        arr = self.as_array()
        if len(arr) < 2:
            return 0.0
        return float(sum(_metric(arr[i], arr[i + 1:i + 2], weight)[0] for i in range(len(arr) - 1)))

    def to_dict(self) -> dict:
        return {"waypoints": [w.to_list() for w in self.waypoints], "resolution_xy": self.resolution_xy,
                "resolution_heading": self.resolution_heading}

    @classmethod
    def from_dict(cls, d: dict) -> Se2Trajectory:
        return cls(tuple(PlanarPose(*w) for w in d["waypoints"]), d["resolution_xy"], d["resolution_heading"])


_TWO_PI = 2.0 * math.pi


def _wrap(a):
    # hot-loop wrap to [-pi, pi); ``wrap_angle`` is the canonical (-pi, pi] version
    return (a + math.pi) % _TWO_PI - math.pi


def _metric(q: np.ndarray, Q: np.ndarray, w: float) -> np.ndarray:
    dxy = np.hypot(Q[:, 0] - q[0], Q[:, 1] - q[1])
    return dxy + w * np.abs(_wrap(Q[:, 2] - q[2]))


def _interp(q0: np.ndarray, q1: np.ndarray, ts: np.ndarray) -> np.ndarray:
    dth = _wrap(q1[2] - q0[2])
    out = q0[None, :] + ts[:, None] * np.array([q1[0] - q0[0], q1[1] - q0[1], dth])[None, :]
    out[:, 2] = _wrap(out[:, 2])
    return out


def _n_segments(q0, q1, res_xy, res_th) -> int:
    dxy = math.hypot(q1[0] - q0[0], q1[1] - q0[1])
    dth = abs(_wrap(q1[2] - q0[2]))
    return max(1, int(math.ceil(max(dxy / res_xy, dth / res_th) - 1e-12)))


def _densify_path(path: np.ndarray, res_xy: float, res_th: float) -> np.ndarray:
    pieces = []
    for q0, q1 in zip(path[:-1], path[1:]):
        n = _n_segments(q0, q1, res_xy, res_th)
        pieces.append(_interp(q0, q1, np.arange(n) / n))
    pieces.append(path[-1:])
    return np.vstack(pieces)


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        self.nodes = np.empty((capacity + 1, 3))
        self.parent = np.empty(capacity + 1, dtype=int)
        self.nodes[0] = root
        self.parent[0] = -1
        self.size = 1

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.size == len(self.nodes):
            self.nodes = np.vstack([self.nodes, np.empty_like(self.nodes)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.nodes[self.size] = q
        self.parent[self.size] = parent
        self.size += 1
        return self.size - 1

    def nearest(self, q: np.ndarray, w: float) -> int:
        return int(np.argmin(_metric(q, self.nodes[:self.size], w)))

    def path_to_root(self, i: int) -> list[np.ndarray]:
        out = []
        while i >= 0:
            out.append(self.nodes[i].copy())
            i = self.parent[i]
        return out


class _Planner:
    def __init__(self, arena: Arena, footprint: Footprint, params: NavParams, rng: np.random.Generator):
        self.arena, self.params, self.rng = arena, params, rng
        self.fp = footprint.inflated(params.margin)

    def valid(self, q: np.ndarray) -> bool:
        return not footprint_collides_batch(q[None, :], self.arena, self.fp)[0]

    def edge_valid(self, q0: np.ndarray, q1: np.ndarray) -> bool:
        p = self.params
        n = _n_segments(q0, q1, p.resolution_xy, p.resolution_heading)
        pts = _interp(q0, q1, np.arange(1, n + 1) / n)
        return not footprint_collides_batch(pts, self.arena, self.fp).any()

    def steer(self, q_from: np.ndarray, q_to: np.ndarray) -> tuple[np.ndarray, bool]:
        d = _metric(q_from, q_to[None, :], self.params.metric_weight)[0]
        if d <= self.params.step:
            return q_to.copy(), True
        return _interp(q_from, q_to, np.array([self.params.step / d]))[0], False

    def extend(self, tree: _Tree, q: np.ndarray) -> tuple[str, int]:
        i = tree.nearest(q, self.params.metric_weight)
        q_new, reached = self.steer(tree.nodes[i], q)
        if not self.edge_valid(tree.nodes[i], q_new):
            return "trapped", -1
        j = tree.add(q_new, i)
        return ("reached" if reached else "advanced"), j

    def connect(self, tree: _Tree, q: np.ndarray) -> tuple[str, int]:
        while True:
            status, j = self.extend(tree, q)
            if status != "advanced":
                return status, j

    def sample(self) -> np.ndarray:
        xmin, ymin, xmax, ymax = self.arena.bounds
        return np.array([self.rng.uniform(xmin, xmax), self.rng.uniform(ymin, ymax),
                         self.rng.uniform(-math.pi, math.pi)])

    def plan(self, start: np.ndarray, goal: np.ndarray) -> np.ndarray:
        a, b = _Tree(start, 1024), _Tree(goal, 1024)
        a_is_start = True
        if self.edge_valid(start, goal):
            return np.array([start, goal])
        for _ in range(self.params.budget):
            q = self.sample()
            status, j = self.extend(a, q)
            if status != "trapped":
                status2, k = self.connect(b, a.nodes[j])
                if status2 == "reached":
                    pa, pb = a.path_to_root(j)[::-1], b.path_to_root(k)
                    path = pa + pb[1:]
                    return np.array(path if a_is_start else path[::-1])
            a, b = b, a
            a_is_start = not a_is_start
        raise NoPlan(f"no connection within {self.params.budget} samples")

    def shortcut(self, path: np.ndarray) -> np.ndarray:
        path = [q for q in path]
        for _ in range(self.params.shortcut_attempts):
            if len(path) < 3:
                break
            i, j = sorted(self.rng.choice(len(path), size=2, replace=False))
            if j - i < 2:
                continue
            if self.edge_valid(path[i], path[j]):
                path = path[:i + 1] + path[j:]
        return np.array(path)

    def resample(self, path: np.ndarray) -> np.ndarray:
        out = [path[0]]
        w, step = self.params.metric_weight, self.params.waypoint_step
        for q0, q1 in zip(path[:-1], path[1:]):
            d = _metric(q0, q1[None, :], w)[0]
            n = max(1, int(math.ceil(d / step - 1e-12)))
            out.extend(_interp(q0, q1, np.arange(1, n + 1) / n))
        return np.array(out)


def plan_se2(start: PlanarPose, s_goal: PlanarPose, arena: Arena, footprint: Footprint, seed: int = 0,
             params: NavParams = NavParams()) -> Se2Trajectory:
    """RRT-Connect from ``start`` to ``s_goal``, shortcut and resampled.

    Every edge is validated at ``params.resolution_*`` with the footprint
    inflated by ``params.margin``; that clearance makes the path collision
    free for the true footprint at half the validation resolution.
    """
    rng = np.random.default_rng(seed)
    planner = _Planner(arena, footprint, params, rng)
    q0, q1 = start.as_array(), s_goal.as_array()
    if not planner.valid(q0):
        raise NoPlan("start pose is in collision")
    if not planner.valid(q1):
        raise NoPlan("goal pose is in collision")
    if np.allclose(q0, q1):
        return Se2Trajectory((start,), params.resolution_xy, params.resolution_heading)
    path = planner.resample(planner.shortcut(planner.plan(q0, q1)))
    path[0], path[-1] = q0, q1
    wps = tuple(PlanarPose.from_array(q) for q in path)
    return Se2Trajectory(wps, params.resolution_xy, params.resolution_heading)


def follow_waypoints(traj: Se2Trajectory, noise: tuple[float, float] | None = None,
                     seed: int = 0) -> list[PlanarPose]:
    """Kinematic walk through the waypoints.

    ``noise = (position, yaw)`` adds a uniform error bounded by those values
    to every reached waypoint, the last one included, to mimic walking drift.
    """
    if noise is None or (noise[0] <= 0 and noise[1] <= 0):
        return list(traj.waypoints)
    rng = np.random.default_rng(seed)
    out = []
    for w in traj.waypoints:
        r = noise[0] * math.sqrt(rng.uniform())
        ang = rng.uniform(-math.pi, math.pi)
        out.append(PlanarPose(w.x + r * math.cos(ang), w.y + r * math.sin(ang),
                              float(wrap_angle(w.heading + rng.uniform(-noise[1], noise[1])))))
    return out
