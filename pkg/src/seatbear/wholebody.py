"""Seating motion for the walking robot, reduced to a symmetric planar chain.

The chain lives in the robot's sagittal plane: ``x`` points along the
robot heading, ``z`` up, and the ankle joint sits ``base_height`` above
the ground at ``x = 0``. With all joints at zero the chain points straight
up; a positive joint angle tilts everything above it forward, so the
direction of link ``i`` is ``(sin phi_i, cos phi_i)`` with ``phi_i`` the
sum of the first ``i + 1`` joint angles.

The bear hangs from the wrist: its frame origin is ``bear_offset`` away
from the wrist (expressed in the bear frame) and its pitch is
``phi_last + hold_angle``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentModel
from .geometry import Mesh, Obb, PlanarPose, RigidTransform, rot_z
from .optim import augmented_lagrangian
from .sim import Configuration, SimParams, build_placement_scene, settle

__all__ = ["ChainState", "Infeasible", "JointLimit", "NoTrajectory", "PlanarChain", "SeatingProblem",
           "SeatingTrajectory", "bear_world_pose", "chair_obstacles", "default_chain", "execute_and_release",
           "expand_symmetric", "forward_kinematics", "goal_config", "plan_seating_trajectory",
           "segment_rect_distance"]

# solver-side slack so that the audited margins hold after an inexact solve
_SLACK = 5e-4
_SMOOTH = 1e-3


class JointLimit(ValueError):
    pass


class Infeasible(RuntimeError):
    pass


class NoTrajectory(RuntimeError):
    pass


@dataclass(frozen=True)
class PlanarChain:
    names: tuple
    lengths: tuple
    masses: tuple
    lower: tuple
    upper: tuple
    vel_limits: tuple
    q_start: tuple
    support: tuple = (-0.07, 0.15)     # heel and toe x
    base_height: float = 0.07
    torso_index: int = 2
    bear_offset: tuple = (0.05, -0.2)
    hold_angle: float = -math.pi / 2
    payload: float = 1.0

    def __post_init__(self):
        n = len(self.names)
        for name in ("lengths", "masses", "lower", "upper", "vel_limits", "q_start"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries")
        if min(self.lengths) <= 0:
            raise ValueError("link lengths must be positive")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("joint limits must be non-empty intervals")
        if not self.support[0] < self.support[1]:
            raise ValueError("support interval is degenerate")

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lower, self.upper]).astype(float)

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses) + self.payload)

    @property
    def support_center(self) -> float:
        return 0.5 * (self.support[0] + self.support[1])

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, float)
        return bool(np.all(q >= np.asarray(self.lower) - tol) and np.all(q <= np.asarray(self.upper) + tol))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> PlanarChain:
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def default_chain(**overrides) -> PlanarChain:
    """Small humanoid (about 1.6 times the size of a 58 cm robot); masses cover both body halves."""
    q_start = (0.0, 0.0, 0.0, 2.6, math.pi / 2 - 2.6)
    base = dict(
        names=("ankle", "knee", "hip", "shoulder", "elbow"),
        lengths=(0.165, 0.16, 0.30, 0.17, 0.18),
        masses=(0.6, 1.0, 4.5, 0.4, 0.35),
        lower=(-0.7, -2.1, -0.3, -0.3, -2.0),
        upper=(0.9, 0.0, 1.9, 3.0, 0.2),
        vel_limits=(1.0,) * 5,
        q_start=q_start,
    )
    base.update(overrides)
    return PlanarChain(**base)


# -- kinematics -------------------------------------------------------------

def _u(phi):
    return np.stack([np.sin(phi), np.cos(phi)], axis=-1)


def _du(phi):
    return np.stack([np.cos(phi), -np.sin(phi)], axis=-1)


def _rot(theta: float, v) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([v[0] * c + v[1] * s, -v[0] * s + v[1] * c])


def _drot(theta: float, v) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([-v[0] * s + v[1] * c, -v[0] * c - v[1] * s])


def _points_and_jac_batch(chain: PlanarChain, Q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint points (K, n+1, 2), Jacobians (K, n+1, 2, n) and cumulative angles (K, n) for K configs."""
    Q = np.atleast_2d(np.asarray(Q, float))
    K, n = Q.shape
    phi = np.cumsum(Q, axis=1)
    L = np.asarray(chain.lengths)[None, :, None]
    seg = L * _u(phi)
    dseg = L * _du(phi)
    P = np.empty((K, n + 1, 2))
    P[:, 0] = (0.0, chain.base_height)
    P[:, 1:] = P[:, :1] + np.cumsum(seg, axis=1)
    # with C_i = sum_{j<i} dseg_j the derivative dP_i/dq_m is C_i - C_m for m < i
    C = np.zeros((K, n + 1, 2))
    C[:, 1:] = np.cumsum(dseg, axis=1)
    J = C[:, :, None, :] - C[:, None, :n, :]           # (K, i, m, 2)
    mask = np.arange(n)[None, :] < np.arange(n + 1)[:, None]
    J = np.where(mask[None, :, :, None], J, 0.0).transpose(0, 1, 3, 2)
    return P, J, phi


def _points_and_jac(chain: PlanarChain, q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint points ``P`` (n+1, 2), their Jacobians (n+1, 2, n) and the cumulative angles."""
    P, J, phi = _points_and_jac_batch(chain, np.asarray(q, float)[None])
    return P[0], J[0], phi[0]


@dataclass(frozen=True)
class ChainState:
    points: np.ndarray      # (n+1, 2) ankle, knee, hip, shoulder, elbow, wrist
    phi: np.ndarray         # cumulative link angles
    bear_position: np.ndarray
    bear_pitch: float
    com_x: float

    @property
    def end_effector(self) -> np.ndarray:
        return self.points[-1]


def _bear(chain: PlanarChain, P, J, phi):
    """Bear origin, its Jacobian and pitch; works on single or batched chain states."""
    theta = phi[..., -1] + chain.hold_angle
    c, s = np.cos(theta), np.sin(theta)
    ox, oz = chain.bear_offset
    off = np.stack([ox * c + oz * s, -ox * s + oz * c], axis=-1)
    doff = np.stack([-ox * s + oz * c, -ox * c - oz * s], axis=-1)
    pos = P[..., -1, :] + off
    jac = J[..., -1, :, :] + doff[..., :, None]
    return pos, jac, theta


def _com(chain: PlanarChain, P, J, bear_x, bear_jx):
    m = np.asarray(chain.masses)
    mid = 0.5 * (P[..., :-1, 0] + P[..., 1:, 0])
    dmid = 0.5 * (J[..., :-1, 0, :] + J[..., 1:, 0, :])
    M = chain.total_mass
    com = (mid @ m + chain.payload * bear_x) / M
    dcom = (np.einsum("...in,i->...n", dmid, m) + chain.payload * bear_jx) / M
    return com, dcom


def forward_kinematics(chain: PlanarChain, q, check_limits: bool = True) -> ChainState:
    """Planar frames, bear frame and the horizontal COM projection."""
    q = np.asarray(q, float)
    if q.shape != (chain.n,):
        raise ValueError(f"expected {chain.n} joint angles")
    if check_limits and not chain.within_limits(q):
        raise JointLimit(f"q outside joint limits: {q}")
    P, J, phi = _points_and_jac(chain, q)
    bpos, bjac, theta = _bear(chain, P, J, phi)
    com, _ = _com(chain, P, J, bpos[0], bjac[0])
    return ChainState(P, phi, bpos, float(theta), float(com))


def expand_symmetric(chain: PlanarChain, q) -> dict:
    """Full-body joint angles with identical left and right values."""
    out = {}
    for name, v in zip(chain.names, np.asarray(q, float)):
        out[f"{name}_l"] = float(v)
        out[f"{name}_r"] = float(v)
    return out


# -- collision ----------------------------------------------------------------

def _point_rect_sd(p: np.ndarray, rect) -> tuple[np.ndarray, np.ndarray]:
    """Signed distance of points (k, 2) to an axis-aligned rectangle and its gradient."""
    lo = np.array([rect[0], rect[1]])
    hi = np.array([rect[2], rect[3]])
    d = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    out_norm = np.linalg.norm(d, axis=1)
    sgn = np.where(p < lo, -1.0, np.where(p > hi, 1.0, 0.0))
    grad_out = sgn * d / np.maximum(out_norm, 1e-300)[:, None]
    # inside: distance to the nearest face, negated
    faces = np.column_stack([p[:, 0] - lo[0], hi[0] - p[:, 0], p[:, 1] - lo[1], hi[1] - p[:, 1]])
    k = np.argmin(faces, axis=1)
    face_dirs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    inside = out_norm <= 0.0
    sd = np.where(inside, -faces[np.arange(len(p)), k], out_norm)
    grad = np.where(inside[:, None], face_dirs[k], grad_out)
    return sd, grad


def segment_rect_distance(a, b, rect) -> float:
    """Exact distance between a segment and a rectangle (negative when they intersect)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    x0, z0, x1, z1 = rect
    # Liang-Barsky clip to detect intersection
    d = b - a
    t0, t1 = 0.0, 1.0
    hit = True
    for p, q in ((-d[0], a[0] - x0), (d[0], x1 - a[0]), (-d[1], a[1] - z0), (d[1], z1 - a[1])):
        if abs(p) < 1e-15:
            if q < 0:
                hit = False
                break
        else:
            t = q / p
            if p < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
            if t0 > t1:
                hit = False
                break
    if hit:
        return -1.0
    ends = np.array([a, b])
    dist = _point_rect_sd(ends, rect)[0].min()
    corners = np.array([[x0, z0], [x1, z0], [x1, z1], [x0, z1]])
    L2 = max(float(d @ d), 1e-300)
    t = np.clip((corners - a) @ d / L2, 0.0, 1.0)
    closest = a + t[:, None] * d
    return float(min(dist, np.linalg.norm(corners - closest, axis=1).min()))


@dataclass(frozen=True)
class _Samples:
    link: np.ndarray   # link index of each sample
    t: np.ndarray      # fraction along the link


def _samples(n: int, k: int) -> _Samples:
    ts = np.linspace(0.0, 1.0, k)
    return _Samples(np.repeat(np.arange(n), k), np.tile(ts, n))


def _clearance_batch(P, J, rects, clearance: float, samples: _Samples):
    """Clearance constraints ``>= 0`` for K chain states: values (K, m) and Jacobians (K, m, n).

    Sample points along the links keep out of each rectangle, and each
    rectangle corner keeps away from every link segment.
    """
    K, n = P.shape[0], J.shape[-1]
    if not rects:
        return np.zeros((K, 0)), np.zeros((K, 0, n))
    i, t = samples.link, samples.t
    pts = (1 - t)[:, None] * P[:, i] + t[:, None] * P[:, i + 1]                        # (K, S, 2)
    jpts = (1 - t)[:, None, None] * J[:, i] + t[:, None, None] * J[:, i + 1]          # (K, S, 2, n)
    A, B = P[:, :-1], P[:, 1:]
    D = B - A
    L2 = np.maximum(np.einsum("kld,kld->kl", D, D), 1e-300)
    vals, jacs = [], []
    for r in rects:
        sd, g = _point_rect_sd(pts.reshape(-1, 2), r)
        vals.append(sd.reshape(K, -1) - clearance)
        jacs.append(np.einsum("ksd,ksdn->ksn", g.reshape(K, -1, 2), jpts))
        corners = np.array([[r[0], r[1]], [r[2], r[1]], [r[2], r[3]], [r[0], r[3]]])
        rel = corners[None, :, None, :] - A[:, None]                                   # (K, 4, l, 2)
        tt = np.clip(np.einsum("kcld,kld->kcl", rel, D) / L2[:, None], 0.0, 1.0)
        diff = A[:, None] + tt[..., None] * D[:, None] - corners[None, :, None, :]
        dist = np.linalg.norm(diff, axis=-1)
        nrm = diff / np.maximum(dist, 1e-300)[..., None]
        jac = (np.einsum("kcld,kldn->kcln", nrm, J[:, :-1]) * (1 - tt)[..., None]
               + np.einsum("kcld,kldn->kcln", nrm, J[:, 1:]) * tt[..., None])
        vals.append(dist.reshape(K, -1) - clearance)
        jacs.append(jac.reshape(K, -1, n))
    return np.concatenate(vals, axis=1), np.concatenate(jacs, axis=1)


def _clearance(chain: PlanarChain, P, J, rects, clearance: float, samples: _Samples):
    v, j = _clearance_batch(P[None], J[None], rects, clearance, samples)
    return v[0], j[0]


# -- problem ------------------------------------------------------------------

@dataclass(frozen=True)
class SeatingProblem:
    chain: PlanarChain
    target: tuple                    # bear frame origin (x, z) in the robot frame
    target_pitch: float = 0.0
    obstacles: tuple = ()            # (xmin, zmin, xmax, zmax) rectangles
    w1: float = 1.0
    w2: float = 0.5
    Q: tuple | None = None           # diagonal of the tracking weight
    N: int = 20
    duration: float = 4.0
    com_margin: float = 0.005
    clearance: float = 0.01
    samples_per_link: int = 9
    q_start: tuple | None = None

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("weights must be non-negative")
        if self.Q is not None and min(self.Q) <= 0:
            raise ValueError("Q must be positive definite")
        if self.N < 2:
            raise ValueError("N must be at least 2")

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.q_start if self.q_start is not None else self.chain.q_start, float)

    @property
    def Q_diag(self) -> np.ndarray:
        return np.ones(self.chain.n) if self.Q is None else np.asarray(self.Q, float)

    @property
    def dt(self) -> float:
        return self.duration / (self.N - 1)

    # objective and constraints for the goal configuration ----------------
    def goal_objective(self, q):
        P, J, phi = _points_and_jac(self.chain, q)
        bpos, bjac, _ = _bear(self.chain, P, J, phi)
        com, dcom = _com(self.chain, P, J, bpos[0], bjac[0])
        e = com - self.chain.support_center
        r = math.sqrt(e * e + _SMOOTH**2)
        ti = self.chain.torso_index
        ft = float(phi[ti])
        rt = math.sqrt(ft * ft + _SMOOTH**2)
        val = self.w1 * (r - _SMOOTH) + self.w2 * (rt - _SMOOTH)
        dphi_t = np.zeros(self.chain.n)
        dphi_t[:ti + 1] = 1.0
        grad = self.w1 * (e / r) * dcom + self.w2 * (ft / rt) * dphi_t
        return val, grad

    def goal_eq(self, q):
        P, J, phi = _points_and_jac(self.chain, q)
        bpos, bjac, theta = _bear(self.chain, P, J, phi)
        c = np.array([bpos[0] - self.target[0], bpos[1] - self.target[1], theta - self.target_pitch])
        return c, np.vstack([bjac, np.ones((1, self.chain.n))])

    def stability(self, q, slack: float = _SLACK):
        P, J, phi = _points_and_jac(self.chain, q)
        bpos, bjac, _ = _bear(self.chain, P, J, phi)
        com, dcom = _com(self.chain, P, J, bpos[0], bjac[0])
        m = self.com_margin + slack
        heel, toe = self.chain.support
        return np.array([com - heel - m, toe - m - com]), np.vstack([dcom, -dcom])

    def collision(self, q, slack: float = _SLACK):
        P, J, _ = _points_and_jac(self.chain, q)
        return _clearance(self.chain, P, J, list(self.obstacles), self.clearance + slack,
                          _samples(self.chain.n, self.samples_per_link))

    def stability_batch(self, Q, slack: float = _SLACK):
        P, J, phi = _points_and_jac_batch(self.chain, Q)
        bpos, bjac, _ = _bear(self.chain, P, J, phi)
        com, dcom = _com(self.chain, P, J, bpos[:, 0], bjac[:, 0, :])
        m = self.com_margin + slack
        heel, toe = self.chain.support
        return np.stack([com - heel - m, toe - m - com], axis=1), np.stack([dcom, -dcom], axis=1)

    def collision_batch(self, Q, slack: float = _SLACK):
        P, J, _ = _points_and_jac_batch(self.chain, Q)
        return _clearance_batch(P, J, list(self.obstacles), self.clearance + slack,
                                _samples(self.chain.n, self.samples_per_link))

    def goal_ineq(self, q):
        g1, j1 = self.stability(q)
        g2, j2 = self.collision(q)
        return np.concatenate([g1, g2]), np.vstack([j1, j2])

    # audit ------------------------------------------------------------------
    def audit(self, q) -> dict:
        """Exact checks: joint limits, COM margin and segment clearance."""
        q = np.asarray(q, float)
        st = forward_kinematics(self.chain, q, check_limits=False)
        heel, toe = self.chain.support
        clear = min((segment_rect_distance(a, b, r) for a, b in zip(st.points[:-1], st.points[1:])
                     for r in self.obstacles), default=math.inf)
        return {"limits": self.chain.within_limits(q), "com_margin": min(st.com_x - heel, toe - st.com_x),
                "clearance": clear, "bear_error": float(np.hypot(*(st.bear_position - self.target))),
                "pitch_error": abs(st.bear_pitch - self.target_pitch)}

    def accepts(self, q, check_goal: bool = True) -> bool:
        a = self.audit(q)
        ok = a["limits"] and a["com_margin"] >= self.com_margin - 1e-9 and a["clearance"] >= 0.0
        if check_goal:
            ok = ok and a["bear_error"] < 1e-3 and a["pitch_error"] < 1e-3
        return bool(ok)

    def to_dict(self) -> dict:
        return {"chain": self.chain.to_dict(), "target": list(self.target), "target_pitch": self.target_pitch,
                "obstacles": [list(r) for r in self.obstacles], "w1": self.w1, "w2": self.w2,
                "Q": list(self.Q_diag), "N": self.N, "duration": self.duration,
                "com_margin": self.com_margin, "clearance": self.clearance}


# -- goal configuration -----------------------------------------------------------

def _elbow_target(problem: SeatingProblem) -> tuple[np.ndarray, float]:
    ch = problem.chain
    theta = problem.target_pitch
    wrist = np.asarray(problem.target, float) - _rot(theta, ch.bear_offset)
    phi_last = theta - ch.hold_angle
    elbow = wrist - ch.lengths[-1] * _u(phi_last)
    return elbow, phi_last


def _ik_seeds(problem: SeatingProblem, grid: int = 13) -> list[np.ndarray]:
    """Configurations meeting the bear constraints exactly: a grid over the lower
    joints with a closed-form two-link solve for the last free links."""
    ch = problem.chain
    n = ch.n
    elbow, phi_last = _elbow_target(problem)
    a, b = ch.lengths[n - 3], ch.lengths[n - 2]
    lows = [np.linspace(ch.lower[k], ch.upper[k], grid) for k in range(n - 3)]
    seeds = []
    for combo in np.array(np.meshgrid(*lows, indexing="ij")).reshape(n - 3, -1).T:
        P, _, phi = _points_and_jac(ch, np.concatenate([combo, np.zeros(3)]))
        base = P[n - 3]
        v = elbow - base
        d = float(np.hypot(*v))
        if d > a + b or d < abs(a - b) or d == 0:
            continue
        cos_in = (a * a + d * d - b * b) / (2 * a * d)
        alpha = math.acos(max(-1.0, min(1.0, cos_in)))
        direction = math.atan2(v[0], v[1])   # angle from +z towards +x
        for sgn in (1.0, -1.0):
            ph_a = direction - sgn * alpha
            ja = base + a * _u(ph_a)
            w = elbow - ja
            ph_b = math.atan2(w[0], w[1])
            cum = np.concatenate([np.cumsum(combo), [ph_a, ph_b, phi_last]])
            # relative angles, each brought into [-pi, pi)
            q = np.mod(np.diff(np.concatenate([[0.0], cum])) + math.pi, 2 * math.pi) - math.pi
            if ch.within_limits(q):
                seeds.append(q)
    return seeds


def _reach_ok(problem: SeatingProblem) -> bool:
    ch = problem.chain
    elbow, _ = _elbow_target(problem)
    ankle = np.array([0.0, ch.base_height])
    return float(np.hypot(*(elbow - ankle))) <= sum(ch.lengths[:-1]) + 1e-9


def goal_config(problem: SeatingProblem, starts: int = 4) -> np.ndarray:
    """Goal posture: bear at the target, COM over the feet, no chair contact; ``w1 d_COM + w2 Torso`` minimised."""
    if not _reach_ok(problem):
        raise Infeasible("bear target is out of reach")
    seeds = _ik_seeds(problem)
    if not seeds:
        raise Infeasible("no posture within joint limits reaches the bear target")

    def merit(q):
        g, _ = problem.goal_ineq(q)
        return problem.goal_objective(q)[0] + 100.0 * float(np.maximum(-g, 0).sum())

    seeds.sort(key=merit)
    best, best_f = None, math.inf
    for q0 in seeds[:starts]:
        res = augmented_lagrangian(problem.goal_objective, q0, eq=problem.goal_eq, ineq=problem.goal_ineq,
                                   bounds=problem.chain.bounds, tol=1e-7)
        q = np.clip(res.x, problem.chain.lower, problem.chain.upper)
        if problem.accepts(q) and res.f < best_f:
            best, best_f = q, res.f
    if best is None:
        raise Infeasible("no stable collision-free goal posture found")
    return best


# -- trajectory ---------------------------------------------------------------

@dataclass(frozen=True)
class SeatingTrajectory:
    q: np.ndarray            # (N, n)
    times: np.ndarray        # (N,)
    cost: float = field(default=0.0, compare=False)

    def __len__(self) -> int:
        return len(self.q)

    def step_costs(self, q_goal, Q=None) -> np.ndarray:
        Qd = np.ones(self.q.shape[1]) if Q is None else np.asarray(Q, float)
        d = self.q - np.asarray(q_goal, float)
        return 0.5 * np.einsum("kn,n,kn->k", d, Qd, d)

    def to_dict(self) -> dict:
        return {"q": self.q.tolist(), "t": self.times.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> SeatingTrajectory:
        return cls(np.asarray(d["q"], float).reshape(len(d["t"]), -1), np.asarray(d["t"], float))


def _traj_functions(problem: SeatingProblem, q_goal: np.ndarray):
    n, N = problem.chain.n, problem.N
    q0 = problem.start
    Qd = problem.Q_diag
    vstep = np.asarray(problem.chain.vel_limits) * problem.dt
    inner = N - 2

    def full(x):
        return np.vstack([q0, x.reshape(inner, n), q_goal])

    def objective(x):
        X = x.reshape(inner, n)
        d = X - q_goal
        return 0.5 * float(np.einsum("kn,n,kn->", d, Qd, d)), (d * Qd).ravel()

    # velocity limits are linear: rows over steps k (N-1) and joints
    rows = []
    for k in range(N - 1):
        for j in range(n):
            r = np.zeros(inner * n)
            if 1 <= k + 1 <= inner:
                r[k * n + j] += 1.0          # q_{k+1}
            if 1 <= k <= inner:
                r[(k - 1) * n + j] -= 1.0    # q_k
            rows.append(r)
    D = np.array(rows)

    def ineq(x):
        Qf = full(x)
        dq = (Qf[1:] - Qf[:-1]).ravel()
        vals = [np.tile(vstep, N - 1) - dq, np.tile(vstep, N - 1) + dq]
        jacs = [-D, D]
        X = x.reshape(inner, n)
        for fn in (problem.stability_batch, problem.collision_batch):
            g, Jg = fn(X)                              # (inner, m), (inner, m, n)
            m = g.shape[1]
            big = np.zeros((inner, m, inner, n))
            big[np.arange(inner), :, np.arange(inner), :] = Jg
            vals.append(g.ravel())
            jacs.append(big.reshape(inner * m, inner * n))
        return np.concatenate(vals), np.vstack(jacs)

    return full, objective, ineq


def plan_seating_trajectory(problem: SeatingProblem, q_goal) -> SeatingTrajectory:
    """Direct transcription with ``N`` waypoints from ``q_start`` to ``q_goal``.

    Minimises ``sum_k 1/2 |q(k) - q_goal|_Q^2`` subject to velocity limits,
    COM over the support interval and chair clearance at every waypoint.
    """
    q_goal = np.asarray(q_goal, float)
    N = problem.N
    times = np.linspace(0.0, problem.duration, N)
    q0 = problem.start
    if np.allclose(q0, q_goal, atol=1e-12):
        return SeatingTrajectory(np.tile(q_goal, (N, 1)), times, 0.0)
    if N == 2:
        traj = np.vstack([q0, q_goal])
        if np.any(np.abs(q_goal - q0) > np.asarray(problem.chain.vel_limits) * problem.dt + 1e-12):
            raise NoTrajectory("two waypoints cannot respect the velocity limits")
        return SeatingTrajectory(traj, times, float(SeatingTrajectory(traj, times).step_costs(
            q_goal, problem.Q_diag).sum()))
    full, objective, ineq = _traj_functions(problem, q_goal)
    bounds = np.tile(problem.chain.bounds, (N - 2, 1))
    best = None
    lower_bound = _greedy_cost(problem, q_goal)
    # a stiff first penalty keeps the iterates from tunnelling through thin obstacle corners
    for rho0 in (1e2, 1e4):
        for warm in _warm_starts(problem, q_goal):
            res = augmented_lagrangian(objective, warm[1:-1].ravel(), ineq=ineq, bounds=bounds, tol=1e-7,
                                       max_outer=30, rho0=rho0)
            Qf = np.clip(full(res.x), problem.chain.lower, problem.chain.upper)
            Qf[0], Qf[-1] = q0, q_goal
            if not _trajectory_ok(problem, Qf):
                continue
            cost = float(SeatingTrajectory(Qf, times).step_costs(q_goal, problem.Q_diag).sum())
            if best is None or cost < best.cost - 1e-9:
                best = SeatingTrajectory(Qf, times, cost)
            if cost <= lower_bound * (1.0 + 1e-3) + 1e-9:
                break   # within rounding of the full-speed lower bound
        if best is not None:
            break
    if best is None:
        raise NoTrajectory("no feasible seating trajectory within the iteration budget")
    return best


def _greedy(q0, q_goal, vstep, N, order=None) -> np.ndarray:
    """Joints move at full speed towards the goal; ``order`` lists joint groups started one after another."""
    groups = order or [list(range(len(q0)))]
    out = [np.asarray(q0, float)]
    active = 0
    while len(out) < N:
        q = out[-1].copy()
        moving = [j for g in groups[:active + 1] for j in g]
        q[moving] += np.clip(q_goal[moving] - q[moving], -vstep[moving], vstep[moving])
        if active + 1 < len(groups) and np.allclose(q[groups[active]], q_goal[groups[active]]):
            active += 1
        out.append(q)
    out[-1] = np.asarray(q_goal, float)
    return np.array(out)


def _greedy_cost(problem: SeatingProblem, q_goal) -> float:
    vstep = np.asarray(problem.chain.vel_limits) * problem.dt
    Qf = _greedy(problem.start, q_goal, vstep, problem.N)
    return float(SeatingTrajectory(Qf, np.zeros(len(Qf))).step_costs(q_goal, problem.Q_diag).sum())


def _warm_starts(problem: SeatingProblem, q_goal):
    """Candidate initial trajectories, cheapest first."""
    n, N = problem.chain.n, problem.N
    q0 = problem.start
    vstep = np.asarray(problem.chain.vel_limits) * problem.dt
    legs = list(range(problem.chain.torso_index + 1))
    arm = list(range(problem.chain.torso_index + 1, n))
    yield _greedy(q0, q_goal, vstep, N)
    yield _greedy(q0, q_goal, vstep, N, [arm, legs])
    yield _greedy(q0, q_goal, vstep, N, [legs, arm])
    yield q0 + np.linspace(0.0, 1.0, N)[:, None] * (q_goal - q0)


def _trajectory_ok(problem: SeatingProblem, Qf: np.ndarray) -> bool:
    vstep = np.asarray(problem.chain.vel_limits) * problem.dt
    if np.any(np.abs(np.diff(Qf, axis=0)) > vstep + 1e-6):
        return False
    return all(problem.accepts(q, check_goal=False) for q in Qf[1:-1])


# -- world interface ----------------------------------------------------------

def chair_obstacles(obb: Obb, robot: PlanarPose, seat_height: float, bear_x: float,
                    back_gap: float = 0.08) -> tuple:
    """Sagittal rectangles for the chair seen from the robot.

    The chair box projected on the robot heading gives ``[x_near, x_far]``.
    Everything below the seat is one block; if the box rises well above
    the seat, the part behind the bear is a second, taller block.
    """
    h = np.array([math.cos(robot.heading), math.sin(robot.heading)])
    xs = (obb.corners_xy() - np.array([robot.x, robot.y])) @ h
    x_near, x_far = float(xs.min()), float(xs.max())
    rects = [(x_near, 0.0, x_far, seat_height)]
    top = float(obb.top)
    x_back = bear_x + back_gap
    if top > seat_height + 0.05 and x_back < x_far:
        rects.append((x_back, 0.0, x_far, top))
    return tuple(rects)


def bear_world_pose(chain: PlanarChain, q, robot: PlanarPose) -> RigidTransform:
    """Bear pelvis frame in the world: it faces the robot and pitches with the hold."""
    st = forward_kinematics(chain, q, check_limits=False)
    h = robot.heading
    xy = np.array([robot.x, robot.y]) + st.bear_position[0] * np.array([math.cos(h), math.sin(h)])
    # the bear faces back towards the robot; pitch forward (towards the robot) is a yaw-frame y rotation
    yaw = h + math.pi
    c, s = math.cos(-st.bear_pitch), math.sin(-st.bear_pitch)
    Ry = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return RigidTransform(rot_z(yaw) @ Ry, (xy[0], xy[1], st.bear_position[1]))


def execute_and_release(trajectory: SeatingTrajectory, chain: PlanarChain, robot: PlanarPose,
                        chair: Mesh | None, bear: AgentModel, bear_theta,
                        params: SimParams = SimParams()) -> Configuration | None:
    """Carry the bear along the trajectory, release it at the last waypoint and let it settle.

    The chain moves kinematically and does not take part in the physics;
    after the release it simply reverses to its start posture. An empty
    trajectory releases nothing and returns ``None``.
    """
    if len(trajectory) == 0:
        return None
    base = bear_world_pose(chain, trajectory.q[-1], robot)
    scene = build_placement_scene(chair, bear.with_damping(params.bear_damping, params.drop_friction),
                                  base, bear_theta, params)
    return settle(scene, params)
