"""Human assistance: ask for a chair rotation whenever the chair is not
accessible, apply the (simulated) human's response and try again.

Sign convention: counterclockwise seen from above is a positive yaw.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Mesh, Obb, PlanarPose, RigidTransform, wrap_angle
from .imagination import SittingPose
from .nav import (Arena, Footprint, GoalOutsideArena, NavParams, NoPlan, Polygon, Se2Trajectory,
                  compute_goal, footprint_collides_batch, plan_se2)

__all__ = ["AssistScene", "AssistanceOutcome", "HumanPolicy", "Instruction", "PlanAttempt", "Round",
           "apply_human_rotation", "assistance_loop", "attempt_plan", "quantize_rotation",
           "required_rotation", "POLICIES"]

TEMPLATE = "Please rotate the chair about the vertical axis {direction} for {rotation_angle} degrees!"
_PATTERN = re.compile(r"^Please rotate the chair about the vertical axis (clockwise|counterclockwise) "
                      r"for (\d+) degrees!$")
POLICIES = ("obey", "disobey-first", "always-disobey")
MAX_ROUNDS = 3


@dataclass(frozen=True)
class Instruction:
    direction: str
    rotation_angle: int

    def __post_init__(self):
        if self.direction not in ("clockwise", "counterclockwise"):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.rotation_angle % 30 or not 0 <= self.rotation_angle <= 180:
            raise ValueError("rotation angle must be a multiple of 30 in [0, 180]")

    @property
    def text(self) -> str:
        return TEMPLATE.format(direction=self.direction, rotation_angle=self.rotation_angle)

    @property
    def signed_degrees(self) -> int:
        return self.rotation_angle if self.direction == "counterclockwise" else -self.rotation_angle

    @classmethod
    def parse(cls, text: str) -> Instruction:
        m = _PATTERN.match(text)
        if m is None:
            raise ValueError(f"not an instruction: {text!r}")
        return cls(m.group(1), int(m.group(2)))

    @classmethod
    def from_signed(cls, degrees: int) -> Instruction:
        # zero and the antipodal 180 are reported as counterclockwise
        return cls("clockwise" if degrees < 0 and degrees != -180 else "counterclockwise", abs(degrees))


def quantize_rotation(degrees: float) -> int:
    """Nearest multiple of 30; an exact 15 remainder goes to the smaller magnitude."""
    mag = abs(degrees)
    k = math.floor(mag / 30.0)
    if mag - 30.0 * k > 15.0:
        k += 1
    q = min(30 * k, 180)
    return int(q if degrees >= 0 else -q)


def _ray_clear(origin, bearing: float, length: float, arena: Arena, width: float) -> bool:
    """Segment from ``origin`` along ``bearing``, swept by a disc of radius ``width``, misses the obstacles."""
    probe = Footprint(width, width)
    obstacles = replace(arena, chair=None, bounds=(-1e6, -1e6, 1e6, 1e6))
    n = max(2, int(math.ceil(length / (0.5 * width))) + 1)
    s = np.linspace(0.0, length, n)
    pts = np.column_stack([origin[0] + s * math.cos(bearing), origin[1] + s * math.sin(bearing), np.zeros(n)])
    return not footprint_collides_batch(pts, obstacles, probe).any()


def required_rotation(g: SittingPose, robot_pos, arena: Arena, center=None,
                      footprint: Footprint = Footprint()) -> tuple[Instruction, float]:
    """Instruction turning the sitting direction towards the robot, and the precise angle (degrees).

    The preferred bearing points from the chair ``center`` (default: the
    sitting position) to ``robot_pos``. If that corridor, as wide as the
    footprint's minor semi-axis, is blocked, the closest clear bearing in
    5 degree steps is used instead.
    """
    c = np.asarray(center if center is not None else g.p, float)[:2]
    r = np.asarray(robot_pos, float)[:2]
    bearing = math.atan2(r[1] - c[1], r[0] - c[0])
    length = float(np.linalg.norm(r - c))
    width = min(footprint.a, footprint.b)
    target = bearing
    for k in range(0, 37):
        hit = None
        for sgn in ((1,) if k == 0 else (1, -1)):
            b = bearing + sgn * math.radians(5 * k)
            if _ray_clear(c, b, length, arena, width):
                hit = b
                break
        if hit is not None:
            target = hit
            break
    precise = math.degrees(wrap_angle(target - g.gamma))
    return Instruction.from_signed(quantize_rotation(precise)), precise


@dataclass(frozen=True)
class HumanPolicy:
    """Simulated human. ``always-disobey`` never performs the requested rotation."""

    kind: str = "obey"

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown policy {self.kind!r}")

    def applied_degrees(self, instr: Instruction, round_: int, rng: np.random.Generator) -> float:
        cmd = instr.signed_degrees
        if self.kind == "obey" or (self.kind == "disobey-first" and round_ > 1):
            return float(cmd)
        if self.kind == "always-disobey":
            return 0.0
        # a flip is indistinguishable from obeying for 0 and 180 degrees
        flip = rng.uniform() < 0.5 and cmd % 180 != 0
        if flip:
            return float(-cmd)
        return float(cmd + (60 if rng.uniform() < 0.5 else -60))


def apply_human_rotation(obb: Obb, instr: Instruction, policy: HumanPolicy, round_: int,
                         seed: int = 0) -> RigidTransform:
    """``g_rot``: a yaw about the vertical axis through the chair box center."""
    rng = np.random.default_rng([seed, round_])
    deg = policy.applied_degrees(instr, round_, rng)
    if deg == 0.0:
        return RigidTransform()
    return RigidTransform.yaw_about(math.radians(deg), np.asarray(obb.center, float))


@dataclass(frozen=True)
class AssistScene:
    """World state relevant to accessibility; the arena holds no chair (it is added from ``obb``)."""

    chair: Mesh
    obb: Obb
    pose: SittingPose
    arena: Arena
    start: PlanarPose
    footprint: Footprint = Footprint()

    @property
    def full_arena(self) -> Arena:
        return self.arena.with_chair(Polygon.from_obb(self.obb))

    def rotated(self, g_rot: RigidTransform) -> AssistScene:
        return replace(self, chair=self.chair.transformed(g_rot), obb=self.obb.transformed(g_rot),
                       pose=self.pose.transformed(g_rot))


@dataclass(frozen=True)
class PlanAttempt:
    status: str                      # "ok" | "NoPlan" | "GoalOutsideArena"
    s_goal: PlanarPose | None = None
    adjusted_p: tuple | None = None
    trajectory: Se2Trajectory | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {"status": self.status, "s_goal": self.s_goal.to_list() if self.s_goal else None,
                "adjusted_p": list(self.adjusted_p) if self.adjusted_p is not None else None,
                "trajectory": self.trajectory.to_dict() if self.trajectory else None, "message": self.message}


def attempt_plan(scene: AssistScene, seed: int = 0, params: NavParams = NavParams()) -> PlanAttempt:
    arena = scene.full_arena
    try:
        s_goal, adjusted = compute_goal(scene.pose, arena, scene.footprint, params)
    except GoalOutsideArena as exc:
        return PlanAttempt("GoalOutsideArena", message=str(exc))
    try:
        traj = plan_se2(scene.start, s_goal, arena, scene.footprint, seed=seed, params=params)
    except NoPlan as exc:
        return PlanAttempt("NoPlan", s_goal, tuple(adjusted.tolist()), message=str(exc))
    return PlanAttempt("ok", s_goal, tuple(adjusted.tolist()), traj)


@dataclass(frozen=True)
class Round:
    instruction: Instruction
    precise_degrees: float
    g_rot: RigidTransform
    attempt: PlanAttempt

    def to_dict(self) -> dict:
        return {"instruction": self.instruction.text, "precise_degrees": self.precise_degrees,
                "applied_degrees": math.degrees(self.g_rot.yaw), "g_rot": self.g_rot.to_dict(),
                "attempt": self.attempt.to_dict()}


@dataclass(frozen=True)
class AssistanceOutcome:
    rounds: tuple
    status: str                      # "Accessible" | "Failed"
    scene: AssistScene | None = field(default=None, compare=False, repr=False)

    @property
    def final_attempt(self) -> PlanAttempt | None:
        return self.rounds[-1].attempt if self.rounds else None

    def to_dict(self) -> dict:
        return {"status": self.status, "rounds": [r.to_dict() for r in self.rounds]}


def assistance_loop(scene: AssistScene, policy: HumanPolicy, max_rounds: int = MAX_ROUNDS, seed: int = 0,
                    params: NavParams = NavParams(), planner=attempt_plan) -> AssistanceOutcome:
    """Instruction, human rotation, pose update and re-planning, at most ``max_rounds`` times.

    ``planner(scene, seed, params)`` returns a ``PlanAttempt``; the stored
    sitting pose is carried through each ``g_rot`` rather than re-imagined.
    """
    rounds = []
    for k in range(1, max_rounds + 1):
        instr, precise = required_rotation(scene.pose, (scene.start.x, scene.start.y), scene.arena,
                                           center=scene.obb.center, footprint=scene.footprint)
        g_rot = apply_human_rotation(scene.obb, instr, policy, k, seed)
        scene = scene.rotated(g_rot)
        attempt = planner(scene, seed + k, params)
        rounds.append(Round(instr, precise, g_rot, attempt))
        if attempt.ok:
            return AssistanceOutcome(tuple(rounds), "Accessible", scene)
    return AssistanceOutcome(tuple(rounds), "Failed", scene)
