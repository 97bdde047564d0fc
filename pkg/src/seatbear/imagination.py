"""Sitting imagination: drop the agent onto the chair in eight rotations and
aggregate the correct sittings into one sitting pose."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentModel
from .geometry import Mesh, Obb, RigidTransform, compute_obb, obb_alignment_transform, rot_z, wrap_angle
from .sam import SamConfig, SamVerdict, classify, jl_weight
from .sim import Diverged, Scene, SimParams, build_drop_scene, pose_configuration, settle

__all__ = ["DropRecord", "DropSchedule", "EmptyList", "ImaginationReport", "NoSittingFound",
           "SittingPose", "aggregate_pose", "imagine", "make_schedule"]

N_ROTATIONS = 8
L_SIT_SCALE = 0.15
# facing axis projections shorter than this are treated as toppled
MIN_FACING_XY = 0.3


class NoSittingFound(RuntimeError):
    pass


class EmptyList(ValueError):
    pass


@dataclass(frozen=True)
class SittingPose:
    """Pelvis position ``p`` and yaw ``gamma``; the rotation is ``R_z(gamma) R_0`` with ``R_0 = I``."""

    p: tuple
    gamma: float

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    @property
    def rotation(self) -> np.ndarray:
        return rot_z(self.gamma)

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.gamma), math.sin(self.gamma)])

    def transform(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.position)

    def transformed(self, g: RigidTransform) -> SittingPose:
        return SittingPose(tuple(g.apply(self.position).tolist()), float(wrap_angle(self.gamma + g.yaw)))

    def moved_to(self, p) -> SittingPose:
        return SittingPose(tuple(float(x) for x in p), self.gamma)

    def to_dict(self) -> dict:
        return {"p": list(self.p), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> SittingPose:
        return cls(tuple(d["p"]), d["gamma"])


@dataclass(frozen=True)
class DropSchedule:
    rotations: tuple
    offsets: tuple
    L_sit: float

    def pairs(self) -> list[tuple[int, float, float]]:
        return [(i, a, off) for i, a in enumerate(self.rotations) for off in self.offsets]

    def __len__(self) -> int:
        return len(self.rotations) * len(self.offsets)


def base_offsets(L: float) -> tuple:
    return (0.0, L, -L)


def extra_offsets(L: float) -> tuple:
    return (2 * L, -2 * L, 3 * L, -3 * L)


def make_schedule(obb: Obb, extended: bool = False, scale: float = L_SIT_SCALE) -> DropSchedule:
    """Drop schedule; the stride grows linearly with the box length along x."""
    L = scale * 2.0 * float(obb.half_extents[0])
    offsets = base_offsets(L) + (extra_offsets(L) if extended else ())
    rotations = tuple(i * math.pi / 4 for i in range(N_ROTATIONS))
    return DropSchedule(rotations, offsets, L)


@dataclass(frozen=True)
class DropRecord:
    rotation: int
    offset: float
    verdict: SamVerdict
    p_chair: tuple        # pelvis position in the aligned chair frame
    gamma_chair: float    # agent yaw relative to the aligned chair frame
    settled: bool
    diverged: bool = False

    @property
    def correct(self) -> bool:
        return self.verdict.correct

    def to_dict(self) -> dict:
        return {"rotation": self.rotation, "offset": self.offset, "verdict": self.verdict.to_dict(),
                "p_chair": list(self.p_chair), "gamma_chair": self.gamma_chair, "settled": self.settled,
                "diverged": self.diverged}

    @classmethod
    def from_dict(cls, d: dict) -> DropRecord:
        return cls(d["rotation"], d["offset"], SamVerdict.from_dict(d["verdict"]), tuple(d["p_chair"]),
                   d["gamma_chair"], d["settled"], d.get("diverged", False))


@dataclass(frozen=True)
class ImaginationReport:
    drops: tuple
    n_correct: tuple
    alpha_star: int | None
    extended: bool
    pose: SittingPose | None
    obb: dict
    g_obb: dict
    L_sit: float
    wall_time: float = field(default=0.0, compare=False)

    @property
    def success(self) -> bool:
        return self.pose is not None

    def to_dict(self) -> dict:
        return {"drops": [d.to_dict() for d in self.drops], "n_correct": list(self.n_correct),
                "alpha_star": self.alpha_star, "extended": self.extended,
                "pose": self.pose.to_dict() if self.pose else None, "obb": self.obb,
                "g_obb": self.g_obb, "L_sit": self.L_sit, "wall_time": self.wall_time}

    @classmethod
    def from_dict(cls, d: dict) -> ImaginationReport:
        return cls(tuple(DropRecord.from_dict(x) for x in d["drops"]), tuple(d["n_correct"]),
                   d["alpha_star"], d["extended"],
                   SittingPose.from_dict(d["pose"]) if d["pose"] else None, d["obb"], d["g_obb"],
                   d["L_sit"], d["wall_time"])


def _circular_mean(angles, weights) -> float:
    w = np.asarray(weights, float)
    a = np.asarray(angles, float)
    return float(math.atan2(np.sum(w * np.sin(a)), np.sum(w * np.cos(a))))


def aggregate_pose(sittings, g_obb: RigidTransform) -> SittingPose:
    """Weighted mean of chair-frame sittings mapped back through ``g_obb``.

    ``sittings`` holds ``(p_chair, gamma_chair, JL)`` triples; each weighs
    ``1/JL`` and the yaw is averaged on the circle.
    """
    if len(sittings) == 0:
        raise EmptyList("no sittings to aggregate")
    P = np.array([s[0] for s in sittings], dtype=float)
    gam = np.array([s[1] for s in sittings], dtype=float)
    w = np.array([jl_weight(s[2]) for s in sittings])
    p_bar = (w[:, None] * P).sum(axis=0) / w.sum()
    gamma_bar = _circular_mean(gam, w)
    p = g_obb.inverse_apply(p_bar)
    return SittingPose(tuple(p.tolist()), float(wrap_angle(gamma_bar - g_obb.yaw)))


class _Dropper:
    """Runs drops for one aligned chair, reusing the compiled scene."""

    def __init__(self, aligned: Mesh, obb: Obb, agent: AgentModel, sam_cfg: SamConfig, params: SimParams):
        self.aligned, self.obb, self.agent, self.cfg, self.params = aligned, obb, agent, sam_cfg, params
        self.key = pose_configuration(agent, agent.key_angles)
        self.lower = agent.group_mask("lower")
        self.scene: Scene | None = None

    def __call__(self, job) -> DropRecord:
        i, alpha, offset = job
        self.scene = build_drop_scene(self.aligned, alpha, self.agent, (offset, 0.0), self.params,
                                      obb=self.obb, scene=self.scene)
        try:
            conf = settle(self.scene, self.params)
        except Diverged:
            # a blown-up drop is never a sitting; it is kept in the report, scored as a miss
            miss = SamVerdict(0.0, 0.0, 0.0, (0,) * self.agent.m, False, False)
            return DropRecord(i, float(offset), miss, (0.0, 0.0, 0.0), 0.0, False, diverged=True)
        verdict = classify(conf, self.key, self.cfg, self.lower)
        p_chair = conf.chair.inverse_apply(conf.base.translation)
        facing = conf.chair.rotation.T @ conf.base.rotation[:, 0]
        if np.hypot(facing[0], facing[1]) < MIN_FACING_XY and verdict.correct:
            verdict = SamVerdict(verdict.J, verdict.L, verdict.H, verdict.T, verdict.phi, False)
        gamma = math.atan2(facing[1], facing[0])
        return DropRecord(i, float(offset), verdict, tuple(p_chair.tolist()), gamma, conf.settled)


_worker: _Dropper | None = None


def _init_worker(args):
    global _worker
    _worker = _Dropper(*args)


def _run_job(job):
    return _worker(job)


def _run(dropper_args, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        dropper = _Dropper(*dropper_args)
        return [dropper(j) for j in jobs]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dropper_args,)) as ex:
        return list(ex.map(_run_job, jobs))


def select_rotation(drops) -> tuple[list[int], int | None]:
    """Counts per rotation and the winner (ties go to the smallest mean ``J L``)."""
    counts = [0] * N_ROTATIONS
    jl: list[list[float]] = [[] for _ in range(N_ROTATIONS)]
    for d in drops:
        if d.correct:
            counts[d.rotation] += 1
            jl[d.rotation].append(d.verdict.JL)
    best = max(counts)
    if best == 0:
        return counts, None
    tied = [i for i in range(N_ROTATIONS) if counts[i] == best]
    star = min(tied, key=lambda i: (float(np.mean(jl[i])), i))
    return counts, star


def imagine(chair: Mesh, agent: AgentModel, sam_cfg: SamConfig, params: SimParams = SimParams(),
            workers: int = 1, scale: float = L_SIT_SCALE) -> tuple[SittingPose, ImaginationReport]:
    """Imagined sitting pose for ``chair`` in the chair mesh's own frame.

    Raises ``NoSittingFound`` (carrying the report as ``args[1]``) when no
    drop, including the extended ones, produced a correct sitting.
    """
    t0 = time.perf_counter()
    obb = compute_obb(chair)
    g_obb = obb_alignment_transform(obb)
    aligned = chair.transformed(g_obb)
    aligned_obb = Obb(g_obb.apply(obb.center), 0.0, obb.half_extents)
    sched = make_schedule(aligned_obb, extended=False, scale=scale)
    drop_agent = agent.with_damping(params.drop_damping, params.drop_friction)
    args = (aligned, aligned_obb, drop_agent, sam_cfg, params)
    drops = _run(args, sched.pairs(), workers)
    extended = sum(d.correct for d in drops) <= 1
    if extended:
        extra = [(i, a, off) for i, a in enumerate(sched.rotations) for off in extra_offsets(sched.L_sit)]
        drops += _run(args, extra, workers)
    drops = sorted(drops, key=lambda d: (d.rotation, sched_order(d.offset, sched.L_sit)))
    counts, star = select_rotation(drops)
    pose = None
    if star is not None:
        chosen = [(d.p_chair, d.gamma_chair, d.verdict.JL) for d in drops if d.rotation == star and d.correct]
        pose = aggregate_pose(chosen, g_obb)
    report = ImaginationReport(tuple(drops), tuple(counts), star, extended, pose, obb.to_dict(),
                               g_obb.to_dict(), sched.L_sit, time.perf_counter() - t0)
    if pose is None:
        raise NoSittingFound("no correct sitting in any drop", report)
    return pose, report


def sched_order(offset: float, L: float) -> int:
    """Position of an offset in the canonical schedule order 0, +L, -L, +2L, -2L, +3L, -3L."""
    k = int(round(offset / L)) if L > 0 else 0
    return 2 * abs(k) - (1 if k > 0 else 0)
