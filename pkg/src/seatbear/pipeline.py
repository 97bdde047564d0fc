"""End-to-end trials: imagine, walk (with assistance when needed), seat the
bear with the whole-body chain and judge the bear's final configuration.

A trial never raises on a planning or physics failure; every outcome is
written into the ``TrialResult``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentModel, default_agent
from .assistance import POLICIES, AssistScene, HumanPolicy, assistance_loop, attempt_plan
from .chairs import ChairGenParams, GeneratedChair, generate_chair, place
from .geometry import Mesh, Obb, PlanarPose, RigidTransform, compute_obb, load_mesh, rot_z, wrap_angle
from .imagination import NoSittingFound, SittingPose, imagine
from .nav import (Arena, Footprint, GoalOutsideArena, NavParams, Polygon, compute_goal, default_arena,
                  follow_waypoints)
from .sam import SamConfig, classify
from .sim import Diverged, SimParams, pose_configuration
from .wholebody import (Infeasible, NoTrajectory, PlanarChain, SeatingProblem, chair_obstacles, default_chain,
                        execute_and_release, goal_config, plan_seating_trajectory)

__all__ = ["PROTOCOLS", "PipelineConfig", "TrialConfig", "TrialResult", "bench_suite", "format_table",
           "load_config", "run_bench", "run_trial", "sample_placement", "summarize"]

PROTOCOLS = ("Accessible", "InaccessibleObey", "InaccessibleDisobey")
DEFAULT_POLICY = {"Accessible": "obey", "InaccessibleObey": "obey", "InaccessibleDisobey": "disobey-first"}
TABLE_ROWS = (("Accessible", "Accessible"), ("Obey", "InaccessibleObey"), ("Disobey", "InaccessibleDisobey"))
ROBOT_START = (1.75, 0.0, math.pi)


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Settings of every stage; each section maps to one dataclass or a few scalars."""

    sim: SimParams = SimParams()
    sam: dict = field(default_factory=dict)           # overrides of SamConfig.default_for
    nav: NavParams = NavParams()
    footprint: Footprint = Footprint()
    arena: dict | None = None                         # Arena.to_dict(); default arena when None
    robot_start: tuple = ROBOT_START
    chain: dict = field(default_factory=dict)         # overrides of default_chain
    w1: float = 1.0
    w2: float = 0.5
    horizon: int = 20
    duration: float = 4.0
    walk_noise: tuple = (0.01, math.radians(2.0))     # (m, rad)
    release_lift: float = 0.015                       # bear released this far above the imagined pose
    seat_gap: float = 0.03                            # pelvis origin height above the seat surface
    max_rounds: int = 3
    workers: int = 1

    def agent(self) -> AgentModel:
        return default_agent(self.sim.agent_height, self.sim.agent_mass)

    def sam_config(self, agent: AgentModel) -> SamConfig:
        return SamConfig.default_for(agent, **self.sam)

    def arena_obj(self) -> Arena:
        return Arena.from_dict(self.arena) if self.arena else default_arena()

    def chain_obj(self) -> PlanarChain:
        return default_chain(**{k: tuple(v) if isinstance(v, list) else v for k, v in self.chain.items()})

    def start(self) -> PlanarPose:
        return PlanarPose(*self.robot_start)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["sim"] = asdict(self.sim)
        d["nav"] = asdict(self.nav)
        d["footprint"] = asdict(self.footprint)
        d["robot_start"] = list(self.robot_start)
        d["walk_noise"] = list(self.walk_noise)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> PipelineConfig:
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "sim" in d:
                d["sim"] = SimParams(**d["sim"])
            if "nav" in d:
                d["nav"] = NavParams(**d["nav"])
            if "footprint" in d:
                d["footprint"] = Footprint(**d["footprint"])
            for k in ("robot_start", "walk_noise"):
                if k in d:
                    d[k] = tuple(d[k])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> dict:
    """YAML or JSON file as a plain dict (JSON is a subset of YAML)."""
    import yaml

    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return data


@dataclass(frozen=True)
class TrialConfig:
    """One trial: a chair (generator parameters or a mesh file) placed in the arena.

    ``placement = (x, y, yaw)`` moves the generated chair's canonical frame;
    for a mesh file it is applied to the file's own frame.
    """

    chair: ChairGenParams | None = None
    mesh_path: str | None = None
    placement: tuple = (1.0, 0.0, 0.0)
    protocol: str = "Accessible"
    policy: str | None = None
    seed: int = 0
    pipeline: PipelineConfig = PipelineConfig()

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.policy is not None and self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if (self.chair is None) == (self.mesh_path is None):
            raise ConfigError("give exactly one of chair parameters or a mesh path")

    @property
    def human_policy(self) -> HumanPolicy:
        return HumanPolicy(self.policy or DEFAULT_POLICY[self.protocol])

    def world_chair(self) -> tuple[Mesh, GeneratedChair | None]:
        x, y, yaw = self.placement
        if self.chair is not None:
            gen = place(generate_chair(self.chair), x, y, yaw)
            return gen.mesh, gen
        g = RigidTransform.from_yaw(yaw, (x, y, 0.0))
        return load_mesh(self.mesh_path).transformed(g), None

    def to_dict(self) -> dict:
        chair = None
        if self.chair is not None:
            chair = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.chair).items()}
        return {"chair": chair, "mesh_path": self.mesh_path, "placement": list(self.placement),
                "protocol": self.protocol, "policy": self.policy, "seed": self.seed,
                "pipeline": self.pipeline.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> TrialConfig:
        known = {"chair", "mesh_path", "placement", "protocol", "policy", "seed", "pipeline"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown trial keys: {sorted(unknown)}")
        chair = d.get("chair")
        if chair is not None:
            chair = ChairGenParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in chair.items()})
        return cls(chair, d.get("mesh_path"), tuple(d.get("placement", (1.0, 0.0, 0.0))),
                   d.get("protocol", "Accessible"), d.get("policy"), int(d.get("seed", 0)),
                   PipelineConfig.from_dict(d.get("pipeline")))


# -- scene generation ------------------------------------------------------------

def _separated(a: np.ndarray, b: np.ndarray, gap: float = 0.0) -> bool:
    """Convex polygons ``a`` and ``b`` are at least ``gap`` apart along some edge normal."""
    for poly in (a, b):
        e = np.roll(poly, -1, axis=0) - poly
        normals = np.column_stack([e[:, 1], -e[:, 0]]) / np.linalg.norm(e, axis=1)[:, None]
        pa, pb = a @ normals.T, b @ normals.T
        if np.any((pa.min(axis=0) - pb.max(axis=0) >= gap) | (pb.min(axis=0) - pa.max(axis=0) >= gap)):
            return True
    return False


def _rotation_free(obb: Obb, arena: Arena, start: PlanarPose, fp: Footprint, gap: float = 0.02) -> bool:
    """Any yaw about the box center keeps the chair inside the room and off the obstacles and the robot."""
    c = obb.center[:2]
    R = float(np.hypot(*obb.half_extents[:2])) + gap
    xmin, ymin, xmax, ymax = arena.bounds
    if not (xmin + R <= c[0] <= xmax - R and ymin + R <= c[1] <= ymax - R):
        return False
    n = 32
    circle = c + R * np.column_stack([np.cos(np.arange(n) * 2 * np.pi / n), np.sin(np.arange(n) * 2 * np.pi / n)])
    for ob in arena.all_obstacles:
        if isinstance(ob, Polygon) and not _separated(circle, ob.vertices):
            return False
    robot_r = max(fp.a, fp.b) + gap
    return bool(np.hypot(start.x - c[0], start.y - c[1]) >= R + robot_r)


def _goal_reachable(pose: SittingPose, arena: Arena, fp: Footprint, nav: NavParams) -> bool:
    try:
        compute_goal(pose, arena, fp, nav)
    except GoalOutsideArena:
        return False
    return True


def sample_placement(chair: GeneratedChair, protocol: str, rng: np.random.Generator,
                     cfg: PipelineConfig = PipelineConfig(), max_tries: int = 2000) -> tuple:
    """Chair placement ``(x, y, yaw)`` for a protocol.

    Accessible chairs sit in a 50 cm square in front of the robot and face
    it within 30 degrees. Inaccessible chairs face the arm block or a side
    wall so that no goal pose fits, while leaving room to spin the chair
    in place. Rejection sampling checks the ground-truth sitting pose
    (within 15 degrees of yaw error) against those conditions.
    """
    arena, start, fp, nav = cfg.arena_obj(), cfg.start(), cfg.footprint, cfg.nav
    for _ in range(max_tries):
        if protocol == "Accessible":
            x, y = rng.uniform(0.85, 1.35), rng.uniform(-0.25, 0.25)
            bearing = math.atan2(start.y - y, start.x - x)
            yaw = bearing + rng.uniform(-math.radians(30), math.radians(30))
        else:
            if rng.uniform() < 0.5:
                x, y = rng.uniform(0.7, 0.95), rng.uniform(-0.25, 0.25)
                yaw = math.pi + rng.uniform(-math.radians(30), math.radians(30))
            else:
                side = 1.0 if rng.uniform() < 0.5 else -1.0
                x, y = rng.uniform(0.8, 1.3), side * rng.uniform(0.2, 0.35)
                yaw = side * math.pi / 2 + rng.uniform(-math.radians(20), math.radians(20))
        placed = place(chair, x, y, yaw)
        obb = compute_obb(placed.mesh)
        if not _rotation_free(obb, arena, start, fp):
            continue
        full = arena.with_chair(obb)
        p = placed.seat.center
        poses = [SittingPose(tuple(p), placed.seat.normal_yaw + math.radians(d)) for d in (-15, 0, 15)]
        ok = [_goal_reachable(g, full, fp, nav) for g in poses]
        if protocol == "Accessible" and all(ok):
            return (float(x), float(y), float(wrap_angle(yaw)))
        if protocol != "Accessible" and not any(ok):
            return (float(x), float(y), float(wrap_angle(yaw)))
    raise ConfigError(f"no {protocol} placement found for this chair")


# -- trial ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    """Everything a trial produced, as JSON-ready values."""

    config: dict
    status: str                       # "success" or the first failing stage
    success: bool
    imagination: dict | None = None
    sitting_pose: dict | None = None
    s_goal: list | None = None
    adjusted_p: list | None = None
    initial_attempt: dict | None = None
    assistance: dict | None = None
    se2_trajectory: dict | None = None
    executed_pose: list | None = None
    wholebody: dict | None = None
    bear: dict | None = None
    verdict: dict | None = None
    messages: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    total_time: float = 0.0

    @property
    def assistance_rounds(self) -> int:
        return len(self.assistance["rounds"]) if self.assistance else 0

    def to_dict(self, timing: bool = True) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if not timing:
            d.pop("timings")
            d.pop("total_time")
            if d["imagination"] is not None:
                d["imagination"] = {k: v for k, v in d["imagination"].items() if k != "wall_time"}
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> TrialResult:
        return cls(**json.loads(text))


class _Clock:
    """Contiguous stage timer: each ``lap`` closes the current stage."""

    def __init__(self, out: dict):
        self.out = out
        self.t0 = self.last = time.perf_counter()

    def lap(self, stage: str):
        now = time.perf_counter()
        self.out[stage] = self.out.get(stage, 0.0) + max(now - self.last, 1e-9)
        self.last = now

    def total(self) -> float:
        return time.perf_counter() - self.t0


def _target_in_robot_frame(p, robot: PlanarPose) -> tuple[float, float, float]:
    h = np.array([math.cos(robot.heading), math.sin(robot.heading)])
    rel = np.asarray(p[:2], float) - (robot.x, robot.y)
    lateral = float(rel @ np.array([-h[1], h[0]]))
    return float(rel @ h), float(p[2]), lateral


def run_trial(cfg: TrialConfig) -> TrialResult:
    """One trial through every stage; failures end the trial and are recorded."""
    res = TrialResult(cfg.to_dict(), "running", False)
    clock = _Clock(res.timings)
    try:
        _run_stages(cfg, res, clock)
    finally:
        res.total_time = clock.total()
    return res


def _run_stages(cfg: TrialConfig, res: TrialResult, clock: _Clock) -> None:
    pc = cfg.pipeline
    agent = pc.agent()
    sam_cfg = pc.sam_config(agent)
    chair, _ = cfg.world_chair()
    clock.lap("setup")

    # imagination -------------------------------------------------------------
    try:
        pose, report = imagine(chair, agent, sam_cfg, pc.sim, workers=pc.workers)
    except NoSittingFound as exc:
        res.imagination = exc.args[1].to_dict()
        res.status = "NoSittingFound"
        clock.lap("imagine")
        return
    res.imagination = report.to_dict()
    res.sitting_pose = pose.to_dict()
    clock.lap("imagine")

    # accessibility, with assistance when the first attempt fails ---------------
    obb = compute_obb(chair)
    scene = AssistScene(chair, obb, pose, pc.arena_obj(), pc.start(), pc.footprint)
    attempt = attempt_plan(scene, cfg.seed, pc.nav)
    res.initial_attempt = attempt.to_dict()
    if not attempt.ok:
        outcome = assistance_loop(scene, cfg.human_policy, pc.max_rounds, cfg.seed, pc.nav)
        res.assistance = outcome.to_dict()
        if outcome.status != "Accessible":
            res.status = "Inaccessible"
            clock.lap("navigate")
            return
        scene, attempt = outcome.scene, outcome.final_attempt
    res.s_goal = attempt.s_goal.to_list()
    res.adjusted_p = list(attempt.adjusted_p)
    res.se2_trajectory = attempt.trajectory.to_dict()
    clock.lap("navigate")

    walked = follow_waypoints(attempt.trajectory, pc.walk_noise, seed=cfg.seed)
    robot = walked[-1]
    res.executed_pose = robot.to_list()
    clock.lap("walk")

    # whole-body seating ------------------------------------------------------------
    chain = pc.chain_obj()
    tx, tz, lateral = _target_in_robot_frame(attempt.adjusted_p, robot)
    tz += pc.release_lift
    seat_h = float(attempt.adjusted_p[2]) - pc.seat_gap
    obstacles = chair_obstacles(scene.obb, robot, seat_h, tx)
    problem = SeatingProblem(chain, (tx, tz), 0.0, obstacles, pc.w1, pc.w2, N=pc.horizon, duration=pc.duration)
    wb = {"problem": problem.to_dict(), "lateral_error": lateral}
    res.wholebody = wb
    try:
        q_goal = goal_config(problem)
        wb["q_goal"] = q_goal.tolist()
        wb["audit"] = {k: (float(v) if not isinstance(v, bool) else v) for k, v in problem.audit(q_goal).items()}
        traj = plan_seating_trajectory(problem, q_goal)
        wb["trajectory"] = traj.to_dict()
        wb["cost"] = traj.cost
    except (Infeasible, NoTrajectory) as exc:
        res.status = type(exc).__name__
        res.messages.append(str(exc))
        clock.lap("wholebody")
        return
    clock.lap("wholebody")

    # release and judge ---------------------------------------------------------------
    try:
        conf = execute_and_release(traj, chain, robot, scene.chair, agent, agent.key_angles, pc.sim)
    except Diverged as exc:
        res.status = "Diverged"
        res.messages.append(str(exc))
        clock.lap("release")
        return
    res.bear = conf.to_dict()
    clock.lap("release")
    # the key configuration faces the bear's settled heading so that L only measures posture
    facing = conf.facing_xy()
    heading = RigidTransform(rot_z(math.atan2(facing[1], facing[0])), (0.0, 0.0, 1.0))
    key = pose_configuration(agent, agent.key_angles, heading)
    verdict = classify(conf, key, sam_cfg, agent.group_mask("lower"))
    res.verdict = verdict.to_dict()
    res.success = bool(verdict.correct)
    res.status = "success" if verdict.correct else "IncorrectSitting"
    clock.lap("verdict")


# -- benchmark -------------------------------------------------------------------------

BENCH_VARIANTS = ("standard",) * 10 + ("improvised-stack", "step-stool-narrow-seat")
BENCH_COUNTS = {"Accessible": 3, "InaccessibleObey": 2, "InaccessibleDisobey": 1}


def bench_suite(seed: int = 0, pipeline: PipelineConfig = PipelineConfig(), n_chairs: int = 12,
                counts: dict | None = None) -> list[TrialConfig]:
    """Held-out chairs (seeds from 100 on) times the protocol counts; placements are seeded too."""
    counts = counts or BENCH_COUNTS
    suite = []
    for c in range(n_chairs):
        variant = BENCH_VARIANTS[c % len(BENCH_VARIANTS)]
        params = ChairGenParams(variant=variant, seed=100 + seed * 1000 + c)
        chair = generate_chair(params)
        for protocol in PROTOCOLS:
            for k in range(counts.get(protocol, 0)):
                trial_seed = seed * 100000 + c * 100 + PROTOCOLS.index(protocol) * 10 + k
                rng = np.random.default_rng(trial_seed)
                placement = sample_placement(chair, protocol, rng, pipeline)
                suite.append(TrialConfig(params, None, placement, protocol, None, trial_seed, pipeline))
    return suite


def _run_one(cfg: TrialConfig) -> TrialResult:
    return run_trial(cfg)


def run_bench(suite: list[TrialConfig], parallel: int = 1, progress=None) -> tuple[dict, list[TrialResult]]:
    """Run every trial and aggregate success per protocol."""
    if not suite:
        raise ConfigError("empty suite")
    if parallel > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(parallel) as ex:
            results = list(ex.map(_run_one, suite))
    else:
        results = []
        for cfg in suite:
            results.append(run_trial(cfg))
            if progress is not None:
                progress(len(results), len(suite), results[-1])
    return summarize(suite, results), results


def summarize(suite: list[TrialConfig], results: list[TrialResult]) -> dict:
    rows = []
    for label, protocol in TABLE_ROWS:
        picked = [r for c, r in zip(suite, results) if c.protocol == protocol]
        succ = sum(r.success for r in picked)
        rows.append({"protocol": label, "trials": len(picked), "successes": succ,
                     "rate": succ / len(picked) if picked else None})
    n = len(results)
    succ = sum(r.success for r in results)
    rows.append({"protocol": "Total", "trials": n, "successes": succ, "rate": succ / n})
    statuses: dict = {}
    for r in results:
        statuses[r.status] = statuses.get(r.status, 0) + 1
    return {"rows": rows, "statuses": statuses}


def format_table(summary: dict) -> str:
    lines = [f"{'protocol':<12}{'trials':>8}{'success':>9}{'rate':>8}"]
    for r in summary["rows"]:
        rate = "-" if r["rate"] is None else f"{100 * r['rate']:.1f}%"
        lines.append(f"{r['protocol']:<12}{r['trials']:>8}{r['successes']:>9}{rate:>8}")
    return "\n".join(lines)


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2))
