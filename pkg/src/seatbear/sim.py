"""Rigid-body scenes for sitting drops and bear placement (MuJoCo backend).

A scene holds a static ground plane, the chair as a free dynamic body and
the articulated agent. Contacts are inelastic: every contact uses a
critically damped constraint (damping ratio 1), so nothing bounces.

Chair collision geometry is derived from the mesh: each connected shell
becomes a box when it is box shaped, its convex hull when it is close to
convex, and a set of voxel boxes otherwise.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import lru_cache

import mujoco
import numpy as np

from .agent import AgentModel
from .geometry import Mesh, Obb, RigidTransform, rot_z

__all__ = ["Configuration", "Diverged", "Scene", "SimParams", "build_drop_scene", "lift_clear",
           "build_placement_scene", "collision_parts", "pose_configuration", "settle", "DROP_CLEARANCE"]

DROP_CLEARANCE = 0.15  # base link height above the chair box top before a drop
# documented solver slop for the energy audit (J per check interval)
ENERGY_SLOP = 5e-3


class Diverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SimParams:
    gravity: float = 9.81
    timestep: float = 0.002
    restitution: float = 0.0
    agent_friction: float = 0.9
    ground_friction: float = 1.0
    ke_threshold: float = 1e-4        # J
    settle_window: float = 0.25       # s below threshold
    max_time: float = 10.0            # s
    check_interval: int = 10          # steps between energy checks
    drop_damping: float = 0.05        # N m s / rad, imagination drops
    drop_friction: float = 0.5        # N m, dry joint friction during drops
    bear_damping: float = 3.0         # N m s / rad, bear placement
    armature: float = 0.01
    sanity_bound: float = 50.0        # m
    agent_height: float = 0.9
    agent_mass: float = 12.0

    def __post_init__(self):
        if self.timestep <= 0:
            raise ValueError("timestep must be positive")
        if self.restitution != 0.0:
            raise ValueError("contacts are inelastic; restitution is fixed at 0")

    @classmethod
    def from_dict(cls, d: dict) -> SimParams:
        return cls(**d)


@dataclass(frozen=True)
class Part:
    kind: str                   # "box" | "mesh"
    pos: np.ndarray
    rot: np.ndarray
    half: np.ndarray | None = None
    vertices: np.ndarray | None = None


def _box_fit(points: np.ndarray):
    import trimesh

    to_origin, extents = trimesh.bounds.oriented_bounds(points, ordered=False)
    T = np.linalg.inv(to_origin)
    return T[:3, 3], T[:3, :3], np.asarray(extents) / 2


def _voxel_boxes(comp, pitch: float) -> list[Part]:
    vox = comp.voxelized(pitch).fill()
    occ = vox.matrix.copy()
    T = vox.transform
    parts = []
    nx, ny, nz = occ.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not occ[i, j, k]:
                    continue
                i1 = i
                while i1 + 1 < nx and occ[i1 + 1, j, k]:
                    i1 += 1
                j1 = j
                while j1 + 1 < ny and occ[i:i1 + 1, j1 + 1, k].all():
                    j1 += 1
                k1 = k
                while k1 + 1 < nz and occ[i:i1 + 1, j:j1 + 1, k1 + 1].all():
                    k1 += 1
                occ[i:i1 + 1, j:j1 + 1, k:k1 + 1] = False
                lo = T @ np.array([i - 0.5, j - 0.5, k - 0.5, 1.0])
                hi = T @ np.array([i1 + 0.5, j1 + 0.5, k1 + 0.5, 1.0])
                parts.append(Part("box", (lo[:3] + hi[:3]) / 2, np.eye(3), np.abs(hi[:3] - lo[:3]) / 2))
    return parts


def collision_parts(mesh: Mesh, voxel_pitch: float = 0.01) -> list[Part]:
    """Convex pieces approximating the mesh, in the mesh frame."""
    import trimesh

    tm = trimesh.Trimesh(mesh.vertices, mesh.faces, process=True)
    parts = []
    for comp in tm.split(only_watertight=False):
        if len(comp.vertices) < 4:
            continue
        try:
            hull = comp.convex_hull
        except Exception:  # coplanar shell
            continue
        hull_vol = hull.volume
        if hull_vol < 1e-12:
            continue
        concave = comp.is_watertight and abs(comp.volume) < 0.85 * hull_vol
        if concave:
            parts.extend(_voxel_boxes(comp, voxel_pitch))
            continue
        pos, rot, half = _box_fit(hull.vertices)
        if 8.0 * np.prod(half) <= hull_vol * 1.02:
            parts.append(Part("box", pos, rot, np.maximum(half, 1e-4)))
        else:
            parts.append(Part("mesh", np.zeros(3), np.eye(3), vertices=np.asarray(hull.vertices)))
    return parts


@dataclass
class Configuration:
    """Agent state after (or before) simulation.

    ``link_z`` holds the world z axis of every link frame (rows follow the
    agent's link order); ``contacts`` counts contact points between each
    link and the chair.
    """

    theta: np.ndarray
    base: RigidTransform
    link_z: np.ndarray
    contacts: np.ndarray
    chair: RigidTransform = field(default_factory=RigidTransform)
    time: float = 0.0
    settled: bool = True

    @property
    def pelvis_height(self) -> float:
        return float(self.base.translation[2])

    def facing_xy(self) -> np.ndarray:
        return self.base.rotation[:2, 0]

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "base": self.base.to_dict(),
                "link_z": self.link_z.tolist(), "contacts": self.contacts.tolist(),
                "chair": self.chair.to_dict(), "time": self.time, "settled": self.settled}

    @classmethod
    def from_dict(cls, d: dict) -> Configuration:
        return cls(np.array(d["theta"]), RigidTransform.from_dict(d["base"]), np.array(d["link_z"]),
                   np.array(d["contacts"]), RigidTransform.from_dict(d["chair"]), d["time"], d["settled"])


def _quat_from_mat(R: np.ndarray) -> np.ndarray:
    q = np.zeros(4)
    mujoco.mju_mat2Quat(q, np.ascontiguousarray(R, dtype=float).ravel())
    return q


def _s(v) -> str:
    return " ".join(f"{float(x):.12g}" for x in np.ravel(v))


def _agent_xml(parent: ET.Element, agent: AgentModel, friction: float, armature: float):
    by_parent: dict[str, list] = {}
    for j in agent.joints:
        by_parent.setdefault(j.parent, []).append(j)
    links = {lk.name: lk for lk in agent.links}

    def add_geoms(body, link):
        vols = np.array([g.volume() for g in link.geoms])
        for g, v in zip(link.geoms, vols):
            attrs = {"name": f"agent/{link.name}/{len(body)}", "type": g.kind, "size": _s(g.size),
                     "mass": f"{link.mass * v / vols.sum():.12g}", "contype": "1", "conaffinity": "6",
                     "friction": f"{friction} 0.005 0.0001"}
            if g.kind in ("sphere", "box"):
                attrs["pos"] = _s(g.fromto[:3])
            else:
                attrs["fromto"] = _s(g.fromto)
            ET.SubElement(body, "geom", attrs)

    def add_body(parent_el, link_name, joint):
        body = ET.SubElement(parent_el, "body", name=f"agent/{link_name}", pos=_s(joint.origin))
        ET.SubElement(body, "joint", name=f"agent/{joint.name}", type="hinge", axis=_s(joint.axis),
                      range=f"{joint.lower:.12g} {joint.upper:.12g}", damping=f"{joint.damping:.12g}",
                      frictionloss=f"{joint.friction:.12g}",
                      armature=f"{armature:.12g}", limited="true")
        add_geoms(body, links[link_name])
        for cj in by_parent.get(link_name, []):
            add_body(body, cj.child, cj)

    root = ET.SubElement(parent, "body", name=f"agent/{agent.base}", pos="0 0 1")
    ET.SubElement(root, "freejoint", name="agent/root")
    add_geoms(root, links[agent.base])
    for cj in by_parent.get(agent.base, []):
        add_body(root, cj.child, cj)


def _model_xml(chair_parts, chair: Mesh | None, agent: AgentModel | None, params: SimParams) -> str:
    mj = ET.Element("mujoco", model="scene")
    ET.SubElement(mj, "compiler", angle="radian", autolimits="true")
    opt = ET.SubElement(mj, "option", timestep=f"{params.timestep:.12g}",
                        gravity=f"0 0 {-params.gravity:.12g}", integrator="implicitfast")
    ET.SubElement(opt, "flag", energy="enable", multiccd="enable")
    ET.SubElement(mj, "size", memory="16M")
    default = ET.SubElement(mj, "default")
    # damping ratio 1: critically damped contact, no rebound
    ET.SubElement(default, "geom", solref="0.004 1", solimp="0.95 0.99 0.001")
    asset = ET.SubElement(mj, "asset")
    world = ET.SubElement(mj, "worldbody")
    ET.SubElement(world, "geom", name="ground", type="plane", size="0 0 1", contype="4", conaffinity="1",
                  friction=f"{params.ground_friction} 0.005 0.0001")
    if chair is not None:
        body = ET.SubElement(world, "body", name="chair", pos="0 0 0")
        ET.SubElement(body, "freejoint", name="chair/root")
        I = chair.inertia
        ET.SubElement(body, "inertial", pos=_s(chair.com), mass=f"{chair.mass:.12g}",
                      fullinertia=_s([I[0, 0], I[1, 1], I[2, 2], I[0, 1], I[0, 2], I[1, 2]]))
        fr = f"{chair.friction} 0.005 0.0001"
        for i, p in enumerate(chair_parts):
            common = {"name": f"chair/{i}", "contype": "2", "conaffinity": "5", "friction": fr,
                      "pos": _s(p.pos), "quat": _s(_quat_from_mat(p.rot)), "mass": "0", "density": "0"}
            if p.kind == "box":
                ET.SubElement(body, "geom", type="box", size=_s(p.half), **common)
            else:
                ET.SubElement(asset, "mesh", name=f"chairmesh{i}", vertex=_s(p.vertices))
                ET.SubElement(body, "geom", type="mesh", mesh=f"chairmesh{i}", **common)
    if agent is not None:
        _agent_xml(world, agent, params.agent_friction, params.armature)
    return ET.tostring(mj, encoding="unicode")


class Scene:
    """Compiled MuJoCo model plus bookkeeping. Single owner; not thread-safe."""

    def __init__(self, chair: Mesh | None, agent: AgentModel | None, params: SimParams,
                 parts: list[Part] | None = None):
        self.chair = chair
        self.agent = agent
        self.params = params
        self.parts = parts if parts is not None else (collision_parts(chair) if chair is not None else [])
        self.xml = _model_xml(self.parts, chair, agent, params)
        self.model = mujoco.MjModel.from_xml_string(self.xml)
        self.data = mujoco.MjData(self.model)
        m = self.model
        self.chair_body = mujoco.mj_name2id(m, mujoco.mjtObj.mjOBJ_BODY, "chair") if chair is not None else -1
        if agent is not None:
            self.link_bodies = np.array([mujoco.mj_name2id(m, mujoco.mjtObj.mjOBJ_BODY, f"agent/{n}")
                                         for n in agent.link_names])
            jids = [mujoco.mj_name2id(m, mujoco.mjtObj.mjOBJ_JOINT, f"agent/{n}") for n in agent.joint_names]
            self.joint_qpos = np.array([m.jnt_qposadr[j] for j in jids])
            self.joint_dof = np.array([m.jnt_dofadr[j] for j in jids])
            root = mujoco.mj_name2id(m, mujoco.mjtObj.mjOBJ_JOINT, "agent/root")
            self.agent_qpos = int(m.jnt_qposadr[root])
            self.agent_dof = int(m.jnt_dofadr[root])
            body_to_link = -np.ones(m.nbody, dtype=int)
            body_to_link[self.link_bodies] = np.arange(agent.m)
            self.body_to_link = body_to_link
        if chair is not None:
            cj = mujoco.mj_name2id(m, mujoco.mjtObj.mjOBJ_JOINT, "chair/root")
            self.chair_qpos = int(m.jnt_qposadr[cj])
        self.frozen_chair = False

    # -- state setters -------------------------------------------------
    def reset(self):
        mujoco.mj_resetData(self.model, self.data)

    def set_chair_pose(self, g: RigidTransform):
        a = self.chair_qpos
        self.data.qpos[a:a + 3] = g.translation
        self.data.qpos[a + 3:a + 7] = _quat_from_mat(g.rotation)

    def set_agent(self, base: RigidTransform, theta):
        a = self.agent_qpos
        self.data.qpos[a:a + 3] = base.translation
        self.data.qpos[a + 3:a + 7] = _quat_from_mat(base.rotation)
        self.data.qpos[self.joint_qpos] = theta
        self.data.qvel[:] = 0.0

    def forward(self):
        mujoco.mj_forward(self.model, self.data)

    # -- readouts --------------------------------------------------------
    def contact_counts(self) -> np.ndarray:
        counts = np.zeros(self.agent.m, dtype=int)
        d, m = self.data, self.model
        for i in range(d.ncon):
            c = d.contact[i]
            b1, b2 = m.geom_bodyid[c.geom1], m.geom_bodyid[c.geom2]
            for a, b in ((b1, b2), (b2, b1)):
                if b == self.chair_body and self.body_to_link[a] >= 0:
                    counts[self.body_to_link[a]] += 1
        return counts

    def penetration(self) -> float:
        """Deepest overlap between the agent and anything else, after a forward pass."""
        d, m = self.data, self.model
        depth = 0.0
        for i in range(d.ncon):
            c = d.contact[i]
            l1 = self.body_to_link[m.geom_bodyid[c.geom1]]
            l2 = self.body_to_link[m.geom_bodyid[c.geom2]]
            if (l1 >= 0) != (l2 >= 0):
                depth = max(depth, -float(c.dist))
        return depth

    def chair_pose(self) -> RigidTransform:
        if self.chair_body < 0:
            return RigidTransform()
        d = self.data
        return RigidTransform(d.xmat[self.chair_body].reshape(3, 3), d.xpos[self.chair_body])

    def configuration(self, settled: bool = True) -> Configuration:
        d = self.data
        base_id = self.link_bodies[0]
        base = RigidTransform(d.xmat[base_id].reshape(3, 3).copy(), d.xpos[base_id].copy())
        link_z = d.xmat[self.link_bodies].reshape(-1, 3, 3)[:, :, 2].copy()
        theta = d.qpos[self.joint_qpos].copy()
        return Configuration(theta, base, link_z, self.contact_counts(), self.chair_pose(),
                             float(d.time), settled)

    def kinetic_energy(self) -> float:
        return float(self.data.energy[1])

    def total_energy(self) -> float:
        return float(self.data.energy[0] + self.data.energy[1])

    def snapshot(self) -> dict:
        """Meshes and poses for offline rendering."""
        out = {"bodies": []}
        d, m = self.data, self.model
        if self.chair is not None:
            out["chair_mesh"] = {"vertices": self.chair.vertices.tolist(), "faces": self.chair.faces.tolist()}
            out["chair_pose"] = self.chair_pose().to_dict()
        for b in range(1, m.nbody):
            out["bodies"].append({"name": mujoco.mj_id2name(m, mujoco.mjtObj.mjOBJ_BODY, b),
                                  "pos": d.xpos[b].tolist(), "rot": d.xmat[b].reshape(3, 3).tolist()})
        out["geoms"] = [{"name": mujoco.mj_id2name(m, mujoco.mjtObj.mjOBJ_GEOM, g),
                         "type": int(m.geom_type[g]), "size": m.geom_size[g].tolist(),
                         "pos": d.geom_xpos[g].tolist(), "rot": d.geom_xmat[g].reshape(3, 3).tolist()}
                        for g in range(m.ngeom)]
        return out

    def export_snapshot(self, path):
        with open(path, "w") as fh:
            json.dump(self.snapshot(), fh)


def chair_resting_transform(chair: Mesh, yaw: float) -> RigidTransform:
    """Yaw about the world z axis, lifted so the lowest vertex touches the ground."""
    zmin = float(chair.vertices[:, 2].min())
    return RigidTransform(rot_z(yaw), (0.0, 0.0, -zmin))


def build_drop_scene(chair: Mesh | None, chair_yaw: float, agent: AgentModel, drop_xy,
                     params: SimParams = SimParams(), obb: Obb | None = None,
                     scene: Scene | None = None) -> Scene:
    """Drop set-up for one (rotation, offset) pair.

    ``chair`` must already be in its box-aligned frame (box center on the z
    axis). The chair is rotated by ``chair_yaw`` about the world z axis and
    rests on the ground; the agent, in its pre-sitting configuration and
    facing +x, has its base link ``DROP_CLEARANCE`` above the box top.
    Passing a previously built ``scene`` for the same chair and agent
    reuses the compiled model.
    """
    if scene is None:
        scene = Scene(chair, agent, params)
    scene.reset()
    top = 0.0
    if chair is not None:
        g = chair_resting_transform(chair, chair_yaw)
        scene.set_chair_pose(g)
        top = (obb.top if obb is not None else float(chair.vertices[:, 2].max())) + g.translation[2]
    base = RigidTransform(np.eye(3), (float(drop_xy[0]), float(drop_xy[1]), top + DROP_CLEARANCE))
    scene.set_agent(base, agent.presit_angles)
    scene.forward()
    return scene


def lift_clear(scene: Scene, base: RigidTransform, theta, step: float = 0.002, max_lift: float = 0.3,
               tol: float = 1e-3) -> float:
    """Raise the agent from ``base`` until it no longer overlaps the chair or floor; returns the lift."""
    lift = 0.0
    while True:
        scene.set_agent(RigidTransform(base.rotation, base.translation + (0.0, 0.0, lift)), theta)
        scene.forward()
        if scene.penetration() <= tol or lift >= max_lift:
            return lift
        lift += step


def build_placement_scene(chair: Mesh | None, agent: AgentModel, base: RigidTransform, theta,
                          params: SimParams = SimParams()) -> Scene:
    """Chair at its current world pose (mesh frame = world) and the agent released at ``base``.

    A release pose that would start inside the chair is raised just far
    enough to be free, the way a carrier lowers its load until it touches.
    """
    scene = Scene(chair, agent, params)
    scene.reset()
    if chair is not None:
        scene.set_chair_pose(RigidTransform())
    lift_clear(scene, base, theta)
    return scene


def settle(scene: Scene, params: SimParams | None = None, energy_log: list | None = None) -> Configuration:
    """Step until kinetic energy stays below the threshold for the settle window.

    Returns the final configuration; ``settled`` is False when the time
    budget ran out first.
    """
    params = params or scene.params
    m, d = scene.model, scene.data
    k = max(1, int(params.check_interval))
    need = max(1, math.ceil(params.settle_window / (k * params.timestep)))
    quiet = 0
    max_steps = int(round(params.max_time / params.timestep))
    steps = 0
    if energy_log is not None:
        energy_log.append(scene.total_energy())
    while steps < max_steps:
        mujoco.mj_step(m, d, nstep=k)
        steps += k
        if energy_log is not None:
            energy_log.append(scene.total_energy())
        pos = d.xpos[1:]
        if not np.all(np.isfinite(pos)) or np.abs(pos).max() > params.sanity_bound or \
                d.warning[mujoco.mjtWarning.mjWARN_BADQACC].number > 0:
            raise Diverged(f"simulation blew up at t={d.time:.3f}s")
        if scene.kinetic_energy() < params.ke_threshold:
            quiet += 1
            if quiet >= need:
                return scene.configuration(settled=True)
        else:
            quiet = 0
    return scene.configuration(settled=False)


@lru_cache(maxsize=16)
def _pose_scene(agent: AgentModel) -> Scene:
    return Scene(None, agent, SimParams())


def pose_configuration(agent: AgentModel, theta, base: RigidTransform | None = None) -> Configuration:
    """Kinematic configuration (no simulation) for joint angles ``theta``.

    With the default base the agent is upright and faces +x, which is how
    the key configuration is defined.
    """
    scene = _pose_scene(agent)
    scene.reset()
    scene.set_agent(base or RigidTransform(np.eye(3), (0.0, 0.0, 1.0)), np.asarray(theta, float))
    scene.forward()
    return scene.configuration()
