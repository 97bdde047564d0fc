"""Articulated humanoid agent used for sitting imagination and as the bear.

Frame conventions: the agent stands upright facing world +x with all
joints at zero. Every joint is a hinge whose positive direction is
flexion (thigh forward, knee bending backward, torso forward, arm raised
forward, elbow bending).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = ["AgentModel", "Geom", "Joint", "Link", "default_agent", "load_agent", "save_agent"]


@dataclass(frozen=True)
class Geom:
    """Collision primitive in the link frame.

    Capsule: ``size`` is the radius and ``fromto`` the two endpoints.
    Sphere: ``size`` is the radius and ``fromto[:3]`` the center.
    Box: ``size`` holds the three half extents and ``fromto[:3]`` the center.
    """

    kind: str
    size: float | tuple
    fromto: tuple

    def volume(self) -> float:
        if self.kind == "box":
            return 8.0 * float(np.prod(self.size))
        r = self.size
        if self.kind == "sphere":
            return 4.0 / 3.0 * np.pi * r**3
        a, b = np.asarray(self.fromto[:3]), np.asarray(self.fromto[3:])
        return np.pi * r**2 * float(np.linalg.norm(b - a)) + 4.0 / 3.0 * np.pi * r**3


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    geoms: tuple
    group: str  # "lower" | "upper"


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    origin: tuple  # child frame origin in the parent frame at zero angle
    axis: tuple
    lower: float
    upper: float
    damping: float = 0.1
    friction: float = 0.0  # dry friction torque, N m


@dataclass(frozen=True)
class AgentModel:
    name: str
    links: tuple
    joints: tuple
    presit: dict = field(default_factory=dict, hash=False)
    key: dict = field(default_factory=dict, hash=False)
    base: str = "pelvis"

    def __post_init__(self):
        names = [lk.name for lk in self.links]
        if names[0] != self.base:
            raise ValueError("first link must be the base link")
        children = {j.child for j in self.joints}
        if children != set(names[1:]):
            raise ValueError("every non-base link needs exactly one parent joint")
        for j in self.joints:
            if j.parent not in names:
                raise ValueError(f"unknown parent link {j.parent!r}")

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def m(self) -> int:
        return len(self.links)

    @property
    def link_names(self) -> list[str]:
        return [lk.name for lk in self.links]

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def total_mass(self) -> float:
        return float(sum(lk.mass for lk in self.links))

    def group_mask(self, group: str) -> np.ndarray:
        return np.array([lk.group == group for lk in self.links])

    def angles(self, config: dict) -> np.ndarray:
        return np.array([config.get(j.name, 0.0) for j in self.joints])

    @property
    def presit_angles(self) -> np.ndarray:
        return self.angles(self.presit)

    @property
    def key_angles(self) -> np.ndarray:
        return self.angles(self.key)

    def joint_limits(self) -> np.ndarray:
        return np.array([[j.lower, j.upper] for j in self.joints])

    def with_damping(self, damping: float, friction: float | None = None) -> AgentModel:
        joints = tuple(replace(j, damping=damping, friction=j.friction if friction is None else friction)
                       for j in self.joints)
        return replace(self, joints=joints)

    def scaled(self, height_ratio: float, mass_ratio: float) -> AgentModel:
        s = height_ratio
        links = tuple(
            replace(lk, mass=lk.mass * mass_ratio,
                    geoms=tuple(Geom(g.kind, _scale(g.size, s), tuple(np.multiply(g.fromto, s)))
                                for g in lk.geoms))
            for lk in self.links)
        joints = tuple(replace(j, origin=tuple(np.multiply(j.origin, s))) for j in self.joints)
        return replace(self, links=links, joints=joints)


def _scale(size, s):
    return tuple(float(x) * s for x in size) if isinstance(size, tuple) else float(size) * s


_FLEX_FWD = (0.0, -1.0, 0.0)   # positive angle swings -z towards +x
_FLEX_BACK = (0.0, 1.0, 0.0)   # positive angle swings -z towards -x / +z towards +x


def default_agent(height: float = 0.9, mass: float = 12.0) -> AgentModel:
    """Child-scale humanoid, 0.9 m and 12 kg at the reference scale.

    The pelvis frame sits at the height of the sitting bones so a seated
    agent's pelvis origin is about 2 cm above the seat surface.
    """
    cap = lambda r, a, b: Geom("capsule", r, tuple(a) + tuple(b))  # noqa: E731
    links = [
        # flat-sided pelvis and torso so a backrest can square the agent up
        Link("pelvis", 2.0, (Geom("box", (0.06, 0.1, 0.045), (0.0, 0.0, 0.03)),), "lower"),
        Link("torso", 5.5, (Geom("box", (0.055, 0.09, 0.08), (0.0, 0.0, 0.145)),
                            Geom("sphere", 0.075, (0.0, 0.0, 0.34, 0.0, 0.0, 0.34))), "upper"),
    ]
    joints = [Joint("waist", "pelvis", "torso", (0, 0, 0.07), _FLEX_BACK, -0.9, 0.6)]
    for side, sy in (("l", 1.0), ("r", -1.0)):
        links += [
            Link(f"thigh_{side}", 1.0, (cap(0.04, (0, 0, 0), (0, 0, -0.17)),), "lower"),
            Link(f"shin_{side}", 0.6, (cap(0.032, (0, 0, 0), (0, 0, -0.17)),), "lower"),
            Link(f"upperarm_{side}", 0.35, (cap(0.026, (0, 0, 0), (0, 0, -0.12)),), "upper"),
            Link(f"forearm_{side}", 0.3, (cap(0.023, (0, 0, 0), (0, 0, -0.12)),), "upper"),
        ]
        joints += [
            Joint(f"hip_{side}", "pelvis", f"thigh_{side}", (0, 0.06 * sy, 0.03), _FLEX_FWD, -0.4, 2.3),
            Joint(f"knee_{side}", f"thigh_{side}", f"shin_{side}", (0, 0, -0.19), _FLEX_BACK, 0.0, 2.4),
            Joint(f"shoulder_{side}", "torso", f"upperarm_{side}", (0, 0.1 * sy, 0.2), _FLEX_FWD, -1.0, 3.0),
            Joint(f"elbow_{side}", f"upperarm_{side}", f"forearm_{side}", (0, 0, -0.14), _FLEX_FWD, 0.0, 2.4),
        ]
    presit = {"waist": -0.15, "hip_l": 1.57, "hip_r": 1.57, "knee_l": 0.15, "knee_r": 0.15,
              "shoulder_l": 0.5, "shoulder_r": 0.5, "elbow_l": 0.6, "elbow_r": 0.6}
    key = {"waist": -0.5, "hip_l": 1.6, "hip_r": 1.6, "knee_l": 1.4, "knee_r": 1.4,
           "shoulder_l": 0.4, "shoulder_r": 0.4, "elbow_l": 0.6, "elbow_r": 0.6}
    # link order: base first, then in joint order
    order = ["pelvis", "torso"] + [j.child for j in joints[1:]]
    by_name = {lk.name: lk for lk in links}
    model = AgentModel("child_agent", tuple(by_name[n] for n in order), tuple(joints), presit, key)
    return model.scaled(height / 0.9, mass / 12.0)


def _fmt(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def save_agent(agent: AgentModel, path) -> None:
    """Write a URDF-style description (capsule geometry, ``group`` tags, named configurations)."""
    robot = ET.Element("robot", name=agent.name, base=agent.base)
    for lk in agent.links:
        le = ET.SubElement(robot, "link", name=lk.name, group=lk.group)
        inertial = ET.SubElement(le, "inertial")
        ET.SubElement(inertial, "mass", value=repr(lk.mass))
        for g in lk.geoms:
            geo = ET.SubElement(ET.SubElement(le, "collision"), "geometry")
            if g.kind == "box":
                ET.SubElement(geo, "box", size=_fmt(g.size), pos=_fmt(g.fromto))
            else:
                ET.SubElement(geo, g.kind, radius=repr(g.size), fromto=_fmt(g.fromto))
    for j in agent.joints:
        je = ET.SubElement(robot, "joint", name=j.name, type="revolute")
        ET.SubElement(je, "parent", link=j.parent)
        ET.SubElement(je, "child", link=j.child)
        ET.SubElement(je, "origin", xyz=_fmt(j.origin))
        ET.SubElement(je, "axis", xyz=_fmt(j.axis))
        ET.SubElement(je, "limit", lower=repr(j.lower), upper=repr(j.upper))
        ET.SubElement(je, "dynamics", damping=repr(j.damping), friction=repr(j.friction))
    for cname, cfg in (("presit", agent.presit), ("key", agent.key)):
        ce = ET.SubElement(robot, "configuration", name=cname)
        for jn, val in cfg.items():
            ET.SubElement(ce, "joint", name=jn, value=repr(float(val)))
    tree = ET.ElementTree(robot)
    ET.indent(tree)
    tree.write(str(path), encoding="unicode", xml_declaration=True)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split())


def load_agent(path) -> AgentModel:
    root = ET.parse(str(Path(path))).getroot()
    links = []
    for le in root.findall("link"):
        geoms = []
        for geo in le.iter("geometry"):
            for g in geo:
                if g.tag == "box":
                    geoms.append(Geom("box", _floats(g.get("size")), _floats(g.get("pos"))))
                else:
                    geoms.append(Geom(g.tag, float(g.get("radius")), _floats(g.get("fromto"))))
        mass = float(le.find("inertial/mass").get("value"))
        links.append(Link(le.get("name"), mass, tuple(geoms), le.get("group", "lower")))
    joints = []
    for je in root.findall("joint"):
        lim = je.find("limit")
        dyn = je.find("dynamics")
        joints.append(Joint(je.get("name"), je.find("parent").get("link"),
                            je.find("child").get("link"), _floats(je.find("origin").get("xyz")),
                            _floats(je.find("axis").get("xyz")), float(lim.get("lower")),
                            float(lim.get("upper")),
                            float(dyn.get("damping")) if dyn is not None else 0.1,
                            float(dyn.get("friction", 0.0)) if dyn is not None else 0.0))
    configs = {ce.get("name"): {j.get("name"): float(j.get("value")) for j in ce.findall("joint")}
               for ce in root.findall("configuration")}
    return AgentModel(root.get("name", "agent"), tuple(links), tuple(joints),
                      configs.get("presit", {}), configs.get("key", {}), root.get("base", "pelvis"))
