"""Sitting affordance model: score a settled agent against the key configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .agent import AgentModel
from .sim import Configuration

__all__ = ["LengthMismatch", "SamConfig", "SamVerdict", "classify", "contact_ok",
           "joint_angle_score", "link_rotation_score", "JL_EPS", "jl_weight"]

JL_EPS = 1e-9


class LengthMismatch(ValueError):
    pass


def _theta(c) -> np.ndarray:
    return np.asarray(c.theta if isinstance(c, Configuration) else c, dtype=float)


def _link_z(c) -> np.ndarray:
    return np.asarray(c.link_z if isinstance(c, Configuration) else c, dtype=float)


def joint_angle_score(res, key, w_J) -> float:
    """Weighted L1 distance between joint-angle vectors."""
    a, b, w = _theta(res), _theta(key), np.asarray(w_J, dtype=float)
    if not (a.shape == b.shape == w.shape):
        raise LengthMismatch(f"joint vectors {a.shape}, {b.shape}, weights {w.shape}")
    return float(np.sum(w * np.abs(a - b)))


def link_rotation_score(res, key, w_L) -> float:
    """Weighted misalignment ``sum w (1 - z_res . z_key)`` of link z axes."""
    a, b, w = _link_z(res), _link_z(key), np.asarray(w_L, dtype=float)
    if a.shape != b.shape or a.shape[0] != w.shape[0]:
        raise LengthMismatch(f"link axes {a.shape}, {b.shape}, weights {w.shape}")
    return float(np.sum(w * (1.0 - np.einsum("ij,ij->i", a, b))))


def contact_ok(T, lower_mask, min_total: int) -> bool:
    T = np.asarray(T)
    lower = np.asarray(lower_mask, dtype=bool)
    return bool(T.sum() > min_total and T[lower].sum() > 0 and T[~lower].sum() > 0)


@dataclass(frozen=True)
class SamConfig:
    """Weights and thresholds.

    Defaults were calibrated on three held-out procedural chairs (see
    ``demos/calibrate_sam.py``); they are not published values.
    """

    w_J: tuple
    w_L: tuple
    J_max: float
    L_max: float
    H_min: float
    H_max: float
    min_contacts: int = 3

    def __post_init__(self):
        if min(self.w_J, default=0) < 0 or min(self.w_L, default=0) < 0:
            raise ValueError("weights must be non-negative")
        if not (self.J_max > 0 and self.L_max > 0 and 0 <= self.H_min < self.H_max):
            raise ValueError("thresholds must be positive with H_min < H_max")

    @classmethod
    def default_for(cls, agent: AgentModel, **overrides) -> SamConfig:
        jw = {"waist": 1.0, "hip": 0.6, "knee": 0.15, "shoulder": 0.0, "elbow": 0.0}
        lw = {"pelvis": 1.0, "torso": 1.5, "thigh": 0.5, "shin": 0.0, "upperarm": 0.0, "forearm": 0.0}
        w_J = tuple(jw.get(n.split("_")[0], 0.0) for n in agent.joint_names)
        w_L = tuple(lw.get(n.split("_")[0], 0.0) for n in agent.link_names)
        base = dict(w_J=w_J, w_L=w_L, J_max=1.5, L_max=0.6, H_min=0.19, H_max=0.45, min_contacts=3)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["w_J"], d["w_L"] = list(self.w_J), list(self.w_L)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SamConfig:
        d = dict(d)
        d["w_J"], d["w_L"] = tuple(d["w_J"]), tuple(d["w_L"])
        return cls(**d)


@dataclass(frozen=True)
class SamVerdict:
    J: float
    L: float
    H: float
    T: tuple = field(default=())
    phi: bool = False
    correct: bool = False

    @property
    def JL(self) -> float:
        return self.J * self.L

    def to_dict(self) -> dict:
        return {"J": self.J, "L": self.L, "H": self.H, "T": list(self.T), "phi": self.phi,
                "correct": self.correct, "JL": self.JL}

    @classmethod
    def from_dict(cls, d: dict) -> SamVerdict:
        return cls(d["J"], d["L"], d["H"], tuple(d["T"]), d["phi"], d["correct"])


def jl_weight(jl: float) -> float:
    """Aggregation weight ``1/(J L)`` with ``J L`` clamped below at ``JL_EPS``."""
    return 1.0 / max(float(jl), JL_EPS)


def classify(res: Configuration, key: Configuration, cfg: SamConfig, lower_mask) -> SamVerdict:
    """Correct sitting iff ``J < J_max``, ``L < L_max``, ``H_min < H < H_max`` and contacts pass.

    ``H`` is the pelvis origin height above the ground plane.
    """
    J = joint_angle_score(res, key, cfg.w_J)
    L = link_rotation_score(res, key, cfg.w_L)
    H = res.pelvis_height
    T = np.asarray(res.contacts)
    phi = contact_ok(T, lower_mask, cfg.min_contacts)
    correct = J < cfg.J_max and L < cfg.L_max and cfg.H_min < H < cfg.H_max and phi
    return SamVerdict(J, L, H, tuple(int(t) for t in T), phi, bool(correct))
