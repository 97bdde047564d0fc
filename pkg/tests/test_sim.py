import math

import numpy as np
import pytest

from seatbear.agent import default_agent, load_agent, save_agent
from seatbear.chairs import ChairGenParams, generate_chair
from seatbear.geometry import RigidTransform, compute_obb, obb_alignment_transform
from seatbear.sam import classify
from seatbear.sim import (DROP_CLEARANCE, ENERGY_SLOP, Diverged, Scene, SimParams, build_drop_scene, build_placement_scene,
                          chair_resting_transform, pose_configuration, settle)


@pytest.fixture(scope="module")
def box_chair():
    """0.3 m high seat with a solid base and an upright backrest, box-aligned."""
    gen = generate_chair(ChairGenParams(seat_height=(0.3, 0.3), backrest_angle=(0.0, 0.0), leg_style="solid"))
    g = obb_alignment_transform(compute_obb(gen.mesh))
    mesh = gen.mesh.transformed(g)
    return mesh, compute_obb(mesh), gen.seat.transformed(g)


def drop_agent(agent, params=SimParams()):
    return agent.with_damping(params.drop_damping, params.drop_friction)


def test_drop_height_and_offset(box_chair, agent):
    mesh, obb, _ = box_chair
    a = drop_agent(agent)
    for xy in ((0.0, 0.0), (0.07, 0.0)):
        scene = build_drop_scene(mesh, 0.0, a, xy, obb=obb)
        conf = scene.configuration()
        top = obb.top + chair_resting_transform(mesh, 0.0).translation[2]
        assert conf.base.translation[2] == pytest.approx(top + DROP_CLEARANCE, abs=1e-9)
        np.testing.assert_allclose(conf.base.translation[:2], xy, atol=1e-9)
        np.testing.assert_allclose(conf.theta, agent.presit_angles, atol=1e-12)


def test_empty_slot_lands_on_the_floor(agent, sam_cfg):
    scene = build_drop_scene(None, 0.0, drop_agent(agent), (0.0, 0.0))
    conf = settle(scene)
    verdict = classify(conf, pose_configuration(agent, agent.key_angles), sam_cfg, agent.group_mask("lower"))
    assert conf.pelvis_height < sam_cfg.H_min
    assert not verdict.correct


def test_zero_gravity_leaves_state_unchanged(agent):
    params = SimParams(gravity=0.0, max_time=0.2)
    scene = Scene(None, agent, params)
    scene.reset()
    base = RigidTransform(np.eye(3), (0.0, 0.0, 1.0))
    scene.set_agent(base, agent.presit_angles)
    scene.forward()
    before = scene.configuration()
    after = settle(scene, params)
    np.testing.assert_allclose(after.theta, before.theta, atol=1e-12)
    np.testing.assert_allclose(after.base.translation, before.base.translation, atol=1e-12)


def test_chair_alone_stays_upright(box_chair):
    mesh, _, _ = box_chair
    scene = Scene(mesh, None, SimParams(max_time=2.0))
    scene.reset()
    scene.set_chair_pose(chair_resting_transform(mesh, 0.3))
    scene.forward()
    mujoco_steps = settle_chair(scene)
    z = mujoco_steps.rotation[:, 2]
    assert math.degrees(math.acos(min(1.0, z[2]))) < 5.0


def settle_chair(scene):
    import mujoco

    mujoco.mj_step(scene.model, scene.data, nstep=int(1.0 / scene.params.timestep))
    return scene.chair_pose()


def test_seated_pelvis_height(box_chair, agent):
    mesh, obb, seat = box_chair
    # turn the chair so its seat faces +x like the agent, then drop over the seat center
    yaw = -seat.normal_yaw
    c, s = math.cos(yaw), math.sin(yaw)
    xy = (c * seat.center[0] - s * seat.center[1], s * seat.center[0] + c * seat.center[1])
    conf = settle(build_drop_scene(mesh, yaw, drop_agent(agent), xy, obb=obb))
    assert conf.settled
    assert conf.pelvis_height == pytest.approx(seat.center[2], abs=0.03)


def test_settle_is_deterministic(box_chair, agent):
    mesh, obb, _ = box_chair
    confs = [settle(build_drop_scene(mesh, 0.0, drop_agent(agent), (0.02, 0.0), obb=obb)) for _ in range(2)]
    np.testing.assert_array_equal(confs[0].theta, confs[1].theta)
    np.testing.assert_array_equal(confs[0].base.translation, confs[1].base.translation)
    np.testing.assert_array_equal(confs[0].contacts, confs[1].contacts)


def test_energy_never_increases(box_chair, agent):
    mesh, obb, _ = box_chair
    log = []
    settle(build_drop_scene(mesh, math.pi / 4, drop_agent(agent), (0.0, 0.0), obb=obb), energy_log=log)
    assert len(log) > 10
    assert np.max(np.diff(log)) <= ENERGY_SLOP


def test_symmetric_drop_has_symmetric_contacts(box_chair, agent):
    mesh, obb, _ = box_chair
    conf = settle(build_drop_scene(mesh, 0.0, drop_agent(agent), (0.0, 0.0), obb=obb))
    names = agent.link_names
    for part in ("thigh", "shin", "upperarm", "forearm"):
        left, right = conf.contacts[names.index(f"{part}_l")], conf.contacts[names.index(f"{part}_r")]
        assert abs(int(left) - int(right)) <= 2


def test_blow_up_is_reported(agent):
    params = SimParams(sanity_bound=0.05, max_time=1.0)
    scene = build_drop_scene(None, 0.0, drop_agent(agent, params), (0.0, 0.0), params)
    with pytest.raises(Diverged):
        settle(scene, params)


def test_release_inside_the_seat_is_lifted_clear(box_chair, agent):
    mesh, _, seat = box_chair
    g = chair_resting_transform(mesh, 0.0)
    world = mesh.transformed(g)
    top = seat.center[2] + g.translation[2]
    base = RigidTransform(np.eye(3), (seat.center[0], seat.center[1], top))
    scene = build_placement_scene(world, agent, base, agent.key_angles)
    assert scene.penetration() <= 1e-3
    lifted = scene.configuration().base.translation[2]
    assert top < lifted < top + 0.15


def test_restitution_is_fixed():
    with pytest.raises(ValueError):
        SimParams(restitution=0.2)
    with pytest.raises(ValueError):
        SimParams(timestep=0.0)


def test_agent_file_round_trip(tmp_path, agent):
    path = tmp_path / "agent.urdf"
    save_agent(agent, path)
    loaded = load_agent(path)
    assert loaded.link_names == agent.link_names
    assert loaded.joint_names == agent.joint_names
    assert loaded.total_mass == pytest.approx(agent.total_mass)
    np.testing.assert_allclose(loaded.key_angles, agent.key_angles)
    np.testing.assert_allclose(loaded.joint_limits(), agent.joint_limits())
    assert (loaded.group_mask("lower") == agent.group_mask("lower")).all()


def test_agent_partition_and_scaling():
    a = default_agent()
    lower, upper = a.group_mask("lower"), a.group_mask("upper")
    assert not (lower & upper).any() and (lower | upper).all()
    big = default_agent(height=1.8, mass=24.0)
    assert big.total_mass == pytest.approx(2 * a.total_mass)


def test_snapshot_export(tmp_path, box_chair, agent):
    import json

    mesh, obb, _ = box_chair
    scene = build_drop_scene(mesh, 0.0, drop_agent(agent), (0.0, 0.0), obb=obb)
    scene.export_snapshot(tmp_path / "snap.json")
    snap = json.loads((tmp_path / "snap.json").read_text())
    assert len(snap["chair_mesh"]["faces"]) == len(mesh.faces)
    assert any(b["name"] == "agent/pelvis" for b in snap["bodies"])


def test_key_configuration_is_upright(agent):
    conf = pose_configuration(agent, agent.key_angles)
    np.testing.assert_allclose(np.linalg.norm(conf.link_z, axis=1), 1.0, atol=1e-12)
    assert conf.facing_xy() == pytest.approx([1.0, 0.0])
