import math

import numpy as np
import pytest

from seatbear.chairs import ChairGenParams, generate_chair, place
from seatbear.geometry import PlanarPose, compute_obb, wrap_angle
from seatbear.sam import classify
from seatbear.sim import pose_configuration
from seatbear.wholebody import (Infeasible, JointLimit, PlanarChain, SeatingProblem, SeatingTrajectory,
                                bear_world_pose, chair_obstacles, default_chain, execute_and_release,
                                expand_symmetric, forward_kinematics, goal_config, plan_seating_trajectory,
                                segment_rect_distance)

CHAIN = default_chain()


def blocked_problem(tx=0.3, tz=0.3, **kw):
    rects = ((tx - 0.13, 0.0, tx + 0.2, tz - 0.03), (tx + 0.08, 0.0, tx + 0.2, 0.6))
    return SeatingProblem(CHAIN, (tx, tz), 0.0, rects, **kw)


# a small block sitting on the forearm's path when the joints are simply interpolated
BLOCK = (0.014, 0.602, 0.054, 0.642)


@pytest.fixture(scope="module")
def solved():
    problem = SeatingProblem(CHAIN, (0.3, 0.35), 0.0, (BLOCK,))
    q_goal = goal_config(problem)
    return problem, q_goal, plan_seating_trajectory(problem, q_goal)


def test_upright_chain():
    ch = default_chain(payload=0.0)
    st = forward_kinematics(ch, np.zeros(ch.n))
    assert st.end_effector == pytest.approx((0.0, ch.base_height + sum(ch.lengths)))
    assert st.com_x == pytest.approx(0.0, abs=1e-15)


def test_two_link_chain_by_hand():
    ch = PlanarChain(("a", "b"), (1.0, 1.0), (1.0, 1.0), (-3, -3), (3, 3), (1, 1), (0, 0), base_height=0.0,
                     torso_index=1, payload=0.0)
    st = forward_kinematics(ch, (math.pi / 2, 0.0))
    assert st.end_effector == pytest.approx((2.0, 0.0), abs=1e-12)
    st = forward_kinematics(ch, (math.pi / 2, -math.pi / 2))
    assert st.end_effector == pytest.approx((1.0, 1.0), abs=1e-12)
    assert st.com_x == pytest.approx((0.5 + 1.0) / 2)


def test_com_matches_point_sampling():
    rng = np.random.default_rng(0)
    t = (np.arange(1000) + 0.5) / 1000
    for _ in range(5):
        q = rng.uniform(CHAIN.lower, CHAIN.upper)
        st = forward_kinematics(CHAIN, q)
        P = st.points
        xs = [np.mean(P[i, 0] + t * (P[i + 1, 0] - P[i, 0])) for i in range(CHAIN.n)]
        com = (np.dot(xs, CHAIN.masses) + CHAIN.payload * st.bear_position[0]) / CHAIN.total_mass
        assert st.com_x == pytest.approx(com, abs=1e-6)


def test_joint_limits_are_enforced():
    with pytest.raises(JointLimit):
        forward_kinematics(CHAIN, np.full(CHAIN.n, 5.0))


def test_open_target_is_solved_cleanly():
    problem = SeatingProblem(CHAIN, (0.3, 0.35), 0.0)
    q = goal_config(problem)
    audit = problem.audit(q)
    assert audit["bear_error"] < 1e-3 and audit["pitch_error"] < 1e-3
    assert audit["com_margin"] > problem.com_margin - 1e-9
    assert audit["limits"]


def test_far_target_is_infeasible():
    reach = sum(CHAIN.lengths) + abs(CHAIN.bear_offset[1])
    with pytest.raises(Infeasible):
        goal_config(SeatingProblem(CHAIN, (2 * reach, 0.3), 0.0))


def test_torso_weight_ordering():
    relaxed = goal_config(SeatingProblem(CHAIN, (0.3, 0.3), 0.0, w2=0.0))
    strict = goal_config(SeatingProblem(CHAIN, (0.3, 0.3), 0.0, w2=10.0))
    ti = CHAIN.torso_index
    assert abs(np.sum(strict[:ti + 1])) <= abs(np.sum(relaxed[:ti + 1])) + 1e-6


def test_constant_trajectory():
    problem = SeatingProblem(CHAIN, (0.3, 0.3), 0.0)
    traj = plan_seating_trajectory(problem, problem.start)
    assert traj.cost == 0.0 and len(traj) == problem.N
    assert np.all(traj.q == problem.start)


def test_open_trajectory_cost_is_monotone():
    problem = SeatingProblem(CHAIN, (0.3, 0.35), 0.0)
    q_goal = goal_config(problem)
    traj = plan_seating_trajectory(problem, q_goal)
    costs = traj.step_costs(q_goal)
    assert np.all(np.diff(costs) <= 1e-9)
    np.testing.assert_allclose(traj.q[-1], q_goal)


def test_blocking_chair_is_avoided(solved):
    problem, q_goal, traj = solved
    straight = problem.start + np.linspace(0, 1, problem.N)[:, None] * (q_goal - problem.start)
    assert not all(problem.audit(q)["clearance"] >= 0 for q in straight[1:-1])
    for q in traj.q[1:-1]:
        a = problem.audit(q)
        assert a["clearance"] >= 0 and a["limits"] and a["com_margin"] >= problem.com_margin - 1e-9
    step = np.abs(np.diff(traj.q, axis=0))
    assert np.all(step <= np.asarray(CHAIN.vel_limits) * problem.dt + 1e-6)


def _fd(fun, q, h=1e-6):
    cols = []
    for j in range(len(q)):
        e = np.zeros(len(q))
        e[j] = h
        cols.append((np.atleast_1d(fun(q + e)[0]) - np.atleast_1d(fun(q - e)[0])) / (2 * h))
    return np.column_stack(cols)


def test_gradients_match_central_differences():
    problem = blocked_problem()
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 100:
        q = rng.uniform(CHAIN.lower, CHAIN.upper)
        # stay away from the kinks at obstacle boundaries and at zero torso pitch
        if problem.audit(q)["clearance"] < 0.02:
            continue
        for fun in (problem.goal_objective, problem.goal_eq, problem.stability, problem.collision):
            _, jac = fun(q)
            fd = _fd(fun, q)
            jac = np.atleast_2d(jac).reshape(fd.shape)
            assert np.linalg.norm(jac - fd) <= 1e-4 * max(np.linalg.norm(fd), 1.0)
        checked += 1


def test_goal_beats_nearby_feasible_postures(solved):
    problem, q_goal, _ = solved
    f_goal = problem.goal_objective(q_goal)[0]
    rng = np.random.default_rng(3)
    found = 0
    for _ in range(1000):
        q = q_goal + rng.normal(scale=0.15, size=CHAIN.n)
        for _ in range(20):  # Gauss-Newton back onto the bear constraints
            c, J = problem.goal_eq(q)
            q = q - np.linalg.lstsq(J, c, rcond=None)[0]
        if problem.accepts(q):
            found += 1
            assert problem.goal_objective(q)[0] >= f_goal - 1e-6
    assert found >= 50


def test_symmetric_expansion(solved):
    _, q_goal, _ = solved
    full = expand_symmetric(CHAIN, q_goal)
    for name in CHAIN.names:
        assert full[f"{name}_l"] == full[f"{name}_r"]


def test_segment_rect_distance():
    rect = (0.0, 0.0, 1.0, 1.0)
    assert segment_rect_distance((2, 0.5), (3, 0.5), rect) == pytest.approx(1.0)
    assert segment_rect_distance((-1, 0.5), (2, 0.5), rect) < 0
    assert segment_rect_distance((2, 2), (3, 3), rect) == pytest.approx(math.sqrt(2))


def test_trajectory_round_trip(solved):
    _, _, traj = solved
    back = SeatingTrajectory.from_dict(traj.to_dict())
    np.testing.assert_array_equal(back.q, traj.q)


@pytest.fixture(scope="module")
def seat_scene():
    gen = generate_chair(ChairGenParams(seat_height=(0.3, 0.3), backrest_angle=(0.0, 0.0), leg_style="solid"))
    chair = place(gen, 0.0, 0.0, 0.0)
    seat = chair.seat
    d = np.array([math.cos(seat.normal_yaw), math.sin(seat.normal_yaw)])
    xy = np.asarray(seat.center[:2]) + 0.33 * d
    robot = PlanarPose(float(xy[0]), float(xy[1]), float(wrap_angle(seat.normal_yaw + math.pi)))
    return chair, robot


def test_release_on_the_seat(seat_scene, agent, sam_cfg):
    chair, robot = seat_scene
    seat = chair.seat
    tz = seat.center[2] + 0.05
    obstacles = chair_obstacles(compute_obb(chair.mesh), robot, seat.center[2] - 0.01, 0.33)
    problem = SeatingProblem(CHAIN, (0.33, tz), 0.0, obstacles)
    q_goal = goal_config(problem)
    traj = SeatingTrajectory(q_goal[None, :], np.zeros(1))
    commanded = bear_world_pose(CHAIN, q_goal, robot)
    conf = execute_and_release(traj, CHAIN, robot, chair.mesh, agent, agent.key_angles)
    assert np.linalg.norm(conf.base.translation[:2] - commanded.translation[:2]) <= 0.03
    assert abs(math.degrees(wrap_angle(conf.base.yaw - commanded.yaw))) <= 15
    key = pose_configuration(agent, agent.key_angles, commanded)
    assert classify(conf, key, sam_cfg, agent.group_mask("lower")).correct


def test_release_in_free_space(agent, sam_cfg):
    chain = default_chain()
    robot = PlanarPose(0.0, 0.0, 0.0)
    problem = SeatingProblem(chain, (0.3, 0.3 + 0.045), 0.0)
    q_goal = goal_config(problem)
    conf = execute_and_release(SeatingTrajectory(q_goal[None, :], np.zeros(1)), chain, robot, None, agent,
                               agent.key_angles)
    key = pose_configuration(agent, agent.key_angles)
    assert not classify(conf, key, sam_cfg, agent.group_mask("lower")).correct


def test_empty_trajectory_releases_nothing(agent):
    empty = SeatingTrajectory(np.zeros((0, CHAIN.n)), np.zeros(0))
    assert execute_and_release(empty, CHAIN, PlanarPose(0, 0, 0), None, agent, agent.key_angles) is None
