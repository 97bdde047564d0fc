import math

import numpy as np
import pytest
from oracles import ellipse_hits_polygon, grid_reachable, random_arena

from seatbear.geometry import Obb, PlanarPose, wrap_angle
from seatbear.imagination import SittingPose
from seatbear.nav import (Arena, Disc, Footprint, GoalOutsideArena, NavParams, NoPlan, Polygon, Se2Trajectory,
                          compute_goal, follow_waypoints, footprint_collides, footprint_collides_batch, plan_se2)

OPEN = Arena((-1.0, -1.0, 3.0, 1.0))
FP = Footprint(0.1, 0.15)


def test_goal_on_an_open_floor():
    s, p = compute_goal(SittingPose((0.5, 0.0, 0.3), 0.0), OPEN, FP, NavParams(l_init=0.3, d_max_reach=0.4))
    assert (s.x, s.y) == pytest.approx((0.8, 0.0))
    assert wrap_angle(s.heading - math.pi) == pytest.approx(0.0)
    np.testing.assert_allclose(p, (0.5, 0.0, 0.3))


def test_goal_is_pushed_past_the_chair():
    obb = Obb((0.5, 0.0, 0.2), 0.0, (0.35, 0.2, 0.2))  # reaches 0.35 m past p along +x
    arena = OPEN.with_chair(obb)
    s, _ = compute_goal(SittingPose((0.5, 0.0, 0.3), 0.0), arena, FP, NavParams(l_init=0.3, d_max_reach=1.0))
    assert s.x - 0.5 >= 0.35 + FP.a
    assert not footprint_collides(s, arena, FP)


def test_reach_limit_pulls_the_bear_forward():
    obb = Obb((0.5, 0.0, 0.2), 0.0, (0.5 - FP.a * 1.1 - 0.01, 0.2, 0.2))
    params = NavParams(l_init=0.2, d_max_reach=0.4, advance_step=0.001)
    s, p = compute_goal(SittingPose((0.5, 0.0, 0.3), 0.0), OPEN.with_chair(obb), FP, params)
    dist = s.x - 0.5
    assert p[0] - 0.5 == pytest.approx(dist - 0.4)
    assert p[1:] == pytest.approx((0.0, 0.3))


def test_goal_leaving_the_arena():
    with pytest.raises(GoalOutsideArena):
        compute_goal(SittingPose((2.85, 0.0, 0.3), 0.0), OPEN, FP)


def test_collision_basics():
    box = Polygon.rectangle(1.0, -0.2, 1.4, 0.2)
    arena = Arena(OPEN.bounds, (box,))
    assert not footprint_collides(PlanarPose(0.0, 0.0, 0.0), arena, FP)
    assert footprint_collides(PlanarPose(1.2, 0.0, 1.0), arena, FP)
    assert footprint_collides(PlanarPose(-0.95, 0.0, 0.0), arena, FP)
    disc = Arena(OPEN.bounds, (Disc((0.0, 0.5), 0.1),))
    assert footprint_collides(PlanarPose(0.0, 0.3, 0.0), disc, FP)
    assert not footprint_collides(PlanarPose(0.0, 0.21, math.pi / 2), disc, FP)


@pytest.mark.parametrize("heading", [0.0, 0.4, math.pi / 2, 2.3])
@pytest.mark.parametrize("gap", [-0.001, 0.001])
def test_tangent_contact_matches_sampling(heading, gap):
    # the ellipse's extent along +x is sqrt((a cos h)^2 + (b sin h)^2)
    ext = math.hypot(FP.a * math.cos(heading), FP.b * math.sin(heading))
    edge = ext + gap
    poly = np.array([[edge, -0.5], [edge + 0.3, -0.5], [edge + 0.3, 0.5], [edge, 0.5]])
    arena = Arena(OPEN.bounds, (Polygon(poly),))
    pose = (0.0, 0.0, heading)
    assert footprint_collides(PlanarPose(*pose), arena, FP) == ellipse_hits_polygon(pose, FP.a, FP.b, poly)
    assert footprint_collides(PlanarPose(*pose), arena, FP) == (gap < 0)


def test_batch_agrees_with_sampling_oracle():
    rng = np.random.default_rng(5)
    tri = np.array([[0.3, -0.1], [0.6, 0.05], [0.35, 0.3]])
    arena = Arena(OPEN.bounds, (Polygon(tri),))
    poses = np.column_stack([rng.uniform(0.0, 0.9, 300), rng.uniform(-0.4, 0.6, 300), rng.uniform(-3, 3, 300)])
    fast = footprint_collides_batch(poses, arena, FP)
    slow = [ellipse_hits_polygon(q, FP.a, FP.b, tri, n=2000) for q in poses]
    assert (fast == np.array(slow)).mean() >= 0.99  # coarser sampling may miss grazing hits


def test_plan_on_an_empty_floor():
    traj = plan_se2(PlanarPose(0, 0, 0), PlanarPose(1, 0, math.pi), OPEN, FP, seed=1)
    assert traj.waypoints[0] == PlanarPose(0, 0, 0)
    assert traj.waypoints[-1] == PlanarPose(1, 0, math.pi)
    xy = traj.as_array()[:, :2]
    length = np.linalg.norm(np.diff(xy, axis=0), axis=1).sum()
    assert 1.0 - 1e-9 <= length <= 1.5


def test_goal_inside_the_chair_has_no_plan():
    arena = OPEN.with_chair(Obb((1.0, 0.0, 0.2), 0.0, (0.2, 0.2, 0.2)))
    with pytest.raises(NoPlan):
        plan_se2(PlanarPose(0, 0, 0), PlanarPose(1.0, 0.0, 0.0), arena, FP)


def test_split_arena_agrees_with_grid_search():
    wall = Polygon.rectangle(0.9, -1.0, 1.0, 1.0)
    arena = Arena(OPEN.bounds, (wall,))
    assert not grid_reachable(arena, (0.0, 0.0), (2.0, 0.0), FP.a - 0.02)
    with pytest.raises(NoPlan):
        plan_se2(PlanarPose(0, 0, 0), PlanarPose(2.0, 0, 0), arena, FP, params=NavParams(budget=3000))


def test_plans_are_deterministic_and_clear():
    rng = np.random.default_rng(11)
    arena, start, goal = random_arena(rng)
    a = plan_se2(PlanarPose(*start), PlanarPose(*goal), arena, FP, seed=3)
    b = plan_se2(PlanarPose(*start), PlanarPose(*goal), arena, FP, seed=3)
    assert a == b
    dense = a.densified(a.resolution_xy / 2, a.resolution_heading / 2)
    assert not footprint_collides_batch(dense, arena, FP).any()


def test_follow_waypoints():
    traj = Se2Trajectory((PlanarPose(0, 0, 0), PlanarPose(0.5, 0.1, 1.0), PlanarPose(1, 0, 3.0)))
    assert follow_waypoints(traj)[-1] == traj.waypoints[-1]
    for seed in range(20):
        end = follow_waypoints(traj, (0.01, math.radians(2)), seed=seed)[-1]
        assert math.hypot(end.x - 1, end.y) <= 0.01
        assert abs(wrap_angle(end.heading - 3.0)) <= math.radians(2) + 1e-12
    single = Se2Trajectory((PlanarPose(0.3, 0.2, 0.1),))
    assert follow_waypoints(single) == [PlanarPose(0.3, 0.2, 0.1)]
    assert plan_se2(PlanarPose(0.3, 0.2, 0.1), PlanarPose(0.3, 0.2, 0.1), OPEN, FP).waypoints == single.waypoints


def test_serialisation_round_trip():
    arena = Arena(OPEN.bounds, (Polygon.rectangle(0, 0, 0.2, 0.2), Disc((1.0, 0.0), 0.1)))
    assert Arena.from_dict(arena.to_dict()).to_dict() == arena.to_dict()
    traj = plan_se2(PlanarPose(-0.5, 0, 0), PlanarPose(0.5, 0.5, 1.0), arena, FP, seed=2)
    assert Se2Trajectory.from_dict(traj.to_dict()) == traj
