"""Compare the three simulated human policies on one blocked chair.

The chair faces the arm obstacle, so the robot cannot reach a goal pose
until the chair is turned. The script prints every instruction and what
the human did with it.
"""

import numpy as np

from seatbear.assistance import AssistScene, HumanPolicy, assistance_loop, attempt_plan
from seatbear.chairs import ChairGenParams, generate_chair, place
from seatbear.geometry import compute_obb
from seatbear.imagination import SittingPose
from seatbear.pipeline import PipelineConfig, sample_placement


def main(seed: int = 7) -> None:
    pc = PipelineConfig()
    chair = generate_chair(ChairGenParams(seed=seed))
    x, y, yaw = sample_placement(chair, "InaccessibleObey", np.random.default_rng(seed), pc)
    placed = place(chair, x, y, yaw)
    pose = SittingPose(tuple(placed.seat.center), placed.seat.normal_yaw)
    scene = AssistScene(placed.mesh, compute_obb(placed.mesh), pose, pc.arena_obj(), pc.start(), pc.footprint)
    print(f"chair at ({x:.2f}, {y:.2f}), first attempt: {attempt_plan(scene, seed, pc.nav).status}")
    for policy in ("obey", "disobey-first", "always-disobey"):
        out = assistance_loop(scene, HumanPolicy(policy), pc.max_rounds, seed, pc.nav)
        print(f"\n{policy}: {out.status} after {len(out.rounds)} round(s)")
        for r in out.rounds:
            print(f"  \"{r.instruction.text}\" -> turned {np.degrees(r.g_rot.yaw):.0f} deg, {r.attempt.status}")


if __name__ == "__main__":
    main()
