"""Walk through one end-to-end trial and print what each stage produced.

Usage: ``python demos/one_trial.py [protocol] [chair seed]`` where protocol
is Accessible, InaccessibleObey or InaccessibleDisobey.
"""

import sys

import numpy as np

from seatbear.chairs import ChairGenParams, generate_chair
from seatbear.pipeline import TrialConfig, run_trial, sample_placement


def main(protocol: str = "InaccessibleObey", seed: int = 101) -> None:
    params = ChairGenParams(seed=seed)
    chair = generate_chair(params)
    placement = sample_placement(chair, protocol, np.random.default_rng(seed))
    print(f"chair seed {seed}, placed at x={placement[0]:.2f} y={placement[1]:.2f} yaw={placement[2]:.2f}")
    r = run_trial(TrialConfig(params, None, placement, protocol, None, seed))

    if r.sitting_pose:
        p, g = r.sitting_pose["p"], r.sitting_pose["gamma"]
        print(f"imagined sitting: p=({p[0]:.3f}, {p[1]:.3f}, {p[2]:.3f}) gamma={g:.2f} "
              f"from correct drops per rotation {r.imagination['n_correct']}")
    print(f"first plan attempt: {r.initial_attempt['status'] if r.initial_attempt else '-'}")
    if r.assistance:
        for k, rnd in enumerate(r.assistance["rounds"], 1):
            print(f"  round {k}: \"{rnd['instruction']}\" (human turned {rnd['applied_degrees']:.0f} deg) "
                  f"-> {rnd['attempt']['status']}")
    if r.s_goal:
        print(f"goal pose s_goal = ({r.s_goal[0]:.3f}, {r.s_goal[1]:.3f}, {r.s_goal[2]:.2f}), "
              f"{len(r.se2_trajectory['waypoints'])} waypoints")
    if r.wholebody and "cost" in r.wholebody:
        print(f"seating motion cost {r.wholebody['cost']:.4f}, q_goal {np.round(r.wholebody['q_goal'], 2)}")
    if r.verdict:
        v = r.verdict
        print(f"bear verdict: J={v['J']:.3f} L={v['L']:.3f} H={v['H']:.3f} phi={v['phi']} correct={v['correct']}")
    print(f"status {r.status}, success {r.success}, {r.total_time:.1f} s")
    for stage, t in r.timings.items():
        print(f"  {stage:<10}{t:7.2f} s")


if __name__ == "__main__":
    main(*(sys.argv[1:2] or ["InaccessibleObey"]), *([int(sys.argv[2])] if len(sys.argv) > 2 else []))
