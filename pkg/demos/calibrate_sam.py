"""Print the SAM score split on three calibration chairs.

Each drop of the base schedule is listed with its scores, then the script
reports how far the correct and incorrect drops sit from the default
thresholds. Run with ``python demos/calibrate_sam.py``.
"""

import numpy as np

from seatbear.agent import default_agent
from seatbear.chairs import ChairGenParams, generate_chair
from seatbear.imagination import NoSittingFound, imagine
from seatbear.sam import SamConfig

CALIBRATION_SEEDS = (900, 901, 902)


def main() -> None:
    agent = default_agent()
    cfg = SamConfig.default_for(agent)
    print(f"thresholds: J < {cfg.J_max}, L < {cfg.L_max}, {cfg.H_min} < H < {cfg.H_max}, "
          f"contacts > {cfg.min_contacts}")
    rows = []
    for seed in CALIBRATION_SEEDS:
        chair = generate_chair(ChairGenParams(seed=seed))
        try:
            _, report = imagine(chair.mesh, agent, cfg)
        except NoSittingFound as exc:
            report = exc.args[1]
        print(f"\nchair seed {seed}: correct per rotation {report.n_correct}")
        print(f"{'rot':>4}{'offset':>8}{'J':>8}{'L':>8}{'H':>7}{'phi':>5}  correct")
        for d in report.drops:
            v = d.verdict
            print(f"{d.rotation:>4}{d.offset:>8.3f}{v.J:>8.3f}{v.L:>8.3f}{v.H:>7.3f}{str(v.phi)[0]:>5}  {v.correct}")
            rows.append((v.J, v.L, v.H, v.correct))
    a = np.array(rows, float)
    good, bad = a[a[:, 3] == 1], a[a[:, 3] == 0]
    print(f"\n{len(good)} correct drops: max J {good[:, 0].max():.3f}, max L {good[:, 1].max():.3f}, "
          f"H in [{good[:, 2].min():.3f}, {good[:, 2].max():.3f}]")
    seated = bad[(bad[:, 2] > cfg.H_min) & (bad[:, 2] < cfg.H_max)]
    if len(seated):
        print(f"{len(seated)} incorrect drops at seat height: min J {seated[:, 0].min():.3f}, "
              f"min L {seated[:, 1].min():.3f}")


if __name__ == "__main__":
    main()
