"""Pilot run that fixes the effective-hyperbolicity statistic thresholds.

Runs orbit ensembles of the slowed system from leaf-volume-typical seeds,
prints the EH1 running means, the EH1' joint lower densities per q, and the
EH2 angle frequencies per threshold.  The acceptance thresholds frozen in
config.EhtConfig were chosen from this script's output (seed 20260810):
EH1' lower density comfortably above 0.1 for q <= 20, EH2 frequencies 0 for
theta_bar <= 1.0.

Run:  python3 scripts/pilot_thresholds.py [n_orbits] [orbit_len]
"""

import sys
import time

import numpy as np

from ehsrb import build_system, default_config
from ehsrb.curves import straight_seed
from ehsrb.eht import eh_statistics, orbit_log


def main():
    n_orbits = int(sys.argv[1]) if len(sys.argv) > 1 else 8
    n_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 1200
    cfg = default_config()
    system = build_system(cfg.system)
    rng = np.random.default_rng(20260810)
    curve = straight_seed(
        system, np.array([1.5, 0.3, 0.0]), 0.02, 4001, cfg=cfg.curves
    )
    s = curve.arc_params()
    q_list = [0, 5, 10, 20]
    theta_grid = list(cfg.eht.theta_bar_grid)

    means, dens, freqs = [], [], []
    for k in range(n_orbits):
        pos = rng.uniform(s[0], s[-1])
        x0 = np.stack(
            [np.interp(pos, s, curve.points[:, j]) for j in range(3)]
        )
        t0 = time.time()
        log = orbit_log(system, x0, n_steps, cone_cfg=cfg.cones)
        stats = eh_statistics(
            log, cfg.eht.lambda_bar, cfg.eht.big_c, q_list, theta_grid,
            cfg=cfg.eht, cone_cfg=cfg.cones,
        )
        means.append(stats["eh1_final_mean"])
        dens.append([e["density_lower"] for e in stats["eh1_prime"]])
        freqs.append([e["freq"] for e in stats["eh2"]])
        print(
            f"orbit {k}: mean={stats['eh1_final_mean']:.4f} "
            f"eh1'={[round(d, 3) for d in dens[-1]]} "
            f"({time.time() - t0:.1f} s)"
        )
    dens = np.array(dens)
    freqs = np.array(freqs)
    print("\nEH1 mean of means:", float(np.mean(means)))
    for j, q in enumerate(q_list):
        print(f"q={q}: min lower density {dens[:, j].min():.4f}")
    for j, tb in enumerate(theta_grid):
        print(f"theta_bar={tb}: max freq {freqs[:, j].max():.4f}")


if __name__ == "__main__":
    main()
