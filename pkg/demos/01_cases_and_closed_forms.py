"""Classify a handful of setups and evaluate their closed-form trajectories."""

import numpy as np

from delta_piston import RiemannSetup, classify, solve

SETUPS = {
    "two-sided, symmetric": RiemannSetup(1.0, 1.0, 1.0, -1.0, 1.0, 0.0),
    "two-sided, heavy left": RiemannSetup(4.0, 1.0, 1.0, -1.0, 1.0, 0.0),
    "right gas only": RiemannSetup(1.0, 1.0, 1.0, 2.0, 1.0, 0.0),
    "left catches up later": RiemannSetup(1.0, 3.0, 1.0, 1.0, 1.0, 0.0),
    "both gases recede": RiemannSetup(1.0, -1.0, 1.0, 1.0, 1.0, 0.0),
}

if __name__ == "__main__":
    t = np.array([0.0, 0.5, 1.0, 4.0, 10.0])
    for name, s in SETUPS.items():
        traj = solve(s)
        print(f"{name:24s} {classify(s)}")
        print("   x1 =", np.array2string(traj.position(t), precision=6))
        print("   v  =", np.array2string(traj.velocity(t), precision=6))
        print(f"   limit velocity {traj.limit_velocity:.6f}  t1 {traj.t1}")
