"""Integrate the momentum and Newton forms and compare with the closed form."""

import numpy as np

from delta_piston import IntegratorConfig, RiemannSetup, integrate, solve

if __name__ == "__main__":
    s = RiemannSetup(1.0, 3.0, 1.0, 1.0, 1.0, 0.0)
    t = np.linspace(0.0, 10.0, 2001)
    ref = solve(s).position(t)
    cfg = IntegratorConfig(t_end=10.0)
    for form in ("first", "second"):
        traj, events = integrate(s, cfg, form=form)
        err = np.max(np.abs(traj.position(t) - ref) / (1 + np.abs(ref)))
        print(f"{form:6s} form: max relative error {err:.2e}")
        for ev in events:
            print(f"   catch-up at t={ev.time:.12f} on the {ev.side} side, "
                  f"velocity {ev.pre_velocity:.6f} -> {ev.post_velocity:.6f}")
