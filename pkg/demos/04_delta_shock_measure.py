"""Build the measure-valued solution, check admissibility and weak residuals."""

from delta_piston import (
    MeasureField,
    RiemannSetup,
    TestFunction,
    entropy_check,
    solve,
    weak_residual_cauchy,
)

if __name__ == "__main__":
    s = RiemannSetup(4.0, 1.0, 1.0, -1.0, 1.0, 0.0)
    field = MeasureField.from_trajectory(solve(s))
    print("snapshot at t=2:", field.snapshot(2.0))
    print("entropy:", entropy_check(field.trajectory, s))

    phi = TestFunction(x0=0.1, t0=1.5, sx=0.6, st=0.5, phi_id="bump")
    for order in (4, 8, 16, 32):
        r_mass, r_mom = weak_residual_cauchy(field, phi, order)
        print(f"order {order:2d}: mass {r_mass:+.2e}  momentum {r_mom:+.2e}")

    bad = field.with_weights(field.weights.scaled(alpha=2.0))
    print("doubled atom mass:", weak_residual_cauchy(bad, phi, 32))
