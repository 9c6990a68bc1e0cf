"""Approximate the gas by sticky particles and watch the error shrink with n."""

from delta_piston import RiemannSetup, convergence_study, simulate, solve

if __name__ == "__main__":
    s = RiemannSetup(4.0, 1.0, 1.0, -1.0, 1.0, 0.0)
    out = simulate(s, 2000, 5.0)
    print(f"n=2000: {out.event_count} events, momentum drift {out.max_momentum_drift:.1e}")
    print(f"x1(5) particles {out.trajectory().position(5.0):.8f}  closed {solve(s).position(5.0):.8f}")

    # a catch-up setup gives a cleaner trend than the two-sided one
    rows, order = convergence_study(RiemannSetup(1.0, 3.0, 1.0, 1.0, 1.0, 0.0),
                                    [250, 500, 1000, 2000, 4000], t_probe=2.0)
    for n, err in rows:
        print(f"   n={n:5d}  |x1 - closed| = {err:.3e}")
    print("observed order:", order)
