import json
import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import random_setups, setups
from delta_piston.closed_form import solve
from delta_piston.measure import (
    RESIDUAL_HEADER,
    Atom,
    Constant,
    MeasureField,
    PistonBody,
    TestFunction,
    UnresolvedSupport,
    Vacuum,
    delta_weights,
    entropy_check,
    piston_forces,
    rh_consistency,
    sample,
    weak_residual_cauchy,
    weak_residual_ibvp,
    write_residual_csv,
)
from delta_piston.ode import IntegratorConfig, integrate
from delta_piston.particles import simulate
from delta_piston.problem import RiemannSetup

T = np.linspace(0.0, 10.0, 201)


def test_weights_symmetric(sym_case1):
    w = delta_weights(solve(sym_case1))
    assert np.allclose(w.alpha(T), 2 * T + 1, rtol=0, atol=1e-14)
    assert np.all(np.asarray(w.wm(T)) == 0.0)


def test_weights_case2(ref_case2):
    w = delta_weights(solve(ref_case2))
    assert np.allclose(w.alpha(T), np.sqrt(2 * T + 1), atol=1e-14)
    assert w.alpha(4.0) == pytest.approx(3.0, abs=1e-14)
    assert w.wm(4.0) == pytest.approx(2.0, abs=1e-14)


@given(setups())
def test_weights_start_from_piston_data(s):
    w = delta_weights(solve(s))
    assert w.alpha(0.0) == s.m0
    assert w.wm(0.0) == pytest.approx(s.m0 * s.u0, abs=1e-15)


@settings(max_examples=50)
@given(setups())
def test_momentum_weight_is_mass_times_velocity(s):
    tr = solve(s)
    w = delta_weights(tr)
    v = tr.velocity(T)
    assert np.allclose(w.wm(T), np.asarray(w.alpha(T)) * v, rtol=1e-11, atol=1e-11)
    assert np.allclose(w.wn(T), np.asarray(w.wm(T)) * v, rtol=1e-14, atol=0)
    assert np.all(np.asarray(w.alpha(T)) >= s.m0)


def test_forces_examples(sym_case1, ref_case2):
    tr = solve(sym_case1)
    for t in (0.0, 0.5, 7.0):
        assert piston_forces(tr, sym_case1, t) == (1.0, 1.0)
    w2 = delta_weights(solve(ref_case2))
    assert np.all(np.asarray(w2.wp2(T)) == 0.0)
    tr6 = solve(RiemannSetup(1, -1, 1, 1, 1, 0))
    assert piston_forces(tr6, None, 3.0) == (0.0, 0.0)


@settings(max_examples=50)
@given(setups())
def test_forces_nonnegative_and_close_newton(s):
    w = delta_weights(solve(s))
    t = T[1:]
    f1, f2 = np.asarray(w.wp1(t)), np.asarray(w.wp2(t))
    assert np.all(f1 >= -1e-12 * (1 + f1)) and np.all(f2 >= -1e-12 * (1 + f2))
    acc = np.asarray(w.accel(t))
    scale = np.maximum(np.abs(acc), (np.abs(f1) + np.abs(f2)) / s.m0)
    assert np.all(np.abs((f1 - f2) / s.m0 - acc) <= 1e-9 * np.maximum(scale, 1e-300))


def test_entropy_examples(asym_case1):
    tr = solve(asym_case1)
    rep = entropy_check(tr, asym_case1, T[1:])
    assert rep.passed and rep.worst_margin > 0
    assert entropy_check(solve(RiemannSetup(1, -1, 1, 1, 1, 0))).passed
    bad = tr.replace(position=lambda t: 2 * np.asarray(t), velocity=lambda t: 2 + 0 * np.asarray(t))
    rep = entropy_check(bad, asym_case1, T)
    assert not rep.passed and rep.worst_margin < 0


@pytest.mark.parametrize("case", [1, 2, 3, 4, 5, 6])
def test_entropy_holds_for_every_case(case):
    for s in random_setups(case, 10, seed=31):
        assert entropy_check(solve(s), s, T).passed


def test_vacuum_side_overtaken_fails(ref_case2):
    tr = solve(ref_case2)
    # a path that runs through the receding right gas without absorbing it
    fast = tr.replace(position=lambda t: 3 * np.asarray(t), velocity=lambda t: 3 + 0 * np.asarray(t))
    assert not entropy_check(fast, ref_case2, T).passed


def test_sample_examples():
    s = RiemannSetup(1, 1, 1, 2, 1, 0, 0.1)
    tr = solve(s)
    f = MeasureField.from_trajectory(tr)
    assert sample(f, 3.0, 1.0) == Constant(1.0, 2.0)
    assert sample(f, 1.5, 1.0) == Vacuum()
    x1 = tr.position(1.0)
    assert x1 == pytest.approx(2 - math.sqrt(3))
    atom = sample(f, x1, 1.0)
    assert isinstance(atom, Atom) and atom.alpha == pytest.approx(math.sqrt(3))
    assert sample(f, -5.0, 1.0) == Constant(1.0, 1.0)
    # the slab itself belongs to the piston in the physical view
    assert isinstance(sample(f, x1 + 0.05, 1.0), Atom)
    riemann = f.with_view("riemann")
    assert sample(riemann, x1 + 0.05, 1.0) == Vacuum()
    with pytest.raises(ValueError):
        sample(f, 0.0, -1.0)


@settings(max_examples=30)
@given(setups(l=True))
def test_regions_partition_the_line(s):
    tr = solve(s)
    for view in ("piston", "riemann"):
        f = MeasureField.from_trajectory(tr, view=view)
        for t in (0.5, 3.0):
            regs = f.regions(t)
            assert regs[0][0] == -math.inf and regs[-1][1] == math.inf
            x1 = tr.position(t)
            gaps = [(a[1], b[0]) for a, b in zip(regs, regs[1:])]
            for hi, lo in gaps:
                # the only hole is the atom itself (riemann view)
                assert hi == lo or (view == "riemann" and hi == lo == x1)
            kinds = {type(st) for _, _, st in regs}
            if view == "riemann":
                assert PistonBody not in kinds


def test_snapshot_json(ref_case2):
    f = MeasureField.from_trajectory(solve(ref_case2.replace(l=0.2)))
    snap = json.loads(f.to_json(1.0))
    assert snap["t"] == 1.0
    assert snap["regions"][0]["lo"] is None and snap["regions"][-1]["hi"] is None
    assert any(r.get("vacuum") for r in snap["regions"])
    assert set(snap["atom"]) == {"x", "alpha", "wm", "v"}


def test_cauchy_residual_symmetric(sym_case1):
    f = MeasureField.from_trajectory(solve(sym_case1))
    r = weak_residual_cauchy(f, TestFunction(0.0, 1.0, 0.5, 0.5), 32)
    assert max(map(abs, r)) <= 1e-8


def test_cauchy_residual_away_from_shock(asym_case1):
    f = MeasureField.from_trajectory(solve(asym_case1))
    r = weak_residual_cauchy(f, TestFunction(-5.0, 1.0, 0.5, 0.5), 16)
    assert max(map(abs, r)) <= 1e-13


def test_corrupted_alpha_is_detected(sym_case1):
    f = MeasureField.from_trajectory(solve(sym_case1))
    bad = f.with_weights(f.weights.scaled(alpha=2.0))
    r_mass, _ = weak_residual_cauchy(bad, TestFunction(0.0, 1.0, 0.5, 0.5), 32)
    assert abs(r_mass) > 1e-3


@pytest.mark.parametrize("case", [1, 2, 3, 4, 5, 6])
def test_residuals_vanish_for_every_case(case):
    for s in random_setups(case, 4, seed=41):
        s = s.replace(l=0.3)
        tr = solve(s)
        f = MeasureField.from_trajectory(tr)
        for tc in (0.4, 1.5):
            x = tr.position(tc)
            phi = TestFunction(x + 0.1, tc, 0.7, 0.6)
            assert max(map(abs, weak_residual_cauchy(f, phi, 32))) <= 1e-8
            assert max(map(abs, weak_residual_ibvp("left", f, phi, 32))) <= 1e-6
            phr = TestFunction(x + s.l - 0.1, tc, 0.7, 0.6)
            assert max(map(abs, weak_residual_ibvp("right", f, phr, 32))) <= 1e-6


def test_ibvp_left_asymmetric(asym_case1):
    f = MeasureField.from_trajectory(solve(asym_case1))
    phi = TestFunction(0.2, 1.0, 0.5, 0.5)
    assert max(map(abs, weak_residual_ibvp("left", f, phi, 32))) <= 1e-6
    zero = f.with_weights(f.weights.replace(wp1=lambda t: 0.0 * np.asarray(t)))
    _, r_mom = weak_residual_ibvp("left", zero, phi, 32)
    assert abs(r_mom) > 1e-3


def test_ibvp_support_below_time_zero(asym_case1):
    f = MeasureField.from_trajectory(solve(asym_case1))
    phi = TestFunction(0.0, -1.0, 0.5, 0.5)
    assert weak_residual_ibvp("left", f, phi) == (0.0, 0.0)
    assert weak_residual_cauchy(f, phi) == (0.0, 0.0)
    with pytest.raises(ValueError):
        weak_residual_ibvp("middle", f, phi)


def test_initial_line_terms(asym_case1):
    f = MeasureField.from_trajectory(solve(asym_case1))
    phi = TestFunction(0.1, 0.1, 0.6, 0.4)  # straddles t = 0
    assert max(map(abs, weak_residual_cauchy(f, phi, 32))) <= 1e-10
    assert max(map(abs, weak_residual_ibvp("left", f, phi, 32))) <= 1e-10
    assert max(map(abs, weak_residual_ibvp("right", f, phi, 32))) <= 1e-10


def test_unresolved_support(ref_case2):
    tr, _ = integrate(ref_case2, IntegratorConfig(t_end=2.0))
    f = MeasureField.from_trajectory(tr)
    with pytest.raises(UnresolvedSupport):
        weak_residual_cauchy(f, TestFunction(1.0, 1.8, 0.5, 0.5))


def test_quadrature_converges(ref_case3):
    f = MeasureField.from_trajectory(solve(ref_case3))
    phi = TestFunction(0.6, 0.6, 0.8, 0.5)
    res = [max(map(abs, weak_residual_cauchy(f, phi, n))) for n in (2, 4, 8, 16, 32)]
    floor = 1e-13
    for a, b in zip(res, res[1:]):
        assert b <= 1.1 * a or b <= floor


def test_balance_law_second_order(asym_case1):
    tr = solve(asym_case1)
    errs = [rh_consistency(tr, 2.0, h) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[1] < errs[0] / 50 and errs[2] < errs[1] / 50


def test_mass_budget_against_particles(ref_case3):
    w = delta_weights(solve(ref_case3))
    errs = []
    for n in (500, 2000):
        out = simulate(ref_case3, n, 3.0)
        acc = out.accretion
        t = acc.t[1:]
        err = np.max(np.abs(acc.m1[1:] + acc.m2[1:] - (np.asarray(w.alpha(t)) - ref_case3.m0)))
        errs.append(err * n)
    assert errs[1] <= 2 * errs[0] + 1


def test_weights_agree_across_backends():
    for s in random_setups(3, 5, seed=51):
        a = delta_weights(solve(s))
        b = delta_weights(integrate(s)[0])
        for name in ("alpha", "wm", "wp1", "wp2"):
            fa, fb = np.asarray(getattr(a, name)(T)), np.asarray(getattr(b, name)(T))
            assert np.allclose(fa, fb, rtol=1e-6, atol=1e-6), name


def test_residual_csv():
    phi = TestFunction(0.5, 1.0, 0.2, 0.3, phi_id="p0")
    text = write_residual_csv([(phi, 32, 1e-17, -2e-16)])
    head, row = text.strip().split("\n")
    assert head == ",".join(RESIDUAL_HEADER)
    assert row == "p0,0.5,1.0,32,1e-17,-2e-16"


def test_test_function_shape():
    phi = TestFunction(0.0, 1.0, 0.5, 0.25)
    assert phi(0.0, 1.0) == 1.0
    for x, t in [(0.5, 1.0), (0.0, 1.25), (0.7, 1.0)]:
        assert phi(x, t) == 0.0 and phi.dx(x, t) == 0.0 and phi.dt(x, t) == 0.0
    h = 1e-6
    assert phi.dx(0.2, 1.1) == pytest.approx((phi(0.2 + h, 1.1) - phi(0.2 - h, 1.1)) / (2 * h), rel=1e-6)
    assert phi.dt(0.2, 1.1) == pytest.approx((phi(0.2, 1.1 + h) - phi(0.2, 1.1 - h)) / (2 * h), rel=1e-6)
    with pytest.raises(ValueError):
        TestFunction(0, 0, 0, 1)
