import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isorel.core import FluidState, TameRegion, conservative
from isorel.errors import WindowMismatch
from isorel.riemann import shock_branch, shock_speed
from isorel.scheme import GridConfig, Slice, Trajectory, average_initial, cell_centers, run
from isorel.verify import (
    ResidualReport,
    TestFunction,
    dalembert_cell_averages,
    entropy_dissipation,
    loglog_slope,
    omega_eps_limit,
    rh_residual,
    scaling_equivariance,
    tame_audit,
    trivial_pair,
    wave_equation_limit,
    weak_form_integral,
)


def periodic_run(e, n=40, T=0.3, lam=1.0):
    cfg = GridConfig.on_interval(0.0, 2.0, n, 0.2, boundary="periodic")
    s0, region = average_initial(lambda x: lam * (1 + 0.4 * np.sin(np.pi * x)), lambda x: 0.3 * np.cos(np.pi * x), cfg, e)
    return run(s0, T, cfg, e, region)


# --- reports ----------------------------------------------------------------


def test_report_json_roundtrip():
    r = ResidualReport("x", np.float64(1e-3), 2.0, 1e-2, {"arr": np.arange(3), "flag": np.bool_(True)})
    d = json.loads(r.to_json())
    assert d["pass"] is True and d["meta"]["arr"] == [0, 1, 2] and d["name"] == "x"
    assert ResidualReport("y", np.inf, np.inf, 1.0).passed is False


def test_loglog_slope_exact_power():
    x = np.array([0.1, 0.2, 0.4])
    assert loglog_slope(x, 3 * x**2) == pytest.approx(2.0, abs=1e-12)


# --- jump relations ---------------------------------------------------------


def test_rh_residual_equal_states():
    s = FluidState(1.3, 0.2)
    assert rh_residual(s, s, 0.7, 0.5).max_abs == 0.0


@settings(max_examples=40, deadline=None)
@given(e=st.floats(0.1, 0.95), v=st.floats(-0.6, -0.01), family=st.sampled_from([1, 2]))
def test_rh_residual_on_shock_branch(e, v, family):
    # the base is the left state; both shock families lower the velocity
    left = FluidState(1.0, 0.0)
    right = shock_branch(family, left, v, e)
    s = shock_speed(left.rho, left.v, right.rho, right.v, e)
    rep = rh_residual(left, right, s, e)
    assert rep.passed and rep.max_abs < 1e-12
    # swapping sides leaves the jump relation unchanged
    assert rh_residual(right, left, s, e).max_abs == pytest.approx(rep.max_abs, abs=1e-15)


def test_rh_residual_negative_control():
    base = FluidState(1.0, 0.0)
    other = shock_branch(1, base, -0.3, 0.5)
    s = shock_speed(base.rho, base.v, other.rho, other.v, 0.5)
    bad = rh_residual(base, other, s + 0.01, 0.5)
    assert not bad.passed and bad.max_abs > 1e-6


# --- entropy harness --------------------------------------------------------


def test_test_function_support():
    th = TestFunction(0.5, 0.5, 1.0, 0.5)
    assert th(0.5, 1.0) == pytest.approx(1.0)
    assert th(0.5, 1.6) == 0.0 and th(1.01, 1.0) == 0.0
    assert np.all(th(0.3, np.linspace(0, 2, 50)) >= 0)


def test_weak_form_matches_hand_sum():
    e = 0.5
    traj = periodic_run(e, n=10, T=0.05)
    th = TestFunction(0.05, 0.06, 1.0, 0.6)
    pair = trivial_pair("GH", e)
    I, per = weak_form_integral(traj, pair, th)
    h = traj.config.h
    ref = 0.0
    for a, b in zip(traj.slices[:-1], traj.slices[1:]):
        U, F, _ = conservative(a.rho, a.v, e)
        Ub, _, _ = conservative(b.rho, b.v, e)
        tau = b.t - a.t
        for k in range(a.rho.size):
            tp, tm = th(b.t, a.x[k] + h), th(b.t, a.x[k] - h)
            ref += h * U[k] * (tp + tm) + tau * F[k] * (tp - tm)
        for j in range(b.rho.size):
            ref -= 2 * h * Ub[j] * th(b.t, b.x[j])
    assert I == pytest.approx(ref, rel=1e-12, abs=1e-15)
    assert per.size == len(traj.slices) - 1


@pytest.mark.parametrize("kind", ["GH", "HF"])
def test_trivial_pairs_vanish(kind):
    e = 0.7
    traj = periodic_run(e)
    th = TestFunction(0.15, 0.14, 1.0, 0.6)
    rep = entropy_dissipation(traj, trivial_pair(kind, e), th)
    assert abs(rep.meta["integral"]) < 1e-13 and rep.passed


def test_trivial_pair_on_constant_trajectory():
    e = 0.4
    cfg = GridConfig.on_interval(-1, 1, 20, 0.2)
    s0 = Slice(0.0, 0, cell_centers(cfg, 0), np.full(20, 2.0), np.full(20, 0.1))
    traj = run(s0, 0.1, cfg, e)
    I, _ = weak_form_integral(traj, trivial_pair("GH", e), TestFunction(0.05, 0.05, 0.0, 0.5))
    assert abs(I) < 1e-14


def test_integral_is_linear_in_the_pair():
    e = 0.7
    traj = periodic_run(e)
    th = TestFunction(0.15, 0.14, 1.0, 0.6)

    def neg(rho, v):
        a, b = trivial_pair("GH", e)(rho, v)
        c, d = trivial_pair("HF", e)(rho, v)
        return -(a + 2 * c), -(b + 2 * d)

    I1, _ = weak_form_integral(traj, trivial_pair("GH", e), th)
    I2, _ = weak_form_integral(traj, trivial_pair("HF", e), th)
    I3, _ = weak_form_integral(traj, neg, th)
    assert I3 == pytest.approx(-(I1 + 2 * I2), abs=1e-13)


def test_entropy_harness_needs_every_slice():
    e = 0.5
    cfg = GridConfig.on_interval(0, 2, 20, 0.2, boundary="periodic", stride=2)
    s0, region = average_initial(lambda x: 1 + 0 * x, lambda x: 0 * x, cfg, e)
    traj = run(s0, 0.1, cfg, e, region)
    with pytest.raises(ValueError):
        entropy_dissipation(traj, trivial_pair("GH", e), TestFunction(0.05, 0.05, 1, 0.5))


def test_table_window_mismatch():
    class Narrow:
        def evaluate(self, rho, v):
            return rho, v

        def covers(self, rho, v):
            return False

    traj = periodic_run(0.5, n=10, T=0.05)
    with pytest.raises(WindowMismatch):
        weak_form_integral(traj, Narrow(), TestFunction(0.03, 0.05, 1.0, 0.6))


# --- audits -----------------------------------------------------------------


def test_tame_audit_constant_state():
    e = 0.5
    cfg = GridConfig.on_interval(-1, 1, 10, 0.2)
    s0, region = average_initial(lambda x: 1 + 0 * x, lambda x: 0 * x, cfg, e)
    rep = tame_audit(run(s0, 0.1, cfg, e, region))
    assert rep.passed and rep.meta["min_slack"] == pytest.approx(0.0, abs=1e-14)


def test_tame_audit_flags_outside_state():
    e = 0.5
    cfg = GridConfig.on_interval(-1, 1, 4, 0.2)
    s = Slice(0.0, 0, cell_centers(cfg, 0), np.full(4, 5.0), np.zeros(4))
    traj = Trajectory(cfg, e, TameRegion(M=1.0, eps=e), [s])
    rep = tame_audit(traj)
    assert not rep.passed and rep.meta["min_slack"] < 0


@pytest.mark.parametrize("e", [0.3, 0.9])
def test_tame_audit_adversarial_near_light(e):
    cfg0 = GridConfig.on_interval(-1, 1, 30, 0.2)
    s0, region = average_initial(lambda x: np.where(x < 0, 1.0, 0.5), lambda x: np.where(x < 0, 0.99 / e, -0.99 / e), cfg0, e)
    cfg = GridConfig.on_interval(-1, 1, 30, 0.4 / ((0.99 / e + 1) / (1 - 0.99 * e)), adaptive=True)
    rep = tame_audit(run(s0, 0.05, cfg, e, region))
    assert rep.passed


def test_scaling_equivariance_identity_and_large():
    e = 0.6
    runner = lambda lam: periodic_run(e, n=20, T=0.1, lam=lam)  # noqa: E731
    assert scaling_equivariance(runner, 1.0).max_abs == 0.0
    rep = scaling_equivariance(runner, 1000.0)
    assert rep.passed and rep.meta["lambda"] == 1000.0
    with pytest.raises(ValueError):
        scaling_equivariance(runner, 0.0)


# --- wave equation ----------------------------------------------------------


def test_dalembert_single_mode():
    # a0 = sin(pi x), b0 = 0 on a period-2 domain, averaged over cells of width 2h
    h, t = 0.05, 0.3
    x = np.linspace(0, 2, 9)
    a, b = dalembert_cell_averages(lambda s: np.sin(np.pi * s), lambda s: 0 * s, 2.0, 0.0, x, t, h)
    sinc = np.sin(np.pi * h) / (np.pi * h)
    assert np.allclose(a, sinc * np.sin(np.pi * x) * np.cos(np.pi * t), atol=1e-13)
    assert np.allclose(b, -sinc * np.cos(np.pi * x) * np.sin(np.pi * t), atol=1e-13)


def test_wave_limit_constant_data_is_exact():
    cfg = GridConfig.on_interval(0, 2, 20, 0.2, boundary="periodic")
    s0, region = average_initial(lambda x: 1 + 0 * x, lambda x: 0 * x, cfg, 1.0)
    traj = run(s0, 0.2, cfg, 1.0, region)
    rep = wave_equation_limit(traj, lambda x: 1 + 0 * x, lambda x: 0 * x)
    assert rep.max_abs < 1e-13


def test_wave_limit_requires_eps_one():
    traj = periodic_run(0.5, n=10, T=0.05)
    with pytest.raises(ValueError):
        wave_equation_limit(traj, np.sin, np.cos)


def test_wave_limit_converges():
    def a0(x):
        return (1 + 0.2 * np.sin(np.pi * x)) * (1 + 0.01) / (1 - 0.01)

    errs = []
    for n in (20, 40, 80):
        cfg = GridConfig.on_interval(0, 2, n, 0.2, boundary="periodic")
        s0, region = average_initial(lambda x: 1 + 0.2 * np.sin(np.pi * x), lambda x: 0.1 + 0 * x, cfg, 1.0)
        traj = run(s0, 0.2, cfg, 1.0, region)
        errs.append(wave_equation_limit(traj, a0, lambda x: (1 + 0.2 * np.sin(np.pi * x)) * 0.2 / 0.99).max_abs)
    assert errs[0] > errs[1] > errs[2]


def test_omega_limit_report():
    rep = omega_eps_limit([0.1, 0.05, 0.025, 0.0125])
    assert rep.meta["slope"] > 1.9 and rep.passed
