import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isorel.core import conservative, primitives_from_conservative, tame_slack
from isorel.errors import CflViolation, NotTame
from isorel.riemann import modified_invariants, solve_batch
from isorel.scheme import (
    GridConfig,
    Slice,
    adaptive_quadrature,
    adaptive_tau,
    average_initial,
    cell_centers,
    cfl_margin,
    fan_average_conservative,
    fan_average_primitive,
    lxf_average,
    run,
    scaled,
    slice_table,
    speed_factor,
    step,
)


def riemann_data(x0, left, right):
    return (lambda x: np.where(x < x0, left[0], right[0]), lambda x: np.where(x < x0, left[1], right[1]))


def smooth_data(x):
    return 1.0 + 0.3 * np.sin(np.pi * x / 2), 0.2 * np.cos(np.pi * x / 2)


def smooth_slice(cfg, e):
    xc = cell_centers(cfg, 0)
    r, v = smooth_data(xc)
    return Slice(0.0, 0, xc, r, v)


def lxf_reference(s, cfg, e, tau):
    """Staggered LxF in (G, H) written out from the cell values."""
    rho, v = s.rho, s.v
    if cfg.boundary == "periodic":
        rl, vl, rr, vr = rho, v, np.roll(rho, -1), np.roll(v, -1)
    else:
        rl, vl = np.r_[rho[0], rho], np.r_[v[0], v]
        rr, vr = np.r_[rho, rho[-1]], np.r_[v, v[-1]]
    Gl, Hl, Fl = conservative(rl, vl, e)
    Gr, Hr, Fr = conservative(rr, vr, e)
    c = tau / (2 * cfg.h)
    return 0.5 * (Gl + Gr) - c * (Hr - Hl), 0.5 * (Hl + Hr) - c * (Fr - Fl)


# --- geometry and configuration -------------------------------------------


def test_cell_centers_alternate():
    cfg = GridConfig.on_interval(-1, 1, 5, 0.2)
    c0, c1 = cell_centers(cfg, 0), cell_centers(cfg, 1)
    assert c0.size == 5 and c1.size == 6
    assert np.allclose(c0, np.linspace(-0.8, 0.8, 5))
    assert np.allclose(c1, np.linspace(-1, 1, 6))


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(h=0.1, tau=0.0, n_cells=4)
    with pytest.raises(ValueError):
        GridConfig(h=0.1, tau=0.01, n_cells=4, boundary="reflecting")
    with pytest.raises(ValueError):
        GridConfig(h=0.1, tau=0.01, n_cells=4, averaging="mean")
    cfg = GridConfig.on_interval(-2, 2, 200, 0.2)
    assert cfg.h == pytest.approx(0.01) and cfg.tau == pytest.approx(0.002) and cfg.x_max == pytest.approx(2)


# --- CFL ---------------------------------------------------------------------


def test_speed_factor_values():
    assert speed_factor(0.0, 0.5) == 1.0
    # (0.5 + 1)/(1 - 0.25*0.5)
    assert speed_factor(0.5, 0.5) == pytest.approx(1.5 / 0.875, rel=1e-15)
    assert speed_factor(-0.5, 1.0) == pytest.approx(3.0)


def test_cfl_margin_formula():
    cfg = GridConfig(h=0.1, tau=0.02, n_cells=3)
    s = Slice(0.0, 0, cell_centers(cfg, 0), np.ones(3), np.array([0.0, 0.4, -0.2]))
    e = 0.7
    expect = 0.5 - 0.2 * (1.4 / (1 - 0.49 * 0.4))
    assert cfl_margin(s, cfg, e) == pytest.approx(expect, rel=1e-14)


def test_cfl_violation_reports_cell():
    cfg = GridConfig(h=0.1, tau=0.045, n_cells=4)
    v = np.array([0.0, 0.1, 0.6, 0.2])
    s = Slice(0.0, 0, cell_centers(cfg, 0), np.ones(4), v)
    with pytest.raises(CflViolation) as info:
        step(s, cfg, 0.5, index=7)
    err = info.value
    assert err.cell == 2 and err.step == 7
    assert err.factor == pytest.approx(float(speed_factor(0.6, 0.5)))


def test_strong_cfl_flag():
    cfg = GridConfig(h=0.1, tau=0.03, n_cells=4, strong_cfl=True)
    s = Slice(0.0, 0, cell_centers(cfg, 0), np.ones(4), np.zeros(4))
    with pytest.raises(CflViolation):
        step(s, cfg, 0.5)
    step(s, cfg, 1.0)


def test_adaptive_tau_hits_target_margin():
    cfg = GridConfig(h=0.05, tau=0.01, n_cells=40, adaptive=True, target_margin=0.05)
    s = smooth_slice(cfg, 0.6)
    tau = adaptive_tau(s, cfg, 0.6)
    assert cfl_margin(s, cfg, 0.6, tau) == pytest.approx(0.05, abs=1e-14)


# --- single steps -----------------------------------------------------------


@pytest.mark.parametrize("mode", ["conservative", "primitive"])
@pytest.mark.parametrize("boundary", ["outflow", "periodic"])
def test_constant_state_is_fixed(mode, boundary):
    cfg = GridConfig.on_interval(-1, 1, 10, 0.2, averaging=mode, boundary=boundary)
    s = Slice(0.0, 0, cell_centers(cfg, 0), np.full(10, 2.5), np.full(10, -0.3))
    out = step(s, cfg, 0.8)
    assert np.allclose(out.rho, 2.5, rtol=1e-13) and np.allclose(out.v, -0.3, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(e=st.floats(0.05, 1.0), ratio=st.floats(0.05, 0.3))
def test_step_equals_lax_friedrichs(e, ratio):
    # exact fan averages reduce to LxF fluxes while fans stay inside the cells
    cfg = GridConfig.on_interval(-2, 2, 24, ratio)
    s = smooth_slice(cfg, e)
    if cfl_margin(s, cfg, e) <= 0:
        return
    out = step(s, cfg, e)
    Gref, Href = lxf_reference(s, cfg, e, cfg.tau)
    G, H, _ = conservative(out.rho, out.v, e)
    assert np.allclose(G, Gref, rtol=1e-10) and np.allclose(H, Href, rtol=1e-10, atol=1e-12)
    Gl, Hl = lxf_average(s, cfg, e)
    assert np.allclose(Gl, Gref, rtol=1e-14) and np.allclose(Hl, Href, rtol=1e-14, atol=1e-15)


def test_eps_one_is_linear_wave_lxf():
    # at eps = 1, (G, H) = (a, b) obey a_t + b_x = 0, b_t + a_x = 0
    cfg = GridConfig.on_interval(0, 4, 32, 0.25, boundary="periodic")
    s = smooth_slice(cfg, 1.0)
    a, b, _ = conservative(s.rho, s.v, 1.0)
    out = step(s, cfg, 1.0)
    a1, b1, _ = conservative(out.rho, out.v, 1.0)
    ar, br = np.roll(a, -1), np.roll(b, -1)
    lam = 0.5 * cfg.ratio
    assert np.allclose(a1, 0.5 * (a + ar) - lam * (br - b), rtol=1e-11)
    assert np.allclose(b1, 0.5 * (b + br) - lam * (ar - a), rtol=1e-11, atol=1e-13)


def test_periodic_step_conserves():
    cfg = GridConfig.on_interval(0, 4, 40, 0.2, boundary="periodic")
    s = smooth_slice(cfg, 0.5)
    G0, H0, _ = conservative(s.rho, s.v, 0.5)
    out = step(s, cfg, 0.5)
    G1, H1, _ = conservative(out.rho, out.v, 0.5)
    assert abs(G1.sum() - G0.sum()) <= 1e-12 * G0.sum()
    assert abs(H1.sum() - H0.sum()) <= 1e-12 * np.abs(H0).sum()
    assert np.allclose(out.x, s.x + cfg.h)


def test_outflow_step_conserves_away_from_boundary():
    # a compact disturbance in a constant background: totals change only via boundary fluxes, which vanish
    cfg = GridConfig.on_interval(-2, 2, 40, 0.2)
    xc = cell_centers(cfg, 0)
    rho = 1 + 0.5 * np.exp(-20 * xc**2)
    v = 0.3 * np.exp(-20 * xc**2)
    s = Slice(0.0, 0, xc, rho, v)
    out = step(s, cfg, 0.7)
    two = step(out, cfg, 0.7)
    G0, H0, _ = conservative(rho, v, 0.7)
    G2, H2, _ = conservative(two.rho, two.v, 0.7)
    assert out.rho.size == 41 and two.rho.size == 40
    assert abs(G2.sum() - G0.sum()) <= 1e-12 * G0.sum()
    assert abs(H2.sum() - H0.sum()) <= 1e-12 * G0.sum()


def test_step_keeps_invariant_box():
    # averages of fans stay inside the box spanned by the neighbours' W and Z
    e = 0.6
    cfg = GridConfig.on_interval(-2, 2, 20, 0.15)
    xc = cell_centers(cfg, 0)
    rng = np.random.default_rng(3)
    s = Slice(0.0, 0, xc, rng.uniform(0.2, 3, 20), rng.uniform(-0.9, 0.9, 20))
    out = step(s, cfg, e)
    W0, Z0 = modified_invariants(s.rho, s.v, e)
    W1, Z1 = modified_invariants(out.rho, out.v, e)
    assert W1.max() <= W0.max() * (1 + 1e-10) and Z1.max() <= Z0.max() * (1 + 1e-10)


# --- averaging routes -------------------------------------------------------


def test_adaptive_quadrature_known_integrals():
    a = np.array([0.0, -1.0, 0.0])
    b = np.array([np.pi, 2.0, 1.0])
    funcs = [np.sin, np.exp, lambda t: np.sqrt(t)]

    def f(lanes, xi):
        out = np.empty_like(xi)
        for j, lane in enumerate(lanes):
            out[j] = funcs[lane](xi[j])
        return out

    got = adaptive_quadrature(f, a, b, tol=1e-12)
    assert np.allclose(got, [2.0, np.e**2 - np.exp(-1), 2.0 / 3.0], rtol=1e-9)


def test_conservative_average_closed_form_against_quadrature():
    # closed-form fan integrals versus brute-force averaging of the sampled fan
    e = 0.5
    rl, vl, rr, vr = np.array([1.0, 3.0, 1.0]), np.array([-0.3, 0.2, 0.4]), np.array([2.0, 0.5, 1.0]), np.array([0.3, 0.1, -0.4])
    fb = solve_batch(rl, vl, rr, vr, e)
    L = 4.0
    G, H = fan_average_conservative(fb, L)
    xi = np.linspace(-L, L, 400001)
    from isorel.riemann import sample_batch

    r, v = sample_batch(fb, np.broadcast_to(xi, (3, xi.size)))
    Gs, Hs, _ = conservative(r, v, e)
    Gq = np.trapezoid(Gs, xi, axis=1) / (2 * L)
    Hq = np.trapezoid(Hs, xi, axis=1) / (2 * L)
    assert np.allclose(G, Gq, rtol=1e-5) and np.allclose(H, Hq, rtol=1e-5, atol=1e-6)


def test_primitive_average_against_sampling():
    e = 0.5
    fb = solve_batch(np.array([2.0]), np.array([-0.4]), np.array([1.0]), np.array([0.5]), e)
    L = 3.0
    R, V = fan_average_primitive(fb, L)
    from isorel.riemann import sample_batch

    xi = np.linspace(-L, L, 400001)
    r, v = sample_batch(fb, xi[None, :])
    assert R[0] == pytest.approx(np.trapezoid(r[0], xi) / (2 * L), rel=1e-6)
    assert V[0] == pytest.approx(np.trapezoid(v[0], xi) / (2 * L), rel=1e-6)


def test_primitive_mode_differs_from_conservative():
    e = 0.8
    base = GridConfig.on_interval(-1, 1, 20, 0.2)
    s0, _ = average_initial(*riemann_data(0.0, (3.0, 0.5), (1.0, -0.5)), base, e)
    a = step(s0, base, e)
    b = step(s0, GridConfig.on_interval(-1, 1, 20, 0.2, averaging="primitive"), e)
    assert np.max(np.abs(a.rho - b.rho)) > 1e-6


# --- initial data -----------------------------------------------------------


def test_average_initial_constant_and_straddle():
    e = 0.5
    cfg = GridConfig.on_interval(-1, 1, 4, 0.2)
    s, region = average_initial(lambda x: 2.0 + 0 * x, lambda x: 0.1 + 0 * x, cfg, e)
    assert np.allclose(s.rho, 2.0) and np.allclose(s.v, 0.1)
    W, Z = modified_invariants(2.0, 0.1, e)
    assert region.M == pytest.approx(max(W, Z) ** 1.25)
    # jump at the middle of cell 1: conservative mean of the two halves
    cfg = GridConfig.on_interval(0, 4, 2, 0.2)
    s, _ = average_initial(*riemann_data(1.0, (1.0, 0.0), (3.0, 0.5)), cfg, e)
    G1, H1, _ = conservative(1.0, 0.0, e)
    G2, H2, _ = conservative(3.0, 0.5, e)
    r, v = primitives_from_conservative(0.5 * (G1 + G2), 0.5 * (H1 + H2), e)
    assert s.rho[0] == pytest.approx(float(r), rel=1e-13) and s.v[0] == pytest.approx(float(v), rel=1e-13)


def test_average_initial_rejects_light_speed():
    cfg = GridConfig.on_interval(-1, 1, 4, 0.2)
    with pytest.raises(NotTame):
        average_initial(lambda x: 1 + 0 * x, lambda x: 2.0 + 0 * x, cfg, 0.5)
    with pytest.raises(ValueError):
        average_initial(lambda x: 1 + 0 * x, lambda x: 0 * x, cfg, 0.5, samples=4)


@settings(max_examples=15, deadline=None)
@given(lam=st.floats(1e-3, 1e3))
def test_average_initial_scales_with_density(lam):
    cfg = GridConfig.on_interval(-1, 1, 8, 0.2)
    r0, v0 = riemann_data(0.1, (1.0, 0.3), (2.0, -0.2))
    a, _ = average_initial(r0, v0, cfg, 0.7)
    b, _ = average_initial(lambda x: lam * r0(x), v0, cfg, 0.7)
    assert np.allclose(b.rho, lam * a.rho, rtol=1e-13) and np.allclose(b.v, a.v, rtol=1e-13, atol=1e-15)


# --- runs -------------------------------------------------------------------


def test_run_zero_time_single_slice():
    cfg = GridConfig.on_interval(-1, 1, 10, 0.2)
    s = smooth_slice(cfg, 0.5)
    traj = run(s, 0.0, cfg, 0.5)
    assert len(traj.slices) == 1 and traj.diagnostics["steps"] == 0


def test_run_slice_times_and_stride():
    cfg = GridConfig.on_interval(-1, 1, 20, 0.2, stride=3)
    s = smooth_slice(cfg, 0.5)
    T = 7.5 * cfg.tau
    traj = run(s, T, cfg, 0.5)
    assert traj.diagnostics["steps"] == 8
    times = [sl.t for sl in traj.slices]
    assert times[0] == 0.0 and times[-1] == T
    assert times[1] == pytest.approx(3 * cfg.tau) and times[2] == pytest.approx(6 * cfg.tau)
    assert [sl.parity for sl in traj.slices] == [0, 1, 0, 0]


def test_run_adaptive_margins():
    cfg = GridConfig.on_interval(-1, 1, 30, 0.2, adaptive=True, target_margin=0.1)
    s0, region = average_initial(*riemann_data(0.0, (2.0, 0.6), (1.0, -0.6)), cfg, 0.9)
    traj = run(s0, 0.3, cfg, 0.9, region)
    assert traj.final.t == pytest.approx(0.3, rel=1e-13)
    assert min(traj.diagnostics["cfl_margin"]) >= 0.1 - 1e-12
    assert min(traj.diagnostics["tame_slack"]) >= -1e-9


def test_run_raises_not_tame_for_small_region():
    from isorel.core import TameRegion

    cfg = GridConfig.on_interval(-1, 1, 10, 0.2)
    s0, _ = average_initial(*riemann_data(0.0, (2.0, 0.4), (1.0, -0.4)), cfg, 0.5)
    with pytest.raises(NotTame):
        run(s0, 0.05, cfg, 0.5, TameRegion(M=1.0, eps=0.5))


@pytest.mark.parametrize("boundary", ["outflow", "periodic"])
def test_scaling_is_exact(boundary):
    e = 0.6
    cfg = GridConfig.on_interval(-1, 1, 20, 0.2, boundary=boundary)
    s0, _ = average_initial(lambda x: 1 + 0.5 * np.sin(np.pi * x), lambda x: 0.3 * np.cos(np.pi * x), cfg, e)
    a = run(s0, 0.2, cfg, e)
    b = run(scaled(s0, 1000.0), 0.2, cfg, e)
    for sa, sb in zip(a.slices, b.slices):
        assert np.allclose(sb.rho, 1000 * sa.rho, rtol=1e-11) and np.allclose(sb.v, sa.v, atol=1e-12)


def test_tame_slack_stays_nonnegative_near_light_speed():
    e = 0.9
    cfg0 = GridConfig.on_interval(-1, 1, 40, 0.2)
    r0, v0 = riemann_data(0.0, (1.0, 1.0), (1.0, -1.0))
    s0, region = average_initial(r0, v0, cfg0, e)
    ratio = 0.4 / float(speed_factor(1.0, e))
    cfg = GridConfig.on_interval(-1, 1, 40, ratio)
    traj = run(s0, 20 * cfg.tau, cfg, e, region)
    for s in traj.slices:
        assert tame_slack(s.rho, s.v, region.M, e).min() >= -1e-9


def test_slice_table_columns():
    cfg = GridConfig.on_interval(-1, 1, 5, 0.2)
    s = smooth_slice(cfg, 0.5)
    tab = slice_table(s, 0.5)
    assert list(tab) == ["x_center", "rho", "v", "w", "z", "G", "H"]
    G, H, _ = conservative(s.rho, s.v, 0.5)
    assert np.allclose(tab["G"], G) and np.allclose(tab["H"], H)
