"""Exact self-similar Riemann solver.

The middle state is found in rapidity ``u = ubar(v)``.  Along a
1-wave issued from the left state and a 2-wave ending at the right state the
log-density offset is a closed-form function of the rapidity jump:

* rarefaction side: ``d = (1 + eps^2) y``  for ``y <= 0``
* shock side:       ``d = 2 asinh((1 + eps^2) sinh(eps y) / (2 eps))`` for ``y > 0``

with ``y = u_l - u`` for the 1-wave and ``y = u - u_r`` for the 2-wave.  The
difference of the two log densities is monotone in ``u`` and is bracketed in
closed form, so plain bisection is robust all the way to machine precision.
All batch routines work on arrays of independent problems.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    FluidState,
    conservative,
    eps_value,
    invariants,
    speeds,
    tame_slack,
    ubar,
    velocity_from_ubar,
)
from .errors import DegenerateBeta, NonPhysical, NoConvergence, OutOfBranch, VacuumUnsupported

RHO_FLOOR = 1e-300
NONE, SHOCK, RAREFACTION = 0, 1, 2


@dataclass(frozen=True)
class Shock:
    speed: float


@dataclass(frozen=True)
class Rarefaction:
    xi_lo: float
    xi_hi: float


Wave = Optional[Union[Shock, Rarefaction]]


@dataclass(frozen=True)
class WaveFan:
    left: FluidState
    middle: FluidState
    right: FluidState
    wave1: Wave
    wave2: Wave
    eps: float

    def waves(self):
        return [w for w in (self.wave1, self.wave2) if w is not None]


@dataclass
class FanBatch:
    """Struct-of-arrays version of :class:`WaveFan`."""

    eps: float
    rho_l: np.ndarray
    v_l: np.ndarray
    rho_r: np.ndarray
    v_r: np.ndarray
    rho_m: np.ndarray
    v_m: np.ndarray
    kind1: np.ndarray
    kind2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray

    def __len__(self):
        return self.rho_l.size

    def fan(self, i) -> WaveFan:
        def wave(kind, s, a, b):
            if kind == SHOCK:
                return Shock(float(s))
            if kind == RAREFACTION:
                return Rarefaction(float(a), float(b))
            return None

        return WaveFan(
            left=FluidState(float(self.rho_l[i]), float(self.v_l[i])),
            middle=FluidState(float(self.rho_m[i]), float(self.v_m[i])),
            right=FluidState(float(self.rho_r[i]), float(self.v_r[i])),
            wave1=wave(self.kind1[i], self.s1[i], self.a1[i], self.b1[i]),
            wave2=wave(self.kind2[i], self.s2[i], self.a2[i], self.b2[i]),
            eps=self.eps,
        )


# ---------------------------------------------------------------------------
# wave curves


def log_density_jump(y, e):
    """Log-density increase across a wave with rapidity jump ``y``.

    Negative ``y`` is the rarefaction branch, positive ``y`` the Lax shock
    branch.  The two branches are C^1 at ``y = 0``.
    """
    x = eps_value(e)
    y = np.asarray(y, dtype=float)
    k = 1.0 + x * x
    c = k / (2.0 * x)
    a = x * np.maximum(y, 0.0)
    small = a < 20.0
    a_s = np.where(small, a, 0.0)
    shock_small = 2.0 * np.arcsinh(c * np.sinh(a_s))
    # asinh(c sinh a) = a + log(c) + log1p(-exp(-2a)) + O(exp(-2a)/c^2) for large a
    shock_large = 2.0 * (a + np.log(c))
    shock = np.where(small, shock_small, shock_large)
    return np.where(y > 0, shock, k * y)


def rapidity_jump(d, e):
    """Inverse of :func:`log_density_jump`."""
    x = eps_value(e)
    d = np.asarray(d, dtype=float)
    k = 1.0 + x * x
    c = k / (2.0 * x)
    dp = np.maximum(d, 0.0)
    small = dp < 40.0
    dps = np.where(small, dp, 0.0)
    shock_small = np.arcsinh(np.sinh(0.5 * dps) / c) / x
    shock_large = (0.5 * dp - np.log(c)) / x
    shock = np.where(small, shock_small, shock_large)
    return np.where(d > 0, shock, d / k)


def beta_param(v, v_base, e):
    x = eps_value(e)
    e2 = x * x
    return 0.5 * (1 + e2) ** 2 * (v - v_base) ** 2 / ((1 - e2 * v * v) * (1 - e2 * v_base * v_base))


def shock_speed(rho_a, v_a, rho_b, v_b, e):
    """Rankine-Hugoniot speed of the jump between two states."""
    Ga, Ha, Fa = conservative(rho_a, v_a, e)
    Gb, Hb, Fb = conservative(rho_b, v_b, e)
    dG, dH, dF = Gb - Ga, Hb - Ha, Fb - Fa
    with np.errstate(invalid="ignore", divide="ignore"):
        s_gh = dH / dG
        s_hf = dF / dH
    use_gh = np.abs(dG) >= np.abs(dH)
    return np.where(use_gh, s_gh, s_hf)


def _lax_ok(family, left, right, s, x):
    l1l, l2l = speeds(left.v, x)
    l1r, l2r = speeds(right.v, x)
    if family == 1:
        return bool(l1r < s < l1l and s < l2r)
    return bool(l2r < s < l2l and s > l1l)


def shock_branch(family, base: FluidState, v, e) -> FluidState:
    """State on the ``family`` shock curve issued from the left state ``base``.

    Both roots ``rho_l (1 + beta (1 +- sqrt(1 + 2/beta)))`` satisfy the jump
    relations; the admissible one is picked by the Lax inequalities.  Raises
    :class:`OutOfBranch` when ``v`` lies on the rarefaction side.
    """
    x = eps_value(e)
    if family not in (1, 2):
        raise ValueError("family must be 1 or 2")
    if base.rho <= 0:
        raise NonPhysical("base density must be positive")
    if abs(v) * x >= 1 or abs(base.v) * x >= 1:
        raise NonPhysical("velocity at or beyond the light speed")
    if v == base.v:
        raise DegenerateBeta("beta vanishes; the curve passes through the base state")
    beta = float(beta_param(v, base.v, x))
    root = np.sqrt(1.0 + 2.0 / beta)
    passing = []
    for sign in (-1.0, 1.0):
        rho = base.rho * (1.0 + beta * (1.0 + sign * root))
        if rho <= 0:
            continue
        cand = FluidState(float(rho), float(v))
        s = float(shock_speed(base.rho, base.v, cand.rho, cand.v, x))
        if _lax_ok(family, base, cand, s, x):
            passing.append(cand)
    if len(passing) > 1:
        raise AssertionError("both shock branches satisfy the Lax inequalities")
    if not passing:
        raise OutOfBranch(f"v = {v!r} is not reached by an admissible {family}-shock from the base")
    return passing[0]


def rarefaction_branch(family, base: FluidState, rho, e) -> FluidState:
    """State on the ``family`` rarefaction curve issued from the left state ``base``."""
    x = eps_value(e)
    if family not in (1, 2):
        raise ValueError("family must be 1 or 2")
    if rho <= 0 or base.rho <= 0:
        raise NonPhysical("densities must be positive")
    if family == 1 and rho > base.rho:
        raise OutOfBranch("1-rarefactions lower the density")
    if family == 2 and rho < base.rho:
        raise OutOfBranch("2-rarefactions raise the density")
    k = 1.0 + x * x
    dr = np.log(rho / base.rho) / k
    u_b = ubar(base.v, x)
    u = u_b - dr if family == 1 else u_b + dr
    return FluidState(float(rho), float(velocity_from_ubar(u, x)))


# ---------------------------------------------------------------------------
# batch solver


def _bisect(fun, lo, hi, max_iter=200):
    """Vectorised bisection for a decreasing function with fun(lo) > 0 > fun(hi)."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        moving = (mid > lo) & (mid < hi)
        if not moving.any():
            return mid
        f = fun(mid)
        pos = f > 0
        lo = np.where(moving & pos, mid, lo)
        hi = np.where(moving & ~pos, mid, hi)
    mid = 0.5 * (lo + hi)
    if np.any(hi - lo > 1e-13 * np.maximum(1.0, np.abs(mid))):
        raise NoConvergence(f"bisection stalled, widest bracket {np.max(hi - lo)!r}")
    return mid


def solve_batch(rho_l, v_l, rho_r, v_r, e) -> FanBatch:
    """Solve many Riemann problems at once."""
    x = eps_value(e)
    rho_l, v_l, rho_r, v_r = (np.atleast_1d(np.asarray(a, dtype=float)).copy() for a in (rho_l, v_l, rho_r, v_r))
    shape = np.broadcast(rho_l, v_l, rho_r, v_r).shape
    rho_l, v_l, rho_r, v_r = (np.broadcast_to(a, shape).copy() for a in (rho_l, v_l, rho_r, v_r))
    if np.any(rho_l < 0) or np.any(rho_r < 0):
        raise NonPhysical("negative density in Riemann data")
    n = rho_l.size
    k = 1.0 + x * x
    vac_l = rho_l == 0
    vac_r = rho_r == 0
    if x == 1.0 and np.any(vac_l | vac_r):
        raise VacuumUnsupported("vacuum data is not supported at eps = 1")
    live = ~(vac_l | vac_r)
    if np.any(np.abs(v_l[live | vac_r]) * x >= 1) or np.any(np.abs(v_r[live | vac_l]) * x >= 1):
        raise NonPhysical("velocity at or beyond the light speed")

    rho_m = np.zeros(n)
    v_m = np.zeros(n)
    kind1 = np.zeros(n, dtype=np.int8)
    kind2 = np.zeros(n, dtype=np.int8)
    s1 = np.full(n, np.nan)
    s2 = np.full(n, np.nan)
    a1 = np.full(n, np.nan)
    b1 = np.full(n, np.nan)
    a2 = np.full(n, np.nan)
    b2 = np.full(n, np.nan)

    same = live & (rho_l == rho_r) & (v_l == v_r)
    rho_m[same] = rho_l[same]
    v_m[same] = v_l[same]
    work = live & ~same

    if work.any():
        rl, rr = rho_l[work], rho_r[work]
        ul, ur = ubar(v_l[work], x), ubar(v_r[work], x)
        dx = np.log(rl / rr)

        def h(u):
            return dx + log_density_jump(ul - u, x) - log_density_jump(u - ur, x)

        lo = np.minimum(ul, ur) - np.maximum(0.0, -dx) / k - 1.0
        hi = np.maximum(ul, ur) + np.maximum(0.0, dx) / k + 1.0
        um = _bisect(h, lo, hi)
        y1 = ul - um
        y2 = um - ur
        d1 = log_density_jump(y1, x)
        d2 = log_density_jump(y2, x)
        # tie the middle density to a shock side when there is one so that the
        # jump relations are met to rounding on that side
        shock1, shock2 = y1 > 0, y2 > 0
        rm = np.where(shock1 & ~shock2, rl * np.exp(d1), np.where(shock2 & ~shock1, rr * np.exp(d2), np.sqrt(rl * np.exp(d1) * rr * np.exp(d2))))
        vm = velocity_from_ubar(um, x)
        vac_mid = rm < RHO_FLOOR
        rm = np.where(vac_mid, 0.0, rm)
        rho_m[work] = rm
        v_m[work] = vm

        vl, vr = v_l[work], v_r[work]
        k1 = np.where(y1 > 0, SHOCK, np.where(y1 < 0, RAREFACTION, NONE))
        k2 = np.where(y2 > 0, SHOCK, np.where(y2 < 0, RAREFACTION, NONE))
        l1l, _ = speeds(vl, x)
        l1m, l2m = speeds(vm, x)
        _, l2r = speeds(vr, x)
        if x == 1.0:
            # linearly degenerate fields: every wave is a contact jump
            k1 = np.where(k1 != NONE, SHOCK, NONE)
            k2 = np.where(k2 != NONE, SHOCK, NONE)
            sp1 = np.full(rl.shape, -1.0)
            sp2 = np.full(rl.shape, 1.0)
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                sp1 = shock_speed(rl, vl, rm, vm, x)
                sp2 = shock_speed(rm, vm, rr, vr, x)
            # jumps at rounding level: the mean characteristic speed is
            # second-order accurate and avoids 0/0
            Gl, _, _ = conservative(rl, vl, x)
            Gm, _, _ = conservative(rm, vm, x)
            Gr, _, _ = conservative(rr, vr, x)
            weak1 = ~np.isfinite(sp1) | (np.abs(Gm - Gl) <= 1e-12 * (Gl + Gm))
            weak2 = ~np.isfinite(sp2) | (np.abs(Gr - Gm) <= 1e-12 * (Gr + Gm))
            sp1 = np.where(weak1, 0.5 * (l1l + l1m), sp1)
            sp2 = np.where(weak2, 0.5 * (l2m + l2r), sp2)
            # fans narrower than rounding (eps next to 1) are treated as jumps
            thin1 = (k1 == RAREFACTION) & (np.abs(l1m - l1l) <= 1e-12)
            thin2 = (k2 == RAREFACTION) & (np.abs(l2r - l2m) <= 1e-12)
            k1 = np.where(thin1, SHOCK, k1)
            k2 = np.where(thin2, SHOCK, k2)
            sp1 = np.where(thin1, 0.5 * (l1l + l1m), sp1)
            sp2 = np.where(thin2, 0.5 * (l2m + l2r), sp2)
        idx = np.flatnonzero(work)
        kind1[idx] = k1
        kind2[idx] = k2
        s1[idx] = np.where(k1 == SHOCK, sp1, np.nan)
        s2[idx] = np.where(k2 == SHOCK, sp2, np.nan)
        a1[idx] = np.where(k1 == RAREFACTION, l1l, np.nan)
        b1[idx] = np.where(k1 == RAREFACTION, l1m, np.nan)
        a2[idx] = np.where(k2 == RAREFACTION, l2m, np.nan)
        b2[idx] = np.where(k2 == RAREFACTION, l2r, np.nan)

    # one-sided vacuum: a single rarefaction reaching the light speed
    only_r = vac_r & ~vac_l
    if only_r.any():
        l1l, _ = speeds(v_l[only_r], x)
        kind1[only_r] = RAREFACTION
        a1[only_r] = l1l
        b1[only_r] = 1.0 / x
        v_m[only_r] = 1.0 / x
    only_l = vac_l & ~vac_r
    if only_l.any():
        _, l2r = speeds(v_r[only_l], x)
        kind2[only_l] = RAREFACTION
        a2[only_l] = -1.0 / x
        b2[only_l] = l2r
        v_m[only_l] = -1.0 / x

    return FanBatch(x, rho_l, v_l, rho_r, v_r, rho_m, v_m, kind1, kind2, s1, s2, a1, b1, a2, b2)


def sample_batch(fb: FanBatch, xi):
    """Sample every fan of the batch at similarity speeds ``xi``.

    ``xi`` broadcasts against the batch axis, e.g. shape ``(n, m)`` with the
    batch on the first axis.  At a shock the right state is returned.
    """
    x = fb.eps
    k = 1.0 + x * x
    xi = np.asarray(xi, dtype=float)
    extra = xi.ndim - 1 if xi.ndim >= 1 and xi.shape[0] == len(fb) else 0

    def col(a):
        return a.reshape(a.shape + (1,) * extra)

    rho_l, v_l, rho_r, v_r = col(fb.rho_l), col(fb.v_l), col(fb.rho_r), col(fb.v_r)
    rho_m, v_m = col(fb.rho_m), col(fb.v_m)
    k1, k2 = col(fb.kind1), col(fb.kind2)
    s1, s2, a1, b1, a2, b2 = (col(a) for a in (fb.s1, fb.s2, fb.a1, fb.b1, fb.a2, fb.b2))

    rho = np.broadcast_to(rho_m, np.broadcast(rho_m, xi).shape).copy()
    v = np.broadcast_to(v_m, rho.shape).copy()

    # left of wave 1
    left_edge = np.where(k1 == SHOCK, s1, np.where(k1 == RAREFACTION, a1, np.where(k2 == SHOCK, s2, np.where(k2 == RAREFACTION, a2, np.inf))))
    in_left = xi < left_edge
    # wave 1 fan
    in_f1 = (k1 == RAREFACTION) & (xi >= a1) & (xi < b1)
    # right of wave 2
    right_edge = np.where(k2 == SHOCK, s2, np.where(k2 == RAREFACTION, b2, np.where(k1 == SHOCK, s1, np.where(k1 == RAREFACTION, b1, np.inf))))
    in_right = xi >= right_edge
    in_f2 = (k2 == RAREFACTION) & (xi >= a2) & (xi < b2)

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if np.any(in_f1):
            vf = np.clip((xi + 1.0) / (1.0 + x * x * xi), -1.0 / x, 1.0 / x)
            rf = rho_l * np.exp(k * (ubar(v_l, x) - ubar(vf, x)))
            rf = np.where(np.isfinite(rf), rf, 0.0)
            rho = np.where(in_f1, rf, rho)
            v = np.where(in_f1, vf, v)
        if np.any(in_f2):
            vf = np.clip((xi - 1.0) / (1.0 - x * x * xi), -1.0 / x, 1.0 / x)
            rf = rho_r * np.exp(k * (ubar(vf, x) - ubar(v_r, x)))
            rf = np.where(np.isfinite(rf), rf, 0.0)
            rho = np.where(in_f2, rf, rho)
            v = np.where(in_f2, vf, v)
    rho = np.where(in_left, rho_l, rho)
    v = np.where(in_left, v_l, v)
    rho = np.where(in_right, rho_r, rho)
    v = np.where(in_right, v_r, v)
    return rho, v


# ---------------------------------------------------------------------------
# scalar API


def solve_riemann(left: FluidState, right: FluidState, e) -> WaveFan:
    fb = solve_batch(left.rho, left.v, right.rho, right.v, e)
    return fb.fan(0)


def _as_batch(fan: WaveFan) -> FanBatch:
    def parts(w):
        if isinstance(w, Shock):
            return SHOCK, w.speed, np.nan, np.nan
        if isinstance(w, Rarefaction):
            return RAREFACTION, np.nan, w.xi_lo, w.xi_hi
        return NONE, np.nan, np.nan, np.nan

    k1, s1, a1, b1 = parts(fan.wave1)
    k2, s2, a2, b2 = parts(fan.wave2)
    arr = lambda *a: np.array(a, dtype=float)  # noqa: E731
    return FanBatch(
        fan.eps,
        arr(fan.left.rho), arr(fan.left.v), arr(fan.right.rho), arr(fan.right.v),
        arr(fan.middle.rho), arr(fan.middle.v),
        np.array([k1], dtype=np.int8), np.array([k2], dtype=np.int8),
        arr(s1), arr(s2), arr(a1), arr(b1), arr(a2), arr(b2),
    )


def sample(fan: WaveFan, xi) -> FluidState:
    rho, v = sample_batch(_as_batch(fan), np.array([float(xi)]))
    return FluidState(float(rho.ravel()[0]), float(v.ravel()[0]))


def fan_xi_span(fan: WaveFan):
    pts = []
    for w in fan.waves():
        if isinstance(w, Shock):
            pts.append(w.speed)
        else:
            pts.extend([w.xi_lo, w.xi_hi])
    return (min(pts), max(pts)) if pts else (0.0, 0.0)


def modified_invariants(rho, v, e):
    """``(W, Z) = (e^w, e^-z)``; both vanish at vacuum."""
    x = eps_value(e)
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        w, z = invariants(rho, v, x)
        W = np.where(rho > 0, np.exp(w), 0.0)
        Z = np.where(rho > 0, np.exp(-z), 0.0)
    return W, Z


def fan_max_principle(fan: WaveFan, n_samples: int, rtol=1e-10):
    """Scan the fan and check ``W <= max(W_l, W_r)`` and ``Z <= max(Z_l, Z_r)``.

    Returns ``(W_max, Z_max, ok, M)`` where ``M = max(W_max, Z_max)^(1+eps^2)``
    is the tame ceiling realised by the fan.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    x = fan.eps
    lo, hi = fan_xi_span(fan)
    xi = np.linspace(lo - 1.0, hi + 1.0, n_samples)
    edges = [lo - 1.0, hi + 1.0]
    for w in fan.waves():
        if isinstance(w, Shock):
            edges += [np.nextafter(w.speed, -np.inf), w.speed]
        else:
            edges += [w.xi_lo, w.xi_hi, np.nextafter(w.xi_hi, -np.inf)]
    xi = np.concatenate([xi, edges])
    rho, v = sample_batch(_as_batch(fan), xi[None, :])
    W, Z = modified_invariants(rho.ravel(), v.ravel(), x)
    Wl, Zl = modified_invariants(fan.left.rho, fan.left.v, x)
    Wr, Zr = modified_invariants(fan.right.rho, fan.right.v, x)
    Wb, Zb = max(float(Wl), float(Wr)), max(float(Zl), float(Zr))
    W_max, Z_max = float(W.max()), float(Z.max())
    ok = W_max <= Wb * (1 + rtol) and Z_max <= Zb * (1 + rtol)
    M = max(W_max, Z_max) ** (1.0 + x * x)
    return W_max, Z_max, bool(ok), M


def lax_margins(fb: FanBatch):
    """Smallest Lax-inequality margin of each shock (NaN where absent).

    Positive margins mean strict admissibility.
    """
    x = fb.eps
    l1l, _ = speeds(fb.v_l, x)
    l1m, l2m = speeds(fb.v_m, x)
    _, l2r = speeds(fb.v_r, x)
    m1 = np.minimum(np.minimum(l1l - fb.s1, fb.s1 - l1m), l2m - fb.s1)
    m2 = np.minimum(np.minimum(l2m - fb.s2, fb.s2 - l2r), fb.s2 - l1m)
    m1 = np.where(fb.kind1 == SHOCK, m1, np.nan)
    m2 = np.where(fb.kind2 == SHOCK, m2, np.nan)
    return m1, m2


def random_tame_states(rng, n, M, e, margin=0.999):
    """Random states in the tame region of ceiling ``M``.

    Densities are log-uniform over ``[1e-3 M, M]``; velocities are uniform
    over the admissible interval shrunk by ``margin``.
    """
    x = eps_value(e)
    rho = M * np.exp(rng.uniform(np.log(1e-3), 0.0, n))
    vmax = margin * (1.0 - (rho / M) ** (2 * x / (1 + x * x))) / x
    v = rng.uniform(-1.0, 1.0, n) * vmax
    assert np.all(tame_slack(rho, v, M, x) >= 0)
    return rho, v
