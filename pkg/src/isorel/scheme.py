"""Staggered Lax-Friedrichs scheme built on exact Riemann fans.

Cells have width ``2h``.  At each step a Riemann problem is solved at every
cell interface and the fans are averaged over the staggered cells, which are
centred on the old interfaces.  Averaging is done either in the conservative
variables ``(G, H)`` (default) or literally in ``(rho, v)``.

With outflow boundaries the number of cells alternates between ``n`` and
``n + 1``: the longer slices carry two half-outside boundary cells fed by
ghost copies.  With periodic boundaries the slice keeps ``n`` cells and moves
by ``h`` per step.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .core import (
    FluidState,
    TameRegion,
    conservative,
    eps_value,
    invariants,
    primitives_from_conservative,
    tame_slack,
    ubar,
)
from .errors import CflViolation, NotTame, VacuumUnsupported
from .riemann import RAREFACTION, SHOCK, FanBatch, modified_invariants, solve_batch

AVERAGING_MODES = ("conservative", "primitive")
BOUNDARIES = ("outflow", "periodic")
TAME_TOL = 1e-9


@dataclass(frozen=True)
class GridConfig:
    h: float
    tau: float
    n_cells: int
    x_min: float = 0.0
    boundary: str = "outflow"
    averaging: str = "conservative"
    strong_cfl: bool = False
    adaptive: bool = False
    target_margin: float = 0.05
    vacuum: bool = True
    stride: int = 1

    def __post_init__(self):
        if not (self.h > 0 and self.tau > 0):
            raise ValueError("h and tau must be positive")
        if self.n_cells < 1:
            raise ValueError("n_cells must be at least 1")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.averaging not in AVERAGING_MODES:
            raise ValueError(f"averaging must be one of {AVERAGING_MODES}")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    @property
    def ratio(self):
        return self.tau / self.h

    @property
    def x_max(self):
        return self.x_min + 2.0 * self.h * self.n_cells

    @classmethod
    def on_interval(cls, x_min, x_max, n_cells, ratio, **kw):
        h = (x_max - x_min) / (2.0 * n_cells)
        return cls(h=h, tau=ratio * h, n_cells=n_cells, x_min=x_min, **kw)


@dataclass
class Slice:
    t: float
    parity: int
    x: np.ndarray
    rho: np.ndarray
    v: np.ndarray

    @property
    def states(self):
        return [FluidState(float(r), float(u)) for r, u in zip(self.rho, self.v)]

    def __len__(self):
        return self.rho.size


@dataclass
class Trajectory:
    config: GridConfig
    eps: float
    region: TameRegion
    slices: List[Slice]
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.slices[-1]


# ---------------------------------------------------------------------------
# geometry


def cell_centers(cfg: GridConfig, parity: int, step: int = 0):
    h, n = cfg.h, cfg.n_cells
    if cfg.boundary == "periodic":
        return cfg.x_min + h * (2 * np.arange(n) + 1) + step * h
    if parity % 2 == 0:
        return cfg.x_min + h * (2 * np.arange(n) + 1)
    return cfg.x_min + 2 * h * np.arange(n + 1)


# ---------------------------------------------------------------------------
# CFL


def speed_factor(v, e):
    x = eps_value(e)
    av = np.abs(np.asarray(v, dtype=float))
    return (av + 1.0) / (1.0 - x * x * av)


def cfl_margin(s: Slice, cfg: GridConfig, e, tau=None):
    """``1/2 - (tau/h) max (|v| + 1)/(1 - eps^2 |v|)``; positive means stable."""
    tau = cfg.tau if tau is None else tau
    live = s.rho > 0
    v = s.v[live] if live.any() else np.zeros(1)
    return 0.5 - (tau / cfg.h) * float(np.max(speed_factor(v, e)))


def _check_cfl(s, cfg, e, tau, step):
    x = eps_value(e)
    m = cfl_margin(s, cfg, e, tau)
    live = s.rho > 0
    fac = speed_factor(np.where(live, s.v, 0.0), x)
    if m < 0:
        cell = int(np.argmax(fac))
        raise CflViolation(
            f"CFL violated at step {step}: margin {m!r}, cell {cell}, max factor {float(fac[cell])!r}",
            cell=cell,
            factor=float(fac[cell]),
            step=step,
        )
    if cfg.strong_cfl and (tau / cfg.h) / x >= 0.5:
        raise CflViolation(f"sufficient bound (tau/h)/eps < 1/2 fails at step {step}", factor=1.0 / x, step=step)
    return m


def adaptive_tau(s: Slice, cfg: GridConfig, e):
    live = s.rho > 0
    v = s.v[live] if live.any() else np.zeros(1)
    fmax = float(np.max(speed_factor(v, e)))
    return cfg.h * (0.5 - cfg.target_margin) / fmax


# ---------------------------------------------------------------------------
# initial data


def average_initial(rho0: Callable, v0: Callable, cfg: GridConfig, e, mode=None, samples=8, M=None):
    """Cell averages of the initial data by composite midpoint quadrature.

    Returns ``(slice, region)``; the region ceiling is ``M`` when given, else
    ``max(W, Z)^(1+eps^2)`` over the samples.
    """
    x = eps_value(e)
    mode = cfg.averaging if mode is None else mode
    if samples < 8:
        raise ValueError("use at least 8 sub-samples per cell")
    xc = cell_centers(cfg, 0)
    off = cfg.h * ((2 * np.arange(samples) + 1) / samples - 1.0)
    xs = xc[:, None] + off[None, :]
    r = np.asarray(rho0(xs), dtype=float) * np.ones_like(xs)
    u = np.asarray(v0(xs), dtype=float) * np.ones_like(xs)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise NotTame("initial density must be finite and non-negative")
    if np.any((np.abs(u) * x >= 1.0) & (r > 0)):
        raise NotTame("initial velocity reaches the light speed, W or Z is unbounded")
    W, Z = modified_invariants(r, np.where(r > 0, u, 0.0), x)
    if M is None:
        M = float(max(W.max(), Z.max())) ** (1.0 + x * x)
        if not M > 0:
            raise NotTame("initial data is vacuum everywhere")
    region = TameRegion(M=float(M), eps=x)
    if mode == "conservative":
        G, H, _ = _cons(r, u, x)
        rho, v = primitives_from_conservative(G.mean(axis=1), H.mean(axis=1), x)
    else:
        rho, v = r.mean(axis=1), u.mean(axis=1)
    return Slice(0.0, 0, xc, rho, v), region


# ---------------------------------------------------------------------------
# fan averages


def _cons(rho, v, x):
    """Conservative variables with vacuum mapped to zero."""
    rho = np.asarray(rho, dtype=float)
    vv = np.where(rho > 0, v, 0.0)
    G, H, F = conservative(rho, vv, x)
    return G, H, F


def _fan_profile(family, xi, rho_b, v_b, x):
    """``(rho, v)`` inside a rarefaction fan of the given family."""
    k = 1.0 + x * x
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == 1:
            v = (xi + 1.0) / (1.0 + x * x * xi)
            v = np.clip(v, -1.0 / x, 1.0 / x)
            rho = rho_b * np.exp(k * (ubar(v_b, x) - ubar(v, x)))
        else:
            v = (xi - 1.0) / (1.0 - x * x * xi)
            v = np.clip(v, -1.0 / x, 1.0 / x)
            rho = rho_b * np.exp(k * (ubar(v, x) - ubar(v_b, x)))
    rho = np.where(np.isfinite(rho), rho, 0.0)
    return rho, v


def _flux_form(family, xi, rho_b, v_b, x):
    """``xi U - F(U)`` for ``U = (G, H)`` at fan position ``xi``."""
    rho, v = _fan_profile(family, xi, rho_b, v_b, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        G, H, F = _cons(rho, v, x)
    G = np.where(rho > 0, G, 0.0)
    H = np.where(rho > 0, H, 0.0)
    F = np.where(rho > 0, F, 0.0)
    return xi * G - H, xi * H - F


def _edges(fb: FanBatch, L):
    k1, k2 = fb.kind1, fb.kind2
    lo = -L * np.ones(len(fb))
    hi = L * np.ones(len(fb))
    e1s = np.where(k1 == SHOCK, fb.s1, np.where(k1 == RAREFACTION, fb.a1, lo))
    e1e = np.where(k1 == SHOCK, fb.s1, np.where(k1 == RAREFACTION, fb.b1, lo))
    e2s = np.where(k2 == SHOCK, fb.s2, np.where(k2 == RAREFACTION, fb.a2, hi))
    e2e = np.where(k2 == SHOCK, fb.s2, np.where(k2 == RAREFACTION, fb.b2, hi))
    clip = lambda a: np.clip(a, -L, L)  # noqa: E731
    return clip(e1s), clip(e1e), clip(e2s), clip(e2e)


def fan_average_conservative(fb: FanBatch, L):
    """``(1/2L) int_{-L}^{L} (G, H) dxi`` for every fan, piece by piece.

    Constant pieces are integrated exactly; across a rarefaction the
    self-similar identity ``int U dxi = [xi U - F]`` is used.
    """
    x = fb.eps
    e1s, e1e, e2s, e2e = _edges(fb, L)
    Gl, Hl, _ = _cons(fb.rho_l, fb.v_l, x)
    Gm, Hm, _ = _cons(fb.rho_m, fb.v_m, x)
    Gr, Hr, _ = _cons(fb.rho_r, fb.v_r, x)
    G = Gl * (e1s + L) + Gm * np.maximum(e2s - e1e, 0.0) + Gr * (L - e2e)
    H = Hl * (e1s + L) + Hm * np.maximum(e2s - e1e, 0.0) + Hr * (L - e2e)
    r1 = fb.kind1 == RAREFACTION
    if r1.any():
        pa = _flux_form(1, e1s[r1], fb.rho_l[r1], fb.v_l[r1], x)
        pb = _flux_form(1, e1e[r1], fb.rho_l[r1], fb.v_l[r1], x)
        G[r1] += pb[0] - pa[0]
        H[r1] += pb[1] - pa[1]
    r2 = fb.kind2 == RAREFACTION
    if r2.any():
        pa = _flux_form(2, e2s[r2], fb.rho_r[r2], fb.v_r[r2], x)
        pb = _flux_form(2, e2e[r2], fb.rho_r[r2], fb.v_r[r2], x)
        G[r2] += pb[0] - pa[0]
        H[r2] += pb[1] - pa[1]
    return G / (2 * L), H / (2 * L)


_GK_X = np.array(
    [
        0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
        0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0,
    ]
)
_GK_WK = np.array(
    [
        0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
        0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
    ]
)
_GK_WG = np.array([0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469])


def _gk15(f, a, b):
    """Kronrod 15-point estimate and Gauss 7-point error on each lane."""
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    nodes = np.concatenate([-_GK_X[:-1], _GK_X[::-1]])
    wk = np.concatenate([_GK_WK[:-1], _GK_WK[::-1]])
    vals = f(c[:, None] + r[:, None] * nodes[None, :])
    k = r * np.sum(vals * wk[None, :], axis=1)
    # Gauss nodes are the odd-indexed Kronrod nodes
    gidx = np.array([1, 3, 5, 7, 9, 11, 13])
    wg = np.concatenate([_GK_WG[:-1], _GK_WG[::-1]])
    g = r * np.sum(vals[:, gidx] * wg[None, :], axis=1)
    return k, np.abs(k - g)


def adaptive_quadrature(f, a, b, tol=1e-10, max_depth=12):
    """Vectorised adaptive Gauss-Kronrod quadrature.

    ``f(lanes, xi)`` evaluates the integrand for lane indices ``lanes`` at
    points ``xi`` of shape ``(len(lanes), m)``.  Lanes that do not meet the
    tolerance within ``max_depth`` bisections fall back to a 64-point
    Gauss-Legendre rule on each remaining piece.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = np.zeros(a.size)
    lanes = np.arange(a.size)
    lo, hi, budget = a.copy(), b.copy(), np.full(a.size, tol)
    for _ in range(max_depth):
        if lanes.size == 0:
            return total
        est, err = _gk15(lambda xi: f(lanes, xi), lo, hi)
        ok = err <= budget
        np.add.at(total, lanes[ok], est[ok])
        bad = ~ok
        mid = 0.5 * (lo[bad] + hi[bad])
        lanes = np.concatenate([lanes[bad], lanes[bad]])
        lo, hi = np.concatenate([lo[bad], mid]), np.concatenate([mid, hi[bad]])
        budget = np.concatenate([budget[bad], budget[bad]]) * 0.5
    if lanes.size:
        xg, wg = np.polynomial.legendre.leggauss(64)
        c = 0.5 * (lo + hi)
        r = 0.5 * (hi - lo)
        vals = f(lanes, c[:, None] + r[:, None] * xg[None, :])
        np.add.at(total, lanes, r * np.sum(vals * wg[None, :], axis=1))
    return total


def fan_average_primitive(fb: FanBatch, L, tol=1e-10):
    """``(1/2L) int (rho, v) dxi`` over ``[-L, L]`` with quadrature across fans."""
    x = fb.eps
    e1s, e1e, e2s, e2e = _edges(fb, L)
    vm = np.where(fb.rho_m > 0, fb.v_m, 0.0)
    vl = np.where(fb.rho_l > 0, fb.v_l, 0.0)
    vr = np.where(fb.rho_r > 0, fb.v_r, 0.0)
    R = fb.rho_l * (e1s + L) + fb.rho_m * np.maximum(e2s - e1e, 0.0) + fb.rho_r * (L - e2e)
    V = vl * (e1s + L) + vm * np.maximum(e2s - e1e, 0.0) + vr * (L - e2e)
    for family, mask, rb, vb, a, b in (
        (1, fb.kind1 == RAREFACTION, fb.rho_l, fb.v_l, e1s, e1e),
        (2, fb.kind2 == RAREFACTION, fb.rho_r, fb.v_r, e2s, e2e),
    ):
        if not mask.any():
            continue
        idx = np.flatnonzero(mask)
        rbs, vbs = rb[idx], vb[idx]

        def f_rho(lanes, xi, rbs=rbs, vbs=vbs, family=family):
            return _fan_profile(family, xi, rbs[lanes][:, None], vbs[lanes][:, None], x)[0]

        def f_v(lanes, xi, rbs=rbs, vbs=vbs, family=family):
            r, v = _fan_profile(family, xi, rbs[lanes][:, None], vbs[lanes][:, None], x)
            return np.where(r > 0, v, 0.0)

        R[idx] += adaptive_quadrature(f_rho, a[idx], b[idx], tol)
        V[idx] += adaptive_quadrature(f_v, a[idx], b[idx], tol)
    return R / (2 * L), V / (2 * L)


# ---------------------------------------------------------------------------
# stepping


def _neighbours(s: Slice, cfg: GridConfig):
    """Left/right states for every interface feeding the next slice."""
    rho, v = s.rho, s.v
    if cfg.boundary == "periodic":
        return rho, v, np.roll(rho, -1), np.roll(v, -1)
    if s.parity % 2 == 0:
        # ghost copies at both ends: n + 1 interfaces
        rl = np.concatenate([rho[:1], rho])
        vl = np.concatenate([v[:1], v])
        rr = np.concatenate([rho, rho[-1:]])
        vr = np.concatenate([v, v[-1:]])
        return rl, vl, rr, vr
    return rho[:-1], v[:-1], rho[1:], v[1:]


def step(s: Slice, cfg: GridConfig, e, tau=None, index=0) -> Slice:
    x = eps_value(e)
    tau = cfg.tau if tau is None else tau
    _check_cfl(s, cfg, x, tau, index)
    rl, vl, rr, vr = _neighbours(s, cfg)
    if not cfg.vacuum and (np.any(rl == 0) or np.any(rr == 0)):
        raise VacuumUnsupported(f"vacuum state at step {index} with vacuum handling disabled")
    fb = solve_batch(rl, vl, rr, vr, x)
    if not cfg.vacuum and np.any(fb.rho_m == 0):
        raise VacuumUnsupported(f"vacuum middle state at step {index} with vacuum handling disabled")
    L = cfg.h / tau
    if cfg.averaging == "conservative":
        G, H = fan_average_conservative(fb, L)
        G = np.maximum(G, 0.0)
        rho, v = primitives_from_conservative(G, H, x)
        rho = np.maximum(rho, 0.0)
    else:
        rho, v = fan_average_primitive(fb, L)
    parity = (s.parity + 1) % 2
    xc = s.x + cfg.h if cfg.boundary == "periodic" else cell_centers(cfg, parity)
    return Slice(s.t + tau, parity, xc, rho, v)


def lxf_average(s: Slice, cfg: GridConfig, e, tau=None):
    """Staggered Lax-Friedrichs update of ``(G, H)`` from the cell values.

    Equal to the exact conservative fan average whenever the fans stay inside
    their cells.
    """
    x = eps_value(e)
    tau = cfg.tau if tau is None else tau
    rl, vl, rr, vr = _neighbours(s, cfg)
    Gl, Hl, Fl = _cons(rl, vl, x)
    Gr, Hr, Fr = _cons(rr, vr, x)
    lam = tau / (2 * cfg.h)
    return 0.5 * (Gl + Gr) - lam * (Hr - Hl), 0.5 * (Hl + Hr) - lam * (Fr - Fl)


def run(initial: Slice, T_final, cfg: GridConfig, e, region: Optional[TameRegion] = None, check_tame=True) -> Trajectory:
    """Evolve ``initial`` to ``T_final``.

    With a fixed step, slice ``n`` sits at ``t = n tau`` and the last step is
    shortened to land on ``T_final``.
    Every output slice is audited against the tame region; a violation
    beyond ``1e-9`` raises :class:`NotTame`.
    """
    x = eps_value(e)
    if region is None:
        W, Z = modified_invariants(initial.rho, initial.v, x)
        region = TameRegion(M=float(max(W.max(), Z.max())) ** (1 + x * x), eps=x)
    slices = [initial]
    margins, slacks, wz_excess = [], [], []
    s = initial
    n = 0
    slacks.append(_min_slack(s, region, x))
    n_fixed = 0 if T_final <= 0 else int(np.ceil(T_final / cfg.tau - 1e-9))
    while (n < n_fixed) if not cfg.adaptive else (s.t < T_final * (1 - 1e-14)):
        if cfg.adaptive:
            tau = min(adaptive_tau(s, cfg, x), T_final - s.t)
        else:
            tau = cfg.tau if n < n_fixed - 1 else T_final - (n_fixed - 1) * cfg.tau
        margins.append(cfl_margin(s, cfg, x, tau))
        try:
            new = step(s, cfg, x, tau, index=n)
        except CflViolation:
            raise
        except Exception as exc:  # attach the step index
            raise type(exc)(f"step {n}: {exc}") from exc
        n += 1
        if not cfg.adaptive:
            new.t = T_final if n == n_fixed else n * cfg.tau
        Wi, Zi = modified_invariants(s.rho, s.v, x)
        Wo, Zo = modified_invariants(new.rho, new.v, x)
        wz_excess.append(max(float(Wo.max() - Wi.max()), float(Zo.max() - Zi.max())))
        slack = _min_slack(new, region, x)
        slacks.append(slack)
        if check_tame and slack < -TAME_TOL:
            raise NotTame(f"step {n}: tame slack {slack!r} below -{TAME_TOL}")
        s = new
        last = (n == n_fixed) if not cfg.adaptive else s.t >= T_final * (1 - 1e-14)
        if n % cfg.stride == 0 or last:
            slices.append(s)
    diag = {"cfl_margin": margins, "tame_slack": slacks, "wz_excess": wz_excess, "steps": n}
    return Trajectory(cfg, x, region, slices, diag)


def _min_slack(s: Slice, region: TameRegion, x):
    return float(np.min(tame_slack(s.rho, np.where(s.rho > 0, s.v, 0.0), region.M, x)))


def slice_table(s: Slice, e):
    """Columns ``x_center, rho, v, w, z, G, H`` of a slice."""
    x = eps_value(e)
    with np.errstate(divide="ignore"):
        w, z = invariants(s.rho, s.v, x)
    G, H, _ = _cons(s.rho, s.v, x)
    return {"x_center": s.x, "rho": s.rho, "v": s.v, "w": w, "z": z, "G": G, "H": H}


def scaled(s: Slice, lam) -> Slice:
    return replace(s, rho=s.rho * lam)
