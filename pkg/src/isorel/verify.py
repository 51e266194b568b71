"""Verification harnesses.

Every harness returns a :class:`ResidualReport`.  Reports carry the measured
quantity, the declared tolerance and free-form metadata, and serialise to a
JSON line.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import conservative, eps_value, tame_slack
from .errors import WindowMismatch
from .kernel import (
    build_kernel_field,
    chi0,
    omega,
    q_minus_0,
    q_minus_normalized,
)
from .scheme import Trajectory


@dataclass
class ResidualReport:
    name: str
    max_abs: float
    l1: float
    tolerance: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.max_abs <= self.tolerance)

    def to_json(self):
        d = asdict(self)
        d["pass"] = self.passed
        return json.dumps(d, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# jump relations


def rh_residual(left, right, s, e, tolerance=1e-10) -> ResidualReport:
    """Normalised residuals of ``s[G] = [H]`` and ``s[H] = [F]``."""
    x = eps_value(e)
    Gl, Hl, Fl = conservative(left.rho, left.v, x)
    Gr, Hr, Fr = conservative(right.rho, right.v, x)
    scale = max(float(abs(Gl) + abs(Gr) + abs(Hl) + abs(Hr) + abs(Fl) + abs(Fr)), 1e-300)
    r1 = abs(s * (Gr - Gl) - (Hr - Hl)) / scale
    r2 = abs(s * (Hr - Hl) - (Fr - Fl)) / scale
    return ResidualReport("rh", float(max(r1, r2)), float(r1 + r2), tolerance, {"mass": float(r1), "momentum": float(r2)})


# ---------------------------------------------------------------------------
# entropy inequalities


@dataclass(frozen=True)
class TestFunction:
    """Tensor product of smooth bumps ``theta(t, x) >= 0``.

    Each factor is ``exp(1 - 1/(1 - r^2))`` on ``|r| < 1`` with ``r`` the
    scaled distance to the centre, and zero outside.
    """

    __test__ = False  # keep pytest from collecting this class

    t_center: float
    t_radius: float
    x_center: float
    x_radius: float

    @staticmethod
    def _bump(r):
        r = np.asarray(r, dtype=float)
        inside = np.abs(r) < 1
        rr = np.where(inside, r, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - rr * rr)), 0.0)

    def __call__(self, t, x):
        return self._bump((t - self.t_center) / self.t_radius) * self._bump((np.asarray(x) - self.x_center) / self.x_radius)


def trivial_pair(kind, e):
    """The conserved pairs ``(G, H)`` and ``(H, F)`` as callables."""
    x = eps_value(e)

    def gh(rho, v):
        G, H, _ = conservative(rho, np.where(np.asarray(rho) > 0, v, 0.0), x)
        return G, H

    def hf(rho, v):
        _, H, F = conservative(rho, np.where(np.asarray(rho) > 0, v, 0.0), x)
        return H, F

    if kind == "GH":
        return gh
    if kind == "HF":
        return hf
    raise ValueError("kind must be 'GH' or 'HF'")


def _pair_callable(pair):
    if callable(pair):
        return pair, None
    return pair.evaluate, pair


def weak_form_integral(traj: Trajectory, pair, theta: Callable):
    """Discrete ``int int (U theta_t + F theta_x) + int U0 theta(0)``.

    For one staggered step from slice ``n`` (cells at ``x_k``) to slice
    ``n+1`` (cells at ``x_k +- h``) the contribution is

        sum_k [h U_k (theta_{k+1} + theta_{k-1}) + tau F_k (theta_{k+1} - theta_{k-1})]
        - sum_j 2h U_j^{n+1} theta_j^{n+1},

    with ``theta`` taken at ``t_{n+1}``.  It vanishes for conserved pairs and
    is non-negative for convex entropies when every fan is entropic.
    """
    f, table = _pair_callable(pair)
    cfg = traj.config
    h = cfg.h
    if cfg.boundary == "periodic":
        # periodic slices drift by h per step; read theta on the torus
        period = cfg.x_max - cfg.x_min
        theta_raw = theta
        theta = lambda t, x: theta_raw(t, cfg.x_min + np.mod(np.asarray(x) - cfg.x_min, period))  # noqa: E731
    total = 0.0
    per_step = []
    for a, b in zip(traj.slices[:-1], traj.slices[1:]):
        tau = b.t - a.t
        tp = theta(b.t, a.x + h)
        tm = theta(b.t, a.x - h)
        tj = theta(b.t, b.x)
        need_a = (tp != 0) | (tm != 0)
        need_b = tj != 0
        if not need_a.any() and not need_b.any():
            per_step.append(0.0)
            continue
        if table is not None:
            for s, m in ((a, need_a), (b, need_b)):
                if m.any() and not table.covers(s.rho[m], s.v[m]):
                    raise WindowMismatch("entropy table does not cover the trajectory states")
        Ua, Fa = f(a.rho[need_a], a.v[need_a])
        Ub, _ = f(b.rho[need_b], b.v[need_b])
        d = float(
            np.sum(h * Ua * (tp[need_a] + tm[need_a]) + tau * Fa * (tp[need_a] - tm[need_a]))
            - np.sum(2 * h * Ub * tj[need_b])
        )
        per_step.append(d)
        total += d
    return total, np.array(per_step)


def entropy_dissipation(traj: Trajectory, pair, theta: TestFunction, K=1.0, name="entropy") -> ResidualReport:
    """Check ``I >= -K sqrt(h)`` for the discrete weak-form integral ``I``."""
    if traj.diagnostics.get("steps", len(traj.slices) - 1) != len(traj.slices) - 1:
        raise ValueError("entropy_dissipation needs every slice (stride 1)")
    I, per = weak_form_integral(traj, pair, theta)
    tol = K * np.sqrt(traj.config.h)
    return ResidualReport(
        name,
        max(0.0, -I),
        float(np.sum(np.abs(per))),
        float(tol),
        {"integral": I, "h": traj.config.h, "K": K, "min_step": float(per.min(initial=0.0))},
    )


# ---------------------------------------------------------------------------
# audits


def tame_audit(traj: Trajectory, tolerance=1e-9) -> ResidualReport:
    """Smallest tame slack over every recorded state; passes if ``>= -tol``."""
    x = traj.eps
    slacks = [float(np.min(tame_slack(s.rho, np.where(s.rho > 0, s.v, 0.0), traj.region.M, x))) for s in traj.slices]
    m = min(slacks)
    return ResidualReport("tame", max(0.0, -m), float(sum(max(0.0, -q) for q in slacks)), tolerance, {"min_slack": m, "M": traj.region.M})


def scaling_equivariance(runner: Callable[[float], Trajectory], lam, tolerance=1e-11) -> ResidualReport:
    """Compare ``runner(lam)`` with ``runner(1)`` after scaling the density."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    base = runner(1.0)
    sc = runner(float(lam))
    if len(base.slices) != len(sc.slices):
        return ResidualReport("scaling", np.inf, np.inf, tolerance, {"reason": "slice count differs"})
    worst = 0.0
    l1 = 0.0
    for a, b in zip(base.slices, sc.slices):
        ref = lam * a.rho
        pos = ref > 0
        dr = np.zeros_like(ref)
        dr[pos] = np.abs(b.rho[pos] - ref[pos]) / ref[pos]
        dr[~pos] = np.abs(b.rho[~pos]) > 0
        dv = np.where(pos, np.abs(b.v - a.v), 0.0)
        dt = abs(b.t - a.t)
        worst = max(worst, float(dr.max(initial=0.0)), float(dv.max(initial=0.0)), dt)
        l1 += float(dr.sum() + dv.sum())
    return ResidualReport("scaling", worst, l1, tolerance, {"lambda": float(lam)})


# ---------------------------------------------------------------------------
# limits


def dalembert_cell_averages(a0: Callable, b0: Callable, period, x_min, x, t, h, n_fine=4096):
    """Cell averages of the exact wave-equation solution over ``(x-h, x+h)``.

    ``a_t + b_x = 0``, ``b_t + a_x = 0`` on a periodic interval.  The data is
    expanded in Fourier modes, ``a + b`` moves right and ``a - b`` moves left
    with unit speed, and cell averaging multiplies each mode by
    ``sin(kh)/(kh)``.
    """
    xf = x_min + period * np.arange(n_fine) / n_fine
    r = np.fft.rfft(a0(xf) + b0(xf)) / n_fine
    l = np.fft.rfft(a0(xf) - b0(xf)) / n_fine
    m = np.arange(r.size)
    k = 2 * np.pi * m / period
    keep = (np.abs(r) > 1e-15 * np.abs(r).max()) | (np.abs(l) > 1e-15 * np.abs(l).max())
    m, k, r, l = m[keep], k[keep], r[keep], l[keep]
    wt = np.where(m == 0, 1.0, 2.0)
    wt = np.where((n_fine % 2 == 0) & (m == n_fine // 2), 1.0, wt)
    sinc = np.where(k == 0, 1.0, np.sin(k * h) / np.where(k == 0, 1.0, k * h))
    x = np.asarray(x, dtype=float)[:, None] - x_min

    def series(c, shift):
        return np.real(np.sum(wt * sinc * c * np.exp(1j * k * (x - shift)), axis=1))

    R = series(r, t)
    Lf = series(l, -t)
    return 0.5 * (R + Lf), 0.5 * (R - Lf)


def wave_equation_limit(traj_eps1: Trajectory, a0: Callable, b0: Callable, tolerance=np.inf) -> ResidualReport:
    """L1 distance between the scheme's ``(a, b) = (G, H)`` and the exact evolution."""
    if traj_eps1.eps != 1.0:
        raise ValueError("the wave-equation comparison needs eps = 1")
    cfg = traj_eps1.config
    if cfg.boundary != "periodic":
        raise ValueError("the spectral oracle needs a periodic domain")
    period = cfg.x_max - cfg.x_min
    errs = []
    for s in traj_eps1.slices:
        G, H, _ = conservative(s.rho, s.v, 1.0)
        a, b = dalembert_cell_averages(a0, b0, period, cfg.x_min, s.x, s.t, cfg.h)
        errs.append(float(np.sum(np.abs(G - a) + np.abs(H - b)) * 2 * cfg.h))
    return ResidualReport("wave", errs[-1], float(sum(errs)), tolerance, {"h": cfg.h, "final_t": traj_eps1.final.t})


def chi_eps_sup_error(e, half_width=4.0, deltas=(1.0 / 128, 1.0 / 256)):
    """``sup |chi_eps - chi0|`` on ``[-L, L]^2`` using a Richardson-combined field."""
    d0, d1 = deltas
    f0 = build_kernel_field(e, d0, half_width)
    f1 = build_kernel_field(e, d1, half_width)
    r = int(round(d0 / d1))
    q2 = (4.0 * f1.q2[::r, ::r] - f0.q2) / 3.0
    q4 = (4.0 * f1.q4[::r, ::r] - f0.q4) / 3.0
    k = np.arange(f0.n + 1) * d0
    I, J = np.meshgrid(k, k, indexing="ij")
    e2 = np.abs(q2 - chi0(-I, J)).max()
    e4 = np.abs(q4 - chi0(I, -J)).max()
    # discretisation estimate from the two resolutions
    disc = max(np.abs(f1.q2[::r, ::r] - f0.q2).max(), np.abs(f1.q4[::r, ::r] - f0.q4).max()) / 3.0
    return float(max(e2, e4)), float(disc)


def kernel_eps_limit(e_sequence: Sequence[float], half_width=4.0, deltas=(1.0 / 128, 1.0 / 256), min_slope=1.9) -> ResidualReport:
    """Fit the decay of ``sup |chi_eps - chi0|`` in ``eps``.

    ``max_abs`` is the shortfall ``max(0, min_slope - slope)``.
    """
    eps = np.asarray(e_sequence, dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps sequence must decrease")
    sups, discs = zip(*(chi_eps_sup_error(x, half_width, deltas) for x in eps))
    slope = loglog_slope(eps, sups)
    return ResidualReport(
        "kernel-eps-limit",
        max(0.0, min_slope - slope),
        float(sum(sups)),
        0.0,
        {"eps": eps.tolist(), "sup": list(sups), "disc": list(discs), "slope": slope},
    )


def omega_eps_limit(e_sequence: Sequence[float], w=None, min_slope=1.9) -> ResidualReport:
    """Fit ``sup |Omega_eps - (-1/2 + w/8)|`` on ``[-10, 0]`` against ``eps``."""
    w = np.linspace(-10.0, 0.0, 641) if w is None else np.asarray(w, dtype=float)
    eps = np.asarray(e_sequence, dtype=float)
    sups = [float(np.max(np.abs(omega(w, x) - (-0.5 + w / 8)))) for x in eps]
    slope = loglog_slope(eps, sups)
    return ResidualReport("omega-eps-limit", max(0.0, min_slope - slope), float(sum(sups)), 0.0, {"eps": eps.tolist(), "sup": sups, "slope": slope})


def q_minus_eps_limit(e_sequence: Sequence[float], w=None, min_slope=1.9) -> ResidualReport:
    """Fit ``sup |Q_minus/chi(w,0) - Q_minus_0|`` on ``[-10, 0)`` against ``eps``."""
    w = np.linspace(-10.0, 0.0, 641)[:-1] if w is None else np.asarray(w, dtype=float)
    eps = np.asarray(e_sequence, dtype=float)
    sups = [float(np.max(np.abs(q_minus_normalized(w, x) - q_minus_0(w)))) for x in eps]
    slope = loglog_slope(eps, sups)
    return ResidualReport("q-minus-eps-limit", max(0.0, min_slope - slope), float(sum(sups)), 0.0, {"eps": eps.tolist(), "sup": sups, "slope": slope})
