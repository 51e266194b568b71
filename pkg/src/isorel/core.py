"""State types and closed-form maps for the isothermal relativistic Euler system.

The sound speed is normalised to one and ``eps`` is the ratio of the sound
speed to the light speed, so velocities satisfy ``|v| < 1/eps``.  Every
function accepts either a float or an :class:`Epsilon` for ``eps`` and works
elementwise on numpy arrays where that makes sense.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LightSpeed, NonPhysical, VacuumState


@dataclass(frozen=True)
class Epsilon:
    eps: float

    def __post_init__(self):
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")

    @property
    def eps_prime(self):
        return 2.0 * self.eps / (1.0 + self.eps**2)

    @property
    def alpha(self):
        return (1.0 + self.eps) ** 2 / (2.0 * (1.0 + self.eps**2))

    def __float__(self):
        return float(self.eps)


def eps_value(e, allow_zero=False):
    """Return ``e`` as a float after range checking."""
    x = float(e.eps if isinstance(e, Epsilon) else e)
    lo_ok = x >= 0.0 if allow_zero else x > 0.0
    if not (lo_ok and x <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    return x


def eps_prime(e):
    x = eps_value(e, allow_zero=True)
    return 2.0 * x / (1.0 + x * x)


def alpha(e):
    x = eps_value(e, allow_zero=True)
    return (1.0 + x) ** 2 / (2.0 * (1.0 + x * x))


@dataclass(frozen=True)
class FluidState:
    rho: float
    v: float

    @property
    def is_vacuum(self):
        return self.rho == 0.0


@dataclass(frozen=True)
class InvariantPair:
    w: float
    z: float

    @property
    def W(self):
        return float(np.exp(self.w))

    @property
    def Z(self):
        return float(np.exp(-self.z))


@dataclass(frozen=True)
class ConservativeState:
    G: float
    H: float
    F: float


@dataclass(frozen=True)
class TameRegion:
    M: float
    eps: float

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        eps_value(self.eps)

    def contains(self, s: FluidState):
        return tame_contains(self, s)

    def slack(self, rho, v):
        return tame_slack(rho, v, self.M, self.eps)


# ---------------------------------------------------------------------------
# elementwise maps


def ubar(v, e):
    """Rapidity-like velocity variable ``artanh(eps v)/eps``."""
    x = eps_value(e, allow_zero=True)
    v = np.asarray(v, dtype=float)
    if x == 0.0:
        return v * 1.0
    with np.errstate(divide="ignore"):
        return np.arctanh(x * v) / x


def velocity_from_ubar(u, e):
    x = eps_value(e, allow_zero=True)
    u = np.asarray(u, dtype=float)
    if x == 0.0:
        return u * 1.0
    return np.tanh(x * u) / x


def rbar(rho, e):
    x = eps_value(e, allow_zero=True)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(rho, dtype=float)) / (1.0 + x * x)


def invariants(rho, v, e):
    """Riemann invariants ``(w, z)`` of states given as arrays."""
    u = ubar(v, e)
    r = rbar(rho, e)
    return u + r, u - r


def primitives(w, z, e):
    """Inverse of :func:`invariants`."""
    x = eps_value(e, allow_zero=True)
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    rho = np.exp(0.5 * (1.0 + x * x) * (w - z))
    v = velocity_from_ubar(0.5 * (w + z), x)
    return rho, v


def speeds(v, e):
    """Characteristic speeds ``(lambda1, lambda2)`` as functions of ``v``."""
    x = eps_value(e, allow_zero=True)
    v = np.asarray(v, dtype=float)
    e2 = x * x
    return (v - 1.0) / (1.0 - e2 * v), (v + 1.0) / (1.0 + e2 * v)


def speeds_xi(xi, e):
    """Characteristic speeds as functions of ``xi = w + z``.

    Written as ``tanh(eps xi/2 -+ artanh eps)/eps`` which is the printed
    exponential form after dividing through, and is overflow free.
    """
    x = eps_value(e, allow_zero=True)
    xi = np.asarray(xi, dtype=float)
    if x == 0.0:
        return 0.5 * xi - 1.0, 0.5 * xi + 1.0
    if x == 1.0:
        one = np.ones_like(xi)
        return -one, one
    a = np.arctanh(x)
    return np.tanh(0.5 * x * xi - a) / x, np.tanh(0.5 * x * xi + a) / x


def conservative(rho, v, e):
    """``(G, H, F)`` for arrays of states; vacuum maps to zeros."""
    x = eps_value(e)
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    e2 = x * x
    d = 1.0 - e2 * v * v
    G = (1.0 + e2 * e2 * v * v) * rho / d
    H = (1.0 + e2) * rho * v / d
    F = (1.0 + v * v) * rho / d
    return G, H, F


def primitives_from_conservative(G, H, e):
    """Recover ``(rho, v)`` from ``(G, H)`` with the rationalised root.

    Zero ``G`` and ``H`` give vacuum with ``v = 0``.
    """
    x = eps_value(e)
    G = np.asarray(G, dtype=float)
    H = np.asarray(H, dtype=float)
    e2 = x * x
    a = G * (1.0 + e2)
    disc = a * a - 4.0 * e2 * e2 * H * H
    den = a + np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(den > 0, 2.0 * H / np.where(den > 0, den, 1.0), 0.0)
    rho = G * (1.0 - e2 * v * v) / (1.0 + e2 * e2 * v * v)
    return rho, v


def tame_slack(rho, v, M, e):
    """``(1 - eps|v|) - (rho/M)^eps'``; non-negative inside the tame region."""
    x = eps_value(e)
    rho = np.asarray(rho, dtype=float)
    return (1.0 - x * np.abs(v)) - (rho / M) ** eps_prime(x)


def region_from_bounds(W_max, Z_max, e):
    """Tame region whose ceiling is ``max(W, Z)^(1+eps^2)``.

    Every state with ``W <= W_max`` and ``Z <= Z_max`` lies in it.
    """
    x = eps_value(e)
    return TameRegion(M=float(max(W_max, Z_max)) ** (1.0 + x * x), eps=x)


# ---------------------------------------------------------------------------
# state-level operations


def _check_physical(s: FluidState, x: float):
    if s.rho < 0 or not np.isfinite(s.rho):
        raise NonPhysical(f"density {s.rho!r} is not admissible")
    if s.rho == 0:
        raise VacuumState("invariants are undefined at vacuum")
    if abs(s.v) * x >= 1.0:
        raise LightSpeed(f"|v| = {abs(s.v)!r} reaches 1/eps = {1.0 / x!r}")


def to_invariants(s: FluidState, e) -> InvariantPair:
    x = eps_value(e)
    _check_physical(s, x)
    w, z = invariants(s.rho, s.v, x)
    return InvariantPair(float(w), float(z))


def from_invariants(p: InvariantPair, e) -> FluidState:
    x = eps_value(e)
    rho, v = primitives(p.w, p.z, x)
    return FluidState(float(rho), float(v))


def wave_speeds(s: FluidState, e):
    x = eps_value(e)
    if abs(s.v) * x > 1.0:
        raise LightSpeed(f"|v| = {abs(s.v)!r} exceeds 1/eps")
    l1, l2 = speeds(s.v, x)
    return float(l1), float(l2)


def eigenvectors_and_jacobians(s: FluidState, e):
    """Right eigenvectors and Jacobian matrices in ``(rho, v)`` coordinates.

    Returns
    -------
    r1, r2 : ndarray
        Eigenvectors of ``DGtilde`` for the two speeds.
    DGH, DHF : ndarray
        Jacobians of ``(G, H)`` and ``(H, F)`` with respect to ``(rho, v)``.
    DGtilde : ndarray
        ``DGH^{-1} DHF``, the matrix of the quasilinear form.
    """
    x = eps_value(e, allow_zero=True)
    if s.rho <= 0:
        raise VacuumState("eigenvectors are undefined at vacuum")
    if x > 0 and abs(s.v) * x >= 1.0:
        raise LightSpeed("velocity at or beyond the light speed")
    rho, v = float(s.rho), float(s.v)
    e2 = x * x
    d = 1.0 - e2 * v * v
    q = 1.0 - e2 * e2 * v * v
    r1 = np.array([-1.0 / d, 1.0 / ((1.0 + e2) * rho)])
    r2 = np.array([1.0 / d, 1.0 / ((1.0 + e2) * rho)])
    DGH = np.array(
        [
            [(1.0 + e2 * e2 * v * v) / d, 2.0 * e2 * (1.0 + e2) * rho * v / d**2],
            [(1.0 + e2) * v / d, (1.0 + e2) * rho * (1.0 + e2 * v * v) / d**2],
        ]
    )
    DHF = np.array(
        [
            [(1.0 + e2) * v / d, (1.0 + e2) * rho * (1.0 + e2 * v * v) / d**2],
            [(1.0 + v * v) / d, 2.0 * (1.0 + e2) * rho * v / d**2],
        ]
    )
    DGtilde = np.array(
        [
            [(1.0 - e2) * v / q, (1.0 + e2) * rho / q],
            [d * d / ((1.0 + e2) * rho * q), (1.0 - e2) * v / q],
        ]
    )
    return r1, r2, DGH, DHF, DGtilde


def to_conservative(s: FluidState, e) -> ConservativeState:
    x = eps_value(e)
    if abs(s.v) * x >= 1.0 and s.rho != 0:
        raise LightSpeed("velocity at or beyond the light speed")
    if s.rho == 0:
        return ConservativeState(0.0, 0.0, 0.0)
    G, H, F = conservative(s.rho, s.v, x)
    return ConservativeState(float(G), float(H), float(F))


def from_conservative(G, H, e) -> FluidState:
    x = eps_value(e)
    if G == 0 and H == 0:
        return FluidState(0.0, 0.0)
    if G <= 0:
        raise NonPhysical(f"G = {G!r} must be positive when H is nonzero")
    if (G * (1 + x * x)) ** 2 - 4 * x**4 * H * H < 0:
        raise NonPhysical("no real velocity for these conservative values")
    rho, v = primitives_from_conservative(G, H, x)
    return FluidState(float(rho), float(v))


def tame_contains(r: TameRegion, s: FluidState) -> bool:
    if s.rho < 0 or s.rho > r.M:
        return False
    return bool(tame_slack(s.rho, s.v, r.M, r.eps) >= 0.0)


def nonrel_expansions(s: FluidState, e):
    """Residuals of the small-eps expansions of the speeds and of ``ubar``.

    ``eps = 0`` is accepted here.  Returns
    ``(lambda1 - (v-1)(1+eps^2 v), lambda2 - (v+1)(1-eps^2 v), ubar - v(1+eps^2 v^2/3))``.
    """
    x = eps_value(e, allow_zero=True)
    v = float(s.v)
    if x > 0 and abs(v) * x > 1.0:
        raise LightSpeed("velocity beyond the light speed")
    e2 = x * x
    l1, l2 = speeds(v, x)
    with np.errstate(divide="ignore"):
        u = float(ubar(v, x))
    return (
        float(l1 - (v - 1.0) * (1.0 + e2 * v)),
        float(l2 - (v + 1.0) * (1.0 - e2 * v)),
        u - v * (1.0 + e2 * v * v / 3.0),
    )
