"""Entropy kernel, flux kernel and the trace identities built from them.

The entropy kernel ``chi(w, z)`` is supported on ``wz <= 0`` and solves

    chi_wz + b(w+z) chi_w + a(w+z) chi_z = 0

in each of the two quadrants ``w < 0 < z`` and ``w > 0 > z``, with data
``A(w)`` on ``z = 0`` and ``B(z)`` on ``w = 0``.  Fields are computed by a
second-order cell-integral march along anti-diagonals.  The adjoint Goursat
problem for the Riemann function is marched separately; its corner value is a
second route to ``chi``.

Conventions
-----------
* ``sgn(0) = 0`` in the odd trace functions ``X1`` and ``X3``.
* The flux kernel ``sigma_sharp`` is single valued only after a cut: it is set
  to zero on ``wz > 0``, its trace on ``z = 0`` is ``(lambda1 - w/2) chi`` on
  both half axes, and its trace on ``w = 0`` is ``(lambda2 - z/2) chi - 2``.
  The point value at the origin is 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .core import eps_value, invariants, speeds_xi
from .errors import DomainError, WindowStraddlesOne

DEFAULT_DELTA = 1.0 / 128
DEFAULT_HALF_WIDTH = 12.0


# ---------------------------------------------------------------------------
# coefficients


def coeff_a(xi, e):
    """Coefficient of ``chi_z`` as a function of ``xi = w + z``."""
    x = eps_value(e, allow_zero=True)
    xi = np.asarray(xi, dtype=float)
    if x == 0.0:
        return np.full_like(xi, -0.25)
    t = np.exp(np.clip(x * xi, -700.0, 700.0))
    return -0.25 * (1 - x * x) * (1 - x + (1 + x) * t) / (1 + x + (1 - x) * t)


def coeff_b(xi, e):
    """Coefficient of ``chi_w``; equals ``-coeff_a(-xi)``."""
    return -coeff_a(-np.asarray(xi, dtype=float), e)


def coeff_a_v(v, e):
    x = eps_value(e, allow_zero=True)
    v = np.asarray(v, dtype=float)
    return -0.25 * (1 - x * x) * (1 + x * x * v) / (1 - x * x * v)


def coeff_b_v(v, e):
    return -coeff_a_v(-np.asarray(v, dtype=float), e)


@dataclass(frozen=True)
class Coefficients:
    eps: float

    def a(self, xi):
        return coeff_a(xi, self.eps)

    def b(self, xi):
        return coeff_b(xi, self.eps)

    def a_v(self, v):
        return coeff_a_v(v, self.eps)

    def b_v(self, v):
        return coeff_b_v(v, self.eps)


@dataclass(frozen=True)
class FrozenCoefficients:
    """Constant coefficients, used to exercise the solvers on toy problems."""

    a0: float = 0.0
    b0: float = 0.0

    def a(self, xi):
        return np.full_like(np.asarray(xi, dtype=float), self.a0)

    def b(self, xi):
        return np.full_like(np.asarray(xi, dtype=float), self.b0)


# ---------------------------------------------------------------------------
# closed-form traces


def trace_A(w, e):
    """``chi(w, 0)``."""
    x = eps_value(e, allow_zero=True)
    w = np.asarray(w, dtype=float)
    return 0.5 * (1 + x + (1 - x) * np.exp(x * w)) * np.exp((1 - x) ** 2 * w / 4)


def trace_B(z, e):
    """``chi(0, z)``."""
    x = eps_value(e, allow_zero=True)
    z = np.asarray(z, dtype=float)
    return 0.5 * (1 - x + (1 + x) * np.exp(x * z)) * np.exp(-((1 + x) ** 2) * z / 4)


def _sgn(d):
    return np.sign(np.asarray(d, dtype=float))


@dataclass(frozen=True)
class TraceTable:
    """Closed-form boundary values of the kernels and their derivatives."""

    eps: float

    def A(self, w):
        return trace_A(w, self.eps)

    def B(self, z):
        return trace_B(z, self.eps)

    def C1_w0(self, w):
        """``chi_w(w, 0)`` as printed."""
        x = self.eps
        w = np.asarray(w, dtype=float)
        return 0.25 * (1 - x * x) * 0.5 * (1 - x + (1 + x) * np.exp(x * w)) * np.exp((1 - x) ** 2 * w / 4)

    def C2_0z(self, z):
        """``chi_z(0, z)`` as printed."""
        x = self.eps
        z = np.asarray(z, dtype=float)
        return -0.25 * (1 - x * x) * 0.5 * (1 + x + (1 - x) * np.exp(x * z)) * np.exp(-((1 + x) ** 2) * z / 4)

    def C1_0z(self, z):
        """``chi_w(0, z)``."""
        x = self.eps
        z = np.asarray(z, dtype=float)
        return 0.25 * (1 - x * x) * (1 - 0.25 * (1 - x * x) * z) * trace_B(z, x)

    def C2_w0(self, w):
        """``chi_z(w, 0)``."""
        x = self.eps
        w = np.asarray(w, dtype=float)
        return -0.25 * (1 - x * x) * (1 + 0.25 * (1 - x * x) * w) * trace_A(w, x)

    def C5(self, z):
        x = self.eps
        z = np.asarray(z, dtype=float)
        t = np.exp(x * z)
        if x == 0.0:
            return np.abs(z) * 0.5 - _sgn(z) * (1.0 + 0.5 * z)
        return np.abs(z) * (1 - x + (1 + x) * t) / 4 + _sgn(z) * (1 - x - (1 + x) * t) / (2 * x)

    def C6(self, w):
        x = self.eps
        w = np.asarray(w, dtype=float)
        t = np.exp(x * w)
        if x == 0.0:
            return np.abs(w) * 0.5 + _sgn(w) * (1.0 - 0.5 * w)
        return np.abs(w) * (1 + x + (1 - x) * t) / 4 + _sgn(w) * (1 + x - (1 - x) * t) / (2 * x)

    def sigma_w0(self, w):
        """``sigma_sharp(w, 0)`` from the support side."""
        l1, _ = speeds_xi(w, self.eps)
        return (l1 - 0.5 * np.asarray(w, dtype=float)) * trace_A(w, self.eps)

    def sigma_0z(self, z):
        """``sigma_sharp(0, z)`` from the support side (includes the cut offset)."""
        _, l2 = speeds_xi(z, self.eps)
        return (l2 - 0.5 * np.asarray(z, dtype=float)) * trace_B(z, self.eps) - 2.0


def chi_traces(e) -> TraceTable:
    return TraceTable(eps_value(e, allow_zero=True))


# ---------------------------------------------------------------------------
# forward march


def _axis_ode(coef, s, start, h, n, rule="simpson"):
    """Integrate ``y' = -coef(t + s) y`` with ``y(start) = 1`` on ``n`` steps.

    ``rule="simpson"`` advances by ``exp(-int coef)`` with Simpson's rule for
    the integral (fourth order); ``rule="trapezoid"`` is the implicit
    trapezoid update (second order).  ``s`` holds one shift per batch row;
    returns shape ``(S, n+1)``.
    """
    t = start[:, None] + h * np.arange(n + 1)[None, :]
    c = coef(t + s[:, None])
    if rule == "simpson":
        cm = coef(t[:, :-1] + 0.5 * h + s[:, None])
        inc = h / 6.0 * (c[:, :-1] + 4.0 * cm + c[:, 1:])
        out = np.ones((s.size, n + 1))
        out[:, 1:] = np.exp(-np.cumsum(inc, axis=1))
        return out
    fac = (1.0 - 0.5 * h * c[:, :-1]) / (1.0 + 0.5 * h * c[:, 1:])
    out = np.ones((s.size, n + 1))
    out[:, 1:] = np.cumprod(fac, axis=1)
    return out


def march_quadrant(e, delta, n_w, n_z, sw, sz, shift=0.0, data="ode", coeffs=None):
    """Kernel values on the quadrant ``w = sw*i*delta``, ``z = sz*j*delta``.

    Parameters
    ----------
    shift : float or array
        ``c`` in ``K_c``, the kernel of the equation with coefficients
        evaluated at ``w + z + c``.  ``K_{2s}(w - s, z - s)`` is the kernel
        with its pole moved to ``(s, s)``.  An array gives a batch.
    data : {"ode", "trapezoid", "closed"}
        Axis data from integrating the trace ODEs (Simpson in the exponent,
        or the plain trapezoid update) or from the closed forms.

    Returns
    -------
    ndarray of shape ``(n_w + 1, n_z + 1)`` or ``(S, n_w + 1, n_z + 1)``.
    """
    scalar = np.ndim(shift) == 0
    c = np.atleast_1d(np.asarray(shift, dtype=float))
    if coeffs is None:
        x = eps_value(e, allow_zero=True)
        coeffs = Coefficients(x)
    a, b = coeffs.a, coeffs.b
    dw, dz = sw * delta, sz * delta
    S = c.size
    X = np.empty((S, n_w + 1, n_z + 1))
    if data == "closed":
        if isinstance(coeffs, FrozenCoefficients):
            raise ValueError("closed-form data needs the physical coefficients")
        x = coeffs.eps
        X[:, :, 0] = trace_A(dw * np.arange(n_w + 1)[None, :] + c[:, None], x) / trace_A(c, x)[:, None]
        X[:, 0, :] = trace_B(dz * np.arange(n_z + 1)[None, :] + c[:, None], x) / trace_B(c, x)[:, None]
    elif data in ("ode", "trapezoid"):
        rule = "simpson" if data == "ode" else "trapezoid"
        zero = np.zeros(S)
        X[:, :, 0] = _axis_ode(a, c, zero, dw, n_w, rule)
        X[:, 0, :] = _axis_ode(b, c, zero, dz, n_z, rule)
    else:
        raise ValueError("data must be 'ode', 'trapezoid' or 'closed'")
    cc = c[:, None]
    for k in range(2, n_w + n_z + 1):
        ii = np.arange(max(1, k - n_z), min(n_w, k - 1) + 1)
        if ii.size == 0:
            continue
        jj = k - ii
        w0, w1 = dw * (ii - 1), dw * ii
        z0, z1 = dz * (jj - 1), dz * jj
        wm, zm = 0.5 * (w0 + w1), 0.5 * (z0 + z1)
        b0 = b(wm + z0 + cc)
        b1 = b(wm + z1 + cc)
        a0 = a(w0 + zm + cc)
        a1 = a(w1 + zm + cc)
        c00 = X[:, ii - 1, jj - 1]
        c10 = X[:, ii, jj - 1]
        c01 = X[:, ii - 1, jj]
        rhs = c10 + c01 - c00 - 0.5 * dz * (b0 * (c10 - c00) - b1 * c01) - 0.5 * dw * (a0 * (c01 - c00) - a1 * c10)
        X[:, ii, jj] = rhs / (1.0 + 0.5 * dz * b1 + 0.5 * dw * a1)
    return X[0] if scalar else X


# ---------------------------------------------------------------------------
# adjoint Goursat problem


@dataclass
class GoursatField:
    """Riemann function ``R(w', z'; w, z)`` on the rectangle spanned by
    the target ``(w, z)`` and the corner."""

    target: tuple
    corner: tuple
    delta: float
    w_grid: np.ndarray
    z_grid: np.ndarray
    R: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def at_corner(self):
        return float(self.R[-1, -1])


def _adjoint_line_data(coeffs, w, z, wg, zg):
    if isinstance(coeffs, Coefficients):
        x = coeffs.eps
        rw = trace_A(w + z, x) / trace_A(wg + z, x)
        rz = trace_B(w + z, x) / trace_B(w + zg, x)
        return rw, rz
    # generic: trapezoid for R_w' = a R on z' = z, R_z' = b R on w' = w
    def integ(f, g):
        if g.size == 1:
            return np.ones(1)
        vals = f
        inc = 0.5 * (vals[1:] + vals[:-1]) * np.diff(g)
        return np.exp(np.concatenate([[0.0], np.cumsum(inc)]))

    return integ(coeffs.a(wg + z), wg), integ(coeffs.b(w + zg), zg)


def solve_goursat(target, delta, e, corner=(0.0, 0.0), coeffs=None) -> GoursatField:
    """March the adjoint Goursat problem from ``target`` back to ``corner``.

    The grid steps are the largest values not exceeding ``delta`` that land
    exactly on the corner.  ``R[i, j]`` is the value at ``(w_grid[i], z_grid[j])``
    with index 0 at the target.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if coeffs is None:
        coeffs = Coefficients(eps_value(e, allow_zero=True))
    w, z = float(target[0]), float(target[1])
    w0, z0 = float(corner[0]), float(corner[1])
    nw = int(np.ceil(abs(w0 - w) / delta - 1e-12))
    nz = int(np.ceil(abs(z0 - z) / delta - 1e-12))
    wg = np.linspace(w, w0, nw + 1)
    zg = np.linspace(z, z0, nz + 1)
    dw = (w0 - w) / nw if nw else 0.0
    dz = (z0 - z) / nz if nz else 0.0
    R = np.empty((nw + 1, nz + 1))
    R[:, 0], R[0, :] = _adjoint_line_data(coeffs, w, z, wg, zg)
    A = coeffs.a(wg[:, None] + zg[None, :])
    B = coeffs.b(wg[:, None] + zg[None, :])
    for k in range(2, nw + nz + 1):
        ii = np.arange(max(1, k - nz), min(nw, k - 1) + 1)
        if ii.size == 0:
            continue
        jj = k - ii
        r00, r10, r01 = R[ii - 1, jj - 1], R[ii, jj - 1], R[ii - 1, jj]
        b00, b10, b01, b11 = B[ii - 1, jj - 1], B[ii, jj - 1], B[ii - 1, jj], B[ii, jj]
        a00, a10, a01, a11 = A[ii - 1, jj - 1], A[ii, jj - 1], A[ii - 1, jj], A[ii, jj]
        rhs = (
            r10 + r01 - r00
            + 0.5 * dz * (b10 * r10 - b01 * r01 - b00 * r00)
            + 0.5 * dw * (a01 * r01 - a10 * r10 - a00 * r00)
        )
        R[ii, jj] = rhs / (1.0 - 0.5 * dz * b11 - 0.5 * dw * a11)
    diag = {"n_w": nw, "n_z": nz, "dw": dw, "dz": dz}
    return GoursatField((w, z), (w0, z0), delta, wg, zg, R, diag)


# ---------------------------------------------------------------------------
# kernel fields


def _bilinear(arr, fi, fj):
    n0, n1 = arr.shape
    i0 = np.clip(np.floor(fi).astype(int), 0, n0 - 2)
    j0 = np.clip(np.floor(fj).astype(int), 0, n1 - 2)
    ti = fi - i0
    tj = fj - j0
    return (
        arr[i0, j0] * (1 - ti) * (1 - tj)
        + arr[i0 + 1, j0] * ti * (1 - tj)
        + arr[i0, j0 + 1] * (1 - ti) * tj
        + arr[i0 + 1, j0 + 1] * ti * tj
    )


@dataclass
class KernelField:
    """Kernel and flux kernel on ``[-L, L]^2`` restricted to ``wz <= 0``.

    ``q2[i, j]`` holds the value at ``(-i*delta, j*delta)`` and ``q4[i, j]``
    the value at ``(i*delta, -j*delta)``.  The ``d*`` arrays hold partial
    derivatives with respect to ``w`` and ``z``.
    """

    eps: float
    delta: float
    half_width: float
    n: int
    q2: np.ndarray
    q4: np.ndarray
    dw2: np.ndarray
    dz2: np.ndarray
    dw4: np.ndarray
    dz4: np.ndarray
    sig2: np.ndarray
    sig4: np.ndarray
    path_residual: float

    def _lookup(self, w, z, a2, a4, outside=0.0):
        w = np.asarray(w, dtype=float)
        z = np.asarray(z, dtype=float)
        w, z = np.broadcast_arrays(w, z)
        L = self.half_width
        if np.any(np.abs(w) > L * (1 + 1e-12)) or np.any(np.abs(z) > L * (1 + 1e-12)):
            raise DomainError(f"point outside the kernel window [-{L}, {L}]^2")
        out = np.full(w.shape, outside, dtype=float)
        fi = np.abs(w) / self.delta
        fj = np.abs(z) / self.delta
        m2 = (w <= 0) & (z >= 0)
        m4 = (w >= 0) & (z <= 0) & ~m2
        if m2.any():
            out[m2] = _bilinear(a2, fi[m2], fj[m2])
        if m4.any():
            out[m4] = _bilinear(a4, fi[m4], fj[m4])
        return out

    def chi(self, w, z):
        return self._lookup(w, z, self.q2, self.q4)

    def chi_w(self, w, z):
        return self._lookup(w, z, self.dw2, self.dw4)

    def chi_z(self, w, z):
        return self._lookup(w, z, self.dz2, self.dz4)

    def sigma_sharp(self, w, z):
        return self._lookup(w, z, self.sig2, self.sig4)

    def axis_traces(self):
        """Axis values read from the interior by quadratic extrapolation.

        Returns ``(w, chi(w, 0), z, chi(0, z))`` on ``[-L, L]``.
        """
        def ext(c1, c2, c3):
            return 3 * c1 - 3 * c2 + c3

        n = self.n
        k = np.arange(n + 1)
        w = np.concatenate([-k[::-1], k[1:]]) * self.delta
        aw = np.concatenate([ext(*(self.q2[::-1, j] for j in (1, 2, 3))), ext(*(self.q4[1:, j] for j in (1, 2, 3)))])
        bz = np.concatenate([ext(*(self.q4[i, ::-1] for i in (1, 2, 3))), ext(*(self.q2[i, 1:] for i in (1, 2, 3)))])
        return w, aw, w.copy(), bz

    def grid(self):
        """Flat arrays ``(w, z, chi, sigma_sharp)`` over both quadrants."""
        k = np.arange(self.n + 1) * self.delta
        I, J = np.meshgrid(k, k, indexing="ij")
        w = np.concatenate([-I.ravel(), I.ravel()])
        z = np.concatenate([J.ravel(), -J.ravel()])
        c = np.concatenate([self.q2.ravel(), self.q4.ravel()])
        s = np.concatenate([self.sig2.ravel(), self.sig4.ravel()])
        return w, z, c, s


def _sigma_quadrant(X, dXw, dXz, sw, sz, delta, e):
    """Integrate the flux-kernel gradient over one quadrant.

    Primary path: along the ``w`` axis from the origin, then along ``z``.
    The other ordering gives the path-independence residual.
    """
    n0, n1 = X.shape
    W = sw * delta * np.arange(n0)[:, None]
    Z = sz * delta * np.arange(n1)[None, :]
    xi = W + Z
    l1, l2 = speeds_xi(xi, e)
    ub = 0.5 * xi
    Sw = (l2 - ub) * dXw - 0.5 * X
    Sz = (l1 - ub) * dXz - 0.5 * X
    dw, dz = sw * delta, sz * delta
    corner = -1.0

    def cum(a, h, axis):
        inc = 0.5 * h * (np.take(a, range(1, a.shape[axis]), axis=axis) + np.take(a, range(0, a.shape[axis] - 1), axis=axis))
        z0 = np.zeros_like(np.take(a, [0], axis=axis))
        return np.concatenate([z0, np.cumsum(inc, axis=axis)], axis=axis)

    row0 = corner + cum(Sw[:, 0], dw, 0)
    sig_a = row0[:, None] + cum(Sz, dz, 1)
    col0 = corner + cum(Sz[0, :], dz, 0)
    sig_b = col0[None, :] + cum(Sw, dw, 0)
    return sig_a, float(np.max(np.abs(sig_a - sig_b)))


def build_kernel_field(e, delta=DEFAULT_DELTA, half_width=DEFAULT_HALF_WIDTH, data="ode") -> KernelField:
    x = eps_value(e, allow_zero=True)
    n = int(round(half_width / delta))
    if abs(n * delta - half_width) > 1e-9 * half_width:
        raise ValueError("half_width must be a multiple of delta")
    q2 = march_quadrant(x, delta, n, n, -1.0, 1.0, data=data)
    q4 = march_quadrant(x, delta, n, n, 1.0, -1.0, data=data)
    g2 = np.gradient(q2, -delta, delta, edge_order=2)
    g4 = np.gradient(q4, delta, -delta, edge_order=2)
    sig2, r2 = _sigma_quadrant(q2, g2[0], g2[1], -1.0, 1.0, delta, x)
    sig4, r4 = _sigma_quadrant(q4, g4[0], g4[1], 1.0, -1.0, delta, x)
    return KernelField(x, delta, float(half_width), n, q2, q4, g2[0], g2[1], g4[0], g4[1], sig2, sig4, max(r2, r4))


@lru_cache(maxsize=8)
def _cached_field(x, delta, half_width, data):
    return build_kernel_field(x, delta, half_width, data)


def kernel_field(e, delta=DEFAULT_DELTA, reach=0.0, data="ode") -> KernelField:
    """Shared (cached) field whose window covers ``|w|, |z| <= reach``."""
    x = eps_value(e, allow_zero=True)
    L = max(DEFAULT_HALF_WIDTH, float(np.ceil(reach)))
    return _cached_field(x, float(delta), L, data)


def _reach(*arrs):
    return max(float(np.max(np.abs(np.asarray(a, dtype=float)), initial=0.0)) for a in arrs)


def chi(w, z, e, delta=DEFAULT_DELTA):
    """Entropy kernel; zero where ``wz > 0``."""
    f = kernel_field(e, delta, _reach(w, z))
    out = f.chi(w, z)
    return float(out) if np.ndim(out) == 0 else out


def sigma_sharp(w, z, e, delta=DEFAULT_DELTA):
    """Flux kernel remainder ``sigma - ubar chi`` on ``wz <= 0``."""
    w_a = np.asarray(w, dtype=float)
    z_a = np.asarray(z, dtype=float)
    if np.any(w_a * z_a > 0):
        raise DomainError("sigma_sharp is evaluated on wz <= 0 only")
    f = kernel_field(e, delta, _reach(w, z))
    out = f.sigma_sharp(w_a, z_a)
    out = np.where((w_a == 0) & (z_a == 0), 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# entropy pairs


@dataclass
class EntropyPair:
    """Entropy ``U`` and flux ``F`` tabulated on a ``(w, z)`` window."""

    eps: float
    delta: float
    w: np.ndarray
    z: np.ndarray
    U: np.ndarray
    F: np.ndarray
    residual: float
    path_residual: float

    def _interp(self, table, rho, v):
        from scipy.interpolate import RectBivariateSpline

        w, z = invariants(rho, v, self.eps)
        spl = RectBivariateSpline(self.w, self.z, table)
        return spl.ev(np.ravel(w), np.ravel(z)).reshape(np.shape(w))

    def covers(self, rho, v):
        w, z = invariants(rho, v, self.eps)
        return bool(
            np.all((w >= self.w[0]) & (w <= self.w[-1]) & (z >= self.z[0]) & (z <= self.z[-1]))
        )

    def evaluate(self, rho, v):
        return self._interp(self.U, rho, v), self._interp(self.F, rho, v)


def _snap(lo, hi, delta):
    return np.floor(lo / delta + 1e-9) * delta, np.ceil(hi / delta - 1e-9) * delta


def _flux_from_entropy(U, w, z, e):
    """Integrate ``F_w = lambda2 U_w`` and ``F_z = lambda1 U_z`` on the grid."""
    l1, l2 = speeds_xi(w[:, None] + z[None, :], e)
    dUw = np.diff(U, axis=0)
    dUz = np.diff(U, axis=1)
    fw = 0.5 * (l2[1:, :] + l2[:-1, :]) * dUw
    fz = 0.5 * (l1[:, 1:] + l1[:, :-1]) * dUz
    row = np.concatenate([[0.0], np.cumsum(fw[:, 0])])
    F = row[:, None] + np.concatenate([np.zeros((U.shape[0], 1)), np.cumsum(fz, axis=1)], axis=1)
    col = np.concatenate([[0.0], np.cumsum(fz[0, :])])
    F2 = col[None, :] + np.concatenate([np.zeros((1, U.shape[1])), np.cumsum(fw, axis=0)], axis=0)
    path = float(np.max(np.abs(F - F2)))
    # pointwise residual of F_z - lambda1 U_z on the primary path
    dw = w[1] - w[0]
    dz = z[1] - z[0]
    Fw, Fz = np.gradient(F, dw, dz, edge_order=2)
    Uw, Uz = np.gradient(U, dw, dz, edge_order=2)
    res = max(float(np.max(np.abs(Fw - l2 * Uw))), float(np.max(np.abs(Fz - l1 * Uz))))
    return F, res, path


def entropy_pairs(psis: Sequence[Callable], window, e, delta=1.0 / 64, chunk=32):
    """Entropy pairs for several weights sharing one kernel computation.

    ``U(w, z) = int chi_s(w, z) psi(s) ds`` where ``chi_s`` is the kernel with
    its pole moved to ``(s, s)``, and ``s`` runs over ``[min(w,z), max(w,z)]``.
    The flux is obtained by integrating the entropy-pair relations on the
    window and is fixed to 0 at the lower-left window corner.
    """
    x = eps_value(e)
    w_lo, w_hi, z_lo, z_hi = (float(a) for a in window)
    w_lo, w_hi = _snap(w_lo, w_hi, delta)
    z_lo, z_hi = _snap(z_lo, z_hi, delta)
    if w_hi < z_lo:
        below = True
    elif w_lo > z_hi:
        below = False
    else:
        raise WindowStraddlesOne("the window meets w = z (density 1); pick it inside rho < 1 or rho > 1")
    iw = np.arange(int(round(w_lo / delta)), int(round(w_hi / delta)) + 1)
    iz = np.arange(int(round(z_lo / delta)), int(round(z_hi / delta)) + 1)
    wg, zg = iw * delta, iz * delta
    s_lo, s_hi = min(iw[0], iz[0]), max(iw[-1], iz[-1])
    i_s = np.arange(s_lo, s_hi + 1)
    # kernel for pole (s, s): p = w - s and q = z - s
    n = int(s_hi - s_lo)
    sw, sz = (-1.0, 1.0) if below else (1.0, -1.0)
    U = np.zeros((len(psis), iw.size, iz.size))
    psi_vals = np.array([np.asarray(p(i_s * delta), dtype=float) * np.ones(i_s.size) for p in psis])
    IW, IZ = np.meshgrid(iw, iz, indexing="ij")
    for start in range(0, i_s.size, chunk):
        block = i_s[start : start + chunk]
        K = march_quadrant(x, delta, n, n, sw, sz, shift=2.0 * block * delta)
        for b, k_s in enumerate(block):
            # |p| and |q| in grid units
            pi = np.abs(IW - k_s)
            qj = np.abs(IZ - k_s)
            inside = (IW - k_s) * (IZ - k_s) <= 0
            if not inside.any():
                continue
            vals = np.where(inside, K[b, np.minimum(pi, n), np.minimum(qj, n)], 0.0)
            wt = np.where((IW == k_s) | (IZ == k_s), 0.5, 1.0) * delta
            U += psi_vals[:, start + b][:, None, None] * (wt * vals)[None]
    pairs = []
    for k in range(len(psis)):
        F, res, path = _flux_from_entropy(U[k], wg, zg, x)
        pairs.append(EntropyPair(x, delta, wg, zg, U[k], F, res, path))
    return pairs


def entropy_pair(psi: Callable, window, e, delta=1.0 / 64) -> EntropyPair:
    return entropy_pairs([psi], window, e, delta)[0]


# ---------------------------------------------------------------------------
# trace functions and the sign quantity


def x_functions(w, z, s, e, field: Optional[KernelField] = None):
    """``(X1, X2, X3, X4)`` at ``(w, z, s)``.

    ``X1``, ``X3`` depend on ``d = w - z`` only and are closed form.  ``X2``,
    ``X4`` need the kernel derivatives at ``(w - s, z - s)``; when ``s``
    equals ``z`` they reduce to closed-form traces, otherwise a kernel field
    is used.
    """
    x = eps_value(e)
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    d = w - z
    sg = _sgn(d)
    A = trace_A(d, x)
    l1d, _ = speeds_xi(d, x)
    X1 = sg * A
    X3 = sg * (l1d - 0.5 * d) * A
    p, q = w - s, z - s
    if np.any(p * q > 0):
        raise DomainError("X2 and X4 need s between w and z")
    on_trace = np.all(q == 0)
    tt = TraceTable(x)
    if on_trace:
        c1, c2, ch = -coeff_a(p, x) * trace_A(p, x), tt.C2_w0(p), trace_A(p, x)
    else:
        f = field if field is not None else kernel_field(x, DEFAULT_DELTA / 2, _reach(p, q))
        c1, c2, ch = f.chi_w(p, q), f.chi_z(p, q), f.chi(p, q)
    l1, l2 = speeds_xi(p + q, x)
    ub = 0.5 * (p + q)
    c3 = (l2 - ub) * c1 - 0.5 * ch
    c4 = (l1 - ub) * c2 - 0.5 * ch
    return X1, -(c1 + c2), X3, -(c3 + c4)


def x3_printed(d, e):
    """Closed form of ``X3`` as an explicit exponential expression."""
    x = eps_value(e)
    d = np.asarray(d, dtype=float)
    t = np.exp(x * d)
    return -(np.abs(d) / 2 * (1 + x + (1 - x) * t) / 2 + _sgn(d) * (1 + x - (1 - x) * t) / (2 * x)) * np.exp(
        (1 - x) ** 2 * d / 4
    )


def omega(w, e):
    """``Omega(w)`` exactly as printed."""
    x = eps_value(e, allow_zero=True)
    w = np.asarray(w, dtype=float)
    l1, l2 = speeds_xi(w, x)
    return -0.5 * (1 - x * x) * (1 + 0.25 * (1 - x * x) * w) * (l1 - 0.5 * w) + (l1 + l2 - w) * coeff_a(w, x) - 1.0


def omega_from_traces(w, e):
    """``Omega`` assembled with ``chi_w(w, 0) = -a(w) chi(w, 0)``."""
    x = eps_value(e, allow_zero=True)
    w = np.asarray(w, dtype=float)
    l1, l2 = speeds_xi(w, x)
    return -0.5 * (1 - x * x) * (1 + 0.25 * (1 - x * x) * w) * (l1 - 0.5 * w) - (l1 + l2 - w) * coeff_a(w, x) - 1.0


def xi_from_traces(w, e):
    """``chi (sigma_w + sigma_z) + (chi_w + chi_z) sigma`` at ``(w, 0)``."""
    x = eps_value(e, allow_zero=True)
    w = np.asarray(w, dtype=float)
    tt = TraceTable(x)
    A = trace_A(w, x)
    c1 = -coeff_a(w, x) * A
    c2 = tt.C2_w0(w)
    l1, l2 = speeds_xi(w, x)
    sig = (l1 - 0.5 * w) * A
    sw = (l2 - 0.5 * w) * c1 - 0.5 * A
    sz = (l1 - 0.5 * w) * c2 - 0.5 * A
    return A * (sw + sz) + (c1 + c2) * sig


def xi_omega(w, e):
    """``(Xi, Omega, Q_minus, Q_plus)`` along ``z = 0``.

    ``Omega`` is the printed expression and ``Xi = chi(w, 0)^2 Omega``.
    ``Q_minus = X2 X3 + X1 X4`` and ``Q_plus = X2 X3 - X1 X4`` evaluated on
    the trace ``s = z`` with ``w - z`` set to ``w``.
    """
    x = eps_value(e)
    w = np.asarray(w, dtype=float)
    om = omega(w, x)
    xi = trace_A(w, x) ** 2 * om
    X1, X2, X3, X4 = x_functions(w, 0.0, 0.0, x)
    return xi, om, X2 * X3 + X1 * X4, X2 * X3 - X1 * X4


# ---------------------------------------------------------------------------
# non-relativistic limit


def f0(m, tol=1e-16, max_terms=2000):
    """Power series solution of ``m f'' + f' + f/16 = 0`` with ``f(0) = 1``."""
    m = np.asarray(m, dtype=float)
    term = np.ones_like(m)
    total = np.ones_like(m)
    for n in range(max_terms):
        term = term * (-m) / (16.0 * (n + 1) ** 2)
        total = total + term
        if np.all(np.abs(term) <= tol * np.abs(total)):
            break
    return total


def f0_derivatives(m, max_terms=2000):
    """``(f0', f0'')`` by term-wise differentiation of the series."""
    m = np.asarray(m, dtype=float)
    a = 1.0
    coefs = [a]
    for n in range(max_terms):
        a = -a / (16.0 * (n + 1) ** 2)
        coefs.append(a)
        if abs(a) * max(1.0, float(np.max(np.abs(m), initial=0.0))) ** (n + 1) < 1e-300:
            break
    c = np.array(coefs)
    k = np.arange(c.size)
    d1 = np.polynomial.polynomial.polyval(m, (c * k)[1:])
    d2 = np.polynomial.polynomial.polyval(m, (c * k * (k - 1))[2:])
    return d1, d2


def chi0(w, z):
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.where(w * z <= 0, np.exp((w - z) / 4) * f0(w * z), 0.0)


def chi0_and_f0(w, z):
    """Non-relativistic kernel ``e^{(w-z)/4} f0(wz)`` on ``wz <= 0``."""
    out = chi0(w, z)
    return float(out) if np.ndim(out) == 0 else out


def nonrel_corrections(R, u_or_v):
    """``(G_chi(R), G_h(v), Q_minus_0(R))`` of the non-relativistic limit.

    ``G_chi(R) = 2|R| f0'(0) e^{R/2}`` with ``f0'(0) = -1/16``,
    ``G_h(v) = e^{-|v|/2}(1/2 - |v|/8)`` and
    ``Q_minus_0(w) = e^{w/4}(-1/2 + w/8)`` evaluated at ``w = R``.
    """
    R = np.asarray(R, dtype=float)
    v = np.abs(np.asarray(u_or_v, dtype=float))
    g_chi = 2.0 * np.abs(R) * (-1.0 / 16.0) * np.exp(R / 2)
    g_h = np.exp(-v / 2) * (0.5 - v / 8)
    return g_chi, g_h, q_minus_0(R)


def q_minus_0(w):
    w = np.asarray(w, dtype=float)
    return np.exp(w / 4) * (-0.5 + w / 8)


def q_minus_normalized(w, e):
    """``Q_minus / chi(w, 0)`` on ``w < 0``; tends to ``q_minus_0``."""
    w = np.asarray(w, dtype=float)
    if np.any(w >= 0):
        raise DomainError("normalised Q_minus is taken on w < 0")
    _, _, qm, _ = xi_omega(w, e)
    return qm / trace_A(w, e)


# ---------------------------------------------------------------------------
# general characteristic problem


def solve_characteristic_value_problem(phi, psi, g, corner, targets, e, delta, coeffs=None, dphi=None, dpsi=None):
    """Solve ``U_wz + b U_w + a U_z = g`` with ``U(w, z') = phi(w)`` and
    ``U(w', z) = psi(z)`` through the Riemann-function representation.

    ``targets`` is an array of ``(w, z)`` points.  Each target gets its own
    adjoint Goursat field.  Derivatives of the line data are taken
    numerically unless ``dphi`` / ``dpsi`` are supplied.
    """
    if coeffs is None:
        coeffs = Coefficients(eps_value(e, allow_zero=True))
    w0, z0 = float(corner[0]), float(corner[1])
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.empty(len(targets))

    def trap(y, t):
        if t.size < 2:
            return 0.0
        return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))

    for k, (w, z) in enumerate(targets):
        gf = solve_goursat((w, z), delta, e, corner=(w0, z0), coeffs=coeffs)
        # reorder so the grids run from the corner to the target
        wg = gf.w_grid[::-1]
        zg = gf.z_grid[::-1]
        R = gf.R[::-1, ::-1]
        Rb = R[:, 0]  # along z' = z0
        Rl = R[0, :]  # along w' = w0
        ph = np.asarray(phi(wg), dtype=float) * np.ones_like(wg)
        ps = np.asarray(psi(zg), dtype=float) * np.ones_like(zg)
        dph = np.asarray(dphi(wg), dtype=float) if dphi is not None else (np.gradient(ph, wg, edge_order=2) if wg.size > 2 else np.zeros_like(wg))
        dps = np.asarray(dpsi(zg), dtype=float) if dpsi is not None else (np.gradient(ps, zg, edge_order=2) if zg.size > 2 else np.zeros_like(zg))
        Rbw = np.gradient(Rb, wg, edge_order=2) if wg.size > 2 else np.zeros_like(wg)
        Rlz = np.gradient(Rl, zg, edge_order=2) if zg.size > 2 else np.zeros_like(zg)
        val = 0.5 * ph[-1] * Rb[-1] + 0.5 * ps[-1] * Rl[-1]
        val += trap(0.5 * Rb * dph, wg)
        val += trap((coeffs.a(wg + z0) * Rb - 0.5 * Rbw) * ph, wg)
        val += trap(0.5 * Rl * dps, zg)
        val += trap((coeffs.b(w0 + zg) * Rl - 0.5 * Rlz) * ps, zg)
        if g is not None and wg.size > 1 and zg.size > 1:
            G = np.asarray(g(wg[:, None], zg[None, :]), dtype=float) * np.ones_like(R)
            inner = np.array([trap(G[i] * R[i], zg) for i in range(wg.size)])
            val += trap(inner, wg)
        out[k] = val
    return out
