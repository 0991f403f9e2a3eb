"""Radial shooting oracle for the unit disk.

The positive solution of -Delta u = u^p on the unit disk is radial and
unique, so it solves the ODE

    u'' + u'/r + u^p = 0,   u'(0) = 0,  u(1) = 0,

and can be computed to near machine precision by shooting on the center
value a = u(0).  The profiles produced here serve as the independent
oracle for the 2D finite element solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NoBracket

# Gauss-Legendre nodes/weights on [0, 1], degree-7 exact per subinterval.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _series_start(a: float, p: float) -> tuple[float, float, float]:
    """Start radius and (u, u') there from the expansion at r = 0.

    u(r) = a - a^p r^2/4 + p a^(2p-1) r^4/64 + O(r^6); the start radius is
    chosen so the truncated term is below 1e-12 relative, which keeps the
    1/r term regular for the integrator even at very large p.
    """
    r0 = min(1e-4, 0.02 * p**-0.25 * a ** (-(p - 1.0) / 2.0))
    ap = a**p
    u0 = a - ap * r0**2 / 4.0 + p * a ** (2.0 * p - 1.0) * r0**4 / 64.0
    du0 = -ap * r0 / 2.0 + p * a ** (2.0 * p - 1.0) * r0**3 / 16.0
    return r0, u0, du0


def _rhs(r, y, p):
    u, du = y
    up = max(u, 0.0) ** p
    return (du, -du / r - up)


def _integrate_rk45(a: float, p: float, r_max: float):
    """Integrate until the first zero of u; returns (R, solution) or None."""
    r0, u0, du0 = _series_start(a, p)

    def hit_zero(r, y, _p):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    sol = solve_ivp(
        _rhs,
        (r0, r_max),
        (u0, du0),
        args=(p,),
        method="RK45",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
        events=hit_zero,
    )
    if sol.t_events[0].size == 0:
        return None
    return float(sol.t_events[0][0]), sol


def _integrate_rk4_fixed(a: float, p: float, r_end: float, n_steps: int):
    """Classical fixed-step RK4 from the series start to the first zero.

    Returns (R, u_grid, du_grid, r_grid) where R interpolates the zero
    crossing with a cubic Hermite on the bracketing step.
    """
    r0, u0, du0 = _series_start(a, p)
    h = (r_end - r0) / n_steps
    r = r0
    y = np.array([u0, du0])
    rs = [r]
    ys = [y.copy()]
    for _ in range(n_steps):
        k1 = np.asarray(_rhs(r, y, p))
        k2 = np.asarray(_rhs(r + h / 2, y + h / 2 * k1, p))
        k3 = np.asarray(_rhs(r + h / 2, y + h / 2 * k2, p))
        k4 = np.asarray(_rhs(r + h, y + h * k3, p))
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        r += h
        rs.append(r)
        ys.append(y.copy())
        if y[0] < 0.0:
            break
    rs = np.array(rs)
    ys = np.array(ys)
    if ys[-1, 0] >= 0.0:
        return None
    # cubic Hermite root on the last step
    ra, rb = rs[-2], rs[-1]
    ua, dua = ys[-2]
    ub, dub = ys[-1]
    t = np.linspace(0.0, 1.0, 64)
    hh = rb - ra
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    uu = h00 * ua + h10 * hh * dua + h01 * ub + h11 * hh * dub
    k = int(np.searchsorted(-uu, 0.0))
    k = min(max(k, 1), 63)
    # secant polish on the Hermite polynomial
    t_lo, t_hi = t[k - 1], t[k]

    def hermite(tv):
        return (
            (2 * tv**3 - 3 * tv**2 + 1) * ua
            + (tv**3 - 2 * tv**2 + tv) * hh * dua
            + (-2 * tv**3 + 3 * tv**2) * ub
            + (tv**3 - tv**2) * hh * dub
        )

    for _ in range(80):
        t_mid = 0.5 * (t_lo + t_hi)
        if hermite(t_mid) > 0:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return ra + 0.5 * (t_lo + t_hi) * hh, rs, ys


@dataclass
class RadialSolution:
    """Converged radial profile on the unit disk."""

    p: float
    center_value: float          # M = u(0)
    r: np.ndarray                # sample grid in [0, 1]
    u: np.ndarray                # profile values on the grid
    du_boundary: float           # u'(1) < 0
    _dense: object = field(default=None, repr=False)
    _r0: float = field(default=0.0, repr=False)
    _scale_r: float = field(default=1.0, repr=False)
    _scale_u: float = field(default=1.0, repr=False)

    def evaluate(self, r):
        """Profile value at radius r in [0, 1] (vectorized)."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r).clip(0.0, 1.0)
        out = np.empty_like(r)
        rs = r * self._scale_r
        inner = rs < self._r0
        a = self.center_value / self._scale_u
        p = self.p
        out[inner] = (a - a**p * rs[inner] ** 2 / 4.0
                      + p * a ** (2.0 * p - 1.0) * rs[inner] ** 4 / 64.0)
        if np.any(~inner):
            out[~inner] = self._dense.sol(rs[~inner])[0]
        out *= self._scale_u
        out[r >= 1.0] = 0.0
        np.maximum(out, 0.0, out=out)
        return float(out[0]) if scalar else out

    def integral(self, f) -> float:
        """2*pi*int_0^1 f(r, u, u') r dr by per-step Gauss quadrature.

        Uses the adaptive integrator's own step grid, which is dense
        inside the peak layer, so sharply concentrated integrands (powers
        u^q at large q) are integrated accurately.
        """
        ts = self._dense.sol.ts if hasattr(self._dense.sol, "ts") else self._dense.t
        ts = np.asarray(ts)
        total = 0.0
        # the unintegrated core [0, r0] with the series profile
        a = self.center_value / self._scale_u
        p = self.p
        rr = self._r0 * _GL_X
        uu = a - a**p * rr**2 / 4.0 + p * a ** (2.0 * p - 1.0) * rr**4 / 64.0
        duu = -(a**p) * rr / 2.0 + p * a ** (2.0 * p - 1.0) * rr**3 / 16.0
        core = np.sum(_GL_W * f(rr / self._scale_r,
                                uu * self._scale_u,
                                duu * self._scale_u * self._scale_r)
                      * rr / self._scale_r) * self._r0 / self._scale_r
        total += core
        for t0, t1 in zip(ts[:-1], ts[1:]):
            if t1 <= t0:
                continue
            rq = t0 + (t1 - t0) * _GL_X
            vals = self._dense.sol(rq)
            u_q = np.maximum(vals[0], 0.0)
            du_q = vals[1]
            total += np.sum(
                _GL_W
                * f(rq / self._scale_r,
                    u_q * self._scale_u,
                    du_q * self._scale_u * self._scale_r)
                * rq / self._scale_r
            ) * (t1 - t0) / self._scale_r
        return 2.0 * np.pi * total

    def power_integral(self, q: float) -> float:
        """2*pi*int u^q r dr over the unit disk."""
        return self.integral(lambda r, u, du: u**q)

    def dirichlet_energy(self) -> float:
        """2*pi*int u'(r)^2 r dr."""
        return self.integral(lambda r, u, du: du**2)


def radial_shoot(p: float, tol: float = 1e-12, method: str = "rk45",
                 n_samples: int = 1200) -> RadialSolution:
    """Solve the radial problem on the unit disk by shooting on u(0).

    The first zero radius obeys the exact scaling R(a) = a^{-(p-1)/2} R(1),
    so a single integration at a = 1 gives the root of R(a) = 1 in closed
    form; a short secant loop in log-log coordinates then polishes it
    against integration error.  ``method`` selects the integrator backend:
    "rk45" (adaptive) or "rk4" (fixed step + Richardson), kept independent
    for cross-checking.
    """
    if p <= 1.0:
        raise ValueError("exponent must exceed 1")
    if not 1e-14 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-14, 1e-6]")

    a_lo, a_hi = 0.1, 10.0

    def zero_radius(a: float) -> float:
        res = _integrate_rk45(a, p, r_max=50.0)
        if res is None:
            raise NoBracket(
                f"no zero crossing of u before r = 50 for a = {a}")
        return res[0]

    # find a shot whose zero lands inside the integration window; larger a
    # shrinks the zero radius as a^{-(p-1)/2}
    a_first = 1.0
    R1 = None
    while a_first <= a_hi:
        res = _integrate_rk45(a_first, p, r_max=50.0)
        if res is not None:
            R1 = res[0]
            break
        a_first *= 2.0
    if R1 is None:
        raise NoBracket(f"no zero crossing found for any a in [1, {a_hi}]")
    # closed-form first guess from scale invariance, then secant polish
    a = a_first * R1 ** (2.0 / (p - 1.0))
    a = min(max(a, a_lo), a_hi)
    la, lR = np.log(a), np.log(zero_radius(a))
    slope = -(p - 1.0) / 2.0
    for _ in range(60):
        if abs(lR) <= tol:
            break
        la = la - lR / slope
        if not np.log(a_lo) - 1e-9 <= la <= np.log(a_hi) + 1e-9:
            raise NoBracket(
                f"shot parameter left [{a_lo}, {a_hi}] at p = {p}")
        lR = np.log(zero_radius(float(np.exp(la))))
    else:
        raise NoBracket(f"secant failed to meet tol {tol} at p = {p}")
    a = float(np.exp(la))

    R, sol = _integrate_rk45(a, p, r_max=50.0)
    # rescale the computed profile (zero at R) exactly onto the unit disk
    scale_u = R ** (2.0 / (p - 1.0))
    M = a * scale_u

    if method == "rk4":
        res = _integrate_rk4_fixed(a, p, R * 1.0000001, 4000)
        res2 = _integrate_rk4_fixed(a, p, R * 1.0000001, 8000)
        if res is None or res2 is None:
            raise NoBracket(f"fixed-step integrator found no zero at p = {p}")
        # Richardson-extrapolated zero radius (RK4 global order 4)
        R = (16.0 * res2[0] - res[0]) / 15.0
        scale_u = R ** (2.0 / (p - 1.0))
        M = a * scale_u

    r0, _, _ = _series_start(a, p)
    # sample grid: geometric through the peak layer, uniform outside
    r_geo = np.geomspace(max(r0 / R, 1e-16), 0.05, n_samples // 3)
    r_uni = np.linspace(0.05, 1.0, n_samples - n_samples // 3)
    r_grid = np.unique(np.concatenate(([0.0], r_geo, r_uni)))

    out = RadialSolution(
        p=p,
        center_value=M,
        r=r_grid,
        u=np.empty_like(r_grid),
        du_boundary=float(sol.sol(R)[1]) * scale_u * R,
        _dense=sol,
        _r0=r0,
        _scale_r=R,
        _scale_u=scale_u,
    )
    out.u = out.evaluate(r_grid)
    return out


def pohozaev_check(sol: RadialSolution) -> tuple[float, float]:
    """Both sides of the disk Pohozaev identity.

    Returns (4/(p+1) * int u^{p+1}, 2*pi*u'(1)^2); they agree to the
    accuracy of the shooting solve.
    """
    lhs = 4.0 / (sol.p + 1.0) * sol.power_integral(sol.p + 1.0)
    rhs = 2.0 * np.pi * sol.du_boundary**2
    return lhs, rhs
