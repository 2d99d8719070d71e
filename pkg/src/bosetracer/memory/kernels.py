"""Memory kernels of the reduced tracer dynamics as polar Fourier integrals.

Splitting the field into the co-moving steady state plus a remainder, the
force on the tracer becomes ``D1 + D2 + D3``:

    D1(t) = sqrt(rho0) <grad W(. - X_t), Re e^{tJ} beta_0>
    D2(t) = -sqrt(rho0) <grad W(. - X_t), Re e^{tJ} S(. - X_0; v_0)>
    D3(t) = rho0 int_0^t K(t, s) dP/ds ds

where ``S(v)`` is the steady field and ``K`` comes from ``dS/dv``.  Each term
depends on the trajectory only through ``dX = X_t - X_s`` and the velocity at
the source time.  In polar coordinates ``k = rho n`` every term has the form

    Re i (2 pi)^-3 int dOmega T(n) int_0^inf rho^3 f(rho, n) e^{i tau phi} d rho,
    phi = omega(rho) - rho |dX|/tau (n . e),    e = dX / |dX|,

with ``T(n) = n`` (force vectors) or ``n n^T`` (the 3x3 kernel ``K``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy.interpolate import CubicSpline

from ..model import ModelParams, sound_speed
from ..spectral import SupersonicError
from .filon import oscillatory_integral_batch

TWO_PI_CUBED = (2.0 * np.pi) ** 3


@dataclass(frozen=True)
class AngularRule:
    """Gauss-Legendre in ``cos(theta)`` and uniform in ``alpha``."""

    n_theta: int = 64
    n_alpha: int = 32

    def nodes(self):
        c, w = legendre.leggauss(self.n_theta)
        return c, w


DEFAULT_ANGULAR = AngularRule()


def _frame(axis):
    """Orthonormal frame whose first vector is ``axis``."""
    e = np.asarray(axis, dtype=float)
    e = e / np.linalg.norm(e)
    trial = np.array([1.0, 0.0, 0.0]) if abs(e[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = trial - (trial @ e) * e
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e, e1)
    return e, e1, e2


def _axis_and_speed(tau, dX, v, params):
    dist = float(np.linalg.norm(dX))
    if dist > 1e-14 and tau > 0:
        axis = dX / dist
        u = dist / tau
    else:
        nv = np.linalg.norm(v)
        axis = v / nv if nv > 0 else np.array([0.0, 0.0, 1.0])
        u = 0.0
    if not u < sound_speed(params):
        raise SupersonicError(f"mean drift speed {u:.6g} is not below c_s")
    return axis, u


def _is_axisymmetric(axis, v):
    nv = np.linalg.norm(v)
    return nv == 0 or np.linalg.norm(np.cross(axis, v)) <= 1e-12 * nv


def rho_cutoff(params: ModelParams, power: int = 2, rel: float = 1e-16) -> float:
    """Radius where ``W_hat^power`` falls below ``rel`` of its peak."""
    return math.sqrt(-2.0 * math.log(rel) / power) / params.potential.sigma


def polar_integral_batch(f, taus, dXs, vs, params: ModelParams, *, tensor: str = "n",
                         symmetric: bool | None = None, rho_max: float | None = None,
                         angular: AngularRule = DEFAULT_ANGULAR,
                         return_complex: bool = False, **quad_kw):
    """Polar integrals for a batch of pairs ``(tau_j, dX_j, v_j)``.

    Computes ``Re i (2 pi)^-3 int dOmega T(n) int rho^3 f(rho, n, v_j) e^{i tau_j phi}``
    for every ``j``.  ``f(rho, n, v)`` receives ``rho`` of shape ``(B, N)``,
    unit vectors ``n`` and velocities ``v`` of shape ``(B, 1, 3)`` and returns
    complex ``(B, N)``.  When every ``v_j`` is parallel to its axis, ``f``
    depends on ``n`` only through ``n . axis`` and the azimuthal integral is
    done in closed form.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    J = taus.size
    dXs = np.asarray(dXs, dtype=float).reshape(J, 3)
    vs = np.zeros((J, 3)) if vs is None else np.asarray(vs, dtype=float).reshape(J, 3)
    axes, us = zip(*(_axis_and_speed(taus[j], dXs[j], vs[j], params) for j in range(J)))
    if symmetric is None:
        symmetric = all(_is_axisymmetric(axes[j], vs[j]) for j in range(J))
    if rho_max is None:
        rho_max = rho_cutoff(params)
    ct, wt = angular.nodes()
    st = np.sqrt(1.0 - ct * ct)
    if symmetric:
        cos_t, wts = ct, wt
        loc = np.stack([ct, st, np.zeros_like(ct)], axis=1)
    else:
        alpha = 2.0 * np.pi * np.arange(angular.n_alpha) / angular.n_alpha
        cos_t = np.repeat(ct, angular.n_alpha)
        sin_t = np.repeat(st, angular.n_alpha)
        al = np.tile(alpha, angular.n_theta)
        loc = np.stack([cos_t, sin_t * np.cos(al), sin_t * np.sin(al)], axis=1)
        wts = np.repeat(wt, angular.n_alpha) * (2.0 * np.pi / angular.n_alpha)
    R = loc.shape[0]
    frames = np.array([np.stack(_frame(a)) for a in axes])          # (J,3,3), rows e,e1,e2
    n_all = np.einsum("rc,jcd->jrd", loc, frames)                    # (J,R,3)
    n_b = n_all.reshape(J * R, 1, 3)
    v_b = np.repeat(vs, R, axis=0)[:, None, :]
    uc = (np.asarray(us)[:, None] * cos_t[None, :]).ravel()
    t_rows = np.repeat(taus, R)

    def g(rho, idx):
        return f(rho, n_b[idx], v_b[idx])

    radial = oscillatory_integral_batch(g, 3, t_rows, uc, params, rho_max, **quad_kw)
    radial = radial.reshape(J, R) * wts[None, :]
    if symmetric:
        e = frames[:, 0, :]
        if tensor == "n":
            out = 2.0 * np.pi * (radial @ ct)[:, None] * e
        else:
            ee = e[:, :, None] * e[:, None, :]
            perp = np.eye(3)[None] - ee
            out = (np.pi * (radial @ (st * st))[:, None, None] * perp
                   + 2.0 * np.pi * (radial @ (ct * ct))[:, None, None] * ee)
    else:
        if tensor == "n":
            out = np.einsum("jr,jrd->jd", radial, n_all)
        else:
            out = np.einsum("jr,jrd,jre->jde", radial, n_all, n_all)
    val = 1j * out / TWO_PI_CUBED
    return val if return_complex else val.real


def polar_integral(f, tau: float, dX, params: ModelParams, *, v=None, **kw):
    """Single-pair form of :func:`polar_integral_batch`."""
    return polar_integral_batch(f, [tau], [dX], None if v is None else [v], params, **kw)[0]


def _omega_parts(rho, params: ModelParams):
    """``Omega = omega/rho`` and ``a/omega = rho/(2 m Omega)``."""
    Om = np.sqrt(rho * rho / (4.0 * params.m**2) + params.lam / (2.0 * params.m))
    return Om, rho / (2.0 * params.m * Om)


def d1_kernel(tau: float, dX, beta0, params: ModelParams, **kw) -> np.ndarray:
    """Force from free propagation of the initial field ``beta0``.

    ``beta0.spectrum(k)`` returns the transforms of ``(Re beta0, Im beta0)``
    about ``X_0``.  Entering the formula at ``-k`` avoids relying on reality.
    """
    if beta0.is_zero:
        return np.zeros(3)
    pot = params.potential

    def f(rho, n, v):
        k = -rho[..., None] * n
        s1, s2 = beta0.spectrum(k, params)
        Om, a_over_om = _omega_parts(rho, params)
        return pot.fourier(rho * rho) * (s1 - 1j * a_over_om * s2)

    kw.setdefault("rho_max", rho_cutoff(params, power=1))
    sym = kw.pop("symmetric", False)
    return params.sqrt_rho0 * polar_integral(f, tau, dX, params, tensor="n",
                                             symmetric=sym, **kw)


def _d2_integrand(params):
    pot = params.potential

    def f(rho, n, v):
        Om, _ = _omega_parts(rho, params)
        vn = np.sum(n * v, axis=-1)
        return pot.fourier(rho * rho) ** 2 / (2.0 * params.m * Om * (Om - vn))
    return f


def _k_integrand(params):
    pot = params.potential

    def f(rho, n, v):
        Om, _ = _omega_parts(rho, params)
        vn = np.sum(n * v, axis=-1)
        return pot.fourier(rho * rho) ** 2 / (2.0 * params.m * Om * (Om - vn) ** 2)
    return f


def d2_kernel(tau: float, dX, v0, params: ModelParams, **kw) -> np.ndarray:
    """Force from the initial mismatch with the steady state at velocity ``v0``."""
    if params.rho0 == 0:
        return np.zeros(3)
    return params.rho0 * polar_integral(_d2_integrand(params), tau, dX, params,
                                        tensor="n", v=np.asarray(v0, float), **kw)


def k_kernel(tau: float, dX, v_s, params: ModelParams, **kw) -> np.ndarray:
    """3x3 memory kernel; ``rho0 * K @ dP/ds`` is the history integrand."""
    return polar_integral(_k_integrand(params), tau, dX, params, tensor="nn",
                          v=np.asarray(v_s, float), **kw) / params.M


def k_kernel_batch(taus, dXs, vs, params: ModelParams, **kw) -> np.ndarray:
    """``K`` for many pairs at once, shape ``(J, 3, 3)``."""
    return polar_integral_batch(_k_integrand(params), taus, dXs, vs, params,
                                tensor="nn", **kw) / params.M


def _displacement(trajectory, t, s):
    return np.asarray(trajectory.position(t)) - np.asarray(trajectory.position(s))


def kernel_D1(t: float, trajectory, beta0, params: ModelParams, **kw) -> np.ndarray:
    """``D1`` at time ``t`` along ``trajectory`` (anything with ``position(t)``)."""
    return d1_kernel(t, _displacement(trajectory, t, 0.0), beta0, params, **kw)


def kernel_D2(t: float, trajectory, params: ModelParams, **kw) -> np.ndarray:
    """``D2`` at time ``t``; needs ``position(t)`` and ``momentum(0)``."""
    v0 = np.asarray(trajectory.momentum(0.0)) / params.M
    return d2_kernel(t, _displacement(trajectory, t, 0.0), v0, params, **kw)


def kernel_K(t: float, s: float, trajectory, params: ModelParams, **kw) -> np.ndarray:
    """``K(t, s)``; needs ``position`` at both times and ``momentum(s)``."""
    if t < s:
        raise ValueError("kernel_K needs t >= s")
    v_s = np.asarray(trajectory.momentum(s)) / params.M
    return k_kernel(t - s, _displacement(trajectory, t, s), v_s, params, **kw)


class KernelTable:
    """Sampled ``D1(t)``, ``D2(t)`` and ``K(t, s)`` along one trajectory.

    ``K`` is stored on the lower triangle ``s_j <= t_i`` of the sample grid
    (NaN above).  Lookups interpolate with cubic splines: in ``t`` for the
    force kernels, and for ``K`` first in ``s`` along each row, then across
    rows in ``t``.
    """

    def __init__(self, t, D1, D2, K=None):
        self.t = np.asarray(t, dtype=float)
        self.D1 = np.asarray(D1, dtype=float).reshape(-1, 3)
        self.D2 = np.asarray(D2, dtype=float).reshape(-1, 3)
        self.K = None if K is None else np.asarray(K, dtype=float)

    @classmethod
    def build(cls, trajectory, t_grid, beta0, params: ModelParams, with_K: bool = True,
              **kw) -> "KernelTable":
        t_grid = np.asarray(t_grid, dtype=float)
        D1 = np.array([kernel_D1(t, trajectory, beta0, params, **kw) for t in t_grid])
        D2 = np.array([kernel_D2(t, trajectory, params, **kw) for t in t_grid])
        K = None
        if with_K:
            K = np.full((t_grid.size, t_grid.size, 3, 3), np.nan)
            X = np.asarray(trajectory.position(t_grid))
            V = np.asarray(trajectory.momentum(t_grid)) / params.M
            for i, t in enumerate(t_grid):
                j = np.arange(i + 1)
                K[i, j] = k_kernel_batch(t - t_grid[j], X[i] - X[j], V[j], params, **kw)
        return cls(t_grid, D1, D2, K)

    def d1(self, t):
        return CubicSpline(self.t, self.D1, axis=0)(t)

    def d2(self, t):
        return CubicSpline(self.t, self.D2, axis=0)(t)

    def k(self, t: float, s: float) -> np.ndarray:
        if self.K is None:
            raise ValueError("table was built without K")
        rows = []
        for i in range(self.t.size):
            n = i + 1
            if n < 2:
                rows.append(self.K[i, 0])
                continue
            rows.append(CubicSpline(self.t[:n], self.K[i, :n], axis=0)(s))
        return CubicSpline(self.t, np.array(rows), axis=0)(t)

    def weighted_sups(self, rho0: float) -> dict:
        """``sup (1+t)^3 |D1|``, ``sup (1+t)^3 |D2| / rho0`` and ``sup (1+t-s)^3 |K|``."""
        w = (1.0 + self.t) ** 3
        out = {"D1": float(np.max(w * np.linalg.norm(self.D1, axis=1))),
               "D2": float(np.max(w * np.linalg.norm(self.D2, axis=1)) / rho0)
               if rho0 > 0 else 0.0}
        if self.K is not None:
            tau = self.t[:, None] - self.t[None, :]
            nrm = np.sqrt(np.sum(self.K ** 2, axis=(2, 3)))
            out["K"] = float(np.nanmax((1.0 + tau) ** 3 * nrm))
        return out

    def rows(self):
        """``(t, s, D1, D2, K)`` tuples over the stored lower triangle."""
        for i, t in enumerate(self.t):
            if self.K is None:
                yield t, np.nan, self.D1[i], self.D2[i], np.full((3, 3), np.nan)
                continue
            for j in range(i + 1):
                yield t, self.t[j], self.D1[i], self.D2[i], self.K[i, j]

    def to_csv(self, path):
        header = ["t", "s"] + [f"D1_{i}" for i in (1, 2, 3)] + [f"D2_{i}" for i in (1, 2, 3)]
        header += [f"K_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, s, d1, d2, K in self.rows():
                w.writerow(["%.17g" % x for x in (t, s, *d1, *d2, *np.ravel(K))])
        return path
