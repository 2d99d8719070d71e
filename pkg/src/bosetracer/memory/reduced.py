"""Reduced tracer dynamics: the force as an explicit functional of the path.

    dP/dt = D1(t) + D2(t) + rho0 int_0^t K(t, s) dP/ds ds,    dX/dt = P/M

No field is stored.  On a uniform grid ``t_n = n dt`` the history integral is
the trapezoidal sum over past samples (the ``s = t`` term vanishes because
``K(t, t) = 0``).  Each step is implicit through ``X_n``, which enters every
kernel via ``X_n - X_s``; it is resolved by fixed-point iteration.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ..integrator import SubsonicError, Trajectory
from ..model import ModelParams, compute_vmax, sound_speed
from ..spectral import InitialField, ZeroField
from .kernels import DEFAULT_ANGULAR, AngularRule, d1_kernel, d2_kernel, k_kernel_batch

log = logging.getLogger(__name__)


class FixedPointError(RuntimeError):
    """The per-step fixed-point iteration failed to converge."""

    def __init__(self, message, contraction=None):
        super().__init__(message)
        self.contraction = contraction


def history_weights(n: int, dt: float) -> np.ndarray:
    """Trapezoid weights for samples ``0..n``."""
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


class ReducedRHS:
    """Evaluates ``D1 + D2 + D3`` at the newest time of a partial history."""

    def __init__(self, params: ModelParams, beta0: InitialField, v0, *,
                 d3_form: str = "pdot", angular: AngularRule = DEFAULT_ANGULAR,
                 quad: dict | None = None):
        if d3_form not in ("pdot", "p"):
            raise ValueError("d3_form must be 'pdot' or 'p'")
        self.params = params
        self.beta0 = beta0
        self.v0 = np.asarray(v0, dtype=float)
        self.d3_form = d3_form
        self.angular = angular
        self.quad = quad or {}

    def parts(self, t_n, X, P, Pdot, n, dt):
        """``(D1, D2, D3)`` at ``t_n`` given samples ``0..n`` (``X[n]`` current)."""
        p = self.params
        dX0 = X[n] - X[0]
        D1 = d1_kernel(t_n, dX0, self.beta0, p, angular=self.angular, **self.quad)
        D2 = d2_kernel(t_n, dX0, self.v0, p, angular=self.angular, **self.quad)
        D3 = np.zeros(3)
        if n > 0 and p.rho0 > 0:
            idx = np.arange(n)                  # the s = t_n term has K = 0
            taus = t_n - idx * dt
            K = k_kernel_batch(taus, X[n] - X[idx], P[idx] / p.M, p,
                               angular=self.angular, **self.quad)
            src = Pdot[idx] if self.d3_form == "pdot" else P[idx]
            w = history_weights(n, dt)[:n]
            D3 = p.rho0 * np.einsum("j,jab,jb->a", w, K, src)
        return D1, D2, D3

    def __call__(self, t_n, X, P, Pdot, n, dt):
        return sum(self.parts(t_n, X, P, Pdot, n, dt))


def solve_reduced(P0, X0=(0.0, 0.0, 0.0), beta0: InitialField | None = None,
                  T_max: float = 20.0, params: ModelParams | None = None, *,
                  dt: float = 0.1, tol: float = 1e-10, max_iter: int = 30,
                  d3_form: str = "pdot", angular: AngularRule = DEFAULT_ANGULAR,
                  quad: dict | None = None, record_parts: bool = False) -> Trajectory:
    """Integrate the reduced equations on ``[0, T_max]``.

    Per step: predict ``dP/dt`` by linear extrapolation, then iterate
    ``P_n = P_{n-1} + dt/2 (Pdot_{n-1} + Pdot_n)``,
    ``X_n = X_{n-1} + dt/2 (P_{n-1} + P_n)/M + dt^2/12 (Pdot_{n-1} - Pdot_n)/M``
    and ``Pdot_n = RHS(X_0..X_n)`` until ``|Pdot_n|`` changes by at most ``tol``.
    ``d3_form="p"`` feeds ``P_s`` instead of ``dP/ds`` to the history term.
    """
    params = params or ModelParams()
    beta0 = beta0 or ZeroField()
    P0 = np.asarray(P0, dtype=float)
    c_s = sound_speed(params)
    if not np.linalg.norm(P0) / params.M < c_s:
        raise SubsonicError("initial speed is not subsonic", state={"P": P0.tolist()})
    n_steps = int(round(T_max / dt))
    if n_steps < 1 or abs(n_steps * dt - T_max) > 1e-9 * max(1.0, T_max):
        raise ValueError(f"T_max={T_max} must be a positive multiple of dt={dt}")
    M = params.M
    rhs = ReducedRHS(params, beta0, P0 / M, d3_form=d3_form, angular=angular, quad=quad)

    t = dt * np.arange(n_steps + 1)
    X = np.zeros((n_steps + 1, 3))
    P = np.zeros((n_steps + 1, 3))
    Pdot = np.zeros((n_steps + 1, 3))
    X[0] = X0
    P[0] = P0
    Pdot[0] = rhs(0.0, X, P, Pdot, 0, dt)
    iterations = np.zeros(n_steps + 1, dtype=int)
    contraction = 0.0
    parts = []

    for n in range(1, n_steps + 1):
        guess = 2.0 * Pdot[n - 1] - Pdot[n - 2] if n >= 2 else Pdot[n - 1].copy()
        prev_diff = None
        for k in range(1, max_iter + 1):
            P[n] = P[n - 1] + 0.5 * dt * (Pdot[n - 1] + guess)
            X[n] = (X[n - 1] + 0.5 * dt * (P[n - 1] + P[n]) / M
                    + dt * dt / 12.0 * (Pdot[n - 1] - guess) / M)
            if not np.linalg.norm(P[n]) / M < c_s:
                raise SubsonicError(f"left subsonic domain at t={t[n]:.6g}",
                                    state={"t": t[n], "P": P[n].tolist()})
            new = rhs(t[n], X, P, Pdot, n, dt)
            diff = float(np.max(np.abs(new - guess)))
            guess = new
            if prev_diff is not None and prev_diff > 0:
                contraction = max(contraction, diff / prev_diff) if k > 2 else contraction
            if diff <= tol:
                break
            prev_diff = diff
        else:
            raise FixedPointError(
                f"fixed point not reached at t={t[n]:.6g} after {max_iter} iterations "
                f"(last change {diff:.3g}, contraction estimate {diff / prev_diff:.3g})",
                contraction=diff / prev_diff if prev_diff else None)
        Pdot[n] = guess
        # the accepted force changes P and X at rounding level only
        P[n] = P[n - 1] + 0.5 * dt * (Pdot[n - 1] + Pdot[n])
        X[n] = (X[n - 1] + 0.5 * dt * (P[n - 1] + P[n]) / M
                + dt * dt / 12.0 * (Pdot[n - 1] - Pdot[n]) / M)
        iterations[n] = k
        if record_parts:
            parts.append(rhs.parts(t[n], X, P, Pdot, n, dt))

    meta = {
        "solver": "reduced", "dt": dt, "T_max": T_max, "d3_form": d3_form,
        "params": params.units(), "beta0": beta0.to_dict(),
        "fixed_point_tol": tol, "iterations": iterations,
        "contraction_estimate": contraction,
        "angular": {"n_theta": angular.n_theta, "n_alpha": angular.n_alpha},
        "v_max": compute_vmax(P0, params) if beta0.is_zero else None,
    }
    if record_parts:
        meta["parts"] = np.array(parts)
    log.info("reduced run: %d steps, max iterations %d", n_steps, iterations.max())
    return Trajectory(t, X, P, Pdot, np.full(n_steps + 1, np.nan), M, c_s, math.inf,
                      meta=meta)
