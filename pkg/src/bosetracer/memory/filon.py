"""Oscillatory radial integrals with the Bogoliubov phase.

Computes

    I = int_0^inf rho^n g(rho) exp(i t phi(rho)) d rho,
    phi(rho) = omega(rho) - rho * uc,

where ``uc = u cos(theta)`` is a velocity strictly below the sound speed, so
that ``phi' = omega' - uc >= c_s - uc > 0``.  The integral is rewritten in the
phase variable ``y = phi(rho)``:

    I = int G(y) exp(i t y) dy,    G = rho^n g / phi'.

On each panel (uniform in ``rho``, hence graded in ``y``), ``G`` is replaced by its Legendre
interpolant at Gauss nodes and integrated against ``exp(i t y)`` exactly,
using ``int_{-1}^{1} P_j(x) e^{i k x} dx = 2 i^j j_j(k)``.  The rule is exact
for polynomial ``G`` on every panel for any ``t``, so large ``t`` costs
nothing extra.  Panels are doubled until two successive estimates agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from ..model import ModelParams, sound_speed


class QuadratureError(RuntimeError):
    """Refinement did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.bound = bound


@dataclass(frozen=True)
class PhaseParams:
    """Elapsed time ``t`` and drift speed ``u`` in units of the sound speed."""

    t: float
    u: float = 0.0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("elapsed time must be non-negative")
        if not 0.0 <= self.u < 1.0:
            raise ValueError(f"drift speed u = {self.u} must lie in [0, 1)")


class BogoliubovPhase:
    """``phi(rho) = omega(rho) - uc * rho`` and its inverse, vectorized over ``uc``."""

    def __init__(self, params: ModelParams):
        self.m = params.m
        self.lam = params.lam
        self.c_s = sound_speed(params)
        self._c2 = 1.0 / (4.0 * self.m**2)
        self._c0 = self.lam / (2.0 * self.m)

    def Omega(self, rho):
        return np.sqrt(rho * rho / (4.0 * self.m**2) + self.lam / (2.0 * self.m))

    def phi(self, rho, uc):
        return rho * (self.Omega(rho) - uc)

    def dphi(self, rho, uc):
        return (rho * rho / (2.0 * self.m**2) + self.lam / (2.0 * self.m)) / self.Omega(rho) - uc

    def phi_dphi(self, rho, uc):
        r2 = rho * rho
        Om = np.sqrt(r2 * self._c2 + self._c0)
        return rho * (Om - uc), (2.0 * r2 * self._c2 + self._c0) / Om - uc

    def invert(self, y, uc, guess=None, iters: int = 60):
        """Solve ``phi(rho) = y`` by Newton's method.

        ``phi`` is odd, increasing and convex on ``rho > 0``.  Without a guess
        the start is an upper bound on the root, from which Newton decreases
        monotonically.
        """
        if guess is None:
            ay = np.abs(y)
            r_lin = ay / (self.c_s - uc)
            r_quad = self.m * uc + np.sqrt((self.m * uc) ** 2 + 2.0 * self.m * ay)
            r = np.sign(y) * np.minimum(r_lin, np.abs(r_quad))
        else:
            r = np.array(guess, dtype=float)
        for _ in range(iters):
            f, d = self.phi_dphi(r, uc)
            step = (f - y) / d
            r = r - step
            # quadratic convergence: once steps are ~1e-9 the error is at rounding level
            if np.all(np.abs(step) <= 1e-9 * (1.0 + np.abs(r))):
                f, d = self.phi_dphi(r, uc)
                return r - (f - y) / d
        return r


def spherical_jn_orders(q: int, x) -> np.ndarray:
    """Spherical Bessel ``j_0 .. j_{q-1}`` at every ``x``; shape ``x.shape + (q,)``.

    Upward recurrence where it is stable (``|x| >= q``), Miller's downward
    recurrence normalized by ``j_0`` or ``j_1`` below that, and the leading
    series terms for tiny ``|x|``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (q,))
    ax = np.abs(x)
    small = ax < 1e-3
    up = (ax >= q) & ~small
    mid = ~(up | small)
    if small.any():
        xs = x[small]
        dfact = 1.0
        for n in range(q):
            dfact *= 2 * n + 1
            out[small, n] = xs**n / dfact * (1.0 - xs * xs / (2.0 * (2 * n + 3)))
    if up.any():
        xu = x[up]
        vals = np.empty(xu.shape + (q,))
        s, c = np.sin(xu), np.cos(xu)
        vals[:, 0] = s / xu
        if q > 1:
            vals[:, 1] = s / (xu * xu) - c / xu
        for n in range(1, q - 1):
            vals[:, n + 1] = (2 * n + 1) / xu * vals[:, n] - vals[:, n - 1]
        out[up] = vals
    if mid.any():
        xm = x[mid]
        fnp1 = np.zeros_like(xm)
        fn = np.full_like(xm, 1e-200)
        vals = np.empty(xm.shape + (q,))
        for n in range(q + 25, 0, -1):
            fnm1 = (2 * n + 1) / xm * fn - fnp1
            if n - 1 < q:
                vals[:, n - 1] = fnm1
            fnp1, fn = fn, fnm1
            big = np.abs(fn) > 1e200
            if big.any():
                fn = np.where(big, fn * 1e-200, fn)
                fnp1 = np.where(big, fnp1 * 1e-200, fnp1)
                vals[big] *= 1e-200
        s, c = np.sin(xm), np.cos(xm)
        j0 = s / xm
        j1 = s / (xm * xm) - c / xm
        use0 = np.abs(j0) >= np.abs(j1)
        scale = np.where(use0, j0 / vals[:, 0], j1 / vals[:, min(1, q - 1)])
        out[mid] = vals * scale[:, None]
    return out


class FilonLegendre:
    """Gauss-Legendre nodes with exact oscillatory moments."""

    def __init__(self, q: int = 10):
        self.q = q
        x, w = legendre.leggauss(q)
        self.x = x
        self.w = w
        j = np.arange(q)
        # P_j(x_i), shape (q_nodes, q_degrees)
        self.P = legendre.legvander(x, q - 1)
        self._coef = (self.P * w[:, None]) * ((2 * j + 1) / 2.0)[None, :]
        self._ipow = (1j) ** j

    def weights(self, kappa):
        """Weights ``W_i(kappa)`` with ``int_{-1}^1 G e^{i kappa x} dx ~ sum W_i G(x_i)``."""
        mom = 2.0 * self._ipow * spherical_jn_orders(self.q, kappa)
        return mom @ self._coef.T


_RULES: dict[int, FilonLegendre] = {}


def _rule(q: int) -> FilonLegendre:
    if q not in _RULES:
        _RULES[q] = FilonLegendre(q)
    return _RULES[q]


def _panel_sum(g, n_power, t, uc, phase, rho_lo, rho_hi, panels, rule, idx,
               with_l1=False):
    """One Filon estimate for rows ``idx`` on ``panels`` panels.

    Panels are uniform in ``rho`` and mapped to ``y``; the nodes are Gauss
    points in ``y`` on each mapped panel.
    """
    uc = uc[idx]
    t = t[idx]
    edges = rho_lo[idx, None] + (rho_hi - rho_lo)[idx, None] * np.linspace(0.0, 1.0, panels + 1)
    yed = phase.phi(edges, uc[:, None])                              # (B,P+1)
    h = 0.5 * np.diff(yed, axis=1)                                   # (B,P)
    centers = 0.5 * (yed[:, 1:] + yed[:, :-1])
    y = centers[:, :, None] + h[:, :, None] * rule.x[None, None, :]  # (B,P,q)
    B = y.shape[0]
    ucb = uc[:, None, None]
    # chord interpolation of the inverse map between panel edges is a close start
    frac = 0.5 * (rule.x + 1.0)
    guess = edges[:, :-1, None] + (edges[:, 1:] - edges[:, :-1])[:, :, None] * frac
    rho = phase.invert(y, ucb, guess=guess)
    d = phase.dphi(rho, ucb)
    # subsonic lower bound of the phase derivative, checked at every node
    if np.any(d < (phase.c_s - ucb) * (1.0 - 1e-12)):
        raise ArithmeticError("phase derivative fell below c_s - u cos(theta)")
    vals = np.asarray(g(rho.reshape(B, -1), idx))
    extra = vals.shape[2:]
    vals = vals.reshape((B, panels, rule.q) + extra)
    G = (rho**n_power / d).reshape((B, panels, rule.q) + (1,) * len(extra)) * vals
    tb = t[:, None]
    W = rule.weights(tb * h)                                         # (B,P,q)
    pf = np.exp(1j * tb * centers) * h                               # (B,P)
    if extra:
        est = np.einsum("bp,bpi,bpi...->b...", pf, W, G)
    else:
        est = np.sum(pf * np.sum(W * G, axis=-1), axis=-1)
    info = {"min_dphi": float(np.min(d)) if d.size else np.inf}
    if with_l1:
        info["l1"] = np.einsum("bp,i,bpi...->b...", h, rule.w, np.abs(G))
    return est, info


def oscillatory_integral_batch(g, n_power: int, t, uc, params: ModelParams,
                               rho_max: float, *, full_line: bool = False,
                               rtol: float = 1e-9, atol_rel: float = 1e-6,
                               q: int = 20, panels: int = 4, max_refine: int = 8,
                               fallback: bool = True, return_info: bool = False):
    """Batched radial integrals, one per entry of ``uc``.

    ``t`` is a scalar or an array matching ``uc`` (one elapsed time per row).
    ``g(rho, idx)`` receives nodes of shape ``(len(idx), N)`` for the rows
    ``idx`` and returns ``(len(idx), N)`` or ``(len(idx), N, ...)``.  With
    ``full_line`` the range is ``[-rho_max, rho_max]``.  Each row is refined
    until ``|I_2P - I_P| <= rtol * max(|I_2P|, atol_rel * L1)``, ``L1`` being
    the integral of the modulus of the integrand.
    """
    phase = BogoliubovPhase(params)
    uc = np.atleast_1d(np.asarray(uc, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), uc.shape)
    if np.any(uc >= phase.c_s):
        raise ValueError("drift component must be below the sound speed")
    if np.any(t < 0):
        raise ValueError("elapsed time must be non-negative")
    rule = _rule(q)
    lo = -rho_max if full_line else 0.0
    rho_lo = np.full(uc.shape, lo)
    rho_hi = np.full(uc.shape, float(rho_max))
    idx = np.arange(uc.size)
    prev, info = _panel_sum(g, n_power, t, uc, phase, rho_lo, rho_hi, panels, rule, idx,
                            with_l1=True)
    l1 = info["l1"]
    min_dphi = info["min_dphi"]
    result = np.empty_like(prev)
    err_all = np.full(prev.shape, np.inf)
    used = np.zeros(uc.size, dtype=int)
    n = panels
    pending = np.full(prev.shape, np.inf)
    for _ in range(max_refine):
        n *= 2
        cur, info = _panel_sum(g, n_power, t, uc, phase, rho_lo, rho_hi, n, rule, idx)
        min_dphi = min(min_dphi, info["min_dphi"])
        err = np.abs(cur - prev)
        ok = err <= rtol * np.maximum(np.abs(cur), atol_rel * l1[idx])
        ok_rows = ok.reshape(ok.shape[0], -1).all(axis=1)
        result[idx[ok_rows]] = cur[ok_rows]
        err_all[idx[ok_rows]] = err[ok_rows]
        used[idx[ok_rows]] = n
        idx, prev, pending = idx[~ok_rows], cur[~ok_rows], err[~ok_rows]
        if idx.size == 0:
            out = {"panels": used, "error": err_all, "min_dphi": min_dphi, "l1": l1,
                   "method": "filon"}
            return (result, out) if return_info else result
    if fallback and not full_line and np.all(t[idx] > 0):
        val, bound = endpoint_expansion(g, n_power, t, uc, params, rho_max, idx=idx)
        if np.all(bound <= rtol * np.maximum(np.abs(val), atol_rel * l1[idx])):
            result[idx] = val
            err_all[idx] = bound
            out = {"panels": used, "error": err_all, "min_dphi": min_dphi, "l1": l1,
                   "method": "filon+ibp"}
            return (result, out) if return_info else result
    raise QuadratureError(
        f"oscillatory quadrature did not converge for {idx.size} rows "
        f"(last change {float(np.max(pending)):.3g})",
        estimate=prev, bound=float(np.max(pending)))


def _endpoint_terms(g, n_power, t, uc, hy, phase, idx, order, q):
    x, _ = legendre.leggauss(q)
    y = 0.5 * hy[:, None] * (x[None, :] + 1.0)
    ucb = uc[:, None]
    rho = phase.invert(y, ucb)
    vals = np.asarray(g(rho, idx))
    extra = vals.shape[2:]
    G = (rho**n_power / phase.dphi(rho, ucb)).reshape(rho.shape + (1,) * len(extra)) * vals
    B = uc.shape[0]
    flatG = G.reshape(B, q, -1)
    total = np.zeros((B, flatG.shape[2]), complex)
    last = np.zeros((B, flatG.shape[2]))
    for b in range(B):
        it = 1j * t[b]
        # fit in the local variable s = 2y/hy - 1, then map derivatives to y
        c = legendre.legfit(x, flatG[b], q - 1)
        scale = 1.0
        for j in range(order + 1):
            deriv = legendre.legval(-1.0, c) * scale
            term = -((-1) ** j) * deriv / it ** (j + 1)
            if j < order:
                total[b] += term
            else:
                last[b] = np.abs(term)
            c = legendre.legder(c)
            scale *= 2.0 / hy[b]
    return total.reshape((B,) + extra), last.reshape((B,) + extra)


def endpoint_expansion(g, n_power, t, uc, params: ModelParams, rho_max: float,
                       order: int = 8, q: int = 24, idx=None):
    """Repeated integration by parts at ``rho = 0`` for large ``t``.

    ``int_0^inf G e^{ity} dy = -sum_j (-1)^j G^(j)(0) / (it)^(j+1) + R``.
    Derivatives come from Legendre fits of ``G`` on a short initial interval;
    the returned bound adds the first omitted term to the spread between fits
    of degree ``q - 1`` and ``q - 9``, since derivative extraction is the
    weaker link.
    """
    phase = BogoliubovPhase(params)
    uc = np.atleast_1d(np.asarray(uc, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), uc.shape)
    if idx is None:
        idx = np.arange(uc.size)
    uc, t = uc[idx], t[idx]
    hy = np.minimum(phase.phi(np.full(uc.shape, min(rho_max, 0.5)), uc), 0.5)
    fine, last = _endpoint_terms(g, n_power, t, uc, hy, phase, idx, order, q)
    coarse, _ = _endpoint_terms(g, n_power, t, uc, hy, phase, idx, order, q - 8)
    return fine, last + np.abs(fine - coarse)


def oscillatory_rho_integral(F, n_power: int, phase: PhaseParams, theta: float,
                             params: ModelParams, rho_max: float, **kw):
    """``int_0^inf rho^n F(rho) exp(i t rho-phase) d rho`` at one angle.

    ``phase.u`` is the drift speed in units of ``c_s``; the drift component
    entering the phase is ``u c_s cos(theta)``.
    """
    uc = phase.u * sound_speed(params) * math.cos(theta)

    def g(rho, idx):
        return np.asarray(F(rho))

    out = oscillatory_integral_batch(g, n_power, phase.t, [uc], params, rho_max, **kw)
    if isinstance(out, tuple):
        return out[0][0], out[1]
    return out[0]
