"""Post-processing of trajectories and fields.

Decay exponents of the force, the running majorant ``G(t) = max (1+s)^3 |dP/ds|``,
the ballistic limits ``P_inf`` and ``X_inf`` and the weighted distance of the
field to the co-moving steady state.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams, compute_eta, sound_speed
from .spectral import FieldState, ModeSymbols, steady_state_field

log = logging.getLogger(__name__)

MIN_FIT_POINTS = 5


class AnalysisError(ValueError):
    """Input unsuitable for the requested post-processing."""


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log f = intercept + exponent * log(1 + t)``.

    ``residual`` is the RMS misfit in ``log f``; ``n_masked`` counts the
    samples in the window dropped because they were not positive.
    """

    exponent: float
    intercept: float
    t_lo: float
    t_hi: float
    residual: float
    n_points: int
    n_masked: int = 0

    def predict(self, t):
        return np.exp(self.intercept) * (1.0 + np.asarray(t, dtype=float)) ** self.exponent

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AsymptoticLimits:
    """Extrapolated ``P_inf`` and ``X_inf``, the intercept of ``Y_t = X_t - t P_inf / M``."""

    P_inf: np.ndarray
    X_inf: np.ndarray
    tail: np.ndarray
    fit: DecayFit | None
    window: tuple
    Y_oscillation: float
    C_P: float
    Ydot_C: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"P_inf": self.P_inf.tolist(), "X_inf": self.X_inf.tolist(),
                "tail": self.tail.tolist(),
                "fit": None if self.fit is None else self.fit.to_dict(),
                "window": list(self.window), "Y_oscillation": self.Y_oscillation,
                "C_P": self.C_P, "Ydot_C": self.Ydot_C, **self.extras}


def _force_series(trajectory):
    if hasattr(trajectory, "F"):
        return np.asarray(trajectory.t, float), np.asarray(trajectory.F, float)
    t, F = trajectory
    return np.asarray(t, float), np.asarray(F, float)


def g_majorant(trajectory) -> np.ndarray:
    """Running maximum of ``(1+s)^3 |dP/ds|``.

    Accepts a trajectory (``t`` and force ``F``) or a ``(t, values)`` pair where
    ``values`` are force vectors or their magnitudes.
    """
    t, F = _force_series(trajectory)
    mag = np.linalg.norm(F, axis=1) if F.ndim == 2 else np.abs(F)
    return np.maximum.accumulate((1.0 + t) ** 3 * mag)


def g_plateau(t, G, window=None) -> float:
    """Relative growth of ``G`` over the final quarter of ``window``."""
    t = np.asarray(t, float)
    lo, hi = window if window is not None else (t[0], t[-1])
    q = hi - 0.25 * (hi - lo)
    G_end = float(np.interp(hi, t, G))
    G_q = float(np.interp(q, t, G))
    return (G_end - G_q) / G_end if G_end > 0 else 0.0


def closure_report(t, G, rho0: float, beta0_term: float = 0.0) -> dict:
    """Measured constant of the bootstrap inequality for ``G``.

    ``C = sup_t G / (sqrt(rho0) * beta0_term + rho0 + rho0 * G)``; the
    bound closes when ``C * rho0 < 1/2``.  Reported, never assumed.
    """
    G = np.asarray(G, float)
    denom = math.sqrt(rho0) * beta0_term + rho0 + rho0 * G
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, G / denom, np.inf)
    C = float(np.max(ratio))
    return {"C": C, "C_rho0": C * rho0, "closes": bool(C * rho0 < 0.5),
            "G_max": float(G.max()), "t_end": float(np.asarray(t)[-1])}


def decay_exponent(t, values, window=None) -> DecayFit:
    """Power-law exponent of a positive series by least squares in log-log.

    ``window = (t_lo, t_hi)`` restricts the fit; non-positive samples inside it
    are masked and counted.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = np.linalg.norm(v, axis=1)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    lo, hi = window
    inside = (t >= lo) & (t <= hi)
    good = inside & (v > 0) & np.isfinite(v)
    n_masked = int(np.count_nonzero(inside & ~good))
    n = int(np.count_nonzero(good))
    if n < MIN_FIT_POINTS:
        raise AnalysisError(f"only {n} usable points in window [{lo}, {hi}] "
                            f"(need {MIN_FIT_POINTS}; {n_masked} masked)")
    x = np.log1p(t[good])
    y = np.log(v[good])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, icpt] - y) ** 2)))
    return DecayFit(float(slope), float(icpt), float(lo), float(hi), resid, n, n_masked)


def default_fit_window(t_end: float, T_wrap: float = math.inf) -> tuple:
    """``[max(10, T/4), min(T, T_wrap)]``; short runs fall back to ``[hi/4, hi]``."""
    hi = min(t_end, T_wrap)
    lo = max(10.0, t_end / 4.0)
    return (lo, hi) if lo < hi else (hi / 4.0, hi)


def extrapolate_limits(trajectory, params: ModelParams, window=None, *,
                       max_residual: float = 0.5, final_fraction: float = 0.25,
                       zero_tol: float = 1e-300) -> AsymptoticLimits:
    """Ballistic limits from the decayed tail of a run.

    ``P_inf = P(T) + integral_T^inf dP/ds``, the tail taken from the power law
    fitted to ``|dP/ds|`` over ``window`` and pointed along ``dP/dt(T)``.
    ``X_inf`` is the mean of ``Y_t = X_t - t P_inf / M`` over the final
    ``final_fraction`` of the window.  A tail that has not decayed (exponent
    at or above -1, or fit residual above ``max_residual``) is an error.
    """
    t = np.asarray(trajectory.t, float)
    P = np.asarray(trajectory.P, float)
    X = np.asarray(trajectory.X, float)
    F = np.asarray(trajectory.F, float)
    M = params.M
    T_wrap = getattr(trajectory, "T_wrap", math.inf)
    if window is None:
        window = default_fit_window(t[-1], T_wrap)
    lo, hi = window
    if np.count_nonzero((t >= lo) & (t <= hi)) < 2:
        raise AnalysisError(f"window [{lo:.4g}, {hi:.4g}] holds fewer than 2 samples")
    i_end = int(np.searchsorted(t, hi, side="right")) - 1
    T = t[i_end]
    mag = np.linalg.norm(F, axis=1)
    inside = (t >= lo) & (t <= hi)
    fit = None
    if np.all(mag[inside] <= zero_tol):
        tail = np.zeros(3)
    else:
        fit = decay_exponent(t, mag, window)
        if fit.exponent >= -1.0 or fit.residual > max_residual:
            raise AnalysisError(
                f"force tail not in the decayed regime on [{lo:.4g}, {hi:.4g}] "
                f"(exponent {fit.exponent:.3g}, residual {fit.residual:.3g}); run longer")
        direction = F[i_end] / mag[i_end] if mag[i_end] > 0 else np.zeros(3)
        tail = direction * float(fit.predict(T)) * (1.0 + T) / (-fit.exponent - 1.0)
    P_inf = P[i_end] + tail
    if not np.linalg.norm(P_inf) / M < sound_speed(params):
        raise AnalysisError(f"|P_inf|/M = {np.linalg.norm(P_inf) / M:.6g} is not subsonic")

    Y = X - t[:, None] * P_inf / M
    final = (t >= hi - final_fraction * (hi - lo)) & (t <= hi)
    if not np.any(final):
        final = (t >= lo) & (t <= hi)
    Yf = Y[final]
    X_inf = Yf.mean(axis=0)
    Y_osc = float(np.max(np.linalg.norm(Yf - X_inf, axis=1)))
    dP = np.linalg.norm(P[inside] - P_inf, axis=1)
    wt = (1.0 + t[inside]) ** 2
    C_P = float(np.max(wt * dP))
    extras = {}
    if np.count_nonzero(dP > 0) >= MIN_FIT_POINTS:
        extras["P_residual_exponent"] = decay_exponent(t[inside], dP).exponent
    return AsymptoticLimits(P_inf, X_inf, tail, fit, (float(lo), float(hi)), Y_osc,
                            C_P, C_P / M, extras)


def traveling_wave_distance(h: FieldState, v_inf, params: ModelParams,
                            symbols: ModeSymbols | None = None,
                            radius: float | None = None) -> float:
    """``max_x (1+|x|)^-1 |h(x) - S(x; v_inf)|`` over the particle-frame grid.

    ``|.|`` is the Euclidean norm of the two real components.  ``radius``
    limits the maximum to ``|x| <= radius``.
    """
    g = h.grid
    diff = h - steady_state_field(v_inf, params, g, symbols)
    d1, d2 = diff.to_real()
    r = np.sqrt(g.r2)
    val = np.sqrt(d1 * d1 + d2 * d2) / (1.0 + r)
    if radius is not None:
        val = np.where(r <= radius, val, 0.0)
    return float(val.max())


def slope_check(t, values, window=None) -> DecayFit:
    """Log-log slope of ``values * (1+t)``; bounded series give slope <= 0."""
    t = np.asarray(t, float)
    return decay_exponent(t, np.asarray(values, float) * (1.0 + t), window)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def analysis_report(trajectory, params: ModelParams, *, window=None, tw_series=None,
                    decay_threshold: float = -2.5, plateau_tol: float = 0.05,
                    y_tol_sigma: float = 1e-3) -> dict:
    """Collects the diagnostics of one run with a pass/fail flag per check.

    ``tw_series`` is an optional list of ``(t, distance)`` pairs.
    """
    t = trajectory.t
    c_s = sound_speed(params)
    speeds = np.linalg.norm(trajectory.P, axis=1) / params.M
    meta = getattr(trajectory, "meta", {}) or {}
    report = {"eta": compute_eta(speeds, c_s), "v_max": meta.get("v_max"),
              "energy_drift": trajectory.energy_drift(),
              "T_wrap": getattr(trajectory, "T_wrap", math.inf), "checks": {}}
    checks = report["checks"]
    if report["v_max"] is not None:
        checks["subsonic_confinement"] = bool(speeds.max() < report["v_max"] < c_s)
    if window is None:
        window = default_fit_window(t[-1], report["T_wrap"])
    report["window"] = list(window)
    G = g_majorant(trajectory)
    report["G_max"] = float(G.max())
    report["closure"] = closure_report(t, G, params.rho0)
    try:
        fit = decay_exponent(t, trajectory.F, window)
        report["decay_fit"] = fit.to_dict()
        plateau = g_plateau(t, G, window)
        report["G_plateau_growth"] = plateau
        checks["force_decay"] = bool(fit.exponent <= decay_threshold and plateau <= plateau_tol)
    except AnalysisError as exc:
        report["decay_fit"] = {"error": str(exc)}
    try:
        lim = extrapolate_limits(trajectory, params, window)
        report.update({"P_inf": lim.P_inf, "X_inf": lim.X_inf, "limits": lim.to_dict()})
        checks["ballistic_limit"] = bool(
            lim.Y_oscillation < y_tol_sigma * params.potential.sigma
            and lim.extras.get("P_residual_exponent", -math.inf) <= -2.0)
    except AnalysisError as exc:
        report["limits"] = {"error": str(exc)}
    if tw_series:
        ts, ds = np.asarray(tw_series, float).T
        report["tw_distance_series"] = np.column_stack([ts, ds])
        try:
            checks["traveling_wave"] = bool(slope_check(ts, ds).exponent <= 0.1)
        except AnalysisError as exc:
            report["tw_error"] = str(exc)
    return _clean(report)


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(report), indent=2, sort_keys=True))
    return path


__all__ = ["AnalysisError", "AsymptoticLimits", "DecayFit",
           "analysis_report", "closure_report", "decay_exponent", "default_fit_window",
           "extrapolate_limits", "g_majorant", "g_plateau", "slope_check",
           "traveling_wave_distance", "write_report"]
