"""Direct solver: Strang splitting of the coupled tracer/field system."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .btf import write_btf
from .model import ModelParams, compute_vmax, sound_speed
from .spectral import (FieldState, InitialField, ModeSymbols, SpectralGrid,
                       SupersonicError, ZeroField, force_on_particle, force_weights,
                       group_velocity, hamiltonian, propagate_field_step)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "X1", "X2", "X3", "P1", "P2", "P3", "speed_over_cs", "H",
               "F1", "F2", "F3", "wrap_flag")


class SubsonicError(SupersonicError):
    """The tracer reached the sound speed during a subsonic run."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class ParticleState:
    X: np.ndarray
    P: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(3)
        P = np.asarray(self.P, dtype=float).reshape(3)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(P))):
            raise ValueError("particle state must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "P", P)

    def velocity(self, params: ModelParams) -> np.ndarray:
        return self.P / params.M


def wrap_horizon(grid: SpectralGrid, params: ModelParams, n_sigma: float = 6.0) -> float:
    """Earliest time a periodic image of the emitted field can reach the tracer.

    Waves leave the interaction region (radius ``n_sigma * sigma``), cross the
    box and re-enter it from the opposite side, so the distance is the box
    length minus both supports, covered at the group velocity of the fastest
    resolved mode.
    """
    dist = min(grid.box) - 2.0 * n_sigma * params.potential.sigma
    if dist <= 0:
        return 0.0
    return float(dist / group_velocity(grid.k_max, params))


class Stepper:
    """Holds per-grid caches; ``advance`` performs one Strang step."""

    def __init__(self, grid: SpectralGrid, params: ModelParams, allow_supersonic=False):
        self.grid = grid
        self.params = params
        self.symbols = ModeSymbols(grid, params)
        self.weights = force_weights(grid, self.symbols)
        self.allow_supersonic = allow_supersonic
        self.c_s = sound_speed(params)

    def force(self, h: FieldState) -> np.ndarray:
        return force_on_particle(h, self.params, self.symbols, self.weights)

    def energy(self, particle: ParticleState, h: FieldState) -> float:
        return hamiltonian(particle, h, self.params, self.symbols)

    def advance(self, particle: ParticleState, h: FieldState, dt: float, F=None):
        """Returns ``(particle, h, force)`` after one step; ``F`` is the current force."""
        if F is None:
            F = self.force(h)
        P_half = particle.P + 0.5 * dt * F
        v = P_half / self.params.M
        speed = float(np.linalg.norm(v))
        if not self.allow_supersonic and not speed < self.c_s:
            raise SubsonicError(
                f"left subsonic domain at t={particle.t:.6g}: |v|={speed:.9g} >= c_s={self.c_s:.9g}",
                state={"t": particle.t, "X": particle.X.tolist(), "P": particle.P.tolist(),
                       "P_half": P_half.tolist()})
        h_new = propagate_field_step(h, v, dt, self.params, self.symbols,
                                     allow_supersonic=self.allow_supersonic)
        X_new = particle.X + dt * v
        F_new = self.force(h_new)
        P_new = P_half + 0.5 * dt * F_new
        return ParticleState(X_new, P_new, particle.t + dt), h_new, F_new


def step(particle: ParticleState, h: FieldState, dt: float, params: ModelParams,
         stepper: Stepper | None = None):
    """One Strang step: half kick, exact field flow with drift, half kick.

    Negative ``dt`` runs the scheme backwards; the splitting is symmetric so
    a step of ``dt`` followed by ``-dt`` is the identity up to rounding.
    """
    st = stepper or Stepper(h.grid, params)
    new_p, new_h, _ = st.advance(particle, h, dt)
    return new_p, new_h


@dataclass
class Trajectory:
    """Time series of one run (direct or reduced) with shared CSV schema."""

    t: np.ndarray
    X: np.ndarray
    P: np.ndarray
    F: np.ndarray
    H: np.ndarray
    M: float
    c_s: float
    T_wrap: float = math.inf
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 3)
        self.P = np.asarray(self.P, dtype=float).reshape(-1, 3)
        self.F = np.asarray(self.F, dtype=float).reshape(-1, 3)
        self.H = np.asarray(self.H, dtype=float)
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        self._splines = None

    def __len__(self):
        return self.t.size

    @property
    def speed_over_cs(self) -> np.ndarray:
        return np.linalg.norm(self.P, axis=1) / (self.M * self.c_s)

    @property
    def wrap_flag(self) -> np.ndarray:
        return self.t > self.T_wrap

    def trusted(self) -> np.ndarray:
        return ~self.wrap_flag

    def energy_drift(self) -> float:
        """``max |H(t) - H(0)| / (|H(0)| + 1)``; NaN when H was not recorded."""
        if not np.all(np.isfinite(self.H)):
            return float("nan")
        return float(np.max(np.abs(self.H - self.H[0])) / (abs(self.H[0]) + 1.0))

    def _interp(self):
        if self._splines is None:
            self._splines = (CubicHermiteSpline(self.t, self.X, self.P / self.M, axis=0),
                             CubicHermiteSpline(self.t, self.P, self.F, axis=0))
        return self._splines

    def position(self, t):
        return self._interp()[0](t)

    def momentum(self, t):
        return self._interp()[1](t)

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        return (self.t >= t_lo) & (self.t <= t_hi)

    def to_csv(self, path) -> Path:
        path = Path(path)
        wrap = self.wrap_flag.astype(int)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for i in range(len(self)):
                row = [self.t[i], *self.X[i], *self.P[i], self.speed_over_cs[i], self.H[i],
                       *self.F[i]]
                w.writerow(["%.17g" % x for x in row] + [str(wrap[i])])
        return path

    @classmethod
    def from_csv(cls, path, M: float, c_s: float, T_wrap: float | None = None):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        missing = [c for c in CSV_COLUMNS if c not in data.dtype.names]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        col = lambda *names: np.column_stack([data[n] for n in names])
        if T_wrap is None:
            flagged = data["t"][data["wrap_flag"] > 0]
            T_wrap = float(flagged.min()) - 1e-12 if flagged.size else math.inf
        return cls(data["t"], col("X1", "X2", "X3"), col("P1", "P2", "P3"),
                   col("F1", "F2", "F3"), data["H"], M, c_s, T_wrap)


def run_simulation(P0, X0=(0.0, 0.0, 0.0), beta0: InitialField | None = None,
                   params: ModelParams | None = None, grid: SpectralGrid | None = None,
                   dt: float = 0.01, T_max: float = 30.0, *,
                   snapshot_every: float | None = 1.0, snapshot_dir=None,
                   observer: Callable | None = None, allow_supersonic: bool = False,
                   n_sigma: float = 6.0) -> Trajectory:
    """Integrate the coupled system on ``[0, T_max]`` with fixed ``dt``.

    ``beta0`` is the initial field about ``X0`` (default zero).  Snapshots are
    written as BTF1 files when ``snapshot_dir`` is given; ``observer(t,
    particle, h)`` is called at every snapshot time whether or not files are
    written, and its return values are kept in ``meta["observations"]``.
    """
    params = params or ModelParams()
    grid = grid or SpectralGrid()
    beta0 = beta0 or ZeroField()
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(T_max / dt))
    if n_steps < 1 or abs(n_steps * dt - T_max) > 1e-9 * max(1.0, T_max):
        raise ValueError(f"T_max={T_max} must be a positive multiple of dt={dt}")
    stepper = Stepper(grid, params, allow_supersonic)
    particle = ParticleState(X0, P0, 0.0)
    if not allow_supersonic and not np.linalg.norm(particle.P) / params.M < stepper.c_s:
        raise SubsonicError("initial speed is not subsonic",
                            state={"P": particle.P.tolist()})
    h = beta0.field(grid, params)
    T_wrap = wrap_horizon(grid, params, n_sigma)
    snap_stride = None
    if snapshot_every:
        snap_stride = max(1, int(round(snapshot_every / dt)))
    if snapshot_dir is not None:
        snapshot_dir = Path(snapshot_dir)
        snapshot_dir.mkdir(parents=True, exist_ok=True)

    ts = np.empty(n_steps + 1)
    Xs = np.empty((n_steps + 1, 3))
    Ps = np.empty((n_steps + 1, 3))
    Fs = np.empty((n_steps + 1, 3))
    Hs = np.empty(n_steps + 1)
    snaps, observations = [], []

    def record(i, particle, h, F):
        ts[i] = particle.t
        Xs[i] = particle.X
        Ps[i] = particle.P
        Fs[i] = F
        Hs[i] = stepper.energy(particle, h)
        if snap_stride and i % snap_stride == 0:
            if snapshot_dir is not None:
                path = snapshot_dir / f"snap_{i:07d}.btf"
                write_btf(path, h, params, particle.t, particle.X, particle.P)
                snaps.append((particle.t, str(path)))
            if observer is not None:
                observations.append((particle.t, observer(particle.t, particle, h)))

    F = stepper.force(h)
    record(0, particle, h, F)
    for i in range(1, n_steps + 1):
        particle, h, F = stepper.advance(particle, h, dt, F)
        # re-anchor the clock to avoid accumulated rounding in t
        particle = ParticleState(particle.X, particle.P, i * dt)
        record(i, particle, h, F)

    field0 = beta0.field(grid, params)
    meta = {
        "solver": "direct",
        "dt": dt, "T_max": T_max, "grid": {"dims": grid.dims, "box": grid.box},
        "params": params.units(), "beta0": beta0.to_dict(),
        "boundary_convention": "k=0 and Nyquist modes pinned to zero (zero-mean field)",
        "v_max": compute_vmax(P0, params, field0),
        "weighted_norm_beta0": field0.weighted_sobolev_norm(),
        "observations": observations,
    }
    traj = Trajectory(ts, Xs, Ps, Fs, Hs, params.M, stepper.c_s, T_wrap, snaps, meta)
    log.info("direct run: %d steps, T_wrap=%.3g, energy drift %.3g", n_steps, T_wrap,
             traj.energy_drift())
    return traj
