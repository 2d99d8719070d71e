"""Fourier-space field in the particle frame.

The stored state is ``h(y) = (Re beta, Im beta)(y + X_t)`` on a periodic box.
Per mode ``k`` the linear field equation reads

    d/dt (h1, h2) = i (v.k) (h1, h2) + J(k) (h1, h2) - sqrt(rho0) (0, W_hat)

with ``J = [[0, a], [-b, 0]]``, ``a = |k|^2/2m``, ``b = a + lam`` and
``omega = sqrt(a b)``.  Modes decouple, so a step at frozen velocity is exact.

Real-space arrays are kept in FFT order: index ``j`` along an axis sits at
``dx * j`` for ``j < N/2`` and at ``dx * (j - N)`` otherwise, so the particle
is at index 0.  The k = 0 mode and every Nyquist mode are pinned to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import ModelParams, sound_speed


class SupersonicError(ValueError):
    """Raised when a frozen velocity is at or above the speed of sound."""


def _check_subsonic(v, params: ModelParams, what: str):
    speed = float(np.linalg.norm(v))
    if not speed < sound_speed(params):
        raise SupersonicError(f"{what}: |v| = {speed:.6g} >= c_s = {sound_speed(params):.6g}")


class SpectralGrid:
    """Periodic Fourier lattice with ``dims`` modes on a box of side ``box``."""

    def __init__(self, dims=(64, 64, 64), box=(64.0, 64.0, 64.0)):
        dims = tuple(int(n) for n in np.broadcast_to(dims, (3,)))
        box = tuple(float(b) for b in np.broadcast_to(box, (3,)))
        if any(n < 2 or n % 2 for n in dims):
            raise ValueError(f"mode counts must be even and >= 2, got {dims}")
        if any(not b > 0 for b in box):
            raise ValueError("box lengths must be positive")
        self.dims = dims
        self.box = box

    def __repr__(self):
        return f"SpectralGrid(dims={self.dims}, box={self.box})"

    def __eq__(self, other):
        return (isinstance(other, SpectralGrid) and self.dims == other.dims
                and self.box == other.box)

    def __hash__(self):
        return hash((self.dims, self.box))

    @property
    def shape(self):
        return self.dims

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.box, self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box))

    @property
    def weight(self) -> float:
        """Mode weight ``(dk)^3/(2 pi)^3 = 1/V`` for Parseval sums."""
        return 1.0 / self.volume

    @cached_property
    def k_axes(self):
        """Per-axis wavenumbers, broadcastable to the full grid."""
        out = []
        for ax, (n, L) in enumerate(zip(self.dims, self.box)):
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
            shape = [1, 1, 1]
            shape[ax] = n
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.k_axes
        return kx**2 + ky**2 + kz**2

    @cached_property
    def active(self) -> np.ndarray:
        """Modes that carry dynamics: not k = 0, not on a Nyquist plane."""
        masks = []
        for ax, n in enumerate(self.dims):
            m = np.ones(n, dtype=bool)
            m[n // 2] = False
            shape = [1, 1, 1]
            shape[ax] = n
            masks.append(m.reshape(shape))
        act = masks[0] & masks[1] & masks[2]
        act = np.broadcast_to(act, self.dims).copy()
        act[0, 0, 0] = False
        return act

    @cached_property
    def x_axes(self):
        out = []
        for ax, (n, L) in enumerate(zip(self.dims, self.box)):
            j = np.arange(n)
            x = (L / n) * np.where(j < n // 2, j, j - n)
            shape = [1, 1, 1]
            shape[ax] = n
            out.append(x.reshape(shape).astype(float))
        return tuple(out)

    @cached_property
    def r2(self) -> np.ndarray:
        x, y, z = self.x_axes
        return x**2 + y**2 + z**2

    @property
    def k_min(self) -> float:
        return 2.0 * np.pi / max(self.box)

    @property
    def k_max(self) -> float:
        """Largest active per-axis wavenumber."""
        return max(2.0 * np.pi / L * (n // 2 - 1) for n, L in zip(self.dims, self.box))

    def k_dot(self, v) -> np.ndarray:
        kx, ky, kz = self.k_axes
        return v[0] * kx + v[1] * ky + v[2] * kz

    def to_fourier(self, f) -> np.ndarray:
        return self.cell_volume * np.fft.fftn(f)

    def to_real(self, fh) -> np.ndarray:
        return np.fft.ifftn(fh).real / self.cell_volume

    def parseval(self, fh, gh=None) -> float:
        """``integral conj(f) g dx`` as a weighted mode sum (real part)."""
        gh = fh if gh is None else gh
        return float(np.sum((np.conj(fh) * gh).real) * self.weight)


class ModeSymbols:
    """Per-mode symbols ``a, b, omega`` and the masked potential spectrum."""

    def __init__(self, grid: SpectralGrid, params: ModelParams):
        self.grid = grid
        self.params = params
        k2 = grid.k2
        self.a = k2 / (2.0 * params.m)
        self.b = self.a + params.lam
        self.omega = np.sqrt(self.a * self.b)
        self.W_hat = np.where(grid.active, params.potential.fourier(k2), 0.0)
        self._trig = {}

    def trig(self, dt: float):
        """``cos(omega dt)``, ``(a/omega) sin``, ``-(b/omega) sin`` for step ``dt``."""
        key = float(dt)
        if key not in self._trig:
            if len(self._trig) > 4:
                self._trig.clear()
            om = self.omega
            safe = np.where(om > 0, om, 1.0)
            s = np.sin(om * dt)
            c = np.cos(om * dt)
            e12 = np.where(om > 0, self.a / safe * s, self.a * dt)
            e21 = np.where(om > 0, -self.b / safe * s, -self.b * dt)
            self._trig[key] = (c, e12, e21)
        return self._trig[key]


def dispersion_omega(k, params: ModelParams):
    """Bogoliubov frequency ``sqrt(a (a + lam))`` for a wavevector or magnitude."""
    k = np.asarray(k, dtype=float)
    k2 = np.sum(k * k, axis=-1) if k.ndim and k.shape[-1] == 3 else k * k
    a = k2 / (2.0 * params.m)
    return np.sqrt(a * (a + params.lam))


def group_velocity(k, params: ModelParams):
    """``d omega / d|k|``."""
    k = np.asarray(k, dtype=float)
    a = k * k / (2.0 * params.m)
    om = np.sqrt(a * (a + params.lam))
    with np.errstate(invalid="ignore", divide="ignore"):
        vg = (k / params.m) * (a + 0.5 * params.lam) / om
    return np.where(k == 0, sound_speed(params), vg)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Particle-frame field as per-mode amplitudes of ``(Re beta, Im beta)``."""

    h1: np.ndarray
    h2: np.ndarray
    grid: SpectralGrid

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "FieldState":
        return cls(np.zeros(grid.dims, complex), np.zeros(grid.dims, complex), grid)

    @classmethod
    def from_modes(cls, grid: SpectralGrid, h1, h2) -> "FieldState":
        """Build a state, pinning inactive modes to zero."""
        act = grid.active
        return cls(np.where(act, h1, 0.0).astype(complex),
                   np.where(act, h2, 0.0).astype(complex), grid)

    @classmethod
    def from_real(cls, grid: SpectralGrid, re_beta, im_beta) -> "FieldState":
        """From real-space samples (FFT order, particle at index 0)."""
        return cls.from_modes(grid, grid.to_fourier(re_beta), grid.to_fourier(im_beta))

    def to_real(self):
        return self.grid.to_real(self.h1), self.grid.to_real(self.h2)

    def __add__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.h1 + other.h1, self.h2 + other.h2, self.grid)

    def __sub__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.h1 - other.h1, self.h2 - other.h2, self.grid)

    def scaled(self, c: float) -> "FieldState":
        return FieldState(c * self.h1, c * self.h2, self.grid)

    def re_norm_sq(self) -> float:
        return self.grid.parseval(self.h1)

    def im_norm_sq(self) -> float:
        return self.grid.parseval(self.h2)

    def grad_norm_sq(self) -> float:
        k2 = self.grid.k2
        w = self.grid.weight
        return float(np.sum(k2 * (np.abs(self.h1) ** 2 + np.abs(self.h2) ** 2)) * w)

    def reality_defect(self) -> float:
        """Max of ``|h(-k) - conj h(k)|`` over both components."""
        out = 0.0
        for h in (self.h1, self.h2):
            flipped = np.roll(np.flip(h), 1, axis=(0, 1, 2))
            out = max(out, float(np.max(np.abs(flipped - np.conj(h)))))
        return out

    def weighted_sobolev_norm(self, weight_power: float = 2.5, order: int = 3) -> float:
        """Grid value of ``||(1+|x|^2)^p beta||_{H^s}`` for hypothesis bookkeeping."""
        g = self.grid
        wgt = (1.0 + g.r2) ** weight_power
        total = 0.0
        for h in (self.h1, self.h2):
            f = wgt * g.to_real(h)
            fh = g.to_fourier(f)
            total += float(np.sum((1.0 + g.k2) ** order * np.abs(fh) ** 2) * g.weight)
        return math.sqrt(total)


def steady_state_modes(kdot_v, a, b, W_hat, sqrt_rho0):
    """Traveling-wave amplitudes ``sqrt(rho0) H(v)^{-1} (0, W)`` per mode."""
    det = a * b - kdot_v**2
    safe = np.where(det > 0, det, 1.0)
    s1 = np.where(det > 0, -sqrt_rho0 * a * W_hat / safe, 0.0)
    s2 = np.where(det > 0, 1j * sqrt_rho0 * kdot_v * W_hat / safe, 0.0)
    return s1, s2


def steady_state_field(v, params: ModelParams, grid: SpectralGrid,
                       symbols: ModeSymbols | None = None) -> FieldState:
    """Field co-moving with a tracer at constant subsonic velocity ``v``."""
    v = np.asarray(v, dtype=float)
    if not np.linalg.norm(v) < sound_speed(params):
        raise SupersonicError("supersonic steady state undefined")
    sym = symbols or ModeSymbols(grid, params)
    s1, s2 = steady_state_modes(grid.k_dot(v), sym.a, sym.b, sym.W_hat, params.sqrt_rho0)
    return FieldState(s1.astype(complex), s2, grid)


def propagate_modes(h1, h2, s1, s2, phase, trig):
    """``h_s + e^{i v.k dt} E0(dt) (h - h_s)`` for precomputed pieces."""
    c, e12, e21 = trig
    d1 = h1 - s1
    d2 = h2 - s2
    n1 = s1 + phase * (c * d1 + e12 * d2)
    n2 = s2 + phase * (e21 * d1 + c * d2)
    return n1, n2


def _duhamel_source(kv, sym: ModeSymbols, dt: float, sqrt_rho0: float):
    """``-sqrt(rho0) int_0^dt e^{i v.k s} E0(s) (0, W_hat) ds`` in closed form.

    Valid at any speed, including resonant modes where the steady state fails.
    """
    om = sym.omega

    def phi(mu):
        z = mu * dt
        small = np.abs(z) < 1e-8
        safe = np.where(small, 1.0, z)
        return dt * np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)

    p_plus = phi(1j * (kv + om))
    p_minus = phi(1j * (kv - om))
    sin_int = (p_plus - p_minus) / 2j
    cos_int = (p_plus + p_minus) / 2.0
    safe = np.where(om > 0, om, 1.0)
    a_over = np.where(om > 0, sym.a / safe, 0.0)
    return -sqrt_rho0 * a_over * sin_int * sym.W_hat, -sqrt_rho0 * cos_int * sym.W_hat


def propagate_field_step(h: FieldState, v, dt: float, params: ModelParams,
                         symbols: ModeSymbols | None = None,
                         allow_supersonic: bool = False) -> FieldState:
    """Exact evolution over ``dt`` with the tracer velocity frozen at ``v``.

    Subsonic velocities use ``h_s + e^{i v.k dt} E0(dt) (h - h_s)``; with
    ``allow_supersonic`` other speeds fall back to the Duhamel form.
    """
    v = np.asarray(v, dtype=float)
    supersonic = not np.linalg.norm(v) < sound_speed(params)
    if supersonic and not allow_supersonic:
        _check_subsonic(v, params, "propagate_field_step")
    grid = h.grid
    sym = symbols or ModeSymbols(grid, params)
    if dt == 0:
        return FieldState(h.h1.copy(), h.h2.copy(), grid)
    kv = grid.k_dot(v)
    phase = np.exp(1j * kv * dt)
    if supersonic:
        n1, n2 = propagate_modes(h.h1, h.h2, 0.0, 0.0, phase, sym.trig(dt))
        if params.rho0 > 0:
            f1, f2 = _duhamel_source(kv, sym, dt, params.sqrt_rho0)
            n1 = n1 + f1
            n2 = n2 + f2
    else:
        if params.rho0 > 0:
            s1, s2 = steady_state_modes(kv, sym.a, sym.b, sym.W_hat, params.sqrt_rho0)
        else:
            s1 = s2 = 0.0
        n1, n2 = propagate_modes(h.h1, h.h2, s1, s2, phase, sym.trig(dt))
    act = grid.active
    return FieldState(np.where(act, n1, 0.0), np.where(act, n2, 0.0), grid)


def force_weights(grid: SpectralGrid, symbols: ModeSymbols):
    """``conj(i k W_hat)`` per axis, times the mode weight."""
    w = grid.weight
    return tuple(-1j * k * symbols.W_hat * w for k in grid.k_axes)


def force_on_particle(h: FieldState, params: ModelParams,
                      symbols: ModeSymbols | None = None, weights=None) -> np.ndarray:
    """``sqrt(rho0) * integral grad W(y) h1(y) dy`` evaluated as a mode sum."""
    sym = symbols or ModeSymbols(h.grid, params)
    fw = weights if weights is not None else force_weights(h.grid, sym)
    out = np.empty(3)
    for i in range(3):
        # np.sum reduces pairwise, so the result is order-deterministic
        out[i] = np.sum((fw[i] * h.h1).real)
    return params.sqrt_rho0 * out


def field_energy(h: FieldState, params: ModelParams,
                 symbols: ModeSymbols | None = None) -> float:
    """Field part of the conserved energy (see :func:`hamiltonian`)."""
    sym = symbols or ModeSymbols(h.grid, params)
    w = h.grid.weight
    quad = np.sum(sym.b * np.abs(h.h1) ** 2 + sym.a * np.abs(h.h2) ** 2) * w
    coupling = np.sum((sym.W_hat * h.h1).real) * w
    return float(0.5 * quad + params.sqrt_rho0 * coupling)


def hamiltonian(particle, h: FieldState, params: ModelParams,
                symbols: ModeSymbols | None = None) -> float:
    """Energy conserved by the coupled dynamics.

    ``|P|^2/2M + (1/2)[(1/2m)|grad beta|^2 + lam |Re beta|^2] + sqrt(rho0) int W^X Re beta``.

    With the force ``sqrt(rho0) <grad W, Re beta>`` and the field source
    ``sqrt(rho0) W``, this is the combination whose time derivative vanishes;
    it equals half the field part of ``(1/2m)|grad b|^2 + lam|Re b|^2 +
    2 sqrt(rho0) int W Re b`` plus the kinetic energy.
    """
    P = np.asarray(getattr(particle, "P", particle), dtype=float)
    return float(P @ P / (2.0 * params.M)) + field_energy(h, params, symbols)


def lab_frame_beta(h: FieldState, X) -> np.ndarray:
    """Lab-frame ``beta(x)`` on the grid, ``beta(x) = (h1 + i h2)(x - X)``."""
    phase = np.exp(-1j * h.grid.k_dot(np.asarray(X, float)))
    g = h.grid
    return g.to_real(h.h1 * phase) + 1j * g.to_real(h.h2 * phase)


class InitialField:
    """Initial field ``beta_0`` described by its continuum spectrum about ``X_0``.

    ``spectrum(k, params)`` returns the transforms of ``(Re beta0, Im beta0)`` at
    wavevectors ``k`` (last axis 3).  Lattice states sample the same spectrum.
    """

    is_zero = False
    kind = "base"

    def spectrum(self, k, params: ModelParams):
        raise NotImplementedError

    def field(self, grid: SpectralGrid, params: ModelParams) -> FieldState:
        kx, ky, kz = np.broadcast_arrays(*grid.k_axes)
        k = np.stack([kx, ky, kz], axis=-1)
        s1, s2 = self.spectrum(k, params)
        return FieldState.from_modes(grid, s1, s2)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class ZeroField(InitialField):
    is_zero = True
    kind = "zero"

    def spectrum(self, k, params):
        z = np.zeros(np.shape(k)[:-1], complex)
        return z, z.copy()


@dataclass(frozen=True)
class GaussianPacket(InitialField):
    """``beta0(x) = A exp(-|x - c|^2 / (2 w^2))`` with complex amplitude ``A``."""

    amplitude: complex = 0.1
    width: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    kind = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("packet width must be positive")

    def spectrum(self, k, params):
        k = np.asarray(k, dtype=float)
        w = self.width
        c = np.asarray(self.center, dtype=float)
        env = (2.0 * np.pi * w * w) ** 1.5 * np.exp(-0.5 * w * w * np.sum(k * k, axis=-1))
        env = env * np.exp(-1j * (k @ c))
        A = complex(self.amplitude)
        return A.real * env, A.imag * env

    def to_dict(self):
        A = complex(self.amplitude)
        return {"kind": self.kind, "amplitude": [A.real, A.imag], "width": self.width,
                "center": list(map(float, self.center))}


@dataclass(frozen=True)
class SteadyField(InitialField):
    """The co-moving steady state at velocity ``v``."""

    velocity: tuple = (0.0, 0.0, 0.0)
    kind = "steady"

    def spectrum(self, k, params):
        k = np.asarray(k, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        if not np.linalg.norm(v) < sound_speed(params):
            raise SupersonicError("supersonic steady state undefined")
        k2 = np.sum(k * k, axis=-1)
        a = k2 / (2.0 * params.m)
        b = a + params.lam
        W = params.potential.fourier(k2)
        return steady_state_modes(k @ v, a, b, W, params.sqrt_rho0)

    def to_dict(self):
        return {"kind": self.kind, "velocity": list(map(float, self.velocity))}
