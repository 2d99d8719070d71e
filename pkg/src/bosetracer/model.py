"""Physical parameters of the tracer/condensate model and scalar diagnostics.

Default units follow the convention ``2m = lambda = 1``, in which the speed of
sound is one.  The Fourier convention used throughout the package is

    W_hat(k) = integral exp(-i k.x) W(x) dx.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class ModelError(ValueError):
    """Invalid physical parameters or diagnostics input."""


@dataclass(frozen=True)
class PotentialSpec:
    """Radial tracer-boson interaction ``W(x) = w0 * exp(-|x|^2 / (2 sigma^2))``."""

    kind: str = "gaussian"
    w0: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ModelError(f"unsupported potential kind {self.kind!r}")
        if not self.sigma > 0:
            raise ModelError("sigma must be positive")
        if not math.isfinite(self.w0):
            raise ModelError("w0 must be finite")

    def real_space(self, r2):
        """W evaluated at squared radius ``r2``."""
        return self.w0 * np.exp(-np.asarray(r2) / (2.0 * self.sigma**2))

    def fourier(self, k2):
        """W_hat evaluated at squared wavenumber ``k2``."""
        s2 = self.sigma**2
        return self.w0 * (2.0 * np.pi * s2) ** 1.5 * np.exp(-0.5 * s2 * np.asarray(k2))

    def l2_norm_sq(self) -> float:
        """Closed form of the squared L2 norm of W."""
        return self.w0**2 * (np.pi * self.sigma**2) ** 1.5

    def spectral_cutoff(self, rel: float = 1e-16) -> float:
        """Wavenumber beyond which ``W_hat^2`` is below ``rel`` of its peak."""
        return math.sqrt(-math.log(rel)) / self.sigma


@dataclass(frozen=True)
class ModelParams:
    """Constants of the model.

    ``M`` tracer mass, ``m`` boson mass, ``lam`` contact coupling, ``rho0``
    condensate density parameter.
    """

    M: float = 10.0
    m: float = 0.5
    lam: float = 1.0
    rho0: float = 0.01
    potential: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        for name in ("M", "m", "lam"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ModelError(f"{name} must be positive and finite, got {val}")
        if not (math.isfinite(self.rho0) and self.rho0 >= 0):
            raise ModelError(f"rho0 must be non-negative, got {self.rho0}")

    @property
    def c_s(self) -> float:
        return sound_speed(self)

    @property
    def sqrt_rho0(self) -> float:
        return math.sqrt(self.rho0)

    def with_rho0(self, rho0: float) -> "ModelParams":
        return ModelParams(self.M, self.m, self.lam, rho0, self.potential)

    def with_potential(self, **kw) -> "ModelParams":
        pot = PotentialSpec(**{**self.potential.__dict__, **kw})
        return ModelParams(self.M, self.m, self.lam, self.rho0, pot)

    def units(self) -> dict:
        return {"M": self.M, "m": self.m, "lambda": self.lam, "rho0": self.rho0,
                "c_s": self.c_s, "convention": "2m=lambda=1" if
                (self.m == 0.5 and self.lam == 1.0) else "general"}


def sound_speed(params: ModelParams) -> float:
    return math.sqrt(params.lam / (2.0 * params.m))


def potential_fourier(spec: PotentialSpec, k) -> np.ndarray:
    """W_hat at wavevector(s) ``k`` (last axis of length 3)."""
    k = np.asarray(k, dtype=float)
    return spec.fourier(np.sum(k * k, axis=-1))


def compute_eta(speeds: Iterable[float], c_s: float) -> float:
    """Largest sampled speed in units of the sound speed."""
    arr = np.asarray(list(speeds) if not isinstance(speeds, np.ndarray) else speeds,
                     dtype=float)
    if arr.size == 0:
        raise ModelError("no samples")
    return float(np.max(np.abs(arr)) / c_s)


def vmax_from_norms(p0_norm: float, grad_sq: float, re_sq: float,
                    params: ModelParams) -> float:
    """Speed bound from the energy estimate.

    ``|P_t|^2 <= |P0|^2 + 2M[(1/2m)|grad b0|^2 + 2 lam |Re b0|^2 + 8 rho0 |W|^2 / lam]``.
    """
    M, m, lam = params.M, params.m, params.lam
    extra = (grad_sq / (2.0 * m) + 2.0 * lam * re_sq
             + 8.0 * params.rho0 * params.potential.l2_norm_sq() / lam)
    return math.sqrt(p0_norm**2 + 2.0 * M * extra) / M


def compute_vmax(P0, params: ModelParams, field=None) -> float:
    """Upper bound on the tracer speed for all times.

    ``field`` is the initial particle-frame field (anything exposing
    ``grad_norm_sq()`` and ``re_norm_sq()``); ``None`` means beta_0 = 0.
    """
    p0 = float(np.linalg.norm(np.asarray(P0, dtype=float)))
    if field is None:
        return vmax_from_norms(p0, 0.0, 0.0, params)
    return vmax_from_norms(p0, field.grad_norm_sq(), field.re_norm_sq(), params)
