"""Lattice evaluation of the memory kernels by direct spectral propagation.

These use the field propagator and force sum of :mod:`bosetracer.spectral` on
a fine periodic box instead of the polar/oscillatory route, so agreement
between the two is a genuine cross-check.  On a periodic box the lattice sum
equals the continuum value plus the contributions of periodic images; for the steady-state sources those decay
like ``L^-5`` in the box length, which :class:`ExtrapolatedOracle` removes by
Richardson extrapolation over two boxes of equal spacing.
"""

from __future__ import annotations

import numpy as np

from ..model import ModelParams
from ..spectral import (FieldState, ModeSymbols, SpectralGrid, force_on_particle,
                        propagate_field_step, steady_state_field)

DEFAULT_ORACLE_GRID = ((128, 128, 128), (96.0, 96.0, 96.0))
DEFAULT_ORACLE_BOXES = ((128, 96.0), (192, 144.0))


class LatticeOracle:
    """Free propagation ``U(tau)`` plus a displaced force probe on one grid."""

    def __init__(self, params: ModelParams, grid: SpectralGrid | None = None):
        self.params = params
        self.grid = grid or SpectralGrid(*DEFAULT_ORACLE_GRID)
        self.free = params.with_rho0(0.0)
        self.unit = params.with_rho0(1.0)
        self.symbols = ModeSymbols(self.grid, self.free)
        self._unit_symbols = ModeSymbols(self.grid, self.unit)

    def probe(self, h: FieldState, tau: float, dX) -> np.ndarray:
        """``<grad W(. - X_t), Re U(tau) h>`` for ``h`` centred at ``X_t - dX``."""
        dX = np.asarray(dX, dtype=float)
        if tau > 0:
            h = propagate_field_step(h, dX / tau, tau, self.free, self.symbols)
        elif np.any(dX != 0):
            raise ValueError("nonzero displacement needs positive elapsed time")
        return force_on_particle(h, self.unit, self._unit_symbols)

    def d1(self, tau, dX, beta0) -> np.ndarray:
        h0 = beta0.field(self.grid, self.params)
        return self.params.sqrt_rho0 * self.probe(h0, tau, dX)

    def d2(self, tau, dX, v0) -> np.ndarray:
        s0 = steady_state_field(v0, self.params, self.grid, self.symbols)
        return -self.params.sqrt_rho0 * self.probe(s0, tau, dX)

    def steady_velocity_derivative(self, v, axis: int) -> FieldState:
        """``d/dv_axis`` of the unit-coupling steady state, ``-A^-1 (i k_l) A^-1 (0, W)``.

        ``A(v) = i (v.k) + [[0, a], [-b, 0]]`` per mode, inverted in closed form.
        """
        g = self.grid
        sym = self.symbols
        kv = g.k_dot(np.asarray(v, dtype=float))
        a, b = sym.a, sym.b
        det = a * b - kv * kv
        det = np.where(g.active, det, 1.0)

        def apply_inv(x1, x2):
            return (1j * kv * x1 - a * x2) / det, (b * x1 + 1j * kv * x2) / det

        s1, s2 = apply_inv(0.0, sym.W_hat)
        kl = 1j * g.k_axes[axis]
        d1, d2 = apply_inv(kl * s1, kl * s2)
        return FieldState.from_modes(g, -d1, -d2)

    def k(self, tau, dX, v_s) -> np.ndarray:
        out = np.empty((3, 3))
        for l in range(3):
            ds = self.steady_velocity_derivative(v_s, l)
            out[:, l] = -self.probe(ds, tau, dX) / self.params.M
        return out


class ExtrapolatedOracle:
    """Lattice oracle on two boxes combined as ``(L2^p f2 - L1^p f1)/(L2^p - L1^p)``."""

    def __init__(self, params: ModelParams, boxes=DEFAULT_ORACLE_BOXES, order: float = 5.0):
        (n1, l1), (n2, l2) = boxes
        if not l2 > l1:
            raise ValueError("second box must be larger")
        self.lengths = (float(l1), float(l2))
        self.order = order
        self.params = params
        self._boxes = boxes

    def _oracle(self, i) -> LatticeOracle:
        # built lazily and one at a time to bound memory
        n, l = self._boxes[i]
        return LatticeOracle(self.params, SpectralGrid(n, l))

    def _combine(self, method, *args):
        vals = [getattr(self._oracle(i), method)(*args) for i in range(2)]
        l1, l2 = self.lengths
        w1, w2 = l1**self.order, l2**self.order
        return (w2 * vals[1] - w1 * vals[0]) / (w2 - w1), vals

    def d1(self, tau, dX, beta0):
        return self._combine("d1", tau, dX, beta0)[0]

    def d2(self, tau, dX, v0):
        return self._combine("d2", tau, dX, v0)[0]

    def k(self, tau, dX, v_s):
        return self._combine("k", tau, dX, v_s)[0]
