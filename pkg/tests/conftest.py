import numpy as np
import pytest

from bosetracer import ModelParams, SpectralGrid


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def small_grid():
    return SpectralGrid((32, 32, 32), (16.0, 16.0, 16.0))


def plane_wave_field(grid, rng, n_waves=6, kmax_index=3):
    """Real two-component field as a short sum of lattice plane waves.

    Returns the sampled components and a closure giving analytic values and
    gradients, for real-space oracles.
    """
    waves = []
    for comp in range(2):
        for _ in range(n_waves):
            idx = rng.integers(-kmax_index, kmax_index + 1, size=3)
            if not idx.any():
                idx[0] = 1
            k = 2 * np.pi * idx / np.asarray(grid.box)
            waves.append((comp, k, rng.normal(), rng.uniform(0, 2 * np.pi)))
    x, y, z = np.broadcast_arrays(*grid.x_axes)
    pts = np.stack([x, y, z], axis=-1)

    def evaluate():
        vals = [np.zeros(grid.dims), np.zeros(grid.dims)]
        grads = [np.zeros(grid.dims + (3,)), np.zeros(grid.dims + (3,))]
        for comp, k, c, ph in waves:
            arg = pts @ k + ph
            vals[comp] += c * np.cos(arg)
            grads[comp] += -c * np.sin(arg)[..., None] * k
        return vals, grads

    return pts, evaluate
