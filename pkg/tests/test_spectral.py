import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from bosetracer.integrator import ParticleState
from bosetracer.model import ModelParams
from bosetracer.spectral import (FieldState, ModeSymbols, SpectralGrid, SupersonicError,
                                 dispersion_omega, force_on_particle, group_velocity,
                                 hamiltonian, lab_frame_beta, propagate_field_step,
                                 steady_state_field)

from conftest import plane_wave_field


def random_field(grid, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    re = rng.normal(size=grid.dims)
    im = rng.normal(size=grid.dims)
    h = FieldState.from_real(grid, re, im)
    # smooth it so it is well resolved
    damp = np.exp(-grid.k2)
    return FieldState.from_modes(grid, scale * h.h1 * damp, scale * h.h2 * damp)


def test_grid_invariants():
    g = SpectralGrid((8, 6, 4), (4.0, 3.0, 2.0))
    kx, ky, kz = np.broadcast_arrays(*g.k_axes)
    assert np.count_nonzero((kx == 0) & (ky == 0) & (kz == 0)) == 1
    with pytest.raises(ValueError):
        SpectralGrid((7, 8, 8))


def test_parseval(small_grid):
    g = small_grid
    rng = np.random.default_rng(1)
    _, evaluate = plane_wave_field(g, rng)
    (f, _), _ = evaluate()
    lhs = np.sum(f * f) * g.cell_volume
    rhs = g.parseval(g.to_fourier(f))
    assert rhs == pytest.approx(lhs, rel=1e-12)


@pytest.mark.parametrize("k,expected", [(0.0, 0.0), (1.0, np.sqrt(2.0))])
def test_dispersion_values(k, expected):
    assert dispersion_omega(k, ModelParams()) == pytest.approx(expected, rel=1e-14)


def test_dispersion_phonon_limit():
    p = ModelParams()
    k = 1e-3
    assert dispersion_omega(k, p) / (p.c_s * k) == pytest.approx(1.0, rel=1e-6)
    assert dispersion_omega([0.0, k, 0.0], p) == dispersion_omega(k, p)


def test_mode_symbols_bounds(small_grid):
    p = ModelParams(m=0.7, lam=1.9)
    sym = ModeSymbols(small_grid, p)
    k = np.sqrt(small_grid.k2)
    nz = k > 0
    assert np.all(sym.omega[nz] > 0) and sym.omega[~nz].item() == 0
    assert np.all(sym.omega[nz] / k[nz] >= p.c_s * (1 - 1e-15))
    assert np.all(group_velocity(k[nz], p) >= p.c_s * (1 - 1e-15))


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 2 * np.pi), st.floats(0, np.pi))
def test_steady_determinant_positive(speed, az, pol):
    g = SpectralGrid((16, 16, 16), (8.0, 8.0, 8.0))
    p = ModelParams()
    v = speed * np.array([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)])
    sym = ModeSymbols(g, p)
    det = sym.omega ** 2 - g.k_dot(v) ** 2
    nz = g.k2 > 0
    assert np.all(det[nz] >= (p.c_s ** 2 - speed ** 2) * g.k2[nz] * (1 - 1e-12))
    assert np.all(det[nz] > 0)


def test_steady_v0_closed_form(small_grid, params):
    h = steady_state_field([0, 0, 0], params, small_grid)
    sym = ModeSymbols(small_grid, params)
    assert np.max(np.abs(h.h2)) == 0
    act = small_grid.active
    expected = -params.sqrt_rho0 * sym.W_hat / sym.b
    np.testing.assert_allclose(h.h1[act], expected[act], rtol=1e-14)


def test_steady_matches_per_mode_linear_solve(params):
    # 0 = i (v.k) h + J h - sqrt(rho0) (0, W) solved mode by mode
    g = SpectralGrid((8, 8, 8), (8.0, 8.0, 8.0))
    v = np.array([0.3, -0.4, 0.2])
    h = steady_state_field(v, params, g)
    sym = ModeSymbols(g, params)
    kv = g.k_dot(v)
    idx = np.argwhere(g.active)
    for i, j, l in idx[::7]:
        a, b = sym.a[i, j, l], sym.b[i, j, l]
        A = np.array([[1j * kv[i, j, l], a], [-b, 1j * kv[i, j, l]]])
        sol = np.linalg.solve(A, [0, params.sqrt_rho0 * sym.W_hat[i, j, l]])
        np.testing.assert_allclose([h.h1[i, j, l], h.h2[i, j, l]], sol, rtol=1e-12, atol=1e-300)


def test_steady_trivial_cases(small_grid, params):
    h = steady_state_field([0.2, 0, 0], params.with_rho0(0.0), small_grid)
    assert np.max(np.abs(h.h1)) == 0 and np.max(np.abs(h.h2)) == 0
    with pytest.raises(SupersonicError, match="supersonic steady state undefined"):
        steady_state_field([1.0, 0, 0], params, small_grid)


@pytest.mark.parametrize("ratio", [0.0, 0.3, 0.6, 0.9])
def test_steady_state_exerts_no_force(ratio, params):
    g = SpectralGrid()
    v = ratio * params.c_s * np.array([0.6, 0.0, 0.8])
    h = steady_state_field(v, params, g)
    F = force_on_particle(h, params)
    gradW = np.sqrt(np.sum(g.k2 * ModeSymbols(g, params).W_hat ** 2) * g.weight)
    hnorm = np.sqrt(h.re_norm_sq() + h.im_norm_sq())
    assert np.linalg.norm(F) <= 1e-10 * params.sqrt_rho0 * gradW * hnorm


def test_propagate_identity_and_fixed_point(small_grid, params):
    h = random_field(small_grid, 2)
    v = [0.2, 0.1, -0.3]
    out = propagate_field_step(h, v, 0.0, params)
    assert np.array_equal(out.h1, h.h1) and np.array_equal(out.h2, h.h2)
    s = steady_state_field(v, params, small_grid)
    out = propagate_field_step(s, v, 0.37, params)
    np.testing.assert_allclose(out.h1, s.h1, atol=1e-15)
    np.testing.assert_allclose(out.h2, s.h2, atol=1e-15)


def test_propagator_matches_matrix_exponential(params):
    g = SpectralGrid((8, 8, 8), (8.0, 8.0, 8.0))
    free = params.with_rho0(0.0)
    sym = ModeSymbols(g, free)
    dt = 0.73
    rng = np.random.default_rng(3)
    idx = (1, 2, 7)
    h = FieldState.zeros(g)
    h.h1[idx] = rng.normal() + 1j * rng.normal()
    h.h2[idx] = rng.normal() + 1j * rng.normal()
    out = propagate_field_step(h, [0, 0, 0], dt, free)
    a, b = sym.a[idx], sym.b[idx]
    E = expm(dt * np.array([[0.0, a], [-b, 0.0]]))
    ref = E @ np.array([h.h1[idx], h.h2[idx]])
    np.testing.assert_allclose([out.h1[idx], out.h2[idx]], ref, rtol=1e-12)


def test_group_property(small_grid, params):
    h = random_field(small_grid, 4)
    v = [0.4, -0.2, 0.1]
    one = propagate_field_step(propagate_field_step(h, v, 0.3, params), v, 0.5, params)
    both = propagate_field_step(h, v, 0.8, params)
    np.testing.assert_allclose(one.h1, both.h1, atol=1e-13 * np.abs(both.h1).max())
    np.testing.assert_allclose(one.h2, both.h2, atol=1e-13 * np.abs(both.h2).max())


def test_source_free_mode_energy(small_grid, params):
    free = params.with_rho0(0.0)
    sym = ModeSymbols(small_grid, free)
    h = random_field(small_grid, 5)
    out = propagate_field_step(h, [0.3, 0.3, 0.0], 0.25, free)
    e0 = sym.b * np.abs(h.h1) ** 2 + sym.a * np.abs(h.h2) ** 2
    e1 = sym.b * np.abs(out.h1) ** 2 + sym.a * np.abs(out.h2) ** 2
    np.testing.assert_allclose(e1, e0, rtol=1e-12, atol=1e-12 * e0.max())


def test_reality_and_zero_mode_preserved(small_grid, params):
    h = random_field(small_grid, 6)
    assert h.reality_defect() < 1e-12
    out = propagate_field_step(h, [0.5, 0.0, 0.2], 0.4, params)
    assert out.reality_defect() < 1e-12 * max(1, np.abs(out.h1).max())
    assert out.h1[0, 0, 0] == 0 and out.h2[0, 0, 0] == 0
    s = steady_state_field([0.5, 0.0, 0.2], params, small_grid)
    assert s.reality_defect() < 1e-15
    assert s.h1[0, 0, 0] == 0


def test_supersonic_step_rejected_unless_allowed(small_grid, params):
    h = FieldState.zeros(small_grid)
    with pytest.raises(SupersonicError):
        propagate_field_step(h, [1.2, 0, 0], 0.1, params)
    out = propagate_field_step(h, [1.2, 0, 0], 0.1, params, allow_supersonic=True)
    assert np.isfinite(out.h1).all()


def test_duhamel_branch_matches_steady_form(small_grid, params):
    # the supersonic branch is a closed-form Duhamel integral valid at all speeds
    from bosetracer.spectral import _duhamel_source, propagate_modes
    h = random_field(small_grid, 7, 1e-2)
    v = np.array([0.4, 0.2, 0.0])
    dt = 0.3
    sym = ModeSymbols(small_grid, params)
    ref = propagate_field_step(h, v, dt, params)
    kv = small_grid.k_dot(v)
    n1, n2 = propagate_modes(h.h1, h.h2, 0.0, 0.0, np.exp(1j * kv * dt), sym.trig(dt))
    f1, f2 = _duhamel_source(kv, sym, dt, params.sqrt_rho0)
    act = small_grid.active
    np.testing.assert_allclose((n1 + f1)[act], ref.h1[act], atol=1e-13)
    np.testing.assert_allclose((n2 + f2)[act], ref.h2[act], atol=1e-13)


def test_force_trivial_cases(small_grid, params):
    assert np.all(force_on_particle(FieldState.zeros(small_grid), params) == 0)
    radial = FieldState.from_modes(small_grid, np.exp(-small_grid.k2).astype(complex),
                                   np.zeros(small_grid.dims))
    assert np.linalg.norm(force_on_particle(radial, params)) < 1e-15


def test_force_against_real_space_quadrature(small_grid, params):
    g = small_grid
    pts, evaluate = plane_wave_field(g, np.random.default_rng(8))
    (h1, h2), _ = evaluate()
    h = FieldState.from_real(g, h1, h2)
    r2 = np.sum(pts ** 2, axis=-1)
    gradW = -pts / params.potential.sigma ** 2 * params.potential.real_space(r2)[..., None]
    ref = params.sqrt_rho0 * np.sum(gradW * h1[..., None], axis=(0, 1, 2)) * g.cell_volume
    np.testing.assert_allclose(force_on_particle(h, params), ref, rtol=1e-8,
                               atol=1e-12 * np.abs(ref).max())


def test_hamiltonian_trivial(small_grid):
    p = ModelParams(M=1.0)
    h = FieldState.zeros(small_grid)
    assert hamiltonian(ParticleState([0, 0, 0], [0, 0, 0]), h, p) == 0
    assert hamiltonian(ParticleState([0, 0, 0], [1.0, 0, 0]), h, p) == 0.5


def test_hamiltonian_against_real_space_quadrature(small_grid, params):
    g = small_grid
    pts, evaluate = plane_wave_field(g, np.random.default_rng(9))
    (h1, h2), (g1, g2) = evaluate()
    h = FieldState.from_real(g, h1, h2)
    P = np.array([1.0, -2.0, 0.5])
    W = params.potential.real_space(np.sum(pts ** 2, axis=-1))
    dv = g.cell_volume
    grad_sq = np.sum(g1 ** 2 + g2 ** 2) * dv
    ref = (P @ P / (2 * params.M)
           + 0.5 * (grad_sq / (2 * params.m) + params.lam * np.sum(h1 ** 2) * dv)
           + params.sqrt_rho0 * np.sum(W * h1) * dv)
    assert hamiltonian(ParticleState([3.0, 1.0, 0.0], P), h, params) == pytest.approx(ref, rel=1e-10)


def test_lab_frame_shift(small_grid, params):
    g = small_grid
    _, evaluate = plane_wave_field(g, np.random.default_rng(10))
    (h1, h2), _ = evaluate()
    h = FieldState.from_real(g, h1, h2)
    shift = np.array([2.0, -1.5, 0.5])           # whole number of cells
    beta = lab_frame_beta(h, shift)
    steps = tuple(int(round(s / d)) for s, d in zip(shift, g.spacing))
    np.testing.assert_allclose(beta.real, np.roll(h1, steps, axis=(0, 1, 2)), atol=1e-12)
    np.testing.assert_allclose(beta.imag, np.roll(h2, steps, axis=(0, 1, 2)), atol=1e-12)
