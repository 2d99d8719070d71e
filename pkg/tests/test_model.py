import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.spatial.transform import Rotation

from bosetracer.model import (ModelError, ModelParams, PotentialSpec, compute_eta,
                              compute_vmax, potential_fourier, sound_speed, vmax_from_norms)


@pytest.mark.parametrize("lam,m,expected", [(1.0, 0.5, 1.0), (2.0, 1.0, 1.0),
                                            (0.5, 0.5, 0.70710678)])
def test_sound_speed_values(lam, m, expected):
    assert sound_speed(ModelParams(m=m, lam=lam)) == pytest.approx(expected, abs=1e-8)


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0.01, 100))
def test_sound_speed_scale_invariant(lam, m, a):
    c1 = sound_speed(ModelParams(m=m, lam=lam))
    c2 = sound_speed(ModelParams(m=a * m, lam=a * lam))
    assert c2 == pytest.approx(c1, rel=1e-12)


@pytest.mark.parametrize("bad", [dict(M=0), dict(m=-1), dict(lam=0), dict(rho0=-0.1),
                                 dict(M=float("nan"))])
def test_params_validation(bad):
    with pytest.raises(ModelError):
        ModelParams(**bad)


def test_potential_validation():
    with pytest.raises(ModelError):
        PotentialSpec(sigma=0)
    with pytest.raises(ModelError):
        PotentialSpec(kind="yukawa")


def test_fourier_at_origin():
    assert potential_fourier(PotentialSpec(), [0, 0, 0]) == pytest.approx(15.749610, abs=1e-6)


def test_fourier_unit_k_against_quadrature():
    # radial transform: 4 pi int r^2 W(r) sin(kr)/(kr) dr at |k| = 1
    spec = PotentialSpec()
    val, _ = integrate.quad(lambda r: 4 * np.pi * r * r * spec.real_space(r * r) * np.sinc(r / np.pi),
                            0, 40, epsabs=1e-13, limit=200)
    # (2 pi)^{3/2} e^{-1/2} = 9.5526213...
    assert val == pytest.approx(9.5526213106, abs=1e-9)
    assert potential_fourier(spec, [0, 1.0, 0]) == pytest.approx(val, rel=1e-10)


def test_fourier_against_cartesian_quadrature():
    # the 3D transform factorizes for a Gaussian; check one axis by quadrature
    spec = PotentialSpec(w0=1.3, sigma=0.7)
    k = np.array([0.4, -1.1, 0.9])
    one_d = [integrate.quad(lambda x, kk=kk: np.cos(kk * x) * np.exp(-x * x / (2 * 0.49)),
                            -20, 20)[0] for kk in k]
    assert potential_fourier(spec, k) == pytest.approx(1.3 * np.prod(one_d), rel=1e-10)


@settings(max_examples=30)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.integers(0, 2**31 - 1))
def test_fourier_rotation_invariant_and_positive(k, seed):
    spec = PotentialSpec()
    R = Rotation.random(random_state=seed).as_matrix()
    k = np.asarray(k)
    assert potential_fourier(spec, R @ k) == pytest.approx(potential_fourier(spec, k), rel=1e-12)
    assert potential_fourier(spec, k) > 0


def test_compute_eta():
    assert compute_eta([0.5, 0.5, 0.5], 1.0) == 0.5
    assert compute_eta(np.linspace(0.8, 0.1, 20), 1.0) == pytest.approx(0.8)
    rng = np.random.default_rng(0)
    s = rng.uniform(0, 0.9, 1000)
    assert compute_eta(s, 2.0) == max(s) / 2.0
    with pytest.raises(ModelError, match="no samples"):
        compute_eta([], 1.0)


def test_vmax_trivial_and_closed_form():
    p = ModelParams(rho0=0.0)
    assert compute_vmax([3.0, 4.0, 0.0], p) == pytest.approx(0.5)
    p = ModelParams(rho0=0.01)
    W2 = math.pi ** 1.5
    expected = math.sqrt(25 + 16 * 10 * 0.01 * W2 / 1.0) / 10
    assert compute_vmax([5.0, 0, 0], p) == pytest.approx(expected, rel=1e-14)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 1),
       st.floats(0.001, 1))
def test_vmax_monotone(p0, grad, re, rho0, bump):
    p = ModelParams(rho0=rho0)
    base = vmax_from_norms(p0, grad, re, p)
    assert vmax_from_norms(p0 + bump, grad, re, p) >= base
    assert vmax_from_norms(p0, grad + bump, re, p) >= base
    assert vmax_from_norms(p0, grad, re + bump, p) >= base
    assert vmax_from_norms(p0, grad, re, p.with_rho0(rho0 + bump)) >= base
