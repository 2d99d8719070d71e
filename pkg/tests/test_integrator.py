import math

import numpy as np
import pytest

from bosetracer.btf import BTFError, read_btf, write_btf
from bosetracer.integrator import (CSV_COLUMNS, ParticleState, Stepper, SubsonicError,
                                   Trajectory, run_simulation, step, wrap_horizon)
from bosetracer.model import ModelParams, compute_vmax
from bosetracer.spectral import (FieldState, GaussianPacket, ModeSymbols, SpectralGrid,
                                 SteadyField, field_energy, steady_state_field)

GRID = SpectralGrid((16, 16, 16), (16.0, 16.0, 16.0))
STRONG = ModelParams(M=1.0, rho0=0.05)


def packet_field(grid=GRID, params=STRONG):
    return GaussianPacket(0.3 + 0.2j, 1.2, (1.0, -0.5, 0.3)).field(grid, params)


def test_decoupled_step_is_free_motion():
    p = ModelParams(rho0=0.0)
    h = packet_field(params=p)
    part = ParticleState([0.0, 0.0, 0.0], [3.0, -1.0, 2.0])
    st = Stepper(GRID, p)
    for _ in range(10):
        part, h, _ = st.advance(part, h, 0.1)
    np.testing.assert_array_equal(part.P, [3.0, -1.0, 2.0])
    np.testing.assert_allclose(part.X, np.array([3.0, -1.0, 2.0]) * 1.0 / p.M, rtol=1e-14)


def test_no_coupling_run_keeps_momentum():
    p = ModelParams().with_potential(w0=0.0)
    tr = run_simulation([5.0, 0, 0], params=p, grid=GRID, dt=0.05, T_max=2.0,
                        snapshot_every=None)
    assert np.all(tr.P == [5.0, 0, 0])
    np.testing.assert_allclose(tr.X[:, 0], tr.t * 0.5, rtol=1e-14, atol=1e-15)


def test_reversibility():
    h = packet_field()
    part = ParticleState([0.1, 0.2, -0.1], [0.3, 0.1, 0.0])
    fwd_p, fwd_h = step(part, h, 0.05, STRONG)
    back_p, back_h = step(fwd_p, fwd_h, -0.05, STRONG)
    np.testing.assert_allclose(back_p.X, part.X, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(back_p.P, part.P, rtol=1e-10, atol=1e-13)
    scale = np.abs(h.h1).max()
    assert np.abs(back_h.h1 - h.h1).max() < 1e-10 * scale
    assert np.abs(back_h.h2 - h.h2).max() < 1e-10 * scale


def _final_state(dt, T=1.0):
    tr = run_simulation([0.3, 0.1, 0.0], beta0=GaussianPacket(0.3 + 0.2j, 1.2, (1.0, -0.5, 0.3)),
                        params=STRONG, grid=GRID, dt=dt, T_max=T, snapshot_every=None)
    return np.concatenate([tr.X[-1], tr.P[-1]]), tr


def test_second_order_convergence():
    ref, _ = _final_state(0.1 / 8)
    e1 = np.linalg.norm(_final_state(0.1)[0] - ref)
    e2 = np.linalg.norm(_final_state(0.05)[0] - ref)
    assert 3.5 <= e1 / e2 <= 4.5


def test_energy_drift_second_order():
    _, a = _final_state(0.1, T=2.0)
    _, b = _final_state(0.05, T=2.0)
    da, db = a.energy_drift(), b.energy_drift()
    assert 3.5 <= da / db <= 4.5


def _alternative_energy(tr, params, snapshots):
    # kinetic energy plus the doubled field functional
    out = []
    for (t, h), P in zip(snapshots, tr.P[:: int(round(0.5 / tr.meta["dt"]))]):
        out.append(P @ P / (2 * params.M) + 2 * field_energy(h, params))
    return np.array(out)


def test_doubled_field_functional_is_not_conserved():
    tr = run_simulation([0.3, 0.1, 0.0], beta0=GaussianPacket(0.3 + 0.2j, 1.2, (1.0, -0.5, 0.3)),
                        params=STRONG, grid=GRID, dt=0.01, T_max=2.0, snapshot_every=0.5,
                        observer=lambda t, part, h: h)
    snaps = tr.meta["observations"]
    alt = _alternative_energy(tr, STRONG, snaps)
    alt_drift = np.max(np.abs(alt - alt[0])) / (abs(alt[0]) + 1)
    assert tr.energy_drift() < 1e-5
    assert alt_drift > 100 * tr.energy_drift()


def test_momentum_bound_and_metadata():
    tr = run_simulation([5.0, 0, 0], params=ModelParams(), grid=GRID, dt=0.05, T_max=3.0,
                        snapshot_every=None)
    vmax = compute_vmax([5.0, 0, 0], ModelParams())
    assert np.max(np.linalg.norm(tr.P, axis=1)) / 10 <= vmax
    assert tr.meta["v_max"] == vmax
    assert tr.meta["weighted_norm_beta0"] == 0.0
    assert "zero" in tr.meta["boundary_convention"]


def test_steady_start_is_traveling_wave():
    p = ModelParams()
    v0 = np.array([0.5, 0.0, 0.0])
    grid = SpectralGrid((32, 32, 32), (32.0, 32.0, 32.0))
    tr = run_simulation(v0 * p.M, beta0=SteadyField(tuple(v0)), params=p, grid=grid,
                        dt=0.05, T_max=2.0, snapshot_every=None)
    assert np.max(np.abs(tr.F[tr.trusted()])) < 1e-14
    np.testing.assert_allclose(tr.P, np.tile(v0 * p.M, (len(tr), 1)), rtol=1e-13)


def test_supersonic_start_rejected():
    with pytest.raises(SubsonicError, match="not subsonic"):
        run_simulation([10.5, 0, 0], params=ModelParams(), grid=GRID, dt=0.1, T_max=0.2)


def test_leaving_subsonic_domain_reports_state():
    p = ModelParams(M=1.0, rho0=1.0)
    st = Stepper(GRID, p)
    raised = 0
    for sign in (1.0, -1.0):
        h = GaussianPacket(2.0, 1.0, (sign * 1.0, 0, 0)).field(GRID, p)
        part = ParticleState([0, 0, 0], [0.999, 0, 0])
        try:
            st.advance(part, h, 0.5)
        except SubsonicError as exc:
            raised += 1
            assert "left subsonic domain" in str(exc)
            assert set(exc.state) >= {"t", "X", "P", "P_half"}
    assert raised >= 1


def test_supersonic_contrast_run_allowed():
    tr = run_simulation([12.0, 0, 0], params=ModelParams(), grid=GRID, dt=0.05, T_max=0.5,
                        snapshot_every=None, allow_supersonic=True)
    assert tr.speed_over_cs[0] > 1 and np.all(np.isfinite(tr.P))


def test_wrap_horizon_default_grid():
    T = wrap_horizon(SpectralGrid(), ModelParams())
    assert T == pytest.approx(8.5318, abs=1e-3)
    assert wrap_horizon(SpectralGrid((16, 16, 16), (8.0, 8.0, 8.0)), ModelParams()) == 0.0


def test_csv_round_trip(tmp_path):
    tr = run_simulation([0.3, 0.1, 0.0], beta0=GaussianPacket(0.1, 1.0),
                        params=STRONG, grid=GRID, dt=0.1, T_max=1.0, snapshot_every=None)
    tr.T_wrap = 0.55
    path = tr.to_csv(tmp_path / "t.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS
    back = Trajectory.from_csv(path, tr.M, tr.c_s)
    for name in ("t", "X", "P", "F", "H"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))
    np.testing.assert_array_equal(back.wrap_flag, tr.wrap_flag)
    assert back.wrap_flag.sum() == 5


def test_identical_runs_give_identical_csv(tmp_path):
    paths = []
    for i in range(2):
        tr = run_simulation([0.3, 0.1, 0.0], beta0=GaussianPacket(0.1, 1.0), params=STRONG,
                            grid=GRID, dt=0.1, T_max=1.0, snapshot_every=None)
        paths.append(tr.to_csv(tmp_path / f"{i}.csv"))
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_trajectory_rejects_unsorted_times():
    with pytest.raises(ValueError):
        Trajectory([0, 1, 1], np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)),
                   np.zeros(3), 1.0, 1.0)


def test_snapshots_and_btf_round_trip(tmp_path):
    tr = run_simulation([0.3, 0.1, 0.0], beta0=GaussianPacket(0.1 + 0.1j, 1.0), params=STRONG,
                        grid=GRID, dt=0.1, T_max=1.0, snapshot_every=0.5,
                        snapshot_dir=tmp_path / "snaps")
    assert [t for t, _ in tr.snapshots] == pytest.approx([0.0, 0.5, 1.0])
    h, params, meta = read_btf(tr.snapshots[-1][1])
    assert params == STRONG
    assert meta["t"] == 1.0
    np.testing.assert_array_equal(meta["P"], tr.P[-1])
    assert h.grid == GRID


def test_btf_exact_bytes_and_errors(tmp_path):
    h = packet_field()
    path = write_btf(tmp_path / "a.btf", h, STRONG, 2.5, [1, 2, 3], [4, 5, 6])
    raw = path.read_bytes()
    assert raw[:4] == b"BTF1"
    n = int(np.frombuffer(raw, "<f8", 1, 4)[0])
    assert n == 20 and len(raw) == 12 + 8 * n + 2 * 16 * GRID.dims[0] ** 3
    back, params, meta = read_btf(path)
    np.testing.assert_array_equal(back.h1, h.h1)
    np.testing.assert_array_equal(back.h2, h.h2)
    np.testing.assert_array_equal(meta["X"], [1, 2, 3])
    (tmp_path / "bad.btf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BTFError, match="magic"):
        read_btf(tmp_path / "bad.btf")
    (tmp_path / "short.btf").write_bytes(raw[:-16])
    with pytest.raises(BTFError, match="size"):
        read_btf(tmp_path / "short.btf")


def test_particle_state_validation():
    with pytest.raises(ValueError):
        ParticleState([0, 0, math.nan], [0, 0, 0])
