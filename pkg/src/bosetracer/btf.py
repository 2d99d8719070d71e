"""BTF1 binary field snapshots.

Layout (all little-endian):

    bytes 0-3   magic b"BTF1"
    float64     n, the number of header values that follow
    n float64   version, N1, N2, N3, L1, L2, L3, M, m, lambda, rho0, w0, sigma,
                t, X1, X2, X3, P1, P2, P3
    complex128  h1_hat in row-major mode order (N1*N2*N3 values)
    complex128  h2_hat likewise

Complex values are stored as interleaved (real, imag) float64 pairs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import ModelParams, PotentialSpec
from .spectral import FieldState, SpectralGrid

MAGIC = b"BTF1"
VERSION = 1.0
HEADER_FIELDS = ("version", "N1", "N2", "N3", "L1", "L2", "L3", "M", "m", "lambda",
                 "rho0", "w0", "sigma", "t", "X1", "X2", "X3", "P1", "P2", "P3")


class BTFError(ValueError):
    pass


def write_btf(path, h: FieldState, params: ModelParams, t: float = 0.0,
              X=(0.0, 0.0, 0.0), P=(0.0, 0.0, 0.0)) -> Path:
    g = h.grid
    pot = params.potential
    header = np.array([VERSION, *g.dims, *g.box, params.M, params.m, params.lam,
                       params.rho0, pot.w0, pot.sigma, t, *X, *P], dtype="<f8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([header.size], dtype="<f8").tobytes())
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(h.h1, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(h.h2, dtype="<c16").tobytes())
    return path


def read_btf(path):
    """Returns ``(FieldState, ModelParams, meta)`` with ``meta`` holding t, X, P."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise BTFError(f"{path}: bad magic {raw[:4]!r}")
    n = int(np.frombuffer(raw, "<f8", 1, 4)[0])
    if n < len(HEADER_FIELDS):
        raise BTFError(f"{path}: header too short ({n} values)")
    header = np.frombuffer(raw, "<f8", n, 12)
    vals = dict(zip(HEADER_FIELDS, header))
    if vals["version"] != VERSION:
        raise BTFError(f"{path}: unsupported version {vals['version']}")
    dims = tuple(int(vals[f"N{i}"]) for i in (1, 2, 3))
    box = tuple(float(vals[f"L{i}"]) for i in (1, 2, 3))
    count = int(np.prod(dims))
    offset = 12 + 8 * n
    expected = offset + 2 * 16 * count
    if len(raw) != expected:
        raise BTFError(f"{path}: size {len(raw)} does not match header ({expected})")
    h1 = np.frombuffer(raw, "<c16", count, offset).reshape(dims).astype(complex)
    h2 = np.frombuffer(raw, "<c16", count, offset + 16 * count).reshape(dims).astype(complex)
    grid = SpectralGrid(dims, box)
    params = ModelParams(vals["M"], vals["m"], vals["lambda"], vals["rho0"],
                         PotentialSpec("gaussian", vals["w0"], vals["sigma"]))
    meta = {"t": float(vals["t"]),
            "X": np.array([vals["X1"], vals["X2"], vals["X3"]]),
            "P": np.array([vals["P1"], vals["P2"], vals["P3"]])}
    return FieldState(h1, h2, grid), params, meta
