import numpy as np
import pytest

from ublr import (
    RandomStream,
    build_tessellation,
    grid_points,
    make_synthetic_spec,
    synthetic_ublr,
)


def snorm(M):
    """Spectral norm of a dense matrix (exact, via SVD)."""
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def uniform_synthetic(d, b, m, k, seed=0):
    """Exact-rank synthetic operator on an equispaced grid with b blocks of
    exactly m points each. Returns (op, tess, spec)."""
    per_axis = round(b ** (1.0 / d))
    assert per_axis**d == b
    pts_per_axis = per_axis * round(m ** (1.0 / d))
    assert pts_per_axis**d == b * m
    points = grid_points(pts_per_axis, d)
    tess = build_tessellation(points, b)
    assert tess.b == b and tess.block_sizes.min() == tess.block_sizes.max() == m
    spec = make_synthetic_spec(tess, k, RandomStream(seed).child(17))
    return synthetic_ublr(spec), tess, spec


@pytest.fixture
def stream():
    return RandomStream(1234)
