"""Black-box linear-operator oracles and matvec accounting.

The compression algorithms only ever touch an operator through apply and
apply_adjoint on blocks of columns. This module provides the handle
protocol, a counting wrapper that attributes matvec columns to compression
phases, and the desk-scale test operators: an exact-rank synthetic uniform
BLR generator, the 2D Laplace log kernel, and the thin-slab Schur
complement of a shifted Laplacian.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import RandomStream, col_basis, gaussian
from .tessellation import PointCloud, Tessellation


class LinearOperatorHandle:
    """Protocol base: shape, apply(X), apply_adjoint(X) on column blocks."""

    @property
    def shape(self) -> tuple:
        raise NotImplementedError

    def apply(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DenseOperator(LinearOperatorHandle):
    """Handle around an explicitly stored dense matrix."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=float)

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, X):
        return self.matrix @ X

    def apply_adjoint(self, X):
        return self.matrix.T @ X


class DifferenceOperator(LinearOperatorHandle):
    """Handle for A - B given two operator handles of equal shape."""

    def __init__(self, a: LinearOperatorHandle, b: LinearOperatorHandle):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
        self.a = a
        self.b = b

    @property
    def shape(self):
        return self.a.shape

    def apply(self, X):
        return self.a.apply(X) - self.b.apply(X)

    def apply_adjoint(self, X):
        return self.a.apply_adjoint(X) - self.b.apply_adjoint(X)


class MatvecLedger:
    """Cumulative count of columns pushed through A and A*, by phase.

    Phases are the compression steps ("I", "II", "III"); anything recorded
    outside an explicit phase lands in "other".
    """

    def __init__(self):
        self.counts = {}
        self._phase = "other"

    @contextmanager
    def phase(self, name: str):
        previous = self._phase
        self._phase = name
        try:
            yield self
        finally:
            self._phase = previous

    def record_apply(self, cols: int):
        entry = self.counts.setdefault(self._phase, [0, 0])
        entry[0] += cols

    def record_adjoint(self, cols: int):
        entry = self.counts.setdefault(self._phase, [0, 0])
        entry[1] += cols

    def phase_counts(self, name: str) -> tuple:
        a, astar = self.counts.get(name, [0, 0])
        return a, astar

    def phase_total(self, name: str) -> int:
        return sum(self.counts.get(name, [0, 0]))

    @property
    def count_a(self) -> int:
        return sum(v[0] for v in self.counts.values())

    @property
    def count_astar(self) -> int:
        return sum(v[1] for v in self.counts.values())

    @property
    def total(self) -> int:
        return self.count_a + self.count_astar

    def to_dict(self) -> dict:
        return {
            name: {"A": v[0], "Astar": v[1]} for name, v in sorted(self.counts.items())
        }


class CountingOperator(LinearOperatorHandle):
    """Pass-through wrapper that bills every column to its ledger."""

    def __init__(self, inner: LinearOperatorHandle):
        self.inner = inner
        self.ledger = MatvecLedger()

    @property
    def shape(self):
        return self.inner.shape

    def apply(self, X):
        self.ledger.record_apply(X.shape[1] if X.ndim == 2 else 1)
        return self.inner.apply(X)

    def apply_adjoint(self, X):
        self.ledger.record_adjoint(X.shape[1] if X.ndim == 2 else 1)
        return self.inner.apply_adjoint(X)


def counting_wrapper(op: LinearOperatorHandle) -> CountingOperator:
    return CountingOperator(op)


def check_linearity(op, stream: RandomStream, cols: int = 3, tol: float = 1e-12) -> float:
    """Relative linearity defect of apply on random probes."""
    n = op.shape[1]
    X = gaussian(n, cols, stream.child(0))
    Y = gaussian(n, cols, stream.child(1))
    alpha, beta = 0.7, -1.3
    lhs = op.apply(alpha * X + beta * Y)
    rhs = alpha * op.apply(X) + beta * op.apply(Y)
    scale = max(np.linalg.norm(lhs), 1.0)
    return float(np.linalg.norm(lhs - rhs) / scale)


def check_adjoint(op, stream: RandomStream, cols: int = 3) -> float:
    """Relative adjoint-consistency defect <Ax, y> vs <x, A*y>."""
    n_rows, n_cols = op.shape
    X = gaussian(n_cols, cols, stream.child(0))
    Y = gaussian(n_rows, cols, stream.child(1))
    lhs = np.sum(op.apply(X) * Y)
    rhs = np.sum(X * op.apply_adjoint(Y))
    scale = max(abs(lhs), abs(rhs), 1.0)
    return float(abs(lhs - rhs) / scale)


# ---------------------------------------------------------------------------
# Synthetic exact-rank uniform BLR operator (ground truth for tests)
# ---------------------------------------------------------------------------


@dataclass
class SyntheticUBLRSpec:
    """Exact-rank building blocks: A(I_i, I_j) = U_i C_ij V_j* on the far
    field and a dense Gaussian block on the near field."""

    tess: Tessellation
    rank: int
    u_blocks: list
    v_blocks: list
    core_blocks: dict  # (i, j) -> (k, k), far-field pairs only
    near_blocks: dict  # (i, j) -> (m_i, m_j), near-field pairs only
    seed: int


def make_synthetic_spec(tess: Tessellation, rank: int, stream: RandomStream) -> SyntheticUBLRSpec:
    """Draw per-block factors for an exact-rank synthetic operator.

    Near-field blocks are scaled so their Frobenius norm roughly matches the
    far-field blocks', which keeps the discrepancy path nontrivial.
    """
    sizes = tess.block_sizes
    if rank > sizes.min():
        raise ValueError(f"rank {rank} exceeds smallest block size {sizes.min()}")
    u_blocks, v_blocks = [], []
    for i in range(tess.b):
        m = sizes[i]
        if rank == 0:
            u_blocks.append(np.zeros((m, 0)))
            v_blocks.append(np.zeros((m, 0)))
        else:
            u_blocks.append(col_basis(gaussian(m, rank, stream.child(0, i)), rank))
            v_blocks.append(col_basis(gaussian(m, rank, stream.child(1, i)), rank))

    core_blocks, near_blocks = {}, {}
    for i in range(tess.b):
        for j in tess.far_fields[i]:
            core_blocks[(i, j)] = gaussian(rank, rank, stream.child(2, i * tess.b + j))
        for j in tess.neighbor_lists[i]:
            scale = max(rank, 1) / np.sqrt(sizes[i] * sizes[j])
            near_blocks[(i, j)] = scale * gaussian(
                sizes[i], sizes[j], stream.child(3, i * tess.b + j)
            )
    return SyntheticUBLRSpec(
        tess=tess,
        rank=rank,
        u_blocks=u_blocks,
        v_blocks=v_blocks,
        core_blocks=core_blocks,
        near_blocks=near_blocks,
        seed=stream.seed,
    )


def synthetic_ublr(spec: SyntheticUBLRSpec) -> DenseOperator:
    """Assemble the dense operator whose far-field blocks have exact rank k."""
    tess = spec.tess
    n = tess.n_points
    A = np.zeros((n, n))
    for i in range(tess.b):
        rows = tess.blocks[i]
        for j in tess.far_fields[i]:
            block = spec.u_blocks[i] @ spec.core_blocks[(i, j)] @ spec.v_blocks[j].T
            A[np.ix_(rows, tess.blocks[j])] = block
        for j in tess.neighbor_lists[i]:
            A[np.ix_(rows, tess.blocks[j])] = spec.near_blocks[(i, j)]
    return DenseOperator(A)


# ---------------------------------------------------------------------------
# 2D Laplace log kernel
# ---------------------------------------------------------------------------


def laplace2d_operator(points: PointCloud) -> DenseOperator:
    """Dense kernel matrix log||x_i - x_j|| with a zero diagonal."""
    if points.dim != 2:
        raise ValueError("laplace2d requires d=2 points")
    x = points.coords
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    off_diag = ~np.eye(points.n, dtype=bool)
    if np.any(dist[off_diag] == 0.0):
        raise ValueError("coincident points: log kernel is singular")
    with np.errstate(divide="ignore"):
        A = np.log(dist)
    np.fill_diagonal(A, 0.0)
    return DenseOperator(A)


# ---------------------------------------------------------------------------
# Thin-slab Schur complement
# ---------------------------------------------------------------------------


class InteriorResonanceError(RuntimeError):
    """Interior solve is singular; the caller should adjust the wavenumber."""


class SchurComplementOperator(LinearOperatorHandle):
    """Matrix-free T = A_ff - A_fi A_ii^{-1} A_if with a cached sparse LU."""

    def __init__(self, a_ff, a_fi, a_if, a_ii):
        self.a_ff = a_ff.tocsr()
        self.a_fi = a_fi.tocsr()
        self.a_if = a_if.tocsr()
        try:
            self._lu = spla.splu(a_ii.tocsc())
        except RuntimeError as exc:
            raise InteriorResonanceError(
                f"interior matrix is singular (resonant wavenumber?): {exc}"
            ) from exc
        u_diag = np.abs(self._lu.U.diagonal())
        # stencil entries are O(1), so a pivot near zero means resonance
        if u_diag.size and u_diag.min() <= 1e-12 * max(1.0, u_diag.max()):
            raise InteriorResonanceError(
                "interior matrix is numerically singular; adjust the wavenumber"
            )

    @property
    def shape(self):
        return self.a_ff.shape

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        return self.a_ff @ X - self.a_fi @ self._lu.solve(self.a_if @ X)

    def apply_adjoint(self, X):
        X = np.asarray(X, dtype=float)
        # A is symmetric here, but route through transposes anyway
        return self.a_ff.T @ X - self.a_if.T @ self._lu.solve(self.a_fi.T @ X, trans="T")


def thin_slab_schur_operator(
    nx: int, ny: int, nz: int = 10, kappa: float = 2.0 * np.pi / 100.0
):
    """Schur complement of a shifted 7-point Laplacian onto one slab face.

    Discretizes -Lap(u) - kappa^2 u on an nx x ny x nz unit-spacing grid with
    homogeneous Dirichlet conditions; the frontal nodes are the z=0 face and
    the interior nodes are eliminated through a sparse LU factored once.
    Returns (operator, frontal point cloud in the unit square).
    """
    if min(nx, ny) < 1 or nz < 2:
        raise ValueError("grid sizes must be positive with nz >= 2")

    def lap1d(n):
        return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])

    ix_eye, iy_eye, iz_eye = sp.eye(nx), sp.eye(ny), sp.eye(nz)
    A = (
        sp.kron(iz_eye, sp.kron(iy_eye, lap1d(nx)))
        + sp.kron(iz_eye, sp.kron(lap1d(ny), ix_eye))
        + sp.kron(lap1d(nz), sp.kron(iy_eye, ix_eye))
        - kappa**2 * sp.eye(nx * ny * nz)
    ).tocsr()

    n_front = nx * ny  # node index = ix + nx*iy + nx*ny*iz, so z=0 comes first
    front = np.arange(n_front)
    interior = np.arange(n_front, nx * ny * nz)

    op = SchurComplementOperator(
        A[front][:, front],
        A[front][:, interior],
        A[interior][:, front],
        A[interior][:, interior],
    )
    ix = front % nx
    iy = front // nx
    coords = np.column_stack(((ix + 0.5) / nx, (iy + 0.5) / ny))
    return op, PointCloud(coords, 2)
