"""Step I of compression: per-block orthonormal bases from sketches.

Three interchangeable constructions share the (U_i, V_i) contract:

* block nullification: one wide Gaussian sketch per side; per block, the
  sketch is right-multiplied by an orthonormal null basis of the neighbor
  rows of the test matrix, which zeroes inadmissible contributions;
* tagging: per-block Gaussian test blocks scaled by tagging-matrix entries;
  a null vector of the neighbor rows of the tagging matrix combines the
  sketch groups into a clean sample at constant sketch width;
* naive blocked randSVD: a fresh Gaussian test matrix per block with the
  neighborhood rows zeroed out, the benchmark everyone is compared against.

Each returns the bases together with the sketch bundle so the type-B
reconstruction can reuse the samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import RandomStream, col_basis, gaussian, null_basis
from .operators import LinearOperatorHandle
from .tagging import TaggingMatrix, TaggingPlan
from .tessellation import Tessellation


@dataclass
class SketchBundle:
    """Test matrices and sketches kept around for reuse in reconstruction."""

    kind: str  # "bn" | "tag" | "naive"
    omega: np.ndarray  # (n, s)
    psi: np.ndarray  # (n, s)
    y: np.ndarray  # A @ omega
    z: np.ndarray  # A* @ psi
    s: int
    tess: Tessellation
    tagging: TaggingMatrix | None = None
    g_blocks: list | None = None  # per-block Gaussian test blocks (tagging)
    h_blocks: list | None = None
    group_cols: int | None = None  # columns per tagging group
    block_cols: int | None = None  # columns per block probe (naive)


@dataclass
class BlockBases:
    """Per-block orthonormal bases U_i, V_i (m_i x k_i, k_i = min(k, m_i))."""

    u_blocks: list
    v_blocks: list
    rank: int
    effective_ranks: np.ndarray
    method: str
    sketch_columns: tuple = (0, 0)  # (through A, through A*) during step I

    @property
    def total_rank(self) -> int:
        return int(self.effective_ranks.sum())

    def rank_offsets(self) -> np.ndarray:
        """Start offset of each block's rows inside the stacked core."""
        return np.concatenate(([0], np.cumsum(self.effective_ranks)))


def block_nullification_width(tess: Tessellation, r: int) -> int:
    """Sketch width for block nullification on a possibly ragged grid.

    max(r + max_i sum_{j in N_i} m_j, 3^d r): every neighbor row-stack of the
    test matrix must have nullity at least r.
    """
    widest = max(tess.neighbor_row_count(i) for i in range(tess.b))
    return max(r + widest, 3**tess.dim * r)


def _basis_or_identity(sample: np.ndarray, k: int) -> np.ndarray:
    # Tiny blocks (m_i <= k) keep a full orthonormal basis instead
    m = sample.shape[0]
    if k >= m:
        return np.eye(m)
    return col_basis(sample, k)


def block_nullification_bases(
    op: LinearOperatorHandle,
    tess: Tessellation,
    k: int,
    p: int,
    stream: RandomStream,
) -> tuple:
    """Bases via null-space projection of one wide Gaussian sketch per side."""
    r = k + p
    s = block_nullification_width(tess, r)
    n = tess.n_points
    omega = gaussian(n, s, stream.child(0))
    psi = gaussian(n, s, stream.child(1))
    y = op.apply(omega)
    z = op.apply_adjoint(psi)

    u_blocks, v_blocks, ranks = [], [], []
    for i in range(tess.b):
        rows = tess.blocks[i]
        nbr_rows = tess.neighbor_indices(i)
        proj_u = null_basis(omega[nbr_rows, :], r)
        proj_v = null_basis(psi[nbr_rows, :], r)
        u_blocks.append(_basis_or_identity(y[rows, :] @ proj_u, k))
        v_blocks.append(_basis_or_identity(z[rows, :] @ proj_v, k))
        ranks.append(u_blocks[-1].shape[1])

    bases = BlockBases(
        u_blocks=u_blocks,
        v_blocks=v_blocks,
        rank=k,
        effective_ranks=np.array(ranks),
        method="bn",
        sketch_columns=(s, s),
    )
    bundle = SketchBundle(
        kind="bn", omega=omega, psi=psi, y=y, z=z, s=s, tess=tess
    )
    return bases, bundle


def assemble_tagging_test_matrix(
    tess: Tessellation, T: TaggingMatrix, blocks: list, group_cols: int
) -> np.ndarray:
    """Stack t_{i,j} * G_i into the (n, ell * group_cols) extended test matrix."""
    n = tess.n_points
    ell = T.n_cols
    out = np.zeros((n, ell * group_cols))
    for i in range(tess.b):
        rows = tess.blocks[i]
        for j in range(ell):
            out[rows, j * group_cols:(j + 1) * group_cols] = T.entries[i, j] * blocks[i]
    return out


def tagging_bases(
    op: LinearOperatorHandle,
    tess: Tessellation,
    k: int,
    p: int,
    plan: TaggingPlan,
    stream: RandomStream,
    group_cols: int | None = None,
    extra_samples: bool = False,
) -> tuple:
    """Bases from tagged sketches: block i, group j carries t_{i,j} G_i.

    group_cols defaults to k + p; the type-B pipeline passes m + p so that the
    per-block test blocks admit right inverses. With extra_samples, every
    orthonormal null direction of the neighbor rows contributes its own
    combined sample and the samples are concatenated before the column basis.
    """
    r = k + p
    gc = r if group_cols is None else group_cols
    T = plan.matrix
    ell = T.n_cols
    n = tess.n_points

    g_blocks = [
        gaussian(len(tess.blocks[i]), gc, stream.child(0, i)) for i in range(tess.b)
    ]
    h_blocks = [
        gaussian(len(tess.blocks[i]), gc, stream.child(1, i)) for i in range(tess.b)
    ]
    omega = assemble_tagging_test_matrix(tess, T, g_blocks, gc)
    psi = assemble_tagging_test_matrix(tess, T, h_blocks, gc)
    y = op.apply(omega)
    z = op.apply_adjoint(psi)

    u_blocks, v_blocks, ranks = [], [], []
    for i in range(tess.b):
        rows = tess.blocks[i]
        vectors = [plan.null_vectors[i].vector]
        if extra_samples:
            sub = T.entries[tess.neighbor_lists[i], :]
            nullity = ell - len(tess.neighbor_lists[i])
            if nullity >= 2:
                vectors = list(null_basis(sub, nullity).T)
        u_blocks.append(
            _basis_or_identity(_combined_sample(y[rows, :], vectors, gc), k)
        )
        v_blocks.append(
            _basis_or_identity(_combined_sample(z[rows, :], vectors, gc), k)
        )
        ranks.append(u_blocks[-1].shape[1])

    s = ell * gc
    bases = BlockBases(
        u_blocks=u_blocks,
        v_blocks=v_blocks,
        rank=k,
        effective_ranks=np.array(ranks),
        method="tag",
        sketch_columns=(s, s),
    )
    bundle = SketchBundle(
        kind="tag", omega=omega, psi=psi, y=y, z=z, s=s, tess=tess,
        tagging=T, g_blocks=g_blocks, h_blocks=h_blocks, group_cols=gc,
    )
    return bases, bundle


def _combined_sample(sketch_rows: np.ndarray, vectors: list, group_cols: int) -> np.ndarray:
    groups = sketch_rows.reshape(sketch_rows.shape[0], -1, group_cols)
    samples = [np.tensordot(groups, v, axes=(1, 0)) for v in vectors]
    return np.concatenate(samples, axis=1)


def naive_bases(
    op: LinearOperatorHandle,
    tess: Tessellation,
    k: int,
    p: int,
    stream: RandomStream,
) -> tuple:
    """Blocked randSVD benchmark: a fresh zeroed Gaussian probe per block.

    Block i's probe is an n x r Gaussian with the rows of every neighbor
    (including i itself) set to zero; all b probes are batched into a single
    oracle call per side, costing 2 b r matvec columns.
    """
    r = k + p
    n = tess.n_points
    omega = np.zeros((n, tess.b * r))
    psi = np.zeros((n, tess.b * r))
    for i in range(tess.b):
        cols = slice(i * r, (i + 1) * r)
        omega[:, cols] = gaussian(n, r, stream.child(0, i))
        psi[:, cols] = gaussian(n, r, stream.child(1, i))
        nbr_rows = tess.neighbor_indices(i)
        omega[nbr_rows, cols] = 0.0
        psi[nbr_rows, cols] = 0.0
    y = op.apply(omega)
    z = op.apply_adjoint(psi)

    u_blocks, v_blocks, ranks = [], [], []
    for i in range(tess.b):
        rows = tess.blocks[i]
        cols = slice(i * r, (i + 1) * r)
        u_blocks.append(_basis_or_identity(y[rows, cols], k))
        v_blocks.append(_basis_or_identity(z[rows, cols], k))
        ranks.append(u_blocks[-1].shape[1])

    bases = BlockBases(
        u_blocks=u_blocks,
        v_blocks=v_blocks,
        rank=k,
        effective_ranks=np.array(ranks),
        method="naive",
        sketch_columns=(tess.b * r, tess.b * r),
    )
    bundle = SketchBundle(
        kind="naive", omega=omega, psi=psi, y=y, z=z, s=tess.b * r, tess=tess,
        block_cols=r,
    )
    return bases, bundle
