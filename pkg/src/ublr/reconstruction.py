"""Compressed uniform block low-rank format and its recovery.

A compressed operator is U C V* + B with block-diagonal orthonormal U, V, a
dense stacked core C, and a block-sparse discrepancy B supported on the
near field only. Two reconstruction families fill in C and B after the
bases are built:

* type A: C = U*(A V) by direct sketching, then B extracted with structured
  identity probes over a distance-2 box coloring;
* type B: B first, recovered from the step-I sketches with block
  pseudoinverses (no new matvecs), then C from a least-squares solve against
  the same test matrix, augmented with extra Gaussian columns when the
  bundle is too narrow.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bases import (
    BlockBases,
    SketchBundle,
    block_nullification_bases,
    naive_bases,
    tagging_bases,
)
from .linalg import RandomStream, estimate_spectral_norm, gaussian, null_basis, pseudo_inverse
from .operators import (
    CountingOperator,
    DifferenceOperator,
    LinearOperatorHandle,
    counting_wrapper,
)
from .tagging import DegenerateTagsError, plan_tagging
from .tessellation import BoxColoring, Tessellation, color_boxes

METHOD_IDS = {
    ("A", "bn"): "A1",
    ("A", "tag"): "A2",
    ("A", "naive"): "A3",
    ("B", "bn"): "B1",
    ("B", "tag"): "B2",
}


@dataclass
class UniformBLR:
    """Compressed representation (U, C, V, B) over a tessellation.

    u_blocks[i] and v_blocks[i] are m_i x k_i orthonormal; core is the
    stacked K x K matrix with K = sum k_i; b_blocks maps near-field pairs
    (i, j) to dense m_i x m_j blocks. Far-field pairs are never stored.
    """

    tess: Tessellation
    rank: int
    u_blocks: list
    v_blocks: list
    core: np.ndarray
    b_blocks: dict
    effective_ranks: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        near = {
            (i, j)
            for i in range(self.tess.b)
            for j in self.tess.neighbor_lists[i]
        }
        stray = set(self.b_blocks) - near
        if stray:
            raise ValueError(f"discrepancy blocks on far-field pairs: {sorted(stray)[:4]}")

    @property
    def n(self) -> int:
        return self.tess.n_points

    @property
    def shape(self) -> tuple:
        return (self.n, self.n)

    @property
    def total_rank(self) -> int:
        return int(self.effective_ranks.sum())

    def rank_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.effective_ranks)))

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        offs = self.rank_offsets()
        vt_x = np.empty((self.total_rank, X.shape[1]))
        for i in range(self.tess.b):
            vt_x[offs[i]:offs[i + 1]] = self.v_blocks[i].T @ X[self.tess.blocks[i]]
        cv = self.core @ vt_x
        out = np.zeros_like(X)
        for i in range(self.tess.b):
            out[self.tess.blocks[i]] = self.u_blocks[i] @ cv[offs[i]:offs[i + 1]]
        for i, j in sorted(self.b_blocks):  # fixed order: bitwise reproducible
            out[self.tess.blocks[i]] += self.b_blocks[(i, j)] @ X[self.tess.blocks[j]]
        return out

    def apply_adjoint(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        offs = self.rank_offsets()
        ut_x = np.empty((self.total_rank, X.shape[1]))
        for i in range(self.tess.b):
            ut_x[offs[i]:offs[i + 1]] = self.u_blocks[i].T @ X[self.tess.blocks[i]]
        cu = self.core.T @ ut_x
        out = np.zeros_like(X)
        for i in range(self.tess.b):
            out[self.tess.blocks[i]] = self.v_blocks[i] @ cu[offs[i]:offs[i + 1]]
        for i, j in sorted(self.b_blocks):
            out[self.tess.blocks[j]] += self.b_blocks[(i, j)].T @ X[self.tess.blocks[i]]
        return out

    def to_dense(self) -> np.ndarray:
        """Assemble the full matrix; test/debug convenience at desk scale."""
        return self.apply(np.eye(self.n))

    @property
    def storage_entries(self) -> int:
        return int(
            sum(u.size for u in self.u_blocks)
            + sum(v.size for v in self.v_blocks)
            + self.core.size
            + sum(blk.size for blk in self.b_blocks.values())
        )


class UBLROperator(LinearOperatorHandle):
    """Operator-handle view of a compressed representation."""

    def __init__(self, rep: UniformBLR):
        self.rep = rep

    @property
    def shape(self):
        return self.rep.shape

    def apply(self, X):
        return self.rep.apply(X)

    def apply_adjoint(self, X):
        return self.rep.apply_adjoint(X)


def apply_ublr(rep: UniformBLR, X: np.ndarray) -> np.ndarray:
    return rep.apply(X)


def apply_ublr_adjoint(rep: UniformBLR, X: np.ndarray) -> np.ndarray:
    return rep.apply_adjoint(X)


def relative_error(
    op: LinearOperatorHandle,
    rep: UniformBLR,
    iterations: int = 20,
    stream: RandomStream | None = None,
) -> float:
    """||A - A_compressed|| / ||A||, both estimated by the randomized power
    method with the given iteration count."""
    if stream is None:
        stream = RandomStream(0)
    if op.shape != rep.shape:
        raise ValueError(f"shape mismatch: {op.shape} vs {rep.shape}")
    diff = DifferenceOperator(op, UBLROperator(rep))
    numerator = estimate_spectral_norm(diff, iterations, stream.child(0))
    denominator = estimate_spectral_norm(op, iterations, stream.child(1))
    if denominator == 0.0:
        raise ValueError("operator norm estimate is zero")
    return numerator / denominator


# ---------------------------------------------------------------------------
# Type A: direct core, then structured-identity discrepancy
# ---------------------------------------------------------------------------


def direct_core(op: LinearOperatorHandle, tess: Tessellation, bases: BlockBases) -> np.ndarray:
    """C = U*(A V): pushes the K columns of block-diagonal V through the
    oracle and projects onto the U blocks."""
    n = tess.n_points
    offs = bases.rank_offsets()
    K = bases.total_rank
    v_dense = np.zeros((n, K))
    for j in range(tess.b):
        v_dense[tess.blocks[j], offs[j]:offs[j + 1]] = bases.v_blocks[j]
    av = op.apply(v_dense)
    core = np.empty((K, K))
    for i in range(tess.b):
        core[offs[i]:offs[i + 1]] = bases.u_blocks[i].T @ av[tess.blocks[i]]
    return core


def structured_identity_discrepancy(
    op: LinearOperatorHandle,
    tess: Tessellation,
    bases: BlockBases,
    core: np.ndarray,
    coloring: BoxColoring,
) -> dict:
    """Near-field blocks of A - U C V* from one identity probe per color.

    The probe for color c carries an identity sub-block at every box of that
    color; the distance-2 property guarantees each block-row receives at most
    one probed neighbor, so the residual rows split cleanly into B blocks.
    """
    colors = np.asarray(coloring.colors)
    for i in range(tess.b):
        nbr_colors = colors[tess.neighbor_lists[i]]
        if len(set(nbr_colors.tolist())) != len(nbr_colors):
            raise ValueError(
                f"invalid coloring: two same-color probes collide in the "
                f"neighborhood of block {i}"
            )

    n = tess.n_points
    offs = bases.rank_offsets()
    sizes = tess.block_sizes
    b_blocks = {}
    for c in range(coloring.num_colors):
        members = np.flatnonzero(colors == c)
        m_c = int(sizes[members].max())
        probe = np.zeros((n, m_c))
        for j in members:
            probe[tess.blocks[j], : sizes[j]] = np.eye(sizes[j])
        sketched = op.apply(probe)
        vt_p = np.empty((bases.total_rank, m_c))
        for j in range(tess.b):
            vt_p[offs[j]:offs[j + 1]] = bases.v_blocks[j].T @ probe[tess.blocks[j]]
        cv = core @ vt_p
        resid = sketched
        for i in range(tess.b):
            resid[tess.blocks[i]] -= bases.u_blocks[i] @ cv[offs[i]:offs[i + 1]]
        for j in members:
            for i in tess.neighbor_lists[j]:
                b_blocks[(i, int(j))] = resid[tess.blocks[i], : sizes[j]].copy()
    return b_blocks


# ---------------------------------------------------------------------------
# Type B: discrepancy from reused sketches, then core by least squares
# ---------------------------------------------------------------------------


def _perp(u_block: np.ndarray, X: np.ndarray) -> np.ndarray:
    return X - u_block @ (u_block.T @ X)


def _pinv_with_cond(B: np.ndarray, rtol: float = 1e-12):
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    keep = s > rtol * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, bool)
    # conditioning of the full stack, not the truncated one: a deficient
    # stack means the recovery is unreliable even though pinv stays finite
    cond = s[0] / s[-1] if s.size and s[-1] > 0 else np.inf
    pinv = (vt[keep].T / s[keep]) @ u[:, keep].T if keep.any() else np.zeros(B.T.shape)
    return pinv, float(cond)


def gaussian_pinv_discrepancy(
    bundle: SketchBundle, bases: BlockBases, cond_limit: float = 1e8
) -> dict:
    """B blocks recovered from the block-nullification sketches.

    (I - U_i U_i*) A(I_i, nbrs) equals the projected sketch rows times the
    right pseudoinverse of the stacked neighbor rows of the test matrix;
    the adjoint side gives A_ij (I - V_j V_j*). Costs no extra matvecs.
    """
    tess = bundle.tess
    term1 = {}
    for i in range(tess.b):
        om_nbr = bundle.omega[tess.neighbor_indices(i), :]
        pinv_om, cond = _pinv_with_cond(om_nbr)
        if cond > cond_limit:
            warnings.warn(
                f"block {i}: neighbor test-matrix stack has condition {cond:.2e}"
            )
        x = _perp(bases.u_blocks[i], bundle.y[tess.blocks[i], :]) @ pinv_om
        start = 0
        for j in tess.neighbor_lists[i]:
            width = len(tess.blocks[j])
            term1[(i, j)] = x[:, start:start + width]
            start += width

    b_blocks = {}
    for j in range(tess.b):
        psi_nbr = bundle.psi[tess.neighbor_indices(j), :]
        pinv_psi, cond = _pinv_with_cond(psi_nbr)
        if cond > cond_limit:
            warnings.warn(
                f"block {j}: neighbor adjoint test-matrix stack has condition {cond:.2e}"
            )
        x = _perp(bases.v_blocks[j], bundle.z[tess.blocks[j], :]) @ pinv_psi
        start = 0
        for i in tess.neighbor_lists[j]:
            width = len(tess.blocks[i])
            w_ij = x[:, start:start + width].T  # A_ij (I - V_j V_j*)
            u_i = bases.u_blocks[i]
            b_blocks[(i, j)] = term1[(i, j)] + u_i @ (u_i.T @ w_ij)
            start += width
    return b_blocks


def b2_denominators_ok(T, tess: Tessellation, rtol: float = 1e-10) -> bool:
    """Every per-pair projected tag used as a type-B denominator is nonzero."""
    limit = rtol * max(1.0, np.linalg.norm(T.entries))
    for i in range(tess.b):
        nbrs = tess.neighbor_lists[i]
        for j in nbrs:
            kept = [r for r in nbrs if r != j]
            try:
                z = null_basis(T.entries[kept, :], 1)[:, 0]
            except ValueError:
                return False
            if abs(T.entries[j] @ z) < limit:
                return False
    return True


def tagging_pinv_discrepancy(
    bundle: SketchBundle, bases: BlockBases, denom_rtol: float = 1e-10
) -> dict:
    """B blocks recovered from the (wide) tagging sketches.

    For each near pair (i, j), a null vector of the tagging rows over
    N_i minus {j} isolates block j in the combined sketch; dividing by the
    surviving projected tag and applying the right inverse of the per-block
    test block recovers (I - U_i U_i*) A_ij, and symmetrically on the
    adjoint side. Costs no extra matvecs beyond the step-I bundle.
    """
    tess = bundle.tess
    T = bundle.tagging
    gc = bundle.group_cols
    limit = denom_rtol * max(1.0, np.linalg.norm(T.entries))
    g_pinv = [pseudo_inverse(g) for g in bundle.g_blocks]
    h_pinv = [pseudo_inverse(h) for h in bundle.h_blocks]

    def pair_vector(nbrs, excluded):
        kept = [r for r in nbrs if r != excluded]
        try:
            z = null_basis(T.entries[kept, :], 1)[:, 0]
        except ValueError as exc:
            raise DegenerateTagsError(str(exc)) from exc
        denom = float(T.entries[excluded] @ z)
        if abs(denom) < limit:
            raise DegenerateTagsError(
                f"projected tag for pair ({nbrs}, {excluded}) vanished"
            )
        return z, denom

    term1 = {}
    for i in range(tess.b):
        groups = bundle.y[tess.blocks[i], :].reshape(len(tess.blocks[i]), -1, gc)
        for j in tess.neighbor_lists[i]:
            z, denom = pair_vector(tess.neighbor_lists[i], j)
            comb = np.tensordot(groups, z, axes=(1, 0))
            term1[(i, j)] = (
                _perp(bases.u_blocks[i], comb) @ g_pinv[j] / denom
            )

    b_blocks = {}
    for j in range(tess.b):
        groups = bundle.z[tess.blocks[j], :].reshape(len(tess.blocks[j]), -1, gc)
        for i in tess.neighbor_lists[j]:
            z, denom = pair_vector(tess.neighbor_lists[j], i)
            comb = np.tensordot(groups, z, axes=(1, 0))
            w_ij = (_perp(bases.v_blocks[j], comb) @ h_pinv[i]).T / denom
            u_i = bases.u_blocks[i]
            b_blocks[(i, j)] = term1[(i, j)] + u_i @ (u_i.T @ w_ij)
    return b_blocks


def pinv_core(
    op: LinearOperatorHandle,
    bundle: SketchBundle,
    bases: BlockBases,
    b_blocks: dict,
    p: int,
    stream: RandomStream,
    max_width: int | None = None,
):
    """Core by least squares: C = U*(Y - B Omega) (V* Omega)^+.

    V* Omega must have full row rank, so the test matrix is augmented with
    max(0, K + p - s) fresh Gaussian columns, the only extra matvecs of the
    type-B path. Returns (core, columns_added).
    """
    tess = bundle.tess
    n = tess.n_points
    K = bases.total_rank
    offs = bases.rank_offsets()
    omega, y = bundle.omega, bundle.y
    extra = max(0, K + p - bundle.s)
    if extra:
        if max_width is not None and bundle.s + extra > max_width:
            raise ValueError(
                f"type B needs sketch width {K + p} > max_width {max_width}"
            )
        om_extra = gaussian(n, extra, stream)
        y_extra = op.apply(om_extra)
        omega = np.hstack((omega, om_extra))
        y = np.hstack((y, y_extra))

    b_om = np.zeros((n, omega.shape[1]))
    for (i, j), blk in b_blocks.items():
        b_om[tess.blocks[i]] += blk @ omega[tess.blocks[j]]

    vt_om = np.empty((K, omega.shape[1]))
    lhs = np.empty((K, omega.shape[1]))
    resid = y - b_om
    for i in range(tess.b):
        vt_om[offs[i]:offs[i + 1]] = bases.v_blocks[i].T @ omega[tess.blocks[i]]
        lhs[offs[i]:offs[i + 1]] = bases.u_blocks[i].T @ resid[tess.blocks[i]]
    core = lhs @ pseudo_inverse(vt_om)
    return core, extra


# ---------------------------------------------------------------------------
# Reports and full pipelines
# ---------------------------------------------------------------------------


@dataclass
class CompressionReport:
    """Everything the benchmark CLI emits about one compression run."""

    method: str
    config: dict
    matvecs: dict
    times_s: dict
    relative_error: float | None
    storage_entries: int
    aspect_ratios: dict | None = None

    @property
    def matvecs_total(self) -> int:
        return sum(v["A"] + v["Astar"] for v in self.matvecs.values())

    def phase_total(self, phase: str) -> int:
        entry = self.matvecs.get(phase, {"A": 0, "Astar": 0})
        return entry["A"] + entry["Astar"]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config,
            "matvecs": self.matvecs,
            "matvecs_total": self.matvecs_total,
            "times_s": {k: _round3(v) for k, v in self.times_s.items()},
            "relative_error": self.relative_error,
            "storage_entries": self.storage_entries,
            "aspect_ratios": self.aspect_ratios,
        }


def _round3(x: float) -> float:
    return float(f"{x:.3g}")


def _ratio_summary(values: np.ndarray) -> dict:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return {"count": 0}
    return {
        "count": int(finite.size),
        "min": float(finite.min()),
        "q1": float(np.quantile(finite, 0.25)),
        "median": float(np.median(finite)),
        "q3": float(np.quantile(finite, 0.75)),
        "max": float(finite.max()),
    }


def _base_config(tess, k, p, stream, **extra) -> dict:
    cfg = {
        "N": tess.n_points,
        "b": tess.b,
        "m": tess.max_block_size,
        "k": k,
        "p": p,
        "d": tess.dim,
        "seed": stream.seed,
    }
    cfg.update(extra)
    return cfg


def _report_from_ledger(cop: CountingOperator, **kwargs) -> CompressionReport:
    return CompressionReport(matvecs=cop.ledger.to_dict(), **kwargs)


def compress_type_a(
    op: LinearOperatorHandle,
    tess: Tessellation,
    k: int,
    p: int = 10,
    method: str = "tag",
    stream: RandomStream | None = None,
    distribution: str = "gaussian",
    extra_cols: int = 0,
    optimize: bool = False,
    extra_samples: bool = False,
    max_tag_redraws: int = 5,
    compute_error: bool = True,
    error_iterations: int = 20,
):
    """Full type-A compression: bases, direct core, structured-identity B.

    method selects the step-I algorithm: "bn" (A1), "tag" (A2), "naive" (A3).
    Returns (UniformBLR, CompressionReport).
    """
    if stream is None:
        stream = RandomStream(0)
    cop = counting_wrapper(op)
    times = {}
    plan = None

    t0 = time.perf_counter()
    with cop.ledger.phase("I"):
        if method == "bn":
            bases, _ = block_nullification_bases(cop, tess, k, p, stream.child(0))
        elif method == "tag":
            plan = plan_tagging(
                tess, extra_cols, distribution, stream.child(1),
                optimize=optimize, max_redraws=max_tag_redraws,
            )
            bases, _ = tagging_bases(
                cop, tess, k, p, plan, stream.child(0), extra_samples=extra_samples
            )
        elif method == "naive":
            bases, _ = naive_bases(cop, tess, k, p, stream.child(0))
        else:
            raise ValueError(f"unknown step-I method {method!r}")
    times["I"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with cop.ledger.phase("II"):
        core = direct_core(cop, tess, bases)
    times["II"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    coloring = color_boxes(tess)
    with cop.ledger.phase("III"):
        b_blocks = structured_identity_discrepancy(cop, tess, bases, core, coloring)
    times["III"] = time.perf_counter() - t0

    rep = UniformBLR(
        tess=tess, rank=k, u_blocks=bases.u_blocks, v_blocks=bases.v_blocks,
        core=core, b_blocks=b_blocks, effective_ranks=bases.effective_ranks,
        metadata={"method": METHOD_IDS[("A", method)]},
    )

    rel = None
    if compute_error:
        rel = relative_error(op, rep, error_iterations, stream.child(9))

    aspect = None
    ell = None
    if plan is not None:
        ell = plan.matrix.n_cols
        aspect = {"base": _ratio_summary(plan.rho_base), "draws": plan.attempts}
        if plan.rho_optimized is not None:
            aspect["optimized"] = _ratio_summary(plan.rho_optimized)

    report = _report_from_ledger(
        cop,
        method=METHOD_IDS[("A", method)],
        config=_base_config(
            tess, k, p, stream, ell=ell, distribution=distribution if method == "tag" else None,
            extra_cols=extra_cols if method == "tag" else None, optimize=optimize,
        ),
        times_s=times,
        relative_error=rel,
        storage_entries=rep.storage_entries,
        aspect_ratios=aspect,
    )
    return rep, report


def compress_type_b(
    op: LinearOperatorHandle,
    tess: Tessellation,
    k: int,
    p: int = 10,
    method: str = "bn",
    stream: RandomStream | None = None,
    distribution: str = "gaussian",
    optimize: bool = False,
    max_tag_redraws: int = 5,
    compute_error: bool = True,
    error_iterations: int = 20,
    max_width: int | None = None,
):
    """Full type-B compression: bases, discrepancy from reused sketches,
    then the core by block least squares (steps II and III swapped).

    method selects the step-I algorithm: "bn" (B1) or "tag" (B2). The
    tagging variant sketches with per-block test blocks of m + p columns so
    the required right inverses exist.
    """
    if stream is None:
        stream = RandomStream(0)
    if method not in ("bn", "tag"):
        raise ValueError("type B supports methods 'bn' and 'tag'")
    cop = counting_wrapper(op)
    times = {}
    plan = None

    t0 = time.perf_counter()
    with cop.ledger.phase("I"):
        if method == "bn":
            bases, bundle = block_nullification_bases(cop, tess, k, p, stream.child(0))
        else:
            plan = plan_tagging(
                tess, 0, distribution, stream.child(1),
                optimize=optimize, max_redraws=max_tag_redraws,
                extra_check=lambda T: b2_denominators_ok(T, tess),
            )
            bases, bundle = tagging_bases(
                cop, tess, k, p, plan, stream.child(0),
                group_cols=tess.max_block_size + p,
            )
    times["I"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with cop.ledger.phase("III"):
        if method == "bn":
            b_blocks = gaussian_pinv_discrepancy(bundle, bases)
        else:
            b_blocks = tagging_pinv_discrepancy(bundle, bases)
    times["III"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with cop.ledger.phase("II"):
        core, _ = pinv_core(
            cop, bundle, bases, b_blocks, p, stream.child(2), max_width=max_width
        )
    times["II"] = time.perf_counter() - t0

    rep = UniformBLR(
        tess=tess, rank=k, u_blocks=bases.u_blocks, v_blocks=bases.v_blocks,
        core=core, b_blocks=b_blocks, effective_ranks=bases.effective_ranks,
        metadata={"method": METHOD_IDS[("B", method)]},
    )

    rel = None
    if compute_error:
        rel = relative_error(op, rep, error_iterations, stream.child(9))

    aspect = None
    ell = None
    if plan is not None:
        ell = plan.matrix.n_cols
        aspect = {"base": _ratio_summary(plan.rho_base), "draws": plan.attempts}
        if plan.rho_optimized is not None:
            aspect["optimized"] = _ratio_summary(plan.rho_optimized)

    report = _report_from_ledger(
        cop,
        method=METHOD_IDS[("B", method)],
        config=_base_config(
            tess, k, p, stream, ell=ell,
            distribution=distribution if method == "tag" else None,
            extra_cols=None, optimize=optimize,
        ),
        times_s=times,
        relative_error=rel,
        storage_entries=rep.storage_entries,
        aspect_ratios=aspect,
    )
    return rep, report


def compress(op, tess, k, method_id: str = "A2", **kwargs):
    """Dispatch on a method id (A1, A2, A3, B1, B2)."""
    for (family, basis), mid in METHOD_IDS.items():
        if mid == method_id:
            fn = compress_type_a if family == "A" else compress_type_b
            return fn(op, tess, k, method=basis, **kwargs)
    raise ValueError(f"unknown method id {method_id!r}; expected one of "
                     f"{sorted(METHOD_IDS.values())}")


def ground_truth_rep(spec, op) -> UniformBLR:
    """Exact (U, C, V, B) decomposition of a synthetic exact-rank operator."""
    tess = spec.tess
    k = spec.rank
    A = op.matrix
    b = tess.b
    offs = np.arange(b + 1) * k
    K = b * k
    core = np.empty((K, K))
    for i in range(b):
        rows = tess.blocks[i]
        for j in range(b):
            block = A[np.ix_(rows, tess.blocks[j])]
            core[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = (
                spec.u_blocks[i].T @ block @ spec.v_blocks[j]
            )
    b_blocks = {}
    for i in range(b):
        rows = tess.blocks[i]
        for j in tess.neighbor_lists[i]:
            block = A[np.ix_(rows, tess.blocks[j])]
            low = (
                spec.u_blocks[i]
                @ core[offs[i]:offs[i + 1], offs[j]:offs[j + 1]]
                @ spec.v_blocks[j].T
            )
            b_blocks[(i, j)] = block - low
    return UniformBLR(
        tess=tess, rank=k, u_blocks=spec.u_blocks, v_blocks=spec.v_blocks,
        core=core, b_blocks=b_blocks,
        effective_ranks=np.full(b, k), metadata={"method": "exact"},
    )
