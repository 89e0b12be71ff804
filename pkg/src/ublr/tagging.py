"""Tagging matrices: construction, per-block null vectors, projected tags.

A tagging matrix T (b x ell, ell >= 3^d + 1) scales per-block Gaussian test
blocks. For each box i, a unit vector in the null space of the neighbor rows
T(N_i, :) zeroes the inadmissible contributions in the combined sketch; the
surviving far-field weights are the projected tags, whose max/min magnitude
ratio (the aspect ratio) measures sketch quality. With extra columns the
null space has dimension >= 2 and the vector can be optimized over the unit
sphere to shrink that ratio.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import RandomStream, gaussian, null_basis
from .tessellation import Tessellation


class DegenerateTagsError(RuntimeError):
    """Tagging matrix produced unusable null vectors or projected tags;
    the caller should redraw with a fresh seed."""


@dataclass(frozen=True)
class TaggingMatrix:
    entries: np.ndarray  # (b, ell)
    dim: int
    extra_cols: int
    distribution: str
    seed: int

    @property
    def b(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class NullVector:
    block: int
    vector: np.ndarray  # unit vector, length ell
    residual: float


@dataclass(frozen=True)
class ProjectedTags:
    block: int
    values: np.ndarray  # length b, entry j is <t^(j), z>


DISTRIBUTIONS = ("gaussian", "haar", "equidistributed")


def make_tagging_matrix(
    b: int,
    d: int,
    extra_cols: int = 0,
    distribution: str = "gaussian",
    stream: RandomStream | None = None,
) -> TaggingMatrix:
    """b x (3^d + 1 + extra_cols) tagging matrix of the given distribution."""
    if stream is None:
        stream = RandomStream(0)
    if extra_cols < 0:
        raise ValueError("extra_cols must be nonnegative")
    ell = 3**d + 1 + extra_cols
    if b < ell:
        raise ValueError(f"b={b} too small for {ell} tagging columns")
    if distribution == "gaussian":
        entries = gaussian(b, ell, stream)
    elif distribution == "haar":
        g = gaussian(b, ell, stream)
        q, r = np.linalg.qr(g)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        entries = q * signs
    elif distribution == "equidistributed":
        entries = _equidistributed_rows(b, ell, stream)
    else:
        raise ValueError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    return TaggingMatrix(
        entries=entries, dim=d, extra_cols=extra_cols,
        distribution=distribution, seed=stream.seed,
    )


def _equidistributed_rows(b, ell, stream, iterations=200):
    """Rows spread over the unit hypersphere by Riesz-energy descent.

    Gaussian rows are normalized, then repelled pairwise with a step capped
    by the current minimum distance. Each row is repelled by the other rows
    and by their antipodes: tagging only sees rows up to sign, and plain
    spherical descent at small b collapses into antipodal pairs whose
    parallel rows zero out far-field projected tags. Deterministic under
    the seed.
    """
    rows = gaussian(b, ell, stream)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    for _ in range(iterations):
        force = np.zeros_like(rows)
        d_min = np.inf
        for others in (rows, -rows):
            diff = rows[:, None, :] - others[None, :, :]
            dist2 = (diff**2).sum(axis=2)
            dist2[dist2 < 1e-30] = np.inf  # self term (and exact antipodes)
            dist = np.sqrt(dist2)
            force += (diff / dist[:, :, None] ** 3).sum(axis=1)
            d_min = min(d_min, dist.min())
        step = 0.25 * d_min**3
        disp = step * force
        disp_len = np.linalg.norm(disp, axis=1, keepdims=True)
        cap = 0.5 * d_min
        scale = np.minimum(1.0, cap / np.maximum(disp_len, 1e-300))
        rows = rows + disp * scale
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows


def tag_null_vector(T: TaggingMatrix, tess: Tessellation, i: int) -> NullVector:
    """Unit null vector of the neighbor-row submatrix T(N_i, :)."""
    sub = T.entries[tess.neighbor_lists[i], :]
    try:
        z = null_basis(sub, 1)[:, 0]
    except ValueError as exc:
        raise DegenerateTagsError(f"block {i}: {exc}") from exc
    residual = float(np.linalg.norm(sub @ z))
    limit = 1e-12 * max(1.0, np.linalg.norm(T.entries))
    if residual > limit:
        raise DegenerateTagsError(
            f"block {i}: null-vector residual {residual:.3e} exceeds {limit:.3e}"
        )
    return NullVector(block=i, vector=z, residual=residual)


def projected_tags(T: TaggingMatrix, tess: Tessellation, nv: NullVector) -> ProjectedTags:
    """All b projected tags <t^(j), z^(i)>; the neighbor entries vanish."""
    return ProjectedTags(block=nv.block, values=T.entries @ nv.vector)


def aspect_ratio(pt: ProjectedTags, tess: Tessellation, i: int | None = None) -> float:
    """Max-to-min magnitude of the far-field projected tags (>= 1).

    All-zero far fields return 1.0 (all values equal); a vanishing value
    among nonzero ones yields +inf. Raises on an empty far field.
    """
    block = pt.block if i is None else i
    far = tess.far_fields[block]
    if len(far) == 0:
        raise ValueError(f"block {block} has an empty far field (b too small)")
    mags = np.abs(pt.values[far])
    hi, lo = mags.max(), mags.min()
    if hi == 0.0:
        return 1.0
    if lo == 0.0:
        return float("inf")
    return float(hi / lo)


def _ratio_per_column(far_vals: np.ndarray) -> np.ndarray:
    """Aspect ratio of each column of an (|F|, n) array of far-field values."""
    mags = np.abs(far_vals)
    hi = mags.max(axis=0)
    lo = mags.min(axis=0)
    out = np.full(far_vals.shape[1], np.inf)
    np.divide(hi, lo, out=out, where=lo > 0)
    out[hi == 0] = 1.0
    return out


def _golden_section(f, a, b, tol=1e-10, max_iter=200):
    """Golden-section minimization on [a, b]; returns (x, f(x))."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def optimize_null_vector(
    T: TaggingMatrix, tess: Tessellation, i: int, grid_points: int = 4096
) -> NullVector:
    """Null vector minimizing the aspect ratio over the unit sphere in the
    null space of T(N_i, :).

    Requires nullity >= 2; with nullity 1 it falls back to tag_null_vector
    with a warning. Nullity 2 searches a dense grid over the half circle
    (the ratio has period pi) plus golden-section refinement; nullity >= 3
    searches a spherical grid with local zoom over the first three null
    directions. The unoptimized vector is always kept as a candidate, so the
    result is never worse than the base.
    """
    base = tag_null_vector(T, tess, i)
    far = tess.far_fields[i]
    nbrs = tess.neighbor_lists[i]
    ell = T.n_cols
    nullity = ell - len(nbrs)
    if nullity < 2:
        warnings.warn(
            f"block {i}: null space is one-dimensional, nothing to optimize"
        )
        return base
    if len(far) == 0:
        return base

    sub = T.entries[nbrs, :]
    try:
        X = null_basis(sub, nullity)
    except ValueError as exc:
        raise DegenerateTagsError(f"block {i}: {exc}") from exc
    s_use = min(nullity, 3)  # cap the search at a 3-dim parameterization
    X = X[:, :s_use]
    P = T.entries[far, :] @ X  # (|F|, s_use) far-field tags of the basis

    if s_use == 2:
        coeffs, ratio = _best_on_circle(P, grid_points)
    else:
        coeffs, ratio = _best_on_sphere(P)

    base_ratio = aspect_ratio(projected_tags(T, tess, base), tess)
    if base_ratio <= ratio:
        return base
    z = X @ coeffs
    z /= np.linalg.norm(z)
    residual = float(np.linalg.norm(sub @ z))
    return NullVector(block=i, vector=z, residual=residual)


def _best_on_circle(P, grid_points):
    thetas = np.linspace(0.0, np.pi, grid_points, endpoint=False)
    vals = P @ np.vstack((np.cos(thetas), np.sin(thetas)))
    ratios = _ratio_per_column(vals)
    best = int(np.argmin(ratios))
    h = np.pi / grid_points

    def objective(theta):
        v = P @ np.array([np.cos(theta), np.sin(theta)])
        return _ratio_per_column(v[:, None])[0]

    theta_ref, ratio_ref = _golden_section(
        objective, thetas[best] - h, thetas[best] + h
    )
    if ratio_ref <= ratios[best]:
        theta, ratio = theta_ref, ratio_ref
    else:
        theta, ratio = thetas[best], ratios[best]
    return np.array([np.cos(theta), np.sin(theta)]), float(ratio)


def _best_on_sphere(P, coarse=64, zoom_rounds=3):
    def alphas(phi, psi):
        # rows of the (n, 3) coefficient array are unit vectors
        return np.column_stack(
            (np.cos(phi), np.sin(phi) * np.cos(psi), np.sin(phi) * np.sin(psi))
        )

    phi_c, phi_h = np.pi / 2, np.pi / 2
    psi_c, psi_h = np.pi, np.pi
    best_coeffs, best_ratio = None, np.inf
    n = coarse
    for _ in range(zoom_rounds + 1):
        phi = np.linspace(phi_c - phi_h, phi_c + phi_h, n)
        psi = np.linspace(psi_c - psi_h, psi_c + psi_h, n)
        pp, ss = np.meshgrid(phi, psi, indexing="ij")
        A = alphas(pp.ravel(), ss.ravel())
        ratios = _ratio_per_column(P @ A.T)
        idx = int(np.argmin(ratios))
        if ratios[idx] < best_ratio:
            best_ratio = float(ratios[idx])
            best_coeffs = A[idx]
        phi_c, psi_c = pp.ravel()[idx], ss.ravel()[idx]
        phi_h /= n / 4.0
        psi_h /= n / 4.0
        n = 17
    return best_coeffs, best_ratio


@dataclass
class TaggingPlan:
    """A tagging matrix together with per-block null vectors and ratios."""

    matrix: TaggingMatrix
    null_vectors: list
    rho_base: np.ndarray
    rho_optimized: np.ndarray | None
    attempts: int


def plan_tagging(
    tess: Tessellation,
    extra_cols: int = 0,
    distribution: str = "gaussian",
    stream: RandomStream | None = None,
    optimize: bool = False,
    max_redraws: int = 5,
    ratio_limit: float = 1e6,
    extra_check=None,
) -> TaggingPlan:
    """Draw a tagging matrix and all per-block null vectors, redrawing with
    the next derived seed (at most max_redraws times) whenever a block comes
    out degenerate or with an aspect ratio above ratio_limit.

    extra_check, when given, must accept the candidate TaggingMatrix and
    return False to force a redraw (used by the type-B pipeline to reject
    matrices whose per-pair denominators vanish)."""
    if stream is None:
        stream = RandomStream(0)
    last_error = None
    plan = None
    for attempt in range(max_redraws + 1):
        T = make_tagging_matrix(
            tess.b, tess.dim, extra_cols, distribution, stream.child(attempt)
        )
        if extra_check is not None and not extra_check(T):
            last_error = DegenerateTagsError("extra_check rejected the draw")
            continue
        try:
            plan = _evaluate_plan(T, tess, optimize, attempt + 1)
        except DegenerateTagsError as exc:
            last_error = exc
            continue
        effective = plan.rho_optimized if plan.rho_optimized is not None else plan.rho_base
        finite = effective[~np.isnan(effective)]
        worst = finite.max() if finite.size else 1.0
        if np.isfinite(worst) and worst <= ratio_limit:
            return plan
    if plan is None:
        raise DegenerateTagsError(
            f"no usable tagging matrix after {max_redraws + 1} draws: {last_error}"
        )
    warnings.warn(
        f"tagging matrix still has aspect ratio above {ratio_limit:.0e} after "
        f"{max_redraws + 1} draws; proceeding with the last one"
    )
    return plan


def _evaluate_plan(T, tess, optimize, attempts):
    null_vectors = []
    rho_base = np.full(tess.b, np.nan)
    rho_opt = np.full(tess.b, np.nan) if optimize else None
    for i in range(tess.b):
        base = tag_null_vector(T, tess, i)
        if len(tess.far_fields[i]) > 0:
            rho_base[i] = aspect_ratio(projected_tags(T, tess, base), tess)
        chosen = base
        if optimize:
            nullity = T.n_cols - len(tess.neighbor_lists[i])
            if nullity >= 2:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    chosen = optimize_null_vector(T, tess, i)
            if len(tess.far_fields[i]) > 0:
                rho_opt[i] = aspect_ratio(projected_tags(T, tess, chosen), tess)
        null_vectors.append(chosen)
    return TaggingPlan(
        matrix=T,
        null_vectors=null_vectors,
        rho_base=rho_base,
        rho_optimized=rho_opt,
        attempts=attempts,
    )
