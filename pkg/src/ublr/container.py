"""Binary container for compressed representations.

Layout (all integers little-endian uint64, all floats little-endian
float64, dense blocks row-major):

    magic "UBLR1"
    n, b, k, d, tess_json_len, n_b_blocks
    tess_json (UTF-8: dim, b, blocks, neighbors, colors; ids 1-based)
    effective ranks, one per block
    U blocks in block order, then V blocks
    core (K x K)
    B index table: (i, j) pairs, 1-based, sorted
    B blocks in table order

Writing the same representation twice yields identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .reconstruction import UniformBLR
from .tessellation import Tessellation, color_boxes

MAGIC = b"UBLR1"


def _u64(*values) -> bytes:
    return np.asarray(values, dtype="<u8").tobytes()


def _f64(array) -> bytes:
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


def write_ublr(path, rep: UniformBLR) -> None:
    tess = rep.tess
    tess_json = json.dumps(
        tess.to_json_dict(colors=color_boxes(tess).colors),
        sort_keys=True, separators=(",", ":"),
    ).encode()
    pairs = sorted(rep.b_blocks)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_u64(rep.n, tess.b, rep.rank, tess.dim, len(tess_json), len(pairs)))
        fh.write(tess_json)
        fh.write(_u64(*rep.effective_ranks))
        for u in rep.u_blocks:
            fh.write(_f64(u))
        for v in rep.v_blocks:
            fh.write(_f64(v))
        fh.write(_f64(rep.core))
        for i, j in pairs:
            fh.write(_u64(i + 1, j + 1))
        for pair in pairs:
            fh.write(_f64(rep.b_blocks[pair]))


def read_ublr(path) -> UniformBLR:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a UBLR container")
    off = len(MAGIC)

    def take_u64(count):
        nonlocal off
        vals = np.frombuffer(raw, dtype="<u8", count=count, offset=off)
        off += 8 * count
        return vals.astype(int)

    def take_f64(rows, cols):
        nonlocal off
        vals = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=off)
        off += 8 * rows * cols
        return vals.reshape(rows, cols).copy()

    n, b, k, d, json_len, n_pairs = take_u64(6)
    tess_dict = json.loads(raw[off:off + json_len].decode())
    off += json_len
    tess = _tess_from_json(tess_dict, n)
    ranks = take_u64(b)
    sizes = tess.block_sizes
    u_blocks = [take_f64(sizes[i], ranks[i]) for i in range(b)]
    v_blocks = [take_f64(sizes[i], ranks[i]) for i in range(b)]
    total = int(ranks.sum())
    core = take_f64(total, total)
    pairs = [tuple(take_u64(2) - 1) for _ in range(n_pairs)]
    b_blocks = {
        (int(i), int(j)): take_f64(sizes[i], sizes[j]) for i, j in pairs
    }
    return UniformBLR(
        tess=tess, rank=int(k), u_blocks=u_blocks, v_blocks=v_blocks,
        core=core, b_blocks=b_blocks, effective_ranks=ranks,
        metadata={"source": str(path)},
    )


def _tess_from_json(data: dict, n: int) -> Tessellation:
    blocks = [np.asarray(blk, dtype=int) - 1 for blk in data["blocks"]]
    neighbor_lists = [[j - 1 for j in nbrs] for nbrs in data["neighbors"]]
    # axis_count/grid coordinates are not in the container; rebuild enough
    # structure for applying the representation
    return Tessellation(
        dim=int(data["dim"]),
        axis_count=0,
        n_points=int(n),
        blocks=blocks,
        neighbor_lists=neighbor_lists,
        grid_coords=np.zeros((len(blocks), int(data["dim"])), dtype=int),
        full_grid=False,
    )
