"""Fixed-radius neighbor queries: brute-force scan and uniform grid.

The grid buckets agents into cells of side exactly epsilon (integer
cell = floor(coordinate / epsilon)), so any neighbor of an agent lies
in the 3^d surrounding cells.  Candidates are then filtered with the
same canonical squared-distance comparison the brute path uses, which
makes the two modes return bit-equal neighbor sets by construction.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import sq_norm_last

MODES = ("brute", "grid", "auto")

# Row block for chunked all-pairs scans; bounds peak memory at ~O(block * n).
_BRUTE_BLOCK_ELEMS = 4_000_000

# Refuse explicit grid mode when the stencil itself is astronomically big.
_MAX_STENCIL = 1 << 20


def resolve_mode(mode: str, n: int, d: int) -> str:
    """auto picks the grid only when the 3^d stencil is smaller than n."""
    if mode not in MODES:
        raise ValueError(f"unknown index mode: {mode!r}")
    if mode != "auto":
        return mode
    return "brute" if 3**d >= n else "grid"


class NeighborIndex:
    """Neighbor queries over one fixed snapshot of states.

    The index is valid only for the states it was built from; after a
    dynamics step it must be rebuilt.  In debug runs (python -O not
    set) queries verify a fingerprint of the states buffer to catch
    stale use.
    """

    def __init__(self, states: np.ndarray, epsilon: float, mode: str = "auto"):
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError(f"states must be (n, d), got shape {states.shape}")
        if not np.isfinite(epsilon) or epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.states = states
        self.epsilon = float(epsilon)
        self.n, self.d = states.shape
        self.mode = resolve_mode(mode, self.n, self.d)
        self._fingerprint = hash(states.tobytes()) if __debug__ else None
        self._cells = None
        self._groups = None
        if self.mode == "grid":
            if 3**self.d > _MAX_STENCIL:
                raise ValueError(f"grid stencil 3^{self.d} is unusably large; use brute")
            self._build_grid()

    def _build_grid(self) -> None:
        cells = np.floor(self.states / self.epsilon).astype(np.int64)
        self._cells = cells
        order = np.lexsort(cells.T[::-1])
        sorted_cells = cells[order]
        if self.n:
            breaks = np.flatnonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)) + 1
            bounds = np.concatenate(([0], breaks, [self.n]))
        else:
            bounds = np.array([0, 0])
        groups: dict[tuple, np.ndarray] = {}
        for a, b in zip(bounds[:-1], bounds[1:]):
            if a == b:
                continue
            ids = np.sort(order[a:b])
            groups[tuple(sorted_cells[a])] = ids
        self._groups = groups

    def _check_fresh(self) -> None:
        if __debug__ and hash(self.states.tobytes()) != self._fingerprint:
            raise RuntimeError("stale NeighborIndex: states changed since build")

    def _candidates(self, cell: tuple) -> np.ndarray:
        found = []
        for off in itertools.product((-1, 0, 1), repeat=self.d):
            ids = self._groups.get(tuple(c + o for c, o in zip(cell, off)))
            if ids is not None:
                found.append(ids)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found)

    def query(self, i: int) -> np.ndarray:
        """Ascending indices j with ||x_j - x_i|| <= epsilon (includes i)."""
        self._check_fresh()
        eps2 = self.epsilon * self.epsilon
        if self.mode == "brute":
            d2 = sq_norm_last(self.states - self.states[i])
            return np.flatnonzero(d2 <= eps2)
        cand = self._candidates(tuple(self._cells[i]))
        d2 = sq_norm_last(self.states[cand] - self.states[i])
        return np.sort(cand[d2 <= eps2])

    def neighbor_sums(self, epsilon: float | None = None):
        """Per-agent neighbor row sums and neighbor counts.

        Returns (sums (n, d), deg (n,)).  Summation order differs
        between modes (ascending j for brute, cell order for grid), so
        sums may differ in final ulps; membership never does.
        """
        self._check_fresh()
        if epsilon is not None and epsilon != self.epsilon:
            raise ValueError("index was built for a different epsilon")
        eps2 = self.epsilon * self.epsilon
        sums = np.empty((self.n, self.d), dtype=np.float64)
        deg = np.empty(self.n, dtype=np.float64)
        if self.mode == "brute":
            block = max(1, _BRUTE_BLOCK_ELEMS // max(1, self.n))
            for a in range(0, self.n, block):
                b = min(self.n, a + block)
                d2 = sq_norm_last(self.states[a:b, None, :] - self.states[None, :, :])
                adj = (d2 <= eps2).astype(np.float64)
                deg[a:b] = adj.sum(axis=1)
                sums[a:b] = np.einsum("qj,jd->qd", adj, self.states)
            return sums, deg
        for cell, ids in self._groups.items():
            cand = self._candidates(cell)
            d2 = sq_norm_last(self.states[ids][:, None, :] - self.states[cand][None, :, :])
            adj = (d2 <= eps2).astype(np.float64)
            deg[ids] = adj.sum(axis=1)
            sums[ids] = np.einsum("qc,cd->qd", adj, self.states[cand])
        return sums, deg

    def candidate_stats(self) -> dict:
        """Mean/max candidates per query, for the performance harness."""
        self._check_fresh()
        if self.mode != "grid":
            return {"mode": self.mode, "mean_candidates": float(self.n), "max_candidates": self.n}
        counts = np.empty(self.n, dtype=np.int64)
        for cell, ids in self._groups.items():
            counts[ids] = self._candidates(cell).size
        return {
            "mode": "grid",
            "mean_candidates": float(counts.mean()),
            "max_candidates": int(counts.max()),
            "occupied_cells": len(self._groups),
        }
