"""Counter-based uniform random streams.

Every random draw in this package is a pure function of
(base_seed, run_index, t, position).  Draws come from the Philox
counter-based generator: the per-run key is derived from
(base_seed, run_index) by splitmix64, and the 256-bit counter encodes
the step t and the block offset inside the step.  Nothing is
sequential, so draws are bit-identical no matter how runs are batched,
chunked, or split across worker processes.

Stream layout: a step that needs `count` uniforms owns the counter
blocks [t * bps, (t + 1) * bps) with bps = ceil(count / 4), four
doubles per block; the trailing pad doubles of the last block are
discarded.  Step 0 is reserved for initial-condition draws, noise
starts at t = 1.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    """SplitMix64 mixing function, vectorized over uint64 arrays."""
    # uint64 wraparound is the point; silence the overflow warning.
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _SM_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM_M1
        z = (z ^ (z >> np.uint64(27))) * _SM_M2
        return z ^ (z >> np.uint64(31))


def run_keys(base_seed: int, run_indices) -> np.ndarray:
    """64-bit Philox key for each run of an ensemble.

    Distinct run indices give distinct keys (splitmix64 is a bijection).
    """
    base = splitmix64(np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF))
    runs = np.asarray(run_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(base + runs)


def blocks_per_step(count: int) -> int:
    """Counter blocks a step of `count` uniforms occupies."""
    return (count + 3) // 4


def uniforms_at(keys, ts, count: int) -> np.ndarray:
    """Uniform [0, 1) doubles for a block of runs and steps.

    Parameters
    ----------
    keys : (A,) uint64
        Per-run keys from run_keys().
    ts : (B,) ints, consecutive ascending
        Step indices.  The draw block for step t depends only on t,
        never on which other steps are generated alongside it.
    count : int
        Uniforms per (run, step) block.

    Returns
    -------
    (A, B, count) float64 in [0, 1).
    """
    keys = np.asarray(keys, dtype=np.uint64)
    ts = np.asarray(ts, dtype=np.uint64)
    nsteps = ts.shape[0]
    if nsteps == 0 or count <= 0:
        return np.empty((keys.shape[0], nsteps, max(count, 0)), dtype=np.float64)
    if not np.all(ts[1:] == ts[:-1] + np.uint64(1)):
        raise ValueError("ts must be consecutive ascending steps")
    bps = blocks_per_step(count)
    start = int(ts[0]) * bps
    per_step = 4 * bps
    out = np.empty((keys.shape[0], nsteps, count), dtype=np.float64)
    for a, key in enumerate(keys):
        buf = Generator(Philox(key=int(key), counter=start)).random(nsteps * per_step)
        out[a] = buf.reshape(nsteps, per_step)[:, :count]
    return out


def uniforms_for_step(key: int, t: int, count: int) -> np.ndarray:
    """Uniform block for a single (run key, step), shape (count,)."""
    return uniforms_at(np.asarray([key], dtype=np.uint64), [t], count)[0, 0]
