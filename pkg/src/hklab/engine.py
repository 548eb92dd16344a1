"""Trajectory simulation and stopping-time measurement.

A run is quasi-synchronized at the first t >= 0 with d_V(t) <= epsilon
(largest pairwise distance at most the confidence radius).  The engine
reports min(T, horizon) per run with an explicit censoring flag, and
can optionally keep stepping past the hit to audit that the condition
is absorbing when delta <= epsilon / 2.

Ensembles are advanced in lockstep: one (A, n, d) tensor holds all
still-active runs and retired runs are compacted away.  Because every
noise draw is a pure function of (base_seed, run_index, t, agent), and
every per-run reduction has a fixed order, a run's trajectory is
bit-identical no matter which other runs share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BOX_HI, BOX_LO, ModelConfig, clamp_to_box, sq_norm_last
from .neighbors import NeighborIndex, resolve_mode
from .noise import noise_block, uniforms_per_draw
from .prng import run_keys

# Abort threshold for runaway unbounded states.
MAGNITUDE_GUARD = 1e12

# Lockstep batches are worthwhile only for small per-run systems.
_LOCKSTEP_MAX_N = 128

# Target element count for one pre-generated noise chunk.
_CHUNK_ELEMS = 16_000_000

# Steps per chunk stay below this even when few runs remain.
_CHUNK_STEPS = 4096

# Batches wider than this are advanced in independent slices; per-run
# streams make the split invisible in the results.
_RUN_SLICE = 8192


def _gram_sq_dists(states: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared distances for a batch, shape (A, n, n).

    Uses ||x_i||^2 + ||x_j||^2 - 2<x_i, x_j> with a batched matmul for
    the inner products.  Cancellation can produce values a few ulp from
    the subtraction-based form (tiny negatives included), which only
    shifts threshold comparisons at knife-edge distances; dyadic states
    such as the sign-noise micro-instances are exact either way.
    """
    g = np.matmul(states, states.transpose(0, 2, 1))
    nrm2 = np.einsum("aii->ai", g).copy()
    if out is None:
        out = g
    np.multiply(g, -2.0, out=out)
    out += nrm2[:, :, None]
    out += nrm2[:, None, :]
    return out


class _StepBuffers:
    """Preallocated per-chunk workspaces; steps reuse them in place.

    The batched update allocates ~5 MB of temporaries per step without
    these, which dominates runtime for long horizons.  Every operation
    writes through ``out=`` into the same arrays the allocating form
    would produce, so results are bit-identical.
    """

    def __init__(self, a: int, n: int, d: int):
        self.g = np.empty((a, n, n))
        self.d2 = np.empty((a, n, n))
        self.adj_bool = np.empty((a, n, n), dtype=bool)
        self.adj = np.empty((a, n, n))
        self.deg = np.empty((a, n))
        self.new = np.empty((a, n, d))
        self.dv2 = np.empty(a)

    def sq_dists(self, states: np.ndarray) -> None:
        np.matmul(states, states.transpose(0, 2, 1), out=self.g)
        nrm2 = np.einsum("aii->ai", self.g).copy()
        np.multiply(self.g, -2.0, out=self.d2)
        self.d2 += nrm2[:, :, None]
        self.d2 += nrm2[:, None, :]
        a = states.shape[0]
        np.max(self.d2.reshape(a, -1), axis=1, out=self.dv2)


@dataclass(frozen=True)
class StoppingTimeSample:
    """Outcome of one run: min(T, horizon) plus censoring status."""

    run_index: int
    hit: bool
    t_hit: int | None
    horizon: int
    d_v_at_end: float
    base_seed: int

    @property
    def t_end(self) -> int:
        return self.t_hit if self.hit else self.horizon


@dataclass
class TrajectoryRecord:
    """Opt-in strided diagnostics for a single run."""

    stride: int
    times: np.ndarray
    d_v: np.ndarray
    cluster_gap: np.ndarray | None = None
    snapshot_times: np.ndarray | None = None
    snapshots: np.ndarray | None = None


@dataclass
class BatchResult:
    samples: list[StoppingTimeSample]
    absorb_ok: np.ndarray | None = None
    record: TrajectoryRecord | None = None


def cluster_gap(states: np.ndarray, n1: int) -> float:
    """Distance between the centroids of rows [:n1] and rows [n1:]."""
    if n1 < 1 or n1 >= states.shape[0]:
        raise ValueError(f"cluster split {n1} leaves an empty side for n={states.shape[0]}")
    diff = states[:n1].mean(axis=0) - states[n1:].mean(axis=0)
    return float(np.sqrt(sq_norm_last(diff)))


def _gap_partition(cfg: ModelConfig) -> int | None:
    if cfg.initial.kind == "two_cluster":
        return cfg.initial.sizes[0]
    return None


class _Recorder:
    """Strided d_V / gap / snapshot series for a single-run batch."""

    def __init__(self, cfg: ModelConfig, stride: int, snapshot_stride: int):
        self.stride = stride
        self.snapshot_stride = snapshot_stride
        self.n1 = _gap_partition(cfg)
        self.times: list[int] = []
        self.d_v: list[float] = []
        self.gaps: list[float] = []
        self.snap_times: list[int] = []
        self.snaps: list[np.ndarray] = []

    def observe(self, t: int, states: np.ndarray, dv2: float, final: bool) -> None:
        if self.stride and (t % self.stride == 0 or final):
            if not self.times or self.times[-1] != t:
                self.times.append(t)
                self.d_v.append(float(np.sqrt(dv2)))
                if self.n1 is not None:
                    self.gaps.append(cluster_gap(states, self.n1))
        if self.snapshot_stride and (t % self.snapshot_stride == 0 or final):
            if not self.snap_times or self.snap_times[-1] != t:
                self.snap_times.append(t)
                self.snaps.append(states.copy())

    def build(self) -> TrajectoryRecord:
        return TrajectoryRecord(
            stride=self.stride,
            times=np.asarray(self.times, dtype=np.int64),
            d_v=np.asarray(self.d_v, dtype=np.float64),
            cluster_gap=np.asarray(self.gaps) if self.gaps else None,
            snapshot_times=np.asarray(self.snap_times, dtype=np.int64) if self.snap_times else None,
            snapshots=np.stack(self.snaps) if self.snaps else None,
        )


def run_batch(
    cfg: ModelConfig,
    base_seed: int,
    run_indices,
    horizon: int,
    extra_after_hit: int = 0,
    record_stride: int = 0,
    snapshot_stride: int = 0,
    guard: float = MAGNITUDE_GUARD,
) -> BatchResult:
    """Advance a batch of runs to completion.

    Every run stops at min(T, horizon); with extra_after_hit > 0, hit
    runs continue for that many further steps (past the horizon if
    need be) and absorb_ok[k] reports whether d_V stayed <= epsilon
    throughout run k's continuation window.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    run_indices = np.asarray(run_indices, dtype=np.int64)
    a0 = run_indices.shape[0]
    if a0 == 0:
        return BatchResult(samples=[])
    n, d = cfg.n, cfg.d
    eps2 = cfg.epsilon * cfg.epsilon
    bounded = cfg.space_mode == "bounded"
    recorder = None
    if (record_stride or snapshot_stride) and a0 == 1:
        recorder = _Recorder(cfg, record_stride, snapshot_stride)

    x0 = cfg.initial.build(n, d, cfg.epsilon)
    use_lockstep = n <= _LOCKSTEP_MAX_N
    if not use_lockstep:
        samples = []
        absorb = np.ones(a0, dtype=bool) if extra_after_hit else None
        for k, ridx in enumerate(run_indices):
            res, ok = _run_single_large(
                cfg, base_seed, int(ridx), horizon, extra_after_hit, recorder, guard
            )
            samples.append(res)
            if absorb is not None:
                absorb[k] = ok
        rec = recorder.build() if recorder else None
        return BatchResult(samples=samples, absorb_ok=absorb, record=rec)

    if a0 > _RUN_SLICE:
        samples = []
        absorbs = []
        for lo in range(0, a0, _RUN_SLICE):
            part = run_batch(
                cfg,
                base_seed,
                run_indices[lo : lo + _RUN_SLICE],
                horizon,
                extra_after_hit=extra_after_hit,
                guard=guard,
            )
            samples.extend(part.samples)
            if part.absorb_ok is not None:
                absorbs.append(part.absorb_ok)
        absorb = np.concatenate(absorbs) if absorbs else None
        return BatchResult(samples=samples, absorb_ok=absorb, record=None)

    keys = run_keys(base_seed, run_indices)
    states = np.tile(x0, (a0, 1, 1))

    hit_all = np.zeros(a0, dtype=bool)
    t_hit_all = np.full(a0, -1, dtype=np.int64)
    dve_all = np.full(a0, np.nan)
    absorb_all = np.ones(a0, dtype=bool)

    live = np.arange(a0)
    buf = _StepBuffers(a0, n, d)
    buf.sq_dists(states)
    dv2 = buf.dv2
    hit0 = dv2 <= eps2
    hit_all[hit0] = True
    t_hit_all[hit0] = 0
    dve_all[hit0] = np.sqrt(dv2[hit0])
    deadline = np.where(hit0, extra_after_hit, horizon).astype(np.int64)
    if recorder:
        recorder.observe(0, states[0], float(dv2[0]), final=bool(deadline[0] == 0))

    w = uniforms_per_draw(cfg.noise.family, d)
    t = 0
    while True:
        keep = deadline > t
        if not keep.all():
            states = states[keep]
            d2_kept = buf.d2[keep]
            deadline = deadline[keep]
            live = live[keep]
            keys = keys[keep]
            buf = _StepBuffers(live.shape[0], n, d)
            buf.d2[...] = d2_kept
        a = live.shape[0]
        if a == 0:
            break
        b = int(min(_CHUNK_STEPS, max(1, _CHUNK_ELEMS // max(1, a * n * w)), deadline.max() - t))
        ts = np.arange(t + 1, t + b + 1, dtype=np.int64)
        xi = noise_block(cfg.noise, keys, ts, n, d)
        hit_live = hit_all[live]
        for k in range(b):
            tk = t + k + 1
            running = tk <= deadline
            # Adjacency comes from the previous step's distances in buf.d2.
            np.less_equal(buf.d2, eps2, out=buf.adj_bool)
            buf.adj[...] = buf.adj_bool
            np.sum(buf.adj, axis=2, out=buf.deg)
            np.matmul(buf.adj, states, out=buf.new)
            buf.new /= buf.deg[..., None]
            buf.new += xi[:, k]
            if bounded:
                np.clip(buf.new, BOX_LO, BOX_HI, out=buf.new)
            if running.all():
                states, buf.new = buf.new, states
            else:
                states = np.where(running[:, None, None], buf.new, states)
            buf.sq_dists(states)
            dv2 = buf.dv2
            synced = dv2 <= eps2
            newly = running & ~hit_live & synced
            if newly.any():
                idx = live[newly]
                hit_all[idx] = True
                hit_live = hit_live | newly
                t_hit_all[idx] = tk
                dve_all[idx] = np.sqrt(dv2[newly])
                deadline = np.where(newly, tk + extra_after_hit, deadline)
            if extra_after_hit:
                viol = running & hit_live & ~newly & ~synced
                if viol.any():
                    absorb_all[live[viol]] = False
            if tk == horizon:
                censoring = running & ~hit_live
                if censoring.any():
                    dve_all[live[censoring]] = np.sqrt(dv2[censoring])
            if recorder:
                recorder.observe(tk, states[0], float(dv2[0]), final=bool(deadline[0] == tk))
        t += b
        if not bounded and np.abs(states).max() > guard:
            worst = int(live[np.argmax(np.abs(states).max(axis=(1, 2)))])
            raise RuntimeError(
                f"state magnitude exceeded guard {guard:g} by t={t} "
                f"(run_index={int(run_indices[worst])}); aborting"
            )

    samples = [
        StoppingTimeSample(
            run_index=int(run_indices[i]),
            hit=bool(hit_all[i]),
            t_hit=int(t_hit_all[i]) if hit_all[i] else None,
            horizon=horizon,
            d_v_at_end=float(dve_all[i]),
            base_seed=base_seed,
        )
        for i in range(a0)
    ]
    return BatchResult(
        samples=samples,
        absorb_ok=absorb_all if extra_after_hit else None,
        record=recorder.build() if recorder else None,
    )


def _dv2_large(states: np.ndarray, eps2: float):
    """(is_hit, dv2_or_None) with an O(n d) prune before the O(n^2) scan.

    If some coordinate range alone exceeds epsilon the pair realizing
    it is at least that far apart, so the run cannot be synchronized;
    the exact scan happens only for near-synchronized snapshots.
    """
    lo = states.min(axis=0)
    hi = states.max(axis=0)
    rng = hi - lo
    if np.max(rng * rng) > eps2:
        return False, None
    d2max = 0.0
    n = states.shape[0]
    block = max(1, _CHUNK_ELEMS // max(1, n))
    for a in range(0, n, block):
        chunk = sq_norm_last(states[a : a + block, None, :] - states[None, :, :])
        d2max = max(d2max, float(chunk.max()))
    return d2max <= eps2, d2max


def _run_single_large(cfg, base_seed, run_index, horizon, extra_after_hit, recorder, guard):
    """Per-step grid-indexed path for systems too large to batch."""
    n, d = cfg.n, cfg.d
    eps2 = cfg.epsilon * cfg.epsilon
    bounded = cfg.space_mode == "bounded"
    mode = resolve_mode("auto", n, d)
    states = cfg.initial.build(n, d, cfg.epsilon)
    key = run_keys(base_seed, [run_index])

    hit, t_hit, dve = False, None, np.nan
    synced, d2m = _dv2_large(states, eps2)
    if synced:
        hit, t_hit, dve = True, 0, float(np.sqrt(d2m))
    deadline = extra_after_hit if synced else horizon
    if recorder:
        recorder.observe(0, states, d2m if d2m is not None else np.nan, final=deadline == 0)
    absorb_ok = True
    t = 0
    while t < deadline:
        t += 1
        xi = noise_block(cfg.noise, key, [t], n, d)[0, 0]
        index = NeighborIndex(states, cfg.epsilon, mode=mode)
        sums, deg = index.neighbor_sums()
        states = sums / deg[:, None] + xi
        if bounded:
            states = clamp_to_box(states)
        elif np.abs(states).max() > guard:
            raise RuntimeError(
                f"state magnitude exceeded guard {guard:g} at t={t} "
                f"(run_index={run_index}); aborting"
            )
        synced, d2m = _dv2_large(states, eps2)
        if not hit and synced:
            hit, t_hit, dve = True, t, float(np.sqrt(d2m))
            deadline = t + extra_after_hit
        elif hit and not synced:
            absorb_ok = False
        if not hit and t == horizon:
            if d2m is None:
                d2m = max(
                    float(sq_norm_last(states[a : a + 1] - states).max())
                    for a in range(n)
                )
            dve = float(np.sqrt(d2m))
        if recorder:
            recorder.observe(t, states, d2m if d2m is not None else np.nan, final=t == deadline)
    sample = StoppingTimeSample(
        run_index=run_index,
        hit=hit,
        t_hit=t_hit,
        horizon=horizon,
        d_v_at_end=float(dve),
        base_seed=base_seed,
    )
    return sample, absorb_ok


def run_trajectory(
    cfg: ModelConfig,
    horizon: int,
    base_seed: int = 0,
    run_index: int = 0,
    extra_after_hit: int = 0,
    record_stride: int = 0,
    snapshot_stride: int = 0,
):
    """One run; returns (StoppingTimeSample, TrajectoryRecord or None)."""
    res = run_batch(
        cfg,
        base_seed,
        [run_index],
        horizon,
        extra_after_hit=extra_after_hit,
        record_stride=record_stride,
        snapshot_stride=snapshot_stride,
    )
    return res.samples[0], res.record


def check_absorbing(
    cfg: ModelConfig,
    base_seed: int,
    run_index: int,
    t_hit: int,
    extra_steps: int = 1000,
) -> bool:
    """Continue a hit run's own noise stream and verify d_V stays <= epsilon.

    Refuses when delta > epsilon/2 (the absorbing property is then not
    guaranteed) unless the config carries allow_large_delta.
    """
    if cfg.delta > cfg.epsilon / 2.0 and not cfg.allow_large_delta:
        raise ValueError(
            "delta > epsilon/2: absorbing check is meaningless without allow_large_delta"
        )
    horizon = max(t_hit, 1)
    res = run_batch(cfg, base_seed, [run_index], horizon, extra_after_hit=extra_steps)
    sample = res.samples[0]
    if not sample.hit or sample.t_hit != t_hit:
        raise ValueError(
            f"run {run_index} hits at {sample.t_hit} (hit={sample.hit}), not at claimed {t_hit}"
        )
    return bool(res.absorb_ok[0])
