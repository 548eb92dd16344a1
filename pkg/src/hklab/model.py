"""Synchronous bounded-confidence averaging with additive bounded noise.

States are (n, d) float64 arrays, one row per agent.  Two agents are
neighbors when their Euclidean distance is at most epsilon (non-strict,
so each agent is its own neighbor).  One step replaces every row by the
mean of its neighbor rows plus a noise row; in bounded mode the result
is clamped coordinatewise to [-1, 1] after the noise is added.

All threshold comparisons happen in squared-distance space through one
canonical expression (sq_norm_last of a difference, einsum-based) so
that every code path -- brute-force scan, grid index, batched engine --
reaches bit-identical accept/reject decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseSpec, validate_noise_spec
from .prng import run_keys, uniforms_at

BOX_LO = -1.0
BOX_HI = 1.0

SPACE_MODES = ("bounded", "unbounded")

INITIAL_KINDS = ("explicit", "uniform_box", "two_cluster")

# Minimum centroid separation (in epsilon units, minus the 2*delta slack)
# for the separated-subgroup construction to start truly split.
_SQRT2 = np.sqrt(2.0)


def sq_norm_last(v: np.ndarray) -> np.ndarray:
    """Canonical squared Euclidean norm along the last axis."""
    return np.einsum("...k,...k->...", v, v)


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    """All-pairs squared distances: (..., n, d) -> (..., n, n)."""
    diff = x[..., :, None, :] - x[..., None, :, :]
    return sq_norm_last(diff)


def clamp_to_box(x: np.ndarray, lo: float = BOX_LO, hi: float = BOX_HI) -> np.ndarray:
    """Coordinatewise clamp onto [lo, hi]."""
    return np.clip(x, lo, hi)


def neighbor_set(states: np.ndarray, i: int, epsilon: float) -> np.ndarray:
    """Indices j with ||x_j - x_i|| <= epsilon, ascending; always contains i."""
    d2 = sq_norm_last(states - states[i])
    return np.flatnonzero(d2 <= epsilon * epsilon)


def max_pairwise_distance(states: np.ndarray) -> float:
    """Largest pairwise distance d_V; 0.0 for a single agent."""
    n = states.shape[0]
    if n < 2:
        return 0.0
    return float(np.sqrt(pairwise_sq_dists(states).max()))


def is_quasi_synchronized(states: np.ndarray, epsilon: float) -> bool:
    """True when every pairwise distance is <= epsilon (non-strict)."""
    n = states.shape[0]
    if n < 2:
        return True
    return bool(pairwise_sq_dists(states).max() <= epsilon * epsilon)


def hk_step(
    states: np.ndarray,
    noise: np.ndarray,
    epsilon: float,
    space_mode: str = "bounded",
    index=None,
) -> np.ndarray:
    """One synchronous update: neighbor means, plus noise, then clamp.

    The neighbor mean is formed by summing neighbor rows and dividing
    once by the neighbor count.  With ``index`` a prebuilt grid over
    the *current* states, neighbor sums come from cell candidates; the
    accept/reject comparison is identical either way.
    """
    states = np.asarray(states, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if states.shape != noise.shape:
        raise ValueError(f"noise shape {noise.shape} != states shape {states.shape}")
    if space_mode not in SPACE_MODES:
        raise ValueError(f"unknown space_mode: {space_mode!r}")
    if index is not None:
        sums, deg = index.neighbor_sums(epsilon)
    else:
        d2 = pairwise_sq_dists(states)
        adj = (d2 <= epsilon * epsilon).astype(np.float64)
        deg = adj.sum(axis=1)
        sums = np.einsum("ij,jd->id", adj, states)
    out = sums / deg[:, None] + noise
    if space_mode == "bounded":
        out = clamp_to_box(out)
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialCondition:
    """Initial states: explicit rows, seeded uniform box, or two clusters.

    * explicit: ``values`` holds the (n, d) rows.
    * uniform_box: one matrix drawn uniformly in [-1, 1]^(n x d) from
      ``seed``; every run of an ensemble shares it, because stopping
      times are studied conditionally on a fixed initial state.
    * two_cluster: centroids at +-separation_eps*epsilon/2 along the
      first axis, sizes (n1, n2), all members placed at their centroid.
      The first n1 agents form the upper cluster.
    """

    kind: str
    values: tuple = ()
    seed: int = 0
    separation_eps: float = 0.0
    sizes: tuple[int, int] = (0, 0)

    def build(self, n: int, d: int, epsilon: float) -> np.ndarray:
        if self.kind == "explicit":
            x = np.asarray(self.values, dtype=np.float64)
            if x.shape != (n, d):
                raise ValueError(f"explicit initial state has shape {x.shape}, want {(n, d)}")
            return x.copy()
        if self.kind == "uniform_box":
            key = run_keys(self.seed, [0])
            u = uniforms_at(key, [0], n * d)[0, 0]
            return (2.0 * u - 1.0).reshape(n, d)
        if self.kind == "two_cluster":
            n1, n2 = self.sizes
            if n1 + n2 != n or n1 < 1 or n2 < 1:
                raise ValueError(f"two_cluster sizes {self.sizes} incompatible with n={n}")
            x = np.zeros((n, d), dtype=np.float64)
            half = self.separation_eps * epsilon / 2.0
            x[:n1, 0] = half
            x[n1:, 0] = -half
            return x
        raise ValueError(f"unknown initial kind: {self.kind!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Full description of one dynamics instance.

    delta lives on the noise spec; the ``delta`` property is the single
    source of truth used in validation.
    """

    n: int
    d: int
    epsilon: float
    space_mode: str
    noise: NoiseSpec
    initial: InitialCondition
    allow_large_delta: bool = False

    @property
    def delta(self) -> float:
        return self.noise.delta


def validate_model_config(cfg: ModelConfig) -> list[str]:
    """Collect violations; empty list means the config is runnable."""
    problems: list[str] = []
    if cfg.n < 2:
        problems.append(f"need at least 2 agents, got n={cfg.n}")
    if cfg.d < 1:
        problems.append(f"dimension must be >= 1, got d={cfg.d}")
    if cfg.space_mode not in SPACE_MODES:
        problems.append(f"unknown space_mode: {cfg.space_mode!r}")
    if not np.isfinite(cfg.epsilon) or cfg.epsilon <= 0.0:
        problems.append(f"epsilon must be positive, got {cfg.epsilon}")
    elif cfg.space_mode == "bounded" and cfg.d >= 1:
        limit = 2.0 * np.sqrt(cfg.d)
        if cfg.epsilon > limit:
            problems.append(
                f"epsilon exceeds 2*sqrt(d) = {limit} (got {cfg.epsilon}); no pair "
                "could ever disconnect in bounded mode"
            )
    problems += validate_noise_spec(cfg.noise, cfg.epsilon, cfg.allow_large_delta)
    init = cfg.initial
    if init.kind not in INITIAL_KINDS:
        problems.append(f"unknown initial kind: {init.kind!r}")
    elif init.kind == "explicit":
        try:
            x = init.build(cfg.n, cfg.d, cfg.epsilon)
        except ValueError as err:
            problems.append(str(err))
        else:
            if cfg.space_mode == "bounded" and (x.min() < BOX_LO or x.max() > BOX_HI):
                problems.append("explicit initial states fall outside [-1, 1] in bounded mode")
    elif init.kind == "two_cluster":
        n1, n2 = init.sizes
        if n1 + n2 != cfg.n or n1 < 1 or n2 < 1:
            problems.append(f"two_cluster sizes {init.sizes} incompatible with n={cfg.n}")
        sep = init.separation_eps * cfg.epsilon
        need = _SQRT2 * cfg.epsilon + 2.0 * cfg.noise.delta
        if not sep > need:
            problems.append(
                f"two_cluster separation {sep} must exceed sqrt(2)*epsilon + 2*delta = {need}"
            )
        if cfg.space_mode == "bounded" and sep / 2.0 > BOX_HI:
            problems.append("two_cluster centroids fall outside [-1, 1] in bounded mode")
    return problems
