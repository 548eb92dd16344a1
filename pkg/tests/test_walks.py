"""Walk oracles: first passage, stretched recursion, recurrence, gap walk."""

import numpy as np
import pytest

from hklab.engine import run_batch
from hklab.model import InitialCondition, ModelConfig
from hklab.noise import NoiseSpec, noise_block
from hklab.prng import run_keys
from hklab.walks import (
    SIMPLE_STEP,
    ClusterWalkSpec,
    StretchedWalkSpec,
    WalkSpec,
    cluster_gap_endpoints,
    cluster_gap_path,
    cluster_gap_walk,
    first_passage_below,
    recurrence_profile,
    stretched_first_passage,
    validate_walk_spec,
)


def test_simple_step_is_unit_signs():
    xi = noise_block(SIMPLE_STEP, run_keys(0, np.arange(4)), [1, 2, 3], 1, 1)
    assert set(np.unique(xi)) == {-1.0, 1.0}


def test_first_passage_first_step_probability():
    # From 0 with +-1 steps, T = 1 exactly when the first step is -1.
    spec = WalkSpec(dim=1)
    samples = first_passage_below(spec, 0.0, base_seed=2, run_indices=np.arange(4000), horizon=4)
    frac = np.mean([s.hit and s.t_hit == 1 for s in samples])
    assert abs(frac - 0.5) < 3 * 0.5 / np.sqrt(4000)


def test_first_passage_matches_manual_replay():
    spec = WalkSpec(dim=1)
    horizon = 300
    idx = np.arange(40)
    samples = first_passage_below(spec, 0.0, base_seed=9, run_indices=idx, horizon=horizon)
    steps = noise_block(SIMPLE_STEP, run_keys(9, idx), np.arange(1, horizon + 1), 1, 1)[:, :, 0, 0]
    path = np.cumsum(steps, axis=1)
    for k, s in enumerate(samples):
        below = np.flatnonzero(path[k] <= 0.0)
        if below.size:
            assert s.hit and s.t_hit == below[0] + 1
            assert s.end_value == path[k, below[0]]
        else:
            assert not s.hit and s.t_hit == horizon
            assert s.end_value == path[k, -1]


def test_first_passage_crossing_values():
    # A +-1 walk cannot jump the level: a first hit after step one must
    # land exactly on 0, and only a first-step hit can land on -1.
    samples = first_passage_below(WalkSpec(dim=1), 0.0, 3, np.arange(500), 64)
    for s in samples:
        if s.hit:
            assert s.end_value == (-1.0 if s.t_hit == 1 else 0.0)


def test_first_passage_validation():
    with pytest.raises(ValueError, match="dim 1"):
        first_passage_below(WalkSpec(dim=2), 0.0, 0, [0], 10)
    with pytest.raises(ValueError, match="b must be <= 0"):
        first_passage_below(WalkSpec(dim=1), 0.5, 0, [0], 10)
    with pytest.raises(ValueError, match="horizon"):
        first_passage_below(WalkSpec(dim=1), 0.0, 0, [0], 0)


def test_stretched_beta_one_reduces_to_plain_walk():
    # With beta = 1 and a slack clip bound the recursion is the plain
    # walk, so the two oracles must agree sample by sample.
    idx = np.arange(200)
    plain = first_passage_below(WalkSpec(dim=1), 0.0, 5, idx, 200)
    stretched = stretched_first_passage(StretchedWalkSpec(beta=1.0, bound_m=2.0), 5, idx, 200)
    for p, s in zip(plain, stretched):
        assert (p.hit, p.t_hit, p.end_value) == (s.hit, s.t_hit, s.end_value)


def test_stretched_escape_is_flagged_not_iterated():
    # beta=2, M=1: once S*(beta-1) > M the run can never return; it is
    # censored with end_value inf instead of overflowing.
    samples = stretched_first_passage(
        StretchedWalkSpec(beta=2.0, bound_m=1.0), 11, np.arange(2000), 50
    )
    hits = [s for s in samples if s.hit]
    escapes = [s for s in samples if not s.hit]
    assert escapes and hits
    assert all(np.isinf(s.end_value) for s in escapes)
    assert all(s.end_value <= 0.0 for s in hits)
    # First-step hit probability is P{xi <= 0} = 1/2.
    frac1 = np.mean([s.hit and s.t_hit == 1 for s in samples])
    assert abs(frac1 - 0.5) < 3 * 0.5 / np.sqrt(2000)


def test_stretched_validation():
    assert validate_walk_spec(StretchedWalkSpec(beta=0.0, bound_m=1.0))
    assert validate_walk_spec(StretchedWalkSpec(beta=1.0, bound_m=0.0))
    assert validate_walk_spec("nonsense")


def test_recurrence_counts_dim1_grow_dim3_stabilize():
    idx = np.arange(256)
    one = recurrence_profile(WalkSpec(dim=1), 1.0, [100, 1_000, 10_000], 7, idx)
    # Recurrent walk: visit counts keep growing like sqrt(h).
    assert one.mean_visits[1] > 1.5 * one.mean_visits[0]
    assert one.mean_visits[2] > 2.0 * one.mean_visits[1]
    assert np.all(np.diff(one.visits, axis=1) >= 0)
    three = recurrence_profile(
        WalkSpec(dim=3, step=NoiseSpec("rademacher_axes", np.sqrt(3.0))), 1.0,
        [100, 1_000, 10_000], 7, idx,
    )
    # Transient walk: almost all visits happen early.
    assert three.mean_visits[2] < 1.2 * three.mean_visits[1]
    assert three.mean_visits[2] < one.mean_visits[2]
    # Diffusive endpoint scaling ||U(h)||/sqrt(h) stays order one.
    assert 0.5 < one.scaled_end_norm[2] < 1.5


def test_recurrence_horizon_zero_counts_start():
    prof = recurrence_profile(WalkSpec(dim=1), 1.0, [0, 16], 0, np.arange(8))
    np.testing.assert_array_equal(prof.visits[:, 0], np.ones(8))
    assert np.isnan(prof.scaled_end_norm[0])
    assert prof.mean_visits[1] >= 1.0


def test_cluster_gap_path_shapes_and_bound():
    spec = ClusterWalkSpec(n1=2, n2=3, noise=NoiseSpec("uniform_ball", 0.25), dim=2)
    y, z = cluster_gap_path(spec, base_seed=3, run_index=0, horizon=50)
    assert y.shape == (50, 2) and z.shape == (51, 2)
    np.testing.assert_array_equal(z[0], [0.0, 0.0])
    np.testing.assert_allclose(z[1:], np.cumsum(y, axis=0))
    # Each group mean has norm <= delta, so the difference stays <= 2*delta.
    norms = np.sqrt(np.sum(y * y, axis=1))
    assert np.all(norms <= 0.5)


def test_cluster_gap_endpoints_match_path():
    spec = ClusterWalkSpec(n1=2, n2=2, noise=SIMPLE_STEP, dim=1)
    _, z = cluster_gap_path(spec, base_seed=5, run_index=3, horizon=40)
    z40 = cluster_gap_endpoints(spec, 40, base_seed=5, run_indices=[3])
    np.testing.assert_array_equal(z40[0], z[-1])


def test_cluster_gap_endpoints_symmetric():
    spec = ClusterWalkSpec(n1=2, n2=2, noise=NoiseSpec("uniform_cube", 0.25), dim=1)
    z = cluster_gap_endpoints(spec, 400, base_seed=6, run_indices=np.arange(2000))[:, 0]
    # Z(t) is a sum of symmetric terms: mean 0, balanced signs.
    sd = z.std() / np.sqrt(z.size)
    assert abs(z.mean()) < 4 * sd
    assert abs(np.mean(z > 0) - 0.5) < 4 * 0.5 / np.sqrt(z.size)


def test_cluster_gap_walk_matches_manual_qmin():
    spec = ClusterWalkSpec(n1=2, n2=2, noise=NoiseSpec("uniform_cube", 0.25), dim=1)
    gap0, thr, horizon = 2.5, 0.5, 400
    idx = np.arange(30)
    samples = cluster_gap_walk(spec, [gap0], 8, idx, horizon, threshold=thr)
    xi = noise_block(spec.noise, run_keys(8, idx), np.arange(1, horizon + 1), 4, 1)
    y = xi[:, :, :2, 0].mean(axis=2) - xi[:, :, 2:, 0].mean(axis=2)
    z = np.concatenate([np.zeros((30, 1)), np.cumsum(y, axis=1)], axis=1)
    qmin = gap0 + z[:, :-1] + xi[:, :, :2, 0].min(axis=2) - xi[:, :, 2:, 0].max(axis=2)
    for k, s in enumerate(samples):
        below = np.flatnonzero(qmin[k] <= thr)
        if below.size:
            assert s.hit and s.t_hit == below[0] + 1
            assert s.end_value == qmin[k, below[0]]
        else:
            assert not s.hit


def test_cluster_walk_bounds_simulation_hit_times():
    # First-contact coupling: on shared streams the simulated group
    # cannot quasi-synchronize before the gap walk first dips to the
    # contact threshold, so T_sim >= T_Q run by run.
    noise = NoiseSpec("uniform_cube", 0.25, requires_symmetry=True)
    cfg = ModelConfig(
        n=4,
        d=1,
        epsilon=0.5,
        space_mode="unbounded",
        noise=noise,
        initial=InitialCondition("two_cluster", separation_eps=5.0, sizes=(2, 2)),
    )
    horizon = 2000
    idx = np.arange(64)
    sim = run_batch(cfg, 31, idx, horizon)
    walk = cluster_gap_walk(
        ClusterWalkSpec(n1=2, n2=2, noise=noise, dim=1),
        [2.5],
        31,
        idx,
        horizon,
        threshold=0.5,
    )
    sim_hits = 0
    for s, q in zip(sim.samples, walk):
        if s.hit:
            sim_hits += 1
            assert q.hit and q.t_hit <= s.t_hit
    assert sim_hits > 10  # the comparison must actually exercise hits


def test_cluster_gap_walk_ball_variant():
    spec = ClusterWalkSpec(n1=2, n2=2, noise=NoiseSpec("uniform_ball", 0.25), dim=3)
    samples = cluster_gap_walk(
        spec, [1.0, 0.0, 0.0], 0, np.arange(32), 500, radius=0.75
    )
    for s in samples:
        if s.hit:
            assert s.end_value <= 0.75
        else:
            assert s.end_value > 0.75


def test_cluster_gap_walk_validation():
    spec = ClusterWalkSpec(n1=2, n2=2, noise=SIMPLE_STEP, dim=2)
    with pytest.raises(ValueError, match="scalar"):
        cluster_gap_walk(spec, [1.0, 0.0], 0, [0], 10)
    with pytest.raises(ValueError, match="coordinates"):
        cluster_gap_walk(spec, [1.0], 0, [0], 10, radius=0.5)
    bad = ClusterWalkSpec(n1=0, n2=2, noise=SIMPLE_STEP, dim=1)
    with pytest.raises(ValueError, match="group sizes"):
        cluster_gap_walk(bad, [1.0], 0, [0], 10)


def test_hitting_sample_t_end():
    samples = first_passage_below(WalkSpec(dim=1), 0.0, 0, np.arange(20), 16)
    for s in samples:
        assert s.t_end == (s.t_hit if s.hit else 16)
