"""Exact law oracle for the micro-instance used by the acceptance suite.

The reference law below was derived by hand for n=2, d=1, epsilon=1,
delta=1/2, x(0)=(-1, 1), bounded box [-1, 1], rademacher noise:

  gap 2 -> each agent is isolated, moves +-1/2, clamped at the walls.
  From (-1, 1): four equally likely next states; (-1/2, 1/2) hits.
  The reachable gap takes values in {2, 3/2, 1} with transitions that
  give P(T=1)=1/4, P(T=2)=5/16, P(T=3)=11/64, P(T>3)=17/64.
"""

from fractions import Fraction

import pytest

from hklab.enumeration import (
    EnumerationTooLarge,
    exact_stopping_law,
    outcome_bits,
    survival_points,
)
from hklab.model import InitialCondition, ModelConfig
from hklab.noise import NoiseSpec


def _micro_cfg():
    return ModelConfig(
        n=2,
        d=1,
        epsilon=1.0,
        space_mode="bounded",
        noise=NoiseSpec("rademacher_axes", 0.5),
        initial=InitialCondition("explicit", values=((-1.0,), (1.0,))),
    )


def test_exact_law_micro_instance():
    pmf, censored = exact_stopping_law(_micro_cfg(), horizon=3)
    assert pmf[0] == 0
    assert pmf[1] == Fraction(1, 4)
    assert pmf[2] == Fraction(5, 16)
    assert pmf[3] == Fraction(11, 64)
    assert censored == Fraction(17, 64)
    assert sum(pmf.values()) + censored == 1


def test_law_extends_consistently():
    # Longer horizons only move mass out of the censored bucket.
    pmf3, cens3 = exact_stopping_law(_micro_cfg(), horizon=3)
    pmf6, cens6 = exact_stopping_law(_micro_cfg(), horizon=6)
    for t in range(4):
        assert pmf6[t] == pmf3[t]
    assert cens6 < cens3
    assert sum(pmf6.values()) + cens6 == 1


def test_survival_points():
    pmf, censored = exact_stopping_law(_micro_cfg(), horizon=3)
    s = survival_points(pmf, censored, [0, 1, 2, 3, 4])
    assert s[0] == 1
    assert s[1] == 1  # no mass at t=0
    assert s[2] == Fraction(3, 4)
    assert s[3] == Fraction(7, 16)
    assert s[4] == Fraction(17, 64)


def test_absorbed_at_start():
    cfg = ModelConfig(
        n=2,
        d=1,
        epsilon=1.0,
        space_mode="bounded",
        noise=NoiseSpec("rademacher_axes", 0.5),
        initial=InitialCondition("explicit", values=((0.25,), (-0.25,))),
    )
    pmf, censored = exact_stopping_law(cfg, horizon=2)
    assert pmf[0] == 1
    assert censored == 0


def test_outcome_budget_enforced():
    assert outcome_bits(2, 1, 12) == 24
    exact_stopping_law(_micro_cfg(), horizon=12)
    with pytest.raises(EnumerationTooLarge, match="2\\^24 budget"):
        exact_stopping_law(_micro_cfg(), horizon=13)


def test_non_rademacher_rejected():
    cfg = ModelConfig(
        n=2,
        d=1,
        epsilon=1.0,
        space_mode="bounded",
        noise=NoiseSpec("uniform_ball", 0.5),
        initial=InitialCondition("explicit", values=((-1.0,), (1.0,))),
    )
    with pytest.raises(ValueError, match="rademacher_axes"):
        exact_stopping_law(cfg, horizon=2)


def test_unbounded_micro_instance_differs():
    # Without the wall clamp the gap can also grow, so less mass hits
    # early; the t=1 probability is still 1/4 (walls play no role in
    # one step from gap 2).
    cfg = ModelConfig(
        n=2,
        d=1,
        epsilon=1.0,
        space_mode="unbounded",
        noise=NoiseSpec("rademacher_axes", 0.5),
        initial=InitialCondition("explicit", values=((-1.0,), (1.0,))),
    )
    pmf_u, cens_u = exact_stopping_law(cfg, horizon=3)
    pmf_b, cens_b = exact_stopping_law(_micro_cfg(), horizon=3)
    assert pmf_u[1] == pmf_b[1] == Fraction(1, 4)
    assert pmf_u[2] < pmf_b[2]
    assert cens_u > cens_b
