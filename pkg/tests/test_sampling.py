"""Randomized identity testing: domains, determinism, singular rejection."""

import numpy as np
import pytest

import quadralg.expressions as ex
from quadralg.sampling import (DomainBox, DomainTooSingularError,
                               equivalence_stats, equivalent, identity_stats,
                               is_zero)


def test_sampling_deterministic_given_seed():
    box = DomainBox(intervals={})
    a = box.sample({"x", "y"}, 8, box.rng(0))
    b = box.sample({"x", "y"}, 8, box.rng(0))
    for k in a:
        assert np.array_equal(a[k], b[k])
    c = box.sample({"x", "y"}, 8, box.rng(1))
    assert not np.array_equal(a["x"], c["x"])


def test_with_seed_changes_draws():
    box = DomainBox(intervals={})
    a = box.sample({"x"}, 8, box.rng(0))
    b = box.with_seed(99).sample({"x"}, 8, box.with_seed(99).rng(0))
    assert not np.array_equal(a["x"], b["x"])


def test_equivalent_accepts_identity():
    box = DomainBox(intervals={})
    ok, stats = equivalent(ex.parse("sin(x)^2 + cos(x)^2"), ex.ONE, box)
    assert ok and stats.max_residual < 1e-12


def test_equivalent_rejects_near_miss():
    box = DomainBox(intervals={})
    ok, stats = equivalent(ex.parse("x + 1e-4"), ex.parse("x"), box)
    assert not ok


def test_identity_stats_scale_normalized():
    box = DomainBox(intervals={})
    # huge terms cancelling exactly: residual must be relative, hence tiny
    t1 = ex.parse("1e12*x")
    t2 = ex.parse("-(1e12*x)")
    stats = identity_stats([t1, t2], box, samples=32)
    assert stats.max_residual < 1e-10


def test_singular_domain_raises():
    box = DomainBox(intervals={"x": ((-1e-9, 1e-9), (0.0, 0.0))})
    with pytest.raises(DomainTooSingularError):
        identity_stats([ex.parse("1/x/1e300")], box, samples=32)


def test_pole_samples_rejected_not_fatal():
    # 1/x on a box crossing zero rejects some samples but still reports
    box = DomainBox(intervals={"x": ((-1.0, 1.0), (0.0, 0.0))}, cap=1e6)
    stats = is_zero(ex.parse("1/(x*1e9) - 1/(x*1e9)"), box, samples=64)
    assert stats.n_accepted >= 32
