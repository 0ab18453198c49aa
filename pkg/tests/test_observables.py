"""Momentum polynomials and the Poisson bracket."""

import numpy as np
import pytest

import quadralg.expressions as ex
from quadralg.observables import (Observable, PhasePoint, evaluate_observable,
                                  from_expression, is_constant_of_motion,
                                  momentum, multiply, poisson_bracket)
from quadralg.sampling import DomainBox

BOX = DomainBox(intervals={})
COORDS = ("x", "y")


def _random_observable(rng, max_deg=2):
    terms = {}
    for _ in range(rng.integers(1, 4)):
        d1, d2 = int(rng.integers(0, max_deg + 1)), int(rng.integers(0, max_deg + 1))
        c = rng.choice(["x", "y", "x*y", "sin(x)", "x^2 + 1", "exp(y)", "3"])
        terms[(d1, d2)] = ex.parse(str(c))
    return Observable(terms, COORDS)


def _random_point(rng):
    return PhasePoint(COORDS,
                      complex(rng.uniform(0.3, 1.2), rng.uniform(-0.2, 0.2)),
                      complex(rng.uniform(0.3, 1.2), rng.uniform(-0.2, 0.2)),
                      complex(rng.uniform(-1, 1), rng.uniform(-0.2, 0.2)),
                      complex(rng.uniform(-1, 1), rng.uniform(-0.2, 0.2)))


def _value(obs, pt):
    return evaluate_observable(obs, pt)


def test_antisymmetry():
    rng = np.random.default_rng(5)
    for _ in range(50):
        f, g = _random_observable(rng), _random_observable(rng)
        total = poisson_bracket(f, g) + poisson_bracket(g, f)
        for _ in range(2):
            pt = _random_point(rng)
            scale = max(1.0, abs(_value(f, pt)), abs(_value(g, pt)))
            assert abs(_value(total, pt)) / scale < 1e-9


def test_bracket_with_self_vanishes():
    rng = np.random.default_rng(6)
    for _ in range(10):
        f = _random_observable(rng)
        br = poisson_bracket(f, f)
        for _ in range(5):
            pt = _random_point(rng)
            assert abs(_value(br, pt)) < 1e-9 * max(1.0, abs(_value(f, pt)))


def test_jacobi_identity_numerically():
    rng = np.random.default_rng(7)
    f, g, h = (_random_observable(rng) for _ in range(3))
    jac = (poisson_bracket(f, poisson_bracket(g, h))
           + poisson_bracket(g, poisson_bracket(h, f))
           + poisson_bracket(h, poisson_bracket(f, g)))
    for _ in range(100):
        pt = _random_point(rng)
        v = _value(jac, pt)
        scale = max(1.0, abs(_value(f, pt)), abs(_value(g, pt)),
                    abs(_value(h, pt)))
        assert abs(v) / scale < 1e-9


def test_leibniz_rule_numerically():
    rng = np.random.default_rng(8)
    f, g, h = (_random_observable(rng) for _ in range(3))
    lhs = poisson_bracket(f, multiply(g, h))
    rhs = (multiply(poisson_bracket(f, g), h)
           + multiply(g, poisson_bracket(f, h)))
    diff = lhs - rhs
    for _ in range(100):
        pt = _random_point(rng)
        assert abs(_value(diff, pt)) < 1e-9 * max(
            1.0, abs(_value(lhs, pt)))


def test_bracket_degree_bound():
    rng = np.random.default_rng(9)
    for _ in range(20):
        f, g = _random_observable(rng), _random_observable(rng)
        br = poisson_bracket(f, g)
        if br.terms:
            assert br.degree <= f.degree + g.degree - 1


def test_momentum_and_from_expression():
    p1 = momentum(1, coords=COORDS)
    x = from_expression(ex.parse("x"), coords=COORDS)
    br = poisson_bracket(x, p1)
    pt = _random_point(np.random.default_rng(1))
    assert _value(br, pt) == pytest.approx(1.0)  # {x, p1} = 1


def test_multiply_matches_pointwise_product():
    rng = np.random.default_rng(10)
    f, g = _random_observable(rng), _random_observable(rng)
    prod = multiply(f, g)
    for _ in range(20):
        pt = _random_point(rng)
        assert _value(prod, pt) == pytest.approx(_value(f, pt) * _value(g, pt),
                                                 rel=1e-12, abs=1e-12)


def test_is_constant_of_motion_flags_bad_candidate():
    from quadralg import catalog
    s = catalog.builtin("sphere_1param")
    h = s.hamiltonian()
    good = is_constant_of_motion(h, s.symmetries["A1"], s.box, samples=32)
    assert good.verdict
    terms = dict(s.symmetries["A1"].terms)
    terms[(0, 2)] = ex.add(terms[(0, 2)], ex.constant(1e-3))
    bad = is_constant_of_motion(h, Observable(terms, s.coordinates),
                                s.box, samples=32)
    assert not bad.verdict


def test_observable_rejects_bad_keys():
    with pytest.raises((ValueError, TypeError)):
        Observable({(-1, 0): ex.ONE}, COORDS)
