"""Expression engine: parsing, printing, differentiation, simplification."""

import math

import numpy as np
import pytest

import quadralg.expressions as ex
from quadralg.evaluation import evaluate
from quadralg.sampling import DomainBox, equivalent

RNG = np.random.default_rng(20090120)

SAMPLE_TEXTS = [
    "x", "x + y", "x - y", "x*y", "x/y", "x^2", "x^(-2)", "-x",
    "2*x + 3*y", "sin(x)", "cos(x)^2 + sin(x)^2", "exp(-(y + i*x)/2)",
    "1/(x - i*y)", "a3/cos(theta)^2", "sqrt(x^2 + 1)", "tan(x)*exp(y)",
    "-(x^2)", "x - (y - 1)", "(x + y)/(x - y)", "x^2^3", "ln(x + 2)",
    "x*(y + 1)", "2 - -x",
]


def _ctx(names, rng=RNG):
    return {n: complex(rng.uniform(0.4, 1.3), rng.uniform(-0.2, 0.2))
            for n in names}


@pytest.mark.parametrize("text", SAMPLE_TEXTS)
def test_parse_print_round_trip_structural(text):
    e = ex.parse(text, param_names=("a3",))
    printed = ex.to_text(e)
    again = ex.parse(printed, param_names=("a3",))
    assert again is e, f"{text!r} -> {printed!r} reparses differently"


def test_hash_consing_identity():
    a = ex.parse("x + y*2")
    b = ex.parse("x + y*2")
    assert a is b


def test_imaginary_unit_literal():
    e = ex.parse("i*i")
    ctx = {}
    assert evaluate(e, ctx) == pytest.approx(-1.0)
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse("2i")


def test_syntax_error_reports_offset():
    with pytest.raises(ex.ExprSyntaxError) as err:
        ex.parse("x + * y")
    assert "4" in str(err.value) or "*" in str(err.value)


def test_unknown_function_rejected():
    with pytest.raises(ex.UnknownFunctionError):
        ex.parse("sinh(x)")


def test_power_is_right_associative():
    e = ex.parse("x^2^3")
    v = evaluate(e, {"x": 2.0 + 0j})
    assert v == pytest.approx(2.0 ** 8)


def test_unary_minus_precedence():
    # unary binds tighter than '^': -x^2 is (-x)^2
    assert evaluate(ex.parse("-x^2"), {"x": 3.0 + 0j}) == pytest.approx(9.0)
    assert evaluate(ex.parse("-(x^2)"), {"x": 3.0 + 0j}) == pytest.approx(-9.0)


@pytest.mark.parametrize("text,names", [
    ("x^3 + 2*x", ("x",)),
    ("sin(x)*cos(y)", ("x", "y")),
    ("exp(-(y + i*x)/2)", ("x", "y")),
    ("1/(x - i*y)", ("x", "y")),
    ("ln(x + 2)*sqrt(y + 3)", ("x", "y")),
    ("tan(x)/(y + 2)", ("x", "y")),
    ("x^y", ("x", "y")),
])
def test_derivative_matches_finite_difference(text, names):
    e = ex.parse(text)
    rng = np.random.default_rng(7)
    for var in names:
        de = ex.differentiate(e, var)
        for _ in range(10):
            ctx = _ctx(names, rng)
            h = 1e-6
            up = dict(ctx, **{var: ctx[var] + h})
            dn = dict(ctx, **{var: ctx[var] - h})
            fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
            sym = evaluate(de, ctx)
            denom = max(1.0, abs(sym))
            assert abs(sym - fd) / denom < 1e-5, (text, var)


def test_derivative_linearity():
    f = ex.parse("sin(x)*x")
    g = ex.parse("x^2 + ln(x + 2)")
    lhs = ex.differentiate(ex.add(f, g), "x")
    rhs = ex.add(ex.differentiate(f, "x"), ex.differentiate(g, "x"))
    box = DomainBox(intervals={})
    ok, stats = equivalent(lhs, rhs, box, samples=32)
    assert ok, stats


def test_derivative_of_parameter_by_name():
    v = ex.parse("a3/cos(theta)^2", param_names=("a3",))
    dv = ex.differentiate(v, "a3")
    ok, _ = equivalent(dv, ex.parse("1/cos(theta)^2"),
                       DomainBox(intervals={}), samples=16)
    assert ok
    assert ex.differentiate(v, "phi") is ex.ZERO


def test_substitute():
    e = ex.parse("x^2 + y")
    s = ex.substitute(e, {"x": ex.parse("y + 1")})
    assert evaluate(s, {"y": 2.0 + 0j}) == pytest.approx(11.0)


def test_simplify_basic_preserves_value():
    rng = np.random.default_rng(3)
    for text in SAMPLE_TEXTS:
        e = ex.parse(text, param_names=("a3",))
        s = ex.simplify_basic(e)
        ctx = _ctx(sorted(ex.free_names(e)), rng)
        a, b = evaluate(e, ctx), evaluate(s, ctx)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a)), text


def test_simplify_kills_zero_terms():
    assert ex.simplify_basic(ex.parse("x*0 + 0*y")) is ex.ZERO
    assert ex.simplify_basic(ex.mul(ex.ONE, ex.parse("x"))) is ex.parse("x")


def test_free_names():
    e = ex.parse("a3*sin(x)/y", param_names=("a3",))
    assert ex.free_names(e) == {"a3", "x", "y"}
