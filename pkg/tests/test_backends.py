"""Backend parity: compiled kernel vs numpy fallback on identical tapes."""

import numpy as np
import pytest

import quadralg.expressions as ex
from quadralg.evaluation import BACKEND_NAME, compile_exprs
from quadralg import _evalpy

_evalcore = pytest.importorskip("quadralg._evalcore")


def _run(backend, tape, bindings, n):
    slots = np.zeros((tape.n_slots, n), dtype=np.complex128)
    for s, v in tape.const_slots:
        slots[s] = v
    for name, s in tape.var_slots.items():
        slots[s] = bindings[name]
    with np.errstate(all="ignore"):
        backend.run(tape.ops, tape.dest, tape.arg1, tape.arg2, slots)
    return [slots[r] for r in tape.roots]


TEXTS = ["x^2 + y^2", "sin(x)*cos(y)", "exp(-(y + i*x)/2)", "1/(x - i*y)",
         "tan(x)/(y + 2)", "sqrt(x + 3)", "ln(x + 2)^3", "x^y",
         "x^64", "x^(-64)", "-(x*y) + x/y"]


def test_backend_name_valid():
    assert BACKEND_NAME in ("compiled", "python")


def test_parity_on_random_points():
    exprs = [ex.parse(t) for t in TEXTS]
    tape = compile_exprs(exprs)
    rng = np.random.default_rng(11)
    n = 257
    bindings = {name: rng.uniform(0.3, 1.4, n) + 1j * rng.uniform(-0.3, 0.3, n)
                for name in tape.var_slots}
    out_py = _run(_evalpy, tape, bindings, n)
    out_c = _run(_evalcore, tape, bindings, n)
    for t, a, b in zip(TEXTS, out_py, out_c):
        scale = np.maximum(1.0, np.abs(a))
        assert np.max(np.abs(a - b) / scale) < 1e-12, t


def test_integer_power_semantics_match():
    # integer powers are repeated multiplication in both backends,
    # including negative exponents
    exprs = [ex.parse("x^7"), ex.parse("x^(-7)"), ex.parse("x^0")]
    tape = compile_exprs(exprs)
    x = np.array([0.5 - 0.2j, 2.0 + 1.0j])
    out_py = _run(_evalpy, tape, {"x": x}, 2)
    out_c = _run(_evalcore, tape, {"x": x}, 2)
    for a, b in zip(out_py, out_c):
        assert np.allclose(a, b, rtol=1e-13)
    assert np.allclose(out_py[2], 1.0)
