"""Compilation of expression DAGs to flat tapes and batched evaluation.

Expressions are compiled once into an instruction tape (one instruction
per unique DAG node) and then evaluated over whole batches of complex
sample points.  Two backends implement identical tape semantics:

* ``quadralg._evalcore`` — compiled (Cython) kernel, used when available;
* ``quadralg._evalpy``   — vectorized numpy fallback.

Set QUADRALG_BACKEND=python|compiled to force one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .expressions import Expression, free_names

OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POWI = 7
OP_POW = 8
OP_SIN = 9
OP_COS = 10
OP_TAN = 11
OP_EXP = 12
OP_LN = 13
OP_SQRT = 14

_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "tan": OP_TAN,
             "exp": OP_EXP, "ln": OP_LN, "sqrt": OP_SQRT}
_BIN_OPS = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV}


class EvaluationError(ValueError):
    pass


class UnboundNameError(EvaluationError):
    pass


@dataclass
class Tape:
    """Flat program: slots [0, n_inputs) are preloaded constants/variables."""

    ops: np.ndarray          # int32 (n_instr,)
    arg1: np.ndarray         # int32 slot index
    arg2: np.ndarray         # int32 slot index, or exponent for OP_POWI
    dest: np.ndarray         # int32 slot index
    n_slots: int
    const_slots: list = field(default_factory=list)   # (slot, complex value)
    var_slots: dict = field(default_factory=dict)     # name -> slot
    roots: list = field(default_factory=list)         # slot per requested root


def compile_exprs(exprs) -> Tape:
    """Compile one tape evaluating every expression in exprs (shared CSE)."""
    exprs = list(exprs)
    slot_of: dict[int, int] = {}
    const_slots: list = []
    var_slots: dict = {}
    instrs: list = []
    n = 0

    def alloc():
        nonlocal n
        n += 1
        return n - 1

    def emit(node: Expression) -> int:
        got = slot_of.get(id(node))
        if got is not None:
            return got
        k = node.kind
        if k == "const":
            s = alloc()
            const_slots.append((s, complex(node.value)))
        elif k in ("var", "param"):
            s = var_slots.get(node.name)
            if s is None:
                s = alloc()
                var_slots[node.name] = s
        elif k == "neg":
            a = emit(node.args[0])
            s = alloc()
            instrs.append((OP_NEG, s, a, 0))
        elif k == "call":
            a = emit(node.args[0])
            s = alloc()
            instrs.append((_FUNC_OPS[node.name], s, a, 0))
        elif k == "pow" and node.args[1].kind == "const" \
                and isinstance(node.args[1].value, int) \
                and abs(node.args[1].value) <= 64:
            a = emit(node.args[0])
            s = alloc()
            instrs.append((OP_POWI, s, a, node.args[1].value))
        elif k in _BIN_OPS or k == "pow":
            a = emit(node.args[0])
            b = emit(node.args[1])
            s = alloc()
            instrs.append((_BIN_OPS.get(k, OP_POW), s, a, b))
        else:
            raise AssertionError(k)
        slot_of[id(node)] = s
        return s

    roots = [emit(e) for e in exprs]
    arr = np.asarray(instrs, dtype=np.int64).reshape(-1, 4)
    return Tape(ops=arr[:, 0].astype(np.int32), dest=arr[:, 1].astype(np.int32),
                arg1=arr[:, 2].astype(np.int32), arg2=arr[:, 3].astype(np.int32),
                n_slots=n, const_slots=const_slots, var_slots=var_slots, roots=roots)


def _load_backend():
    choice = os.environ.get("QUADRALG_BACKEND", "auto")
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(f"bad QUADRALG_BACKEND {choice!r}")
    if choice != "python":
        try:
            from . import _evalcore
            return _evalcore, "compiled"
        except ImportError:
            if choice == "compiled":
                raise
    from . import _evalpy
    return _evalpy, "python"


_backend, BACKEND_NAME = _load_backend()


def run_tape(tape: Tape, bindings: dict, n_points: int | None = None) -> list[np.ndarray]:
    """Evaluate tape roots over a batch of points.

    bindings maps names to scalars or complex arrays of a common length.
    Returns one complex128 array per root; non-finite results are left in
    place for the caller to mask.
    """
    lengths = [np.size(v) for v in bindings.values() if np.ndim(v) > 0]
    if n_points is None:
        n_points = lengths[0] if lengths else 1
    for name in tape.var_slots:
        if name not in bindings:
            raise UnboundNameError(f"unbound variable or parameter {name!r}")
    slots = np.zeros((tape.n_slots, n_points), dtype=np.complex128)
    for s, v in tape.const_slots:
        slots[s] = v
    for name, s in tape.var_slots.items():
        slots[s] = np.asarray(bindings[name], dtype=np.complex128)
    with np.errstate(all="ignore"):
        _backend.run(tape.ops, tape.dest, tape.arg1, tape.arg2, slots)
    return [slots[r] for r in tape.roots]


# EvalContext is just a complete name->value binding (domain type alias).
EvalContext = dict


def evaluate(e: Expression, ctx: EvalContext) -> complex:
    """Evaluate a single expression at one point.

    Raises UnboundNameError for missing names and EvaluationError when the
    result is non-finite, so failures never leak into aggregates.
    """
    missing = free_names(e) - set(ctx)
    if missing:
        raise UnboundNameError(f"unbound names: {sorted(missing)}")
    tape = compile_exprs([e])
    (out,) = run_tape(tape, ctx, n_points=1)
    v = complex(out[0])
    if not (np.isfinite(v.real) and np.isfinite(v.imag)):
        raise EvaluationError(f"non-finite result {v!r}")
    return v
