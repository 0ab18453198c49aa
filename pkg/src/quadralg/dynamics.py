"""Trajectory integration and conservation-drift measurement.

Hamilton's equations are assembled symbolically from a system's
Hamiltonian (kinetic convention H = sum g^{ij} p_i p_j + V, without the
textbook 1/2 — flows are twice as fast as the usual convention) and
integrated in real arithmetic with a fixed step. Two integrators are
provided: classical RK4 and a Strang kick/drift/kick splitting whose drift
stage advances the purely kinetic flow.

Only systems flagged real_dynamics are integrable here; complex systems
have no real flow to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .expressions import Expression
from .observables import Observable, PhasePoint

METHODS = ("rk4", "leapfrog-split")
DEFAULT_CAP = 1e12


class DynamicsError(ValueError):
    pass


class ComplexSystemError(DynamicsError):
    pass


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray        # (n,)
    states: np.ndarray       # (n, 4): q1, q2, p1, p2
    integrator: str
    dt: float
    completed: bool = True
    abort_reason: str = None

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]

    def to_csv(self, path=None) -> str:
        lines = ["t,x,y,p1,p2"]
        for t, (q1, q2, p1, p2) in zip(self.times, self.states):
            lines.append(f"{t:.17g},{q1:.17g},{q2:.17g},{p1:.17g},{p2:.17g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# scalar code generation for the right-hand side
# ---------------------------------------------------------------------------

_FUNCS = {"sin": math.sin, "cos": math.cos, "tan": math.tan,
          "exp": math.exp, "ln": math.log, "sqrt": math.sqrt}


def compile_real_rhs(exprs, arg_names, param_values):
    """Python function (a1, a2, a3, a4) -> tuple of len(exprs) floats.

    Shared subexpressions are emitted once (the expression nodes are
    hash-consed, so object identity is subexpression identity). Complex
    constants are rejected: real flows only.
    """
    names = {}
    lines = []
    counter = [0]

    def emit(node) -> str:
        key = id(node)
        if key in names:
            return names[key]
        k = node.kind
        if k == "const":
            v = node.value
            if isinstance(v, complex):
                if v.imag != 0:
                    raise ComplexSystemError(
                        "complex constant in real dynamics")
                v = v.real
            return repr(float(v))
        if k in ("var", "param"):
            if node.name in arg_names:
                return f"_a{arg_names.index(node.name)}"
            if node.name in param_values:
                val = param_values[node.name]
                val = complex(val)
                if val.imag != 0:
                    raise ComplexSystemError(
                        "complex parameter value in real dynamics")
                return repr(val.real)
            raise DynamicsError(f"unbound name {node.name!r}")
        if k == "neg":
            code = f"(-{emit(node.args[0])})"
        elif k in ("add", "sub", "mul", "div"):
            op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
            code = f"({emit(node.args[0])} {op} {emit(node.args[1])})"
        elif k == "pow":
            code = f"({emit(node.args[0])} ** {emit(node.args[1])})"
        elif k == "call":
            code = f"{node.name}({emit(node.args[0])})"
        else:  # pragma: no cover - parser emits no other kinds
            raise DynamicsError(f"cannot compile node kind {k!r}")
        counter[0] += 1
        tmp = f"_t{counter[0]}"
        lines.append(f"    {tmp} = {code}")
        names[key] = tmp
        return tmp

    roots = [emit(e) for e in exprs]
    src = ("def _rhs(_a0, _a1, _a2, _a3):\n"
           + "\n".join(lines) + ("\n" if lines else "")
           + "    return (" + ", ".join(roots) + ")\n")
    glb = dict(_FUNCS)
    exec(src, glb)
    return glb["_rhs"]


def _observable_expr(obs: Observable) -> Expression:
    p1, p2 = ex.variable("p1"), ex.variable("p2")
    total = ex.ZERO
    for (d1, d2), c in sorted(obs.terms.items()):
        term = c
        for _ in range(d1):
            term = ex.mul(term, p1)
        for _ in range(d2):
            term = ex.mul(term, p2)
        total = ex.add(total, term)
    return ex.simplify_basic(total)


def hamilton_rhs_exprs(system):
    """(dq1/dt, dq2/dt, dp1/dt, dp2/dt) as Expressions in (q1,q2,p1,p2)."""
    h = _observable_expr(system.hamiltonian())
    q1, q2 = system.coordinates
    return (ex.differentiate(h, "p1"), ex.differentiate(h, "p2"),
            ex.simplify_basic(ex.neg(ex.differentiate(h, q1))),
            ex.simplify_basic(ex.neg(ex.differentiate(h, q2))))


def _initial_tuple(initial):
    if isinstance(initial, PhasePoint):
        vals = (initial.q1, initial.q2, initial.p1, initial.p2)
        params = dict(initial.params or {})
    else:
        vals, params = initial, {}
    out = []
    for v in vals:
        v = complex(v)
        if v.imag != 0:
            raise ComplexSystemError("complex initial condition")
        out.append(v.real)
    return tuple(out), params


def integrate(system, initial, dt: float, t_end: float, method: str = "rk4",
              params: dict = None, cap: float = DEFAULT_CAP) -> Trajectory:
    """Fixed-step integration of Hamilton's equations."""
    if not system.real_dynamics:
        raise ComplexSystemError(
            f"system {system.name!r} is not flagged for real dynamics")
    if method not in METHODS:
        raise DynamicsError(f"unknown method {method!r}; choose from "
                            f"{', '.join(METHODS)}")
    if dt <= 0 or t_end <= 0:
        raise DynamicsError("dt and t_end must be positive")
    state0, init_params = _initial_tuple(initial)
    param_values = {**init_params, **(params or {})}
    missing = set(system.parameters) - set(param_values)
    if missing:
        raise DynamicsError(f"missing parameter values: {sorted(missing)}")

    arg_names = [system.coordinates[0], system.coordinates[1], "p1", "p2"]
    rhs = compile_real_rhs(hamilton_rhs_exprs(system), arg_names,
                           param_values)

    n_steps = int(math.floor(t_end / dt + 1e-9))
    times = np.arange(n_steps + 1) * dt
    states = np.empty((n_steps + 1, 4))
    states[0] = state0

    if method == "rk4":
        stepper = _make_rk4(rhs, dt)
    else:
        stepper = _make_leapfrog(system, rhs, param_values, arg_names, dt)

    y = state0
    for k in range(1, n_steps + 1):
        try:
            y = stepper(y)
        except (ValueError, OverflowError, ZeroDivisionError) as err:
            return Trajectory(times[:k], states[:k], method, dt,
                              completed=False,
                              abort_reason=f"step {k}: {err}")
        if not all(math.isfinite(v) and abs(v) <= cap for v in y):
            return Trajectory(times[:k], states[:k], method, dt,
                              completed=False,
                              abort_reason=f"step {k}: state magnitude "
                                           f"exceeded cap {cap:g}")
        states[k] = y
    return Trajectory(times, states, method, dt)


def _make_rk4(rhs, dt):
    def step(y):
        k1 = rhs(*y)
        k2 = rhs(*(y[j] + 0.5 * dt * k1[j] for j in range(4)))
        k3 = rhs(*(y[j] + 0.5 * dt * k2[j] for j in range(4)))
        k4 = rhs(*(y[j] + dt * k3[j] for j in range(4)))
        return tuple(y[j] + dt / 6.0 *
                     (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
                     for j in range(4))
    return step


def _make_leapfrog(system, full_rhs, param_values, arg_names, dt):
    """Strang splitting: half potential kick, kinetic drift, half kick.

    The kinetic flow (metric depends on position) is advanced by RK4
    substeps on the free Hamiltonian; the potential kicks are exact.
    """
    q1, q2 = system.coordinates
    v = system.potential
    kick = compile_real_rhs(
        (ex.simplify_basic(ex.neg(ex.differentiate(v, q1))),
         ex.simplify_basic(ex.neg(ex.differentiate(v, q2)))),
        arg_names, param_values)
    hfree = _observable_expr(system.free_hamiltonian())
    drift_rhs = compile_real_rhs(
        (ex.differentiate(hfree, "p1"), ex.differentiate(hfree, "p2"),
         ex.simplify_basic(ex.neg(ex.differentiate(hfree, q1))),
         ex.simplify_basic(ex.neg(ex.differentiate(hfree, q2)))),
        arg_names, param_values)
    drift = _make_rk4(drift_rhs, dt)

    def step(y):
        g1, g2 = kick(*y)
        y = (y[0], y[1], y[2] + 0.5 * dt * g1, y[3] + 0.5 * dt * g2)
        y = drift(y)
        g1, g2 = kick(*y)
        return (y[0], y[1], y[2] + 0.5 * dt * g1, y[3] + 0.5 * dt * g2)
    return step


def conservation_drift(system, trajectory: Trajectory,
                       params: dict = None) -> dict:
    """Per-symmetry max_t |L(t) - L(0)| / max(1, |L(0)|)."""
    from .evaluation import compile_exprs, run_tape
    if len(trajectory) == 0:
        raise DynamicsError("empty trajectory")
    param_values = dict(params or {})
    q1, q2 = system.coordinates
    bindings = {q1: trajectory.states[:, 0].astype(complex),
                q2: trajectory.states[:, 1].astype(complex),
                "p1": trajectory.states[:, 2].astype(complex),
                "p2": trajectory.states[:, 3].astype(complex)}
    for p, val in param_values.items():
        bindings[p] = np.full(len(trajectory), complex(val))
    exprs = [_observable_expr(obs) for obs in system.symmetries.values()]
    tape = compile_exprs(exprs)
    values = run_tape(tape, bindings, n_points=len(trajectory))
    drifts = {}
    for name, series in zip(system.symmetries, values):
        ref = series[0]
        drift = float(np.max(np.abs(series - ref))) / max(1.0, abs(ref))
        drifts[name] = drift
    return drifts
