"""Phase-space observables: momentum polynomials with Expression coefficients.

An Observable is a finite sum  sum_{(d1,d2)} c_{d1 d2}(q) * p1^d1 * p2^d2
where the coefficients are Expressions in the two coordinates (and any
parameters). Momentum algebra (products, momentum derivatives, degree
bookkeeping) is exact; only the coefficient functions are ever subjected to
randomized testing. The Poisson bracket is canonical:

    {F, G} = sum_j  dF/dq_j * dG/dp_j  -  dF/dp_j * dG/dq_j.
"""

from __future__ import annotations

import numpy as np

from . import expressions as ex
from .expressions import Expression, simplify_basic
from .sampling import DomainBox, ResidualStats, identity_stats

MomKey = tuple  # (d1, d2) degrees in p1, p2


def _clean_terms(terms: dict) -> dict:
    out = {}
    for key, coeff in terms.items():
        d1, d2 = key
        if d1 < 0 or d2 < 0 or d1 != int(d1) or d2 != int(d2):
            raise ValueError(f"bad momentum monomial {key!r}")
        c = simplify_basic(coeff if isinstance(coeff, Expression) else ex.as_expr(coeff))
        if c.kind == "const" and c.value == 0:
            continue
        cur = out.get((int(d1), int(d2)))
        out[(int(d1), int(d2))] = c if cur is None else simplify_basic(ex.add(cur, c))
    return {k: v for k, v in out.items()
            if not (v.kind == "const" and v.value == 0)}


class Observable:
    """Immutable sparse momentum polynomial."""

    __slots__ = ("terms", "degree", "coords")

    def __init__(self, terms: dict, coords=("x", "y")):
        object.__setattr__(self, "terms", _clean_terms(terms))
        object.__setattr__(self, "coords", tuple(coords))
        deg = max((d1 + d2 for d1, d2 in self.terms), default=0)
        object.__setattr__(self, "degree", deg)

    def __setattr__(self, *_):
        raise AttributeError("Observable is immutable")

    def coeff(self, d1: int, d2: int) -> Expression:
        return self.terms.get((d1, d2), ex.ZERO)

    def is_structurally_zero(self) -> bool:
        return not self.terms

    def free_names(self) -> frozenset:
        names = frozenset()
        for c in self.terms.values():
            names |= ex.free_names(c)
        return names

    def map_coeffs(self, fn) -> "Observable":
        return Observable({k: fn(c) for k, c in self.terms.items()}, self.coords)

    def __add__(self, other: "Observable") -> "Observable":
        _check_coords(self, other)
        merged = dict(self.terms)
        for k, c in other.terms.items():
            merged[k] = ex.add(merged[k], c) if k in merged else c
        return Observable(merged, self.coords)

    def __sub__(self, other: "Observable") -> "Observable":
        return self + other.scale(ex.constant(-1))

    def __neg__(self) -> "Observable":
        return self.scale(ex.constant(-1))

    def scale(self, factor: Expression) -> "Observable":
        """Multiply every coefficient by a momentum-free Expression."""
        return Observable({k: ex.mul(factor, c) for k, c in self.terms.items()},
                          self.coords)

    def __mul__(self, other: "Observable") -> "Observable":
        return multiply(self, other)

    def __repr__(self):
        parts = []
        for (d1, d2) in sorted(self.terms):
            mono = "".join(f"*p{i+1}^{d}" for i, d in enumerate((d1, d2)) if d)
            parts.append(f"({ex.to_text(self.terms[(d1, d2)])}){mono}")
        return "Observable[" + (" + ".join(parts) or "0") + "]"


def _check_coords(f: Observable, g: Observable):
    if f.coords != g.coords:
        raise ValueError(f"coordinate mismatch: {f.coords} vs {g.coords}")


def from_expression(coeff, d1=0, d2=0, coords=("x", "y")) -> Observable:
    return Observable({(d1, d2): ex.as_expr(coeff)}, coords)


def momentum(index: int, coords=("x", "y")) -> Observable:
    key = (1, 0) if index == 1 else (0, 1)
    return Observable({key: ex.ONE}, coords)


def multiply(f: Observable, g: Observable) -> Observable:
    _check_coords(f, g)
    out = {}
    for (m1, m2), c in f.terms.items():
        for (n1, n2), d in g.terms.items():
            key = (m1 + n1, m2 + n2)
            prod = ex.mul(c, d)
            out[key] = ex.add(out[key], prod) if key in out else prod
    return Observable(out, f.coords)


def poisson_bracket(f: Observable, g: Observable) -> Observable:
    """Canonical bracket; exact in momenta, symbolic in coordinates.

    Terms are accumulated in sorted monomial order so that {F,G} and -{G,F}
    build identical expression trees and antisymmetry holds exactly.
    """
    _check_coords(f, g)
    contributions = {}  # key -> list of (sign, Expression)
    for (m1, m2) in sorted(f.terms):
        c = f.terms[(m1, m2)]
        dc = [ex.differentiate(c, q) for q in f.coords]
        for (n1, n2) in sorted(g.terms):
            d = g.terms[(n1, n2)]
            dd = [ex.differentiate(d, q) for q in g.coords]
            for j, (mj, nj) in enumerate(((m1, n1), (m2, n2))):
                # d_q f * d_p g  term
                if nj > 0:
                    key = (m1 + n1, m2 + n2)
                    key = (key[0] - (j == 0), key[1] - (j == 1))
                    term = ex.mul(ex.constant(nj), ex.mul(dc[j], d))
                    contributions.setdefault(key, []).append((1, term))
                # d_p f * d_q g  term
                if mj > 0:
                    key = (m1 + n1, m2 + n2)
                    key = (key[0] - (j == 0), key[1] - (j == 1))
                    term = ex.mul(ex.constant(mj), ex.mul(c, dd[j]))
                    contributions.setdefault(key, []).append((-1, term))
    out = {}
    for key, parts in contributions.items():
        acc = None
        for sign, term in parts:
            if acc is None:
                acc = term if sign > 0 else ex.neg(term)
            else:
                acc = ex.add(acc, term) if sign > 0 else ex.sub(acc, term)
        out[key] = acc
    return Observable(out, f.coords)


class PhasePoint:
    """Complete numeric binding: coordinates, momenta, and parameters."""

    __slots__ = ("bindings",)

    def __init__(self, coords, q1, q2, p1, p2, params=None):
        b = {coords[0]: complex(q1), coords[1]: complex(q2),
             "p1": complex(p1), "p2": complex(p2)}
        for name, val in (params or {}).items():
            b[name] = complex(val)
        object.__setattr__(self, "bindings", b)

    def __setattr__(self, *_):
        raise AttributeError("PhasePoint is immutable")


class ObservableEvaluationError(ArithmeticError):
    def __init__(self, monomial, message):
        super().__init__(f"monomial {monomial}: {message}")
        self.monomial = monomial


def evaluate_observable(f: Observable, pt) -> complex:
    """Sum coeff(d1,d2) * p1^d1 * p2^d2 at a PhasePoint (or raw dict)."""
    from .evaluation import evaluate, EvaluationError
    bindings = pt.bindings if isinstance(pt, PhasePoint) else dict(pt)
    p1, p2 = bindings["p1"], bindings["p2"]
    total = 0j
    for (d1, d2), c in f.terms.items():
        try:
            val = evaluate(c, bindings) * p1 ** d1 * p2 ** d2
        except EvaluationError as err:
            raise ObservableEvaluationError((d1, d2), str(err)) from err
        if not (np.isfinite(val.real) and np.isfinite(val.imag)):
            raise ObservableEvaluationError((d1, d2), "non-finite value")
        total += val
    return total


def observable_identity_stats(f: Observable, box: DomainBox, samples=64,
                              tol=1e-8, stream=0, name="observable-zero"):
    """Per-monomial zero tests of an Observable's coefficients."""
    reports = []
    for i, key in enumerate(sorted(f.terms)):
        stats = identity_stats([f.terms[key]], box, samples=samples, tol=tol,
                               stream=stream + i, name=f"{name}[{key[0]},{key[1]}]")
        reports.append(stats)
    return reports


def is_constant_of_motion(h: Observable, f: Observable, box: DomainBox,
                          samples=64, tol=1e-8, stream=0):
    """Check {H,F}=0 coefficient-by-coefficient; returns a ConditionReport."""
    from .conditions import ConditionReport
    bracket = poisson_bracket(h, f)
    per_coeff = observable_identity_stats(bracket, box, samples=samples,
                                          tol=tol, stream=stream,
                                          name="bracket-coeff")
    return ConditionReport.from_stats("constant_of_motion", per_coeff, tol)
