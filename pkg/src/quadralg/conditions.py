"""Residual evaluators for the scalar PDE conditions of 2D superintegrability.

Every operation here turns a symbolic condition into relative residuals at
random sample points (via sampling.identity_stats); nothing is ever solved
as a PDE. Conventions used throughout:

* conformal charts have H0 = (p1^2 + p2^2)/lambda; general charts pass the
  full 2x2 inverse-metric matrix g instead,
* derivatives of logarithms are always computed as f'/f, never via ln(f),
  so branch cuts cannot contaminate residuals,
* A = ln a12 (off-diagonal symmetry coefficient), rho = ln lambda.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from .expressions import Expression, differentiate as d, simplify_basic
from .sampling import (DEFAULT_SAMPLES, DEFAULT_TOL, DomainBox, ResidualStats,
                       identity_stats)

COORDS = ("x", "y")

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class ConditionReport:
    """Aggregated verdict over one or more residual statistics."""

    name: str
    parts: tuple
    tol: float
    details: dict = field(default_factory=dict)

    @classmethod
    def from_stats(cls, name, stats_list, tol, details=None):
        return cls(name=name, parts=tuple(stats_list), tol=tol,
                   details=dict(details or {}))

    @property
    def max_residual(self) -> float:
        return max((s.max_residual for s in self.parts), default=0.0)

    @property
    def mean_residual(self) -> float:
        if not self.parts:
            return 0.0
        return float(np.mean([s.mean_residual for s in self.parts]))

    @property
    def acceptance_rate(self) -> float:
        acc = sum(s.n_accepted for s in self.parts)
        tot = acc + sum(s.n_rejected for s in self.parts)
        return acc / tot if tot else 1.0

    @property
    def verdict(self) -> bool:
        return self.max_residual < self.tol and self.acceptance_rate >= 0.5

    def as_dict(self) -> dict:
        return {"check": self.name,
                "verdict": "pass" if self.verdict else "fail",
                "max_residual": self.max_residual,
                "mean_residual": self.mean_residual,
                "acceptance_rate": self.acceptance_rate,
                "tol": self.tol,
                "parts": [s.as_dict() for s in self.parts],
                "details": self.details}


def logd(f: Expression, var: str) -> Expression:
    """Derivative of ln f, computed as f'/f."""
    return simplify_basic(ex.div(d(f, var), f))


def _coords_of(coords):
    return tuple(coords) if coords else COORDS


@dataclass(frozen=True)
class InvariantSet:
    """The scalar differential invariants built from a12, lambda, and B1."""

    L1: Expression = None       # from A = ln a12
    L2: Expression = None
    K1: Expression = None       # from rho = ln lambda
    K2: Expression = None
    D: Expression = None        # from B1
    Lambda: Expression = None   # fundamental integrability combination
    Delta: Expression = None    # harmonicity of ln a12
    C: Expression = None        # A11 + A1^2 - A22 - A2^2


def build_invariants(lam=None, a12=None, b1=None, coords=None) -> InvariantSet:
    x, y = _coords_of(coords)
    fields = {}
    if a12 is not None:
        A1, A2 = logd(a12, x), logd(a12, y)
        A11, A12_, A22 = d(A1, x), d(A1, y), d(A2, y)
        A112, A122 = d(A12_, x), d(A12_, y)
        L1 = simplify_basic(ex.sub(A112, ex.mul(A12_, A1)))
        L2 = simplify_basic(ex.sub(A122, ex.mul(A12_, A2)))
        Delta = simplify_basic(
            ex.add(ex.add(A11, A22), ex.add(ex.pow_(A1, ex.constant(2)),
                                            ex.pow_(A2, ex.constant(2)))))
        C = simplify_basic(
            ex.sub(ex.add(A11, ex.pow_(A1, ex.constant(2))),
                   ex.add(A22, ex.pow_(A2, ex.constant(2)))))
        fields.update(L1=L1, L2=L2, Delta=Delta, C=C)
        if lam is not None:
            l1, l2 = d(lam, x), d(lam, y)
            l11, l22 = d(l1, x), d(l2, y)
            Lam = parse_sum([
                ex.sub(l22, l11),
                ex.neg(ex.mul(ex.constant(3), ex.mul(l1, A1))),
                ex.mul(ex.constant(3), ex.mul(l2, A2)),
                ex.neg(ex.mul(C, lam)),
            ])
            fields["Lambda"] = Lam
    if lam is not None:
        # K1 and K2 are the components of  grad(lap rho) - (lap rho) grad rho
        # (rho = ln lambda), whose joint vanishing is exactly constancy of
        # lap(ln lambda)/lambda. In the diagonalizing chart (lambda_12 = 0)
        # they reduce to the familiar third-order polynomial expressions in
        # the derivatives of rho.
        r1, r2 = logd(lam, x), logd(lam, y)
        lap = ex.add(d(r1, x), d(r2, y))
        K1 = parse_sum([d(lap, y), ex.neg(ex.mul(lap, r2))])
        K2 = parse_sum([ex.neg(d(lap, x)), ex.mul(lap, r1)])
        fields.update(K1=simplify_basic(K1), K2=simplify_basic(K2))
    if b1 is not None:
        B = b1
        B1, B2 = d(B, x), d(B, y)
        num = ex.mul(ex.constant(-2), ex.add(B2, ex.mul(B, B1)))
        den = ex.add(ex.pow_(B, ex.constant(2)), ex.ONE)
        fields["D"] = simplify_basic(ex.div(num, den))
    return InvariantSet(**fields)


def parse_sum(terms) -> Expression:
    acc = None
    for t in terms:
        acc = t if acc is None else ex.add(acc, t)
    return simplify_basic(acc if acc is not None else ex.ZERO)


def _as_matrix(a):
    """Accept ((a11,a12),(a12,a22)) or {'11':..} and return a 2x2 tuple."""
    if isinstance(a, dict):
        a11 = a.get("11", ex.ZERO)
        a12 = a.get("12", ex.ZERO)
        a22 = a.get("22", ex.ZERO)
        return ((ex.as_expr(a11), ex.as_expr(a12)),
                (ex.as_expr(a12), ex.as_expr(a22)))
    (a11, a12), (a21, a22) = a
    return ((ex.as_expr(a11), ex.as_expr(a12)),
            (ex.as_expr(a21), ex.as_expr(a22)))


def _report_from_identities(name, identities, box, samples, tol, details=None):
    """identities: list of (label, [term, term, ...]) summing to zero."""
    stats = []
    for i, (label, terms) in enumerate(identities):
        stats.append(identity_stats([simplify_basic(t) for t in terms], box,
                                    samples=samples, tol=tol, stream=i,
                                    name=label))
    return ConditionReport.from_stats(name, stats, tol, details)


# ---------------------------------------------------------------------------
# Killing tensors and Bertrand-Darboux
# ---------------------------------------------------------------------------

def killing_residuals(metric, a, box: DomainBox, samples=DEFAULT_SAMPLES,
                      tol=DEFAULT_TOL, coords=None) -> ConditionReport:
    """Check that the quadratic form a^{ij} is a Killing tensor.

    metric: either a conformal factor Expression (H0 = (p1^2+p2^2)/lambda),
    checked against the four first-order Killing equations, or a full 2x2
    inverse-metric matrix, checked via the bracket {H0, a-form} = 0.
    """
    x, y = _coords_of(coords)
    am = _as_matrix(a)
    if isinstance(metric, Expression):
        lam = metric
        r1, r2 = logd(lam, x), logd(lam, y)
        a11, a12, a22 = am[0][0], am[0][1], am[1][1]
        idents = [
            ("killing[i=1]", [d(a11, x), ex.mul(r1, a11), ex.mul(r2, a12)]),
            ("killing[i=2]", [d(a22, y), ex.mul(r1, a12), ex.mul(r2, a22)]),
            ("killing[i=1,j=2]", [ex.mul(ex.constant(2), d(a12, x)),
                                  d(a11, y), ex.mul(r1, a12),
                                  ex.mul(r2, a22)]),
            ("killing[i=2,j=1]", [ex.mul(ex.constant(2), d(a12, y)),
                                  d(a22, x), ex.mul(r1, a11),
                                  ex.mul(r2, a12)]),
        ]
        return _report_from_identities("killing_tensor", idents, box,
                                       samples, tol)
    # General metric: {H0, L0} = 0 coefficient conditions.
    from .observables import Observable, poisson_bracket
    g = _as_matrix(metric)
    h0 = Observable({(2, 0): g[0][0], (1, 1): ex.mul(ex.constant(2), g[0][1]),
                     (0, 2): g[1][1]}, (x, y))
    l0 = Observable({(2, 0): am[0][0], (1, 1): ex.mul(ex.constant(2), am[0][1]),
                     (0, 2): am[1][1]}, (x, y))
    br = poisson_bracket(h0, l0)
    idents = [(f"bracket-coeff[{k[0]},{k[1]}]", [c])
              for k, c in sorted(br.terms.items())]
    if not idents:
        idents = [("bracket-coeff[zero]", [ex.ZERO])]
    return _report_from_identities("killing_tensor", idents, box, samples, tol)


def bertrand_darboux_residual(metric, a, V: Expression, box: DomainBox,
                              samples=DEFAULT_SAMPLES, tol=DEFAULT_TOL,
                              coords=None) -> ConditionReport:
    """Compatibility of the scalar part equations g.gradW = a.gradV.

    The symmetry condition for S0 + W forces grad W = g^{-1} a grad V; the
    residual is the cross-derivative mismatch of that candidate gradient.
    For the conformal case this is exactly the classical second-order PDE
    in V (after multiplying through by lambda).
    """
    x, y = _coords_of(coords)
    am = _as_matrix(a)
    if isinstance(metric, Expression):
        g = ((ex.div(ex.ONE, metric), ex.ZERO),
             (ex.ZERO, ex.div(ex.ONE, metric)))
    else:
        g = _as_matrix(metric)
    v1, v2 = d(V, x), d(V, y)
    rhs1 = ex.add(ex.mul(am[0][0], v1), ex.mul(am[0][1], v2))
    rhs2 = ex.add(ex.mul(am[1][0], v1), ex.mul(am[1][1], v2))
    det = ex.sub(ex.mul(g[0][0], g[1][1]), ex.mul(g[0][1], g[1][0]))
    w1 = ex.div(ex.sub(ex.mul(g[1][1], rhs1), ex.mul(g[0][1], rhs2)), det)
    w2 = ex.div(ex.sub(ex.mul(g[0][0], rhs2), ex.mul(g[1][0], rhs1)), det)
    idents = [("cross-derivative", [d(w1, y), ex.neg(d(w2, x))])]
    return _report_from_identities("bertrand_darboux", idents, box,
                                   samples, tol)


# ---------------------------------------------------------------------------
# Special-coordinate structure and curvature
# ---------------------------------------------------------------------------

def special_coordinate_residuals(lam: Expression, a12: Expression,
                                 box: DomainBox, samples=DEFAULT_SAMPLES,
                                 tol=DEFAULT_TOL, coords=None) -> ConditionReport:
    """The three fundamental conditions in the diagonalizing chart."""
    x, y = _coords_of(coords)
    l1, l2 = d(lam, x), d(lam, y)
    l11, l12, l22 = d(l1, x), d(l1, y), d(l2, y)
    a1, a2 = d(a12, x), d(a12, y)
    a11, a22 = d(a1, x), d(a2, y)
    idents = [
        ("lambda_12", [l12]),
        ("a12-harmonic", [a11, a22]),
        ("third-condition", [ex.mul(a12, ex.sub(l11, l22)),
                             ex.mul(ex.constant(3), ex.mul(l1, a1)),
                             ex.neg(ex.mul(ex.constant(3), ex.mul(l2, a2))),
                             ex.mul(ex.sub(a11, a22), lam)]),
    ]
    return _report_from_identities("special_coordinates", idents, box,
                                   samples, tol)


def curvature_invariants(lam: Expression, box: DomainBox,
                         samples=DEFAULT_SAMPLES, tol=DEFAULT_TOL,
                         coords=None):
    """Return (K1, K2, ConditionReport testing K1=K2=0)."""
    inv = build_invariants(lam=lam, coords=coords)
    idents = [("K1", [inv.K1]), ("K2", [inv.K2])]
    report = _report_from_identities("constant_curvature", idents, box,
                                     samples, tol)
    return inv.K1, inv.K2, report


def symmetry_obstruction(a12: Expression, lam: Expression, box: DomainBox,
                         samples=DEFAULT_SAMPLES, tol=DEFAULT_TOL,
                         coords=None) -> ConditionReport:
    """The two third-order obstruction identities plus standalone L tests."""
    x, y = _coords_of(coords)
    inv = build_invariants(lam=lam, a12=a12, coords=coords)
    A1, A2 = logd(a12, x), logd(a12, y)
    r1, r2 = logd(lam, x), logd(lam, y)
    l1, l2 = d(lam, x), d(lam, y)
    a1, a2 = d(a12, x), d(a12, y)
    five = ex.constant(5)
    three = ex.constant(3)
    idents = [
        ("metric-side", [
            ex.mul(five, ex.mul(inv.L1, l1)),
            ex.neg(ex.mul(five, ex.mul(inv.L2, l2))),
            ex.mul(parse_sum([d(inv.L1, x), ex.neg(d(inv.L2, y)),
                              ex.mul(three, ex.mul(A1, inv.L1)),
                              ex.neg(ex.mul(three, ex.mul(A2, inv.L2)))]),
                   lam)]),
        ("symmetry-side", [
            ex.mul(five, ex.mul(inv.K1, a1)),
            ex.neg(ex.mul(five, ex.mul(inv.K2, a2))),
            ex.mul(parse_sum([d(inv.K1, x), ex.neg(d(inv.K2, y)),
                              ex.mul(three, ex.mul(r1, inv.K1)),
                              ex.neg(ex.mul(three, ex.mul(r2, inv.K2)))]),
                   a12)]),
        ("L1", [inv.L1]),
        ("L2", [inv.L2]),
    ]
    return _report_from_identities("symmetry_obstruction", idents, box,
                                   samples, tol)


# ---------------------------------------------------------------------------
# Canonical potential equations
# ---------------------------------------------------------------------------

def canonical_coeffs_nondegenerate(lam: Expression, a12: Expression,
                                   coords=None) -> dict:
    """A12, B12, A22, B22 of the 3-parameter canonical system."""
    x, y = _coords_of(coords)
    r1, r2 = logd(lam, x), logd(lam, y)
    A1, A2 = logd(a12, x), logd(a12, y)
    two, three = ex.constant(2), ex.constant(3)
    return {
        "A12": simplify_basic(ex.neg(r2)),
        "B12": simplify_basic(ex.neg(r1)),
        "A22": simplify_basic(ex.add(ex.mul(two, r1), ex.mul(three, A1))),
        "B22": simplify_basic(ex.sub(ex.neg(ex.mul(two, r2)),
                                     ex.mul(three, A2))),
    }


def nondegenerate_integrability(lam: Expression, a12: Expression,
                                box: DomainBox, samples=DEFAULT_SAMPLES,
                                tol=DEFAULT_TOL, coords=None) -> ConditionReport:
    """The three integrability conditions of the 3-parameter canonical system."""
    x, y = _coords_of(coords)
    c = canonical_coeffs_nondegenerate(lam, a12, coords)
    A12c, B12c, A22c, B22c = c["A12"], c["B12"], c["A22"], c["B22"]
    two = ex.constant(2)
    t1 = [ex.mul(two, d(B12c, y)), ex.neg(d(B22c, x)),
          ex.neg(ex.mul(two, d(A12c, x))), ex.neg(d(A22c, y))]
    t2 = [ex.mul(two, ex.mul(d(B12c, y), A22c)),
          ex.neg(ex.mul(A22c, d(B22c, x))),
          ex.neg(ex.mul(A22c, d(A12c, x))),
          ex.neg(ex.mul(two, ex.mul(A12c, d(B12c, x)))),
          ex.neg(d(d(A22c, x), y)),
          d(d(A12c, y), y),
          ex.mul(two, ex.mul(A12c, d(A12c, y))),
          ex.mul(B12c, d(A22c, y)),
          ex.neg(ex.mul(d(B22c, y), A12c)),
          ex.neg(ex.mul(B22c, d(A12c, y))),
          ex.neg(d(d(A12c, x), x))]
    t3 = [ex.neg(ex.mul(B12c, d(A22c, x))),
          ex.mul(two, ex.mul(d(A12c, y), B12c)),
          ex.mul(B22c, d(B12c, y)),
          ex.neg(ex.mul(B22c, d(B22c, x))),
          ex.neg(ex.mul(two, ex.mul(B12c, d(B12c, x)))),
          ex.neg(ex.mul(A22c, d(B12c, x))),
          ex.mul(A12c, d(B22c, x)),
          d(d(B12c, y), y),
          ex.neg(d(d(B22c, x), y)),
          ex.neg(d(d(B12c, x), x))]
    idents = [("T1", t1), ("T2", t2), ("T3", t3)]
    return _report_from_identities("nondegenerate_integrability", idents,
                                   box, samples, tol)


class PotentialDegenerateError(ValueError):
    """The potential depends on neither coordinate."""


def one_param_coeffs(V: Expression, lam=None, box: DomainBox = None,
                     samples=DEFAULT_SAMPLES, tol=DEFAULT_TOL, coords=None):
    """Canonical coefficients B1, B12, B22 of a 1-parameter potential.

    Computed directly from V: B1 = V1/V2, B12 = V12/V2, B22 = (V22-V11)/V2.
    The report checks the two integrability conditions of the canonical
    system and, when lam is supplied, the eliminated-B22 identity. The
    canonical mixed-derivative equation is V12 = B12*V2 with B12 as the
    sole coefficient (one printed variant carries a spurious extra factor
    on that term; the coefficient used here is validated by the report).
    """
    x, y = _coords_of(coords)
    v1, v2 = d(V, x), d(V, y)
    if v1 is ex.ZERO and v2 is ex.ZERO:
        raise PotentialDegenerateError("potential has no coordinate dependence")
    if v2 is ex.ZERO:
        raise PotentialDegenerateError(
            "potential independent of the second coordinate; relabel coordinates")
    B = simplify_basic(ex.div(v1, v2))
    B12 = simplify_basic(ex.div(d(v1, y), v2))
    B22 = simplify_basic(ex.div(ex.sub(d(v2, y), d(v1, x)), v2))
    if box is None:
        return B, B12, B22, None
    B1d, B2d = d(B, x), d(B, y)
    sqB = ex.pow_(B, ex.constant(2))
    idents = [
        ("integrability-1", [ex.mul(B12, ex.sub(ex.ONE, sqB)),
                             ex.neg(B2d), ex.neg(ex.mul(B, B1d)),
                             ex.neg(ex.mul(B, B22))]),
        ("integrability-2", [d(B12, y), ex.neg(d(B22, x)), ex.neg(d(B1d, x)),
                             ex.neg(ex.mul(B1d, B12)),
                             ex.neg(ex.mul(B, d(B12, x)))]),
    ]
    details = {"B1": ex.to_text(B), "B12": ex.to_text(B12),
               "B22": ex.to_text(B22),
               "mixed-derivative-coefficient": "B12"}
    if lam is not None:
        r1, r2 = logd(lam, x), logd(lam, y)
        # B*B22 = (r1 + r2*B)*(B^2-1) - (B2 + B*B1), multiplied through by B
        idents.append(("eliminated-B22", [
            ex.mul(B, B22),
            ex.neg(ex.mul(ex.add(r1, ex.mul(r2, B)),
                          ex.sub(sqB, ex.ONE))),
            ex.add(B2d, ex.mul(B, B1d))]))
    report = _report_from_identities("one_param_canonical", idents, box,
                                     samples, tol, details)
    return B, B12, B22, report


def updated_b22(lam: Expression, b1: Expression, coords=None) -> Expression:
    """B22 with the mixed first-derivative combination eliminated.

    Uses the normalization in which every metric-derivative term carries a
    1/lambda factor; see updated_b22_consistency for the identity that
    pins this variant down.
    """
    x, y = _coords_of(coords)
    B = b1
    l1, l2 = d(lam, x), d(lam, y)
    sq = lambda e: ex.pow_(e, ex.constant(2))
    num = parse_sum([ex.neg(ex.mul(l2, B)),
                     ex.mul(l1, sq(B)),
                     ex.mul(ex.constant(3), ex.mul(l2, ex.pow_(B, ex.constant(3)))),
                     ex.neg(ex.mul(ex.constant(3), l1))])
    return simplify_basic(ex.div(num, ex.mul(ex.constant(2),
                                             ex.mul(B, lam))))


def updated_b22_consistency(lam: Expression, b1: Expression, box: DomainBox,
                            samples=DEFAULT_SAMPLES, tol=DEFAULT_TOL,
                            coords=None, normalized=True) -> ConditionReport:
    """Algebraic consistency between the two B22 expressions.

    For arbitrary (lambda, B) the eliminated form and the direct form differ
    by exactly the elimination constraint:
        10*B*(B22_direct - B22_updated) = 4*B*B22_direct - 6*(B*B1 + B2)
                                          - (l2*B)/lambda^? + 9*l1/lambda
                                          + l1*B^2/lambda - 9*l2*B^3/lambda,
    where the '?' power is 1 for the normalized variant and 0 otherwise.
    Only the normalized variant makes this an identity; the report for the
    unnormalized one fails on generic inputs.
    """
    x, y = _coords_of(coords)
    B = b1
    l1, l2 = d(lam, x), d(lam, y)
    r1 = ex.div(l1, lam)
    r2 = ex.div(l2, lam)
    B1d, B2d = d(B, x), d(B, y)
    sq = lambda e: ex.pow_(e, ex.constant(2))
    cube = lambda e: ex.pow_(e, ex.constant(3))
    # direct (eliminated mixed-term) form:
    b22_direct = ex.div(ex.sub(ex.mul(ex.add(r1, ex.mul(r2, B)),
                                      ex.sub(sq(B), ex.ONE)),
                               ex.add(B2d, ex.mul(B, B1d))), B)
    upd = updated_b22(lam, B, coords)
    lam2_term = ex.mul(r2, B) if normalized else ex.mul(l2, B)
    constraint = parse_sum([
        ex.mul(ex.constant(4), ex.mul(B, b22_direct)),
        ex.neg(ex.mul(ex.constant(6), ex.add(ex.mul(B, B1d), B2d))),
        ex.neg(lam2_term),
        ex.mul(ex.constant(9), r1),
        ex.mul(r1, sq(B)),
        ex.neg(ex.mul(ex.constant(9), ex.mul(r2, cube(B)))),
    ])
    lhs = ex.mul(ex.constant(10), ex.mul(B, ex.sub(b22_direct, upd)))
    idents = [("elimination-identity", [lhs, ex.neg(constraint)])]
    return _report_from_identities("updated_b22_consistency", idents, box,
                                   samples, tol,
                                   {"normalized": normalized})


# ---------------------------------------------------------------------------
# Killing vector construction
# ---------------------------------------------------------------------------

def _is_const_equiv(e: Expression, value, box, samples, tol) -> bool:
    from .sampling import equivalence_stats
    try:
        stats = equivalence_stats(e, ex.constant(value), box, samples=samples,
                                  tol=tol)
    except Exception:
        return False
    return stats.passed


def _staircase_lnq(f1, f2, xs, ys, names, extra, steps_per_unit=256,
                   x_first=True):
    """Integrate d(lnQ) = f1 dx + f2 dy over a staircase path grid.

    Returns lnQ on the (len(xs), len(ys)) grid with base point (xs[0], ys[0]).
    f1, f2 are compiled callables f(xval, yval) -> complex.
    """
    nx, ny = len(xs), len(ys)
    lnq = np.zeros((nx, ny), dtype=complex)

    def seg(f, a, b, fixed, along_x):
        n = max(2, int(abs(b - a) * steps_per_unit) + 1)
        ts = np.linspace(a, b, n)
        if along_x:
            vals = f(ts, np.full_like(ts, fixed))
        else:
            vals = f(np.full_like(ts, fixed), ts)
        return _trapz(vals, ts)

    for i, xv in enumerate(xs):
        for j, yv in enumerate(ys):
            if x_first:
                lnq[i, j] = seg(f1, xs[0], xv, ys[0], True) + \
                            seg(f2, ys[0], yv, xv, False)
            else:
                lnq[i, j] = seg(f2, ys[0], yv, xs[0], False) + \
                            seg(f1, xs[0], xv, yv, True)
    return lnq


def _compile_scalar(e: Expression, coords, params):
    """Return f(xarr, yarr) -> complex array with params bound."""
    from .evaluation import compile_exprs, run_tape
    tape = compile_exprs([e])
    x, y = coords

    def f(xv, yv):
        xv = np.atleast_1d(np.asarray(xv, dtype=complex))
        yv = np.atleast_1d(np.asarray(yv, dtype=complex))
        bindings = {x: xv, y: yv}
        for k, v in params.items():
            bindings[k] = np.full(xv.shape, complex(v))
        return run_tape(tape, bindings, n_points=len(xv))[0]

    return f


def killing_vector_analysis(b1: Expression, lam: Expression, box: DomainBox,
                            samples=DEFAULT_SAMPLES, tol=DEFAULT_TOL,
                            coords=None, params=None, grid_n=16):
    """Decide whether the 1-parameter system carries a first-order symmetry.

    Dispatch: B identically 0, then identically +/- i, then the generic
    quadrature construction X = Q p1 - Q B p2. Returns (ConditionReport,
    payload) where payload may contain a symbolic Killing vector
    ('xi','eta' Expressions) or a sampled numeric field ('grid_x','grid_y',
    'xi_grid','eta_grid').
    """
    x, y = _coords_of(coords)
    params = dict(params or {})
    payload = {}

    if _is_const_equiv(b1, 0, box, samples, tol):
        idents = [("lambda_1", [d(lam, x)])]
        report = _report_from_identities("killing_vector[B=0]", idents, box,
                                         samples, tol, {"branch": "B=0"})
        payload["xi"], payload["eta"] = ex.ONE, ex.ZERO
        return report, payload

    for sign, label in ((-1, "B=-i"), (1, "B=+i")):
        if _is_const_equiv(b1, sign * 1j, box, samples, tol):
            # Flatness of lambda is the branch condition.
            r1, r2 = logd(lam, x), logd(lam, y)
            idents = [("flatness", [d(r1, x), d(r2, y)])]
            # For B=-i: (lnQ)_1 = -(l1 + i l2)/(2 lam), (lnQ)_2 = -i (lnQ)_1
            # For B=+i: the conjugated relations.
            f1e = simplify_basic(ex.div(
                ex.neg(ex.add(d(lam, x),
                              ex.mul(ex.constant(1j * -sign), d(lam, y)))),
                ex.mul(ex.constant(2), lam)))
            f2e = simplify_basic(ex.mul(ex.constant(1j * sign), f1e))
            q = _match_lnq_candidates(f1e, f2e, box, samples, tol, (x, y))
            if q is not None:
                # X = Q p1 - Q B p2 with B = sign*i
                payload["xi"] = q
                payload["eta"] = simplify_basic(
                    ex.mul(ex.constant(-sign * 1j), q))
            else:
                payload.update(_numeric_quadrature(f1e, f2e, b1, lam, box,
                                                   (x, y), params, grid_n))
            report = _report_from_identities(f"killing_vector[{label}]",
                                             idents, box, samples, tol,
                                             {"branch": label})
            return report, payload

    # Generic branch.
    B = b1
    B1d, B2d = d(B, x), d(B, y)
    B11, B22d = d(B1d, x), d(B2d, y)
    sq = lambda e: ex.pow_(e, ex.constant(2))
    target = [ex.mul(ex.add(sq(B), ex.ONE), ex.add(B11, B22d)),
              ex.neg(ex.mul(ex.constant(2),
                            ex.mul(B, ex.add(sq(B1d), sq(B2d)))))]
    factor = [ex.mul(B, d(B1d, y)), ex.neg(ex.mul(B1d, B2d))]
    Dexpr = build_invariants(b1=B, coords=(x, y)).D
    idents = [("integrability", target), ("factorization", factor)]
    if lam is not None:
        # With the quadrature equations holding, {X, H0} = 0 collapses to
        # this single first-order condition on the metric.
        idents.append(("first-order-symmetry",
                       [d(lam, x), ex.neg(ex.mul(B, d(lam, y))),
                        ex.mul(Dexpr, lam)]))
    report = _report_from_identities("killing_vector[generic]", idents, box,
                                     samples, tol, {"branch": "generic"})
    if report.verdict:
        f1e = simplify_basic(ex.div(Dexpr, ex.constant(2)))
        f2e = simplify_basic(ex.add(B1d, ex.div(ex.mul(B, Dexpr),
                                                ex.constant(2))))
        payload.update(_numeric_quadrature(f1e, f2e, B, lam, box, (x, y),
                                           params, grid_n))
    return report, payload


def _match_lnq_candidates(f1e, f2e, box, samples, tol, coords):
    """Try closed forms for Q whose log-gradient matches (f1e, f2e)."""
    x, y = coords
    i = ex.IMAG_UNIT
    xe, ye = ex.variable(x), ex.variable(y)
    cand_exprs = [
        ex.ONE,
        ex.call("exp", ex.div(ex.neg(ex.add(ye, ex.mul(i, xe))),
                              ex.constant(2))),
        ex.div(ex.ONE, ex.sub(xe, ex.mul(i, ye))),
        ex.call("exp", ex.div(ex.neg(ex.sub(ye, ex.mul(i, xe))),
                              ex.constant(2))),
        ex.div(ex.ONE, ex.add(xe, ex.mul(i, ye))),
    ]
    from .sampling import equivalence_stats
    for q in cand_exprs:
        g1 = logd(q, x)
        g2 = logd(q, y)
        try:
            s1 = equivalence_stats(g1, f1e, box, samples=samples, tol=tol)
            s2 = equivalence_stats(g2, f2e, box, samples=samples, tol=tol)
        except Exception:
            continue
        if s1.passed and s2.passed:
            return q
    return None


def _numeric_quadrature(f1e, f2e, B, lam, box, coords, params, grid_n):
    """Staircase quadrature of lnQ, path-independence check, grid field."""
    x, y = coords
    (xlo, xhi), _ = box.interval(x)
    (ylo, yhi), _ = box.interval(y)
    xs = np.linspace(xlo, xhi, grid_n)
    ys = np.linspace(ylo, yhi, grid_n)
    f1 = _compile_scalar(f1e, coords, params)
    f2 = _compile_scalar(f2e, coords, params)
    lnq_a = _staircase_lnq(f1, f2, xs, ys, coords, params, x_first=True)
    lnq_b = _staircase_lnq(f1, f2, xs, ys, coords, params, x_first=False)
    path_dev = float(np.max(np.abs(lnq_a - lnq_b)))
    q = np.exp(lnq_a)
    bvals = _compile_scalar(B, coords, params)
    xv, yv = np.meshgrid(xs, ys, indexing="ij")
    bgrid = bvals(xv.ravel(), yv.ravel()).reshape(xv.shape)
    return {"grid_x": xs, "grid_y": ys, "xi_grid": q,
            "eta_grid": -q * bgrid, "path_deviation": path_dev}
