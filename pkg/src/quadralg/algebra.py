"""Recovery of quadratic-algebra structure: expansions of brackets in
product bases, closure tables, the Casimir relation, and rank checks.

Everything here is numeric linear algebra over evaluation matrices: each
observable is evaluated at random phase points (coordinates, momenta, and
parameters all sampled), structure constants come from least squares, and
every accepted relation is re-verified on held-out points. Recovered
coefficients are additionally "snapped" to small rationals when they sit
within 1e-6 of one, since the relations of interest have small rational
structure constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np

from . import expressions as ex
from .observables import Observable, multiply, poisson_bracket, from_expression
from .sampling import DomainBox

RANK_THRESHOLD = 1e-8
CONDITION_CAP = 1e10
SNAP_DENOMINATOR = 64
SNAP_TOL = 1e-6
FIT_TOL = 1e-6


class RankDeficientBasisError(ValueError):
    pass


class NotInSpanError(ValueError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class NullityError(ValueError):
    def __init__(self, message, nullity, singular_values):
        super().__init__(message)
        self.nullity = nullity
        self.singular_values = singular_values


@dataclass(frozen=True)
class RelationResult:
    target_name: str
    basis_names: tuple
    coefficients: tuple            # complex, raw least-squares fit
    snapped: tuple                 # Fraction-pairs or None per coefficient
    residual: float                # held-out relative residual
    condition_number: float

    @property
    def accepted(self) -> bool:
        return self.residual < FIT_TOL

    def coefficient(self, basis_name: str) -> complex:
        return self.coefficients[self.basis_names.index(basis_name)]

    def snapped_value(self, basis_name: str):
        s = self.snapped[self.basis_names.index(basis_name)]
        return None if s is None else complex(s[0]) + 1j * complex(s[1])

    def as_dict(self) -> dict:
        return {"target": self.target_name,
                "basis": list(self.basis_names),
                "coefficients": [[c.real, c.imag] for c in self.coefficients],
                "snapped": [None if s is None else [str(s[0]), str(s[1])]
                            for s in self.snapped],
                "residual": self.residual,
                "condition_number": self.condition_number,
                "verdict": "pass" if self.accepted else "fail"}


@dataclass(frozen=True)
class BasisSpec:
    generators: tuple              # ((name, Observable), ...)
    parameters: tuple = ()         # parameter names
    max_degree: int = 2
    include_parameter_weighted: bool = True

    def coords(self):
        return self.generators[0][1].coords


def generate_products(spec: BasisSpec) -> list:
    """All distinct monomials in (generators, parameters) up to the cap.

    Returns [(name, Observable)] where each parameter counts one degree,
    like a generator. Parameter-weighted entries are dropped when the spec
    says so. The constant monomial is included only alongside parameter
    weighting (it is the empty product).
    """
    coords = spec.coords()
    symbols = [(n, o, False) for n, o in spec.generators]
    if spec.include_parameter_weighted:
        symbols += [(p, from_expression(ex.parameter(p), coords=coords), True)
                    for p in spec.parameters]
    out, seen = [], set()
    for degree in range(0 if spec.include_parameter_weighted else 1,
                        spec.max_degree + 1):
        for combo in combinations_with_replacement(range(len(symbols)), degree):
            if not spec.include_parameter_weighted and any(
                    symbols[k][2] for k in combo):
                continue
            name = "*".join(symbols[k][0] for k in combo) or "1"
            if name in seen:
                continue
            seen.add(name)
            obs = from_expression(ex.ONE, coords=coords)
            for k in combo:
                obs = multiply(obs, symbols[k][1])
            out.append((name, obs))
    return out


def homogeneous_products(symbols, weights, total_weight, coords,
                         even_only=()):
    """Monomials of exact weighted degree; names in even_only must appear
    to an even power. symbols: [(name, Observable)], weights parallel."""
    out = []

    def rec(idx, remaining, combo):
        if remaining == 0:
            counts = {}
            for k in combo:
                counts[k] = counts.get(k, 0) + 1
            for k, c in counts.items():
                if symbols[k][0] in even_only and c % 2:
                    return
            name = "*".join(symbols[k][0] for k in combo) or "1"
            obs = from_expression(ex.ONE, coords=coords)
            for k in combo:
                obs = multiply(obs, symbols[k][1])
            out.append((name, obs))
            return
        if idx >= len(symbols):
            return
        w = weights[idx]
        max_count = remaining // w
        for c in range(max_count, -1, -1):
            rec(idx + 1, remaining - c * w, combo + [idx] * c)

    rec(0, total_weight, [])
    return out


# ---------------------------------------------------------------------------
# evaluation matrices
# ---------------------------------------------------------------------------

def _evaluation_matrix(observables, box: DomainBox, n: int, stream: int,
                       cap=None):
    """Evaluate each observable at n accepted random phase points.

    Returns an (n, len(observables)) complex matrix. Momenta p1, p2 are
    sampled like every other name.
    """
    from .evaluation import compile_exprs, run_tape
    cap = cap if cap is not None else box.cap
    names = {"p1", "p2"}
    all_coeffs, layouts = [], []
    for obs in observables:
        layout = []
        for key in sorted(obs.terms):
            layout.append((key, len(all_coeffs)))
            all_coeffs.append(obs.terms[key])
        layouts.append(layout)
        names |= obs.free_names()
    tape = compile_exprs(all_coeffs)
    rng = box.rng(stream)
    rows = []
    for _ in range(10):
        need = n - len(rows)
        if need <= 0:
            break
        pts = box.sample(names, need, rng)
        values = run_tape(tape, pts, n_points=need)
        p1, p2 = pts["p1"], pts["p2"]
        batch = np.zeros((need, len(observables)), dtype=complex)
        for col, layout in enumerate(layouts):
            acc = np.zeros(need, dtype=complex)
            for (d1, d2), idx in layout:
                acc = acc + values[idx] * p1 ** d1 * p2 ** d2
            batch[:, col] = acc
        finite = np.all(np.isfinite(batch.real) & np.isfinite(batch.imag)
                        & (np.abs(batch) <= cap), axis=1)
        rows.extend(batch[finite])
    if len(rows) < n:
        raise ValueError(f"only {len(rows)}/{n} evaluation points accepted")
    return np.asarray(rows[:n])


def _snap(c: complex):
    """Rational approximation (re, im) with small denominators, or None."""
    fr = Fraction(c.real).limit_denominator(SNAP_DENOMINATOR)
    fi = Fraction(c.imag).limit_denominator(SNAP_DENOMINATOR)
    if abs(float(fr) - c.real) <= SNAP_TOL and abs(float(fi) - c.imag) <= SNAP_TOL:
        return (fr, fi)
    return None


def express_in_basis(target: Observable, basis, box: DomainBox,
                     samples=None, stream=0, target_name="target",
                     basis_names=None, tol=FIT_TOL) -> RelationResult:
    """Least-squares expansion target = sum c_k basis_k, held-out verified.

    basis: list of Observables, or list of (name, Observable).
    """
    if basis and isinstance(basis[0], tuple):
        basis_names = tuple(n for n, _ in basis)
        basis = [o for _, o in basis]
    if not basis:
        raise ValueError("basis must be nonempty")
    basis_names = tuple(basis_names or
                        (f"b{k}" for k in range(len(basis))))
    n_fit = samples or 4 * len(basis)
    n_fit = max(n_fit, 2 * len(basis))

    for attempt in range(2):
        mat = _evaluation_matrix([target] + list(basis), box, n_fit,
                                 stream + 10 * attempt)
        b, A = mat[:, 0], mat[:, 1:]
        sv = np.linalg.svd(A, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        if cond <= CONDITION_CAP:
            break
    else:
        raise RankDeficientBasisError(
            f"basis evaluation matrix condition number {cond:.2e} exceeds "
            f"{CONDITION_CAP:.0e} after resampling")
    coeffs, *_ = np.linalg.lstsq(A, b, rcond=None)

    held = _evaluation_matrix([target] + list(basis), box, n_fit,
                              stream + 1000)
    bh, Ah = held[:, 0], held[:, 1:]
    pred = Ah @ coeffs
    scale = max(1.0, float(np.max(np.abs(bh))), float(np.max(np.abs(Ah))))
    residual = float(np.max(np.abs(pred - bh))) / scale

    snapped = tuple(_snap(c) for c in coeffs)
    result = RelationResult(target_name=target_name, basis_names=basis_names,
                            coefficients=tuple(complex(c) for c in coeffs),
                            snapped=snapped, residual=residual,
                            condition_number=cond)
    if residual >= tol:
        raise NotInSpanError(
            f"{target_name}: held-out residual {residual:.3e} >= {tol:.0e}; "
            f"target not in the basis span", result)
    return result


def symmetry_space_rank(observables, box: DomainBox, samples=None, stream=0):
    """Numerical rank of the evaluation matrix (threshold sk/s1 > 1e-8)."""
    if not observables:
        raise ValueError("need at least one observable")
    n = samples or max(4 * len(observables), len(observables) + 8)
    mat = _evaluation_matrix(list(observables), box, n, stream)
    sv = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sv > RANK_THRESHOLD * sv[0])) if sv[0] > 0 else 0
    return rank, sv


# ---------------------------------------------------------------------------
# closure and Casimir
# ---------------------------------------------------------------------------

def _split_generators(system):
    first = [(n, o) for n, o in system.symmetries.items()
             if system.symmetry_orders[n] == 1]
    second = [(n, o) for n, o in system.symmetries.items()
              if system.symmetry_orders[n] == 2]
    return first, second


def closure_bases(system):
    """(even_basis, odd_basis) for bracket expansions, as (name, Observable).

    even: the second-order symmetries plus squares of first-order ones —
    where brackets of a first-order with a second-order symmetry live.
    odd: products L_k*X plus X^3 plus parameter-weighted X — where brackets
    of two second-order symmetries live (X the first-order symmetry).
    """
    first, second = _split_generators(system)
    even = list(second)
    for n, o in first:
        even.append((f"{n}^2", multiply(o, o)))
    odd = []
    if first:
        xn, xo = first[0]
        for n, o in second:
            odd.append((f"{n}*{xn}", multiply(o, xo)))
        odd.append((f"{xn}^3", multiply(multiply(xo, xo), xo)))
        for p in system.parameters:
            odd.append((f"{p}*{xn}",
                        xo.scale(ex.parameter(p))))
    return even, odd


def closure_table(system, box: DomainBox = None, samples=None,
                  tol=FIT_TOL) -> list:
    """Express every generator bracket in the order-appropriate basis.

    With a first-order symmetry present, closure at order three means every
    bracket lands in the spanned bases. Without one, brackets of the
    second-order generators are adjoined (R) and the brackets {L_k, R} are
    expanded in the degree-2 product basis.
    """
    box = box or system.box
    first, second = _split_generators(system)
    results = []
    if first:
        even, odd = closure_bases(system)
        xn, xo = first[0]
        for n, o in second:
            br = poisson_bracket(xo, o)
            results.append(express_in_basis(
                br, even, box, samples=samples, tol=tol,
                target_name=f"{{{xn},{n}}}"))
        for (n1, o1), (n2, o2) in combinations_with_replacement(second, 2):
            if n1 == n2:
                continue
            br = poisson_bracket(o1, o2)
            results.append(express_in_basis(
                br, odd, box, samples=samples, tol=tol,
                target_name=f"{{{n1},{n2}}}"))
        return results
    # No Killing vector: adjoin R = {L1, L2} for non-Hamiltonian pairs.
    gens = [(n, o) for n, o in second]
    non_h = [(n, o) for n, o in gens if n.upper() != "H"]
    spec = BasisSpec(generators=tuple(gens), parameters=system.parameters,
                     max_degree=2, include_parameter_weighted=True)
    basis = generate_products(spec)
    for (n1, o1), (n2, o2) in combinations_with_replacement(non_h, 2):
        if n1 == n2:
            continue
        r = poisson_bracket(o1, o2)
        for n, o in non_h:
            br = poisson_bracket(o, r)
            results.append(express_in_basis(
                br, basis, box, samples=samples, tol=tol,
                target_name=f"{{{n},{{{n1},{n2}}}}}"))
    return results


def casimir(system, box: DomainBox = None, samples=None, adjoin_bracket=None,
            stream=0) -> RelationResult:
    """The unique polynomial relation among the generators.

    Builds the weight-homogeneous product basis (order-2 symmetries and
    parameters weigh 2; an adjoined bracket R weighs 3 and appears only to
    even powers), assembles the evaluation matrix, and requires numerical
    nullity exactly one. Coefficients are normalized so the first nonzero
    coefficient of the highest-weight block is one.
    """
    box = box or system.box
    first, second = _split_generators(system)
    symbols = list(second)
    for n, o in first:
        symbols.append((f"{n}^2", multiply(o, o)))
    coords = system.coordinates
    weights = [2] * len(symbols)
    even_only = ()
    if adjoin_bracket is None:
        adjoin_bracket = not first
    if adjoin_bracket:
        non_h = [(n, o) for n, o in second if n.upper() != "H"]
        if len(non_h) < 2:
            raise ValueError("need two non-Hamiltonian generators to adjoin R")
        r = poisson_bracket(non_h[0][1], non_h[1][1])
        rname = f"{{{non_h[0][0]},{non_h[1][0]}}}"
        symbols.append((rname, r))
        weights.append(3)
        even_only = (rname,)
        total_weight = 6
    else:
        total_weight = 4
    for p in system.parameters:
        symbols.append((p, from_expression(ex.parameter(p), coords=coords)))
        weights.append(2)
    basis = homogeneous_products(symbols, weights, total_weight, coords,
                                 even_only=even_only)
    names = tuple(n for n, _ in basis)
    observables = [o for _, o in basis]

    last_nullity, sv = None, None
    for attempt in range(2):
        n = samples or max(4 * len(basis), len(basis) + 16)
        mat = _evaluation_matrix(observables, box, n, stream + 10 * attempt)
        scale = np.max(np.abs(mat), axis=0)
        scale[scale == 0] = 1.0
        u, sv, vh = np.linalg.svd(mat / scale)
        nullity = int(np.sum(sv < RANK_THRESHOLD * sv[0]))
        nullity += len(names) - len(sv)  # columns beyond sample count
        if nullity == 1:
            vec = vh[-1].conj() / scale
            # held-out verification
            held = _evaluation_matrix(observables, box, n, stream + 1000)
            resid = np.abs(held @ vec)
            denom = np.max(np.abs(held * vec[None, :]), axis=1)
            residual = float(np.max(resid / np.maximum(1.0, denom)))
            # normalize on the first nonzero coefficient among the
            # highest-weight generator products
            idx = int(np.argmax(np.abs(vec)))
            vec = vec / vec[idx]
            snapped = tuple(_snap(c) for c in vec)
            return RelationResult(target_name="casimir", basis_names=names,
                                  coefficients=tuple(complex(c) for c in vec),
                                  snapped=snapped, residual=residual,
                                  condition_number=float(sv[0] / sv[-2])
                                  if len(sv) > 1 else float("inf"))
        last_nullity = nullity
    raise NullityError(
        f"nullspace dimension {last_nullity} (expected exactly 1)",
        last_nullity, sv)
