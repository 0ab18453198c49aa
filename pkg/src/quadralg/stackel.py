"""Coupling-constant metamorphosis and metric/symmetry duality.

The transform maps a system with metric factor lambda and potential family V
to one with metric lambda*U and potential V/U, where U is a fixed instance of
the potential family. Each second-order symmetry is carried along by
subtracting a multiple of the new Hamiltonian; several textbook-style
variants of that correction are tried and the one that actually commutes
with the transformed Hamiltonian is kept and recorded.

The duality interchanges the roles of the metric and of the off-diagonal
symmetry coefficient a12 through a fixed complex linear substitution, with
the potential-ratio function B pushed through a Mobius map. The special
values B = 0 and B = -i swap under it.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expressions as ex
from .expressions import Expression
from .observables import Observable, from_expression, is_constant_of_motion
from .sampling import DEFAULT_INTERVAL, DomainBox, equivalent, is_zero
from .conditions import (ConditionReport, _report_from_identities,
                         bertrand_darboux_residual, COORDS)

import numpy as np


class TransformError(ValueError):
    pass


class NotAPotentialInstanceError(TransformError):
    pass


@dataclass(frozen=True)
class TransformRecord:
    source_name: str
    multiplier: Expression
    variants: dict                 # symmetry name -> accepted variant label
    reports: dict                  # symmetry name -> ConditionReport
    instance_values: dict          # parameter name -> complex value
    instance_scalars: dict = None  # symmetry name -> scalar part used

    def as_dict(self):
        return {"source": self.source_name,
                "multiplier": ex.to_text(self.multiplier),
                "variants": dict(self.variants),
                "instance_values": {k: [v.real, v.imag]
                                    for k, v in self.instance_values.items()},
                "reports": {k: r.as_dict() for k, r in self.reports.items()}}


def potential_instance_values(system, U: Expression, box: DomainBox = None,
                              samples: int = 64, tol: float = 1e-8) -> dict:
    """Parameter values c with V(c) = U (up to an additive constant).

    The potential family is affine in its parameters, so the fit is a plain
    least squares of U against {dV/dc_k, 1} at sample points.
    """
    box = box or system.box
    basis = [ex.differentiate(system.potential, p) for p in system.parameters]
    basis.append(ex.ONE)
    from .evaluation import compile_exprs, run_tape
    names = ex.free_names(U) | set(system.coordinates)
    for b in basis:
        names |= ex.free_names(b)
    names -= set(system.parameters)   # dV/dc_k must not depend on parameters
    tape = compile_exprs(basis + [U])
    rng = box.rng(7)
    n = max(samples, 4 * len(basis))
    pts = box.sample(names, 2 * n, rng)
    vals = run_tape(tape, pts, n_points=2 * n)
    mat = np.stack(vals, axis=1)
    keep = np.all(np.isfinite(mat.real) & np.isfinite(mat.imag)
                  & (np.abs(mat) < box.cap), axis=1)
    mat = mat[keep]
    if len(mat) < len(basis) + 4:
        raise TransformError("too few usable sample points for the "
                             "potential-instance fit")
    half = len(mat) // 2
    A, b = mat[:half, :-1], mat[:half, -1]
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    Ah, bh = mat[half:, :-1], mat[half:, -1]
    scale = max(1.0, float(np.max(np.abs(bh))))
    resid = float(np.max(np.abs(Ah @ c - bh))) / scale
    if resid > tol:
        raise NotAPotentialInstanceError(
            f"multiplier is not an instance of the potential family "
            f"(fit residual {resid:.3e})")
    values = {p: complex(c[k]) for k, p in enumerate(system.parameters)}
    values["_const"] = complex(c[-1])
    return values


def _substitute_params(e: Expression, values: dict) -> Expression:
    subs = {}
    for p, v in values.items():
        if p == "_const":
            continue
        real = ex.constant(v.real)
        if abs(v.imag) > 0:
            real = ex.add(real, ex.mul(ex.constant(v.imag), ex.IMAG_UNIT))
        subs[p] = real
    return ex.simplify_basic(ex.substitute(e, subs))


def _candidate_symmetries(s: Observable, w_u: Expression, U: Expression,
                          h_new: Observable, h_new_free: Observable):
    """The correction variants tried for a transformed symmetry."""
    coords = s.coords
    s0 = Observable({k: v for k, v in s.terms.items() if k != (0, 0)}, coords)
    w = s.terms.get((0, 0), ex.ZERO)
    wu_over_u = ex.simplify_basic(ex.div(w_u, U))
    cand_a = (s0 + from_expression(w, coords=coords)
              - h_new.scale(wu_over_u))
    cand_b = (s0 - h_new_free.scale(wu_over_u)
              + from_expression(ex.simplify_basic(ex.div(w, U)),
                                coords=coords))
    cand_c = s - h_new.scale(w_u)
    return [("w-over-u-times-new-hamiltonian", cand_a),
            ("kinetic-correction-with-scaled-scalar", cand_b),
            ("instance-scalar-times-new-hamiltonian", cand_c)]


def transform(system, U: Expression, box: DomainBox = None, samples: int = 64,
              tol: float = 1e-8, scalar_overrides: dict = None):
    """Apply the transform with multiplier U. Returns (SystemDef, record).

    scalar_overrides, when given, supplies the multiplier's scalar part per
    symmetry directly (used by inverse()) instead of deriving it from a fit
    of U against the potential family.
    """
    from .catalog import SystemDef
    box = box or system.box
    if scalar_overrides is None:
        values = potential_instance_values(system, U, box, samples=samples,
                                           tol=max(tol, 1e-8))
    else:
        values = {}
    # U must satisfy the same compatibility condition as the family does.
    for name in system.symmetries:
        if system.symmetry_orders[name] != 2 or name.upper() == "H":
            continue
        rep = bertrand_darboux_residual(system.g, system.a_matrix(name), U,
                                        box, samples=samples, tol=tol,
                                        coords=system.coordinates)
        if not rep.verdict:
            raise NotAPotentialInstanceError(
                f"multiplier fails the compatibility condition for "
                f"symmetry {name} (max residual {rep.max_residual:.3e})")

    inv_u = ex.simplify_basic(ex.div(ex.ONE, U))
    g_new = tuple(tuple(ex.simplify_basic(ex.mul(entry, inv_u))
                        for entry in row) for row in system.g)
    lam_new = (ex.simplify_basic(ex.mul(system.conformal_lambda, U))
               if system.conformal_lambda is not None else None)
    v_new = ex.simplify_basic(ex.mul(system.potential, inv_u))

    (g11, g12), (_, g22) = g_new
    coords = system.coordinates
    h_new = Observable({(2, 0): g11, (1, 1): ex.mul(ex.constant(2), g12),
                        (0, 2): g22, (0, 0): v_new}, coords)
    h_new_free = Observable({(2, 0): g11,
                             (1, 1): ex.mul(ex.constant(2), g12),
                             (0, 2): g22}, coords)

    new_symmetries, variants, reports, scalars = {}, {}, {}, {}
    for name, s in system.symmetries.items():
        if name.upper() == "H":
            new_symmetries[name] = h_new
            variants[name] = "hamiltonian"
            continue
        w = s.terms.get((0, 0), ex.ZERO)
        if scalar_overrides is not None:
            w_u = scalar_overrides.get(name, ex.ZERO)
        else:
            w_u = _substitute_params(w, values)
        scalars[name] = w_u
        failures = []
        for label, cand in _candidate_symmetries(s, w_u, U, h_new,
                                                 h_new_free):
            rep = is_constant_of_motion(h_new, cand, box, samples=samples,
                                        tol=tol)
            if rep.verdict:
                new_symmetries[name] = cand
                variants[name] = label
                reports[name] = rep
                break
            failures.append((label, rep.max_residual))
        else:
            detail = ", ".join(f"{l}: {r:.3e}" for l, r in failures)
            raise TransformError(
                f"no candidate form of transformed symmetry {name} "
                f"commutes with the new Hamiltonian ({detail})")

    new_def = SystemDef(name=f"{system.name}_stackel",
                        coordinates=coords, parameters=system.parameters,
                        conformal_lambda=lam_new, g=g_new, potential=v_new,
                        symmetries=new_symmetries,
                        symmetry_orders=dict(system.symmetry_orders),
                        box=system.box, real_dynamics=False)
    record = TransformRecord(source_name=system.name, multiplier=U,
                             variants=variants, reports=reports,
                             instance_values=values,
                             instance_scalars=scalars)
    return new_def, record


def inverse(transformed_system, record: TransformRecord,
            box: DomainBox = None, samples: int = 64, tol: float = 1e-8):
    """Undo a transform: multiplier 1/U, with the scalar part of each
    symmetry's multiplier instance carried to -W_U/U by the transform."""
    U = record.multiplier
    inv_u = ex.simplify_basic(ex.div(ex.ONE, U))
    overrides = {
        name: ex.simplify_basic(ex.neg(ex.div(w_u, U)))
        for name, w_u in (record.instance_scalars or {}).items()}
    return transform(transformed_system, inv_u, box=box, samples=samples,
                     tol=tol, scalar_overrides=overrides)


def transform_canonical_coeffs(coeffs: dict, U: Expression,
                               coords=COORDS) -> dict:
    """Push the canonical first-order-condition coefficients through the
    transform. Dispatches on the key set: {A12, A22, B12, B22} for the
    3-parameter form, {B1, B12, B22} for the 1-parameter form.
    """
    x1, x2 = coords
    u1 = ex.simplify_basic(ex.div(ex.differentiate(U, x1), U))
    u2 = ex.simplify_basic(ex.div(ex.differentiate(U, x2), U))
    keys = set(coeffs)
    two = ex.constant(2)
    if keys == {"A12", "A22", "B12", "B22"}:
        return {"A12": ex.sub(coeffs["A12"], u2),
                "A22": ex.add(coeffs["A22"], ex.mul(two, u1)),
                "B12": ex.sub(coeffs["B12"], u1),
                "B22": ex.sub(coeffs["B22"], ex.mul(two, u2))}
    if keys == {"B1", "B12", "B22"}:
        b1 = coeffs["B1"]
        return {"B1": b1,
                "B12": ex.sub(coeffs["B12"],
                              ex.mul(two, ex.mul(b1, u2))),
                "B22": ex.add(coeffs["B22"],
                              ex.mul(two, ex.mul(ex.sub(ex.mul(b1, b1),
                                                        ex.ONE), u2)))}
    raise ValueError(f"unrecognized coefficient key set {sorted(keys)}")


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

def _involution_substitution(e: Expression, coords=COORDS) -> Expression:
    x1, x2 = (ex.variable(c) for c in coords)
    root2 = ex.call("sqrt", ex.constant(2))
    new_x = ex.div(ex.add(x1, ex.mul(ex.IMAG_UNIT, x2)), root2)
    new_y = ex.div(ex.sub(ex.mul(ex.neg(ex.IMAG_UNIT), x1), x2), root2)
    return ex.substitute(e, {coords[0]: new_x, coords[1]: new_y})


def _is_constant_value(e: Expression, value: complex,
                       box: DomainBox = None, coords=COORDS) -> bool:
    probe = ex.simplify_basic(
        ex.sub(e, ex.add(ex.constant(value.real),
                         ex.mul(ex.constant(value.imag), ex.IMAG_UNIT))))
    if probe is ex.ZERO:
        return True
    box = box or DomainBox(intervals={c: DEFAULT_INTERVAL for c in coords})
    try:
        return is_zero(probe, box, samples=16).passed
    except Exception:
        return False


def duality(mu: Expression, a12: Expression, B: Expression,
            coords=COORDS, box: DomainBox = None):
    """One application of the metric/symmetry interchange.

    Returns (mu~, a12~, B~). B = -i (the Mobius pole) maps to 0 and B = 0
    maps to -i; otherwise B passes through the substitution followed by the
    Mobius map i(B - i)/(B + i).
    """
    mu_new = _involution_substitution(a12, coords)
    a12_new = _involution_substitution(mu, coords)
    if _is_constant_value(B, -1j, box, coords):
        b_new = ex.ZERO
    elif _is_constant_value(B, 0j, box, coords):
        b_new = ex.neg(ex.IMAG_UNIT)
    else:
        bs = _involution_substitution(B, coords)
        b_new = ex.simplify_basic(
            ex.mul(ex.IMAG_UNIT, ex.div(ex.sub(bs, ex.IMAG_UNIT),
                                        ex.add(bs, ex.IMAG_UNIT))))
    return mu_new, a12_new, ex.simplify_basic(b_new)


def duality_condition_identities(mu, a12, B, coords=COORDS):
    """The displayed compatibility conditions as labeled term lists."""
    x1, x2 = coords
    d = ex.differentiate
    mu1, mu2 = d(mu, x1), d(mu, x2)
    a1, a2 = d(a12, x1), d(a12, x2)
    b1, b2 = d(B, x1), d(B, x2)
    bsq1 = ex.add(ex.mul(B, B), ex.ONE)
    three = ex.constant(3)
    two = ex.constant(2)
    return [
        ("metric-mixed-derivative", [d(mu1, x2)]),
        ("metric-symmetry-compatibility",
         [ex.mul(a12, ex.sub(d(mu1, x1), d(mu2, x2))),
          ex.mul(three, ex.mul(mu1, a1)),
          ex.neg(ex.mul(three, ex.mul(mu2, a2))),
          ex.mul(ex.sub(d(a1, x1), d(a2, x2)), mu)]),
        ("symmetry-harmonic", [d(a1, x1), d(a2, x2)]),
        ("potential-ratio-curvature",
         [ex.mul(bsq1, ex.add(d(b1, x1), d(b2, x2))),
          ex.neg(ex.mul(two, ex.mul(B, ex.add(ex.mul(b1, b1),
                                              ex.mul(b2, b2)))))]),
        ("potential-ratio-factorization",
         [ex.mul(B, d(b1, x2)), ex.neg(ex.mul(b1, b2))]),
        ("metric-ratio-coupling",
         [ex.mul(ex.mul(bsq1, ex.sub(mu1, ex.mul(B, mu2))), a12),
          ex.mul(two, ex.mul(B, ex.mul(ex.sub(ex.mul(B, a1), a2), mu)))]),
    ]


def verify_duality_conditions(mu, a12, B, box: DomainBox,
                              samples: int = 64, tol: float = 1e-8,
                              coords=COORDS, include_dual: bool = True):
    """Residuals of all displayed conditions, before and after duality."""
    identities = duality_condition_identities(mu, a12, B, coords)
    if include_dual:
        mu_d, a12_d, b_d = duality(mu, a12, B, coords, box)
        identities += [(f"dual-{label}", terms) for label, terms in
                       duality_condition_identities(mu_d, a12_d, b_d, coords)]
    return _report_from_identities("duality-conditions", identities, box,
                                   samples, tol,
                                   details={"coordinates": list(coords)})
