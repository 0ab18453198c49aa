"""System catalog: JSON definitions, loading/validation, bundled built-ins.

A system file is a single JSON document:

    {"name": str,
     "coordinates": [str, str],
     "parameters": [str, ...],
     "metric": {"conformal_lambda": expr} | {"g": [[expr, expr], [expr, expr]]},
     "potential": expr,                  # optional; omitted means 0
     "symmetries": [{"name": str, "order": int,
                     "terms": {"d1,d2": expr, ...}       # either terms
                     | "form": {"a": [[...]], "w": expr} # or quadratic form
                    }, ...],
     "domain": {var: {"re": [lo, hi], "im": [lo, hi]}, ...},
     "real_dynamics": bool}

Unknown keys anywhere are rejected. Momentum monomial keys are "d1,d2" with
nonnegative integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import expressions as ex
from .expressions import Expression
from .observables import Observable
from .sampling import DomainBox

_DATA_DIR = Path(__file__).parent / "data"

BUILTIN_NAMES = ("sphere_1param", "sphere_nondegenerate", "E4", "E14", "E13",
                 "darboux1_metric", "flat_free")


class SchemaError(ValueError):
    """The file does not conform to the system schema."""


@dataclass(frozen=True)
class ValidationIssue:
    severity: str   # "error" | "warning"
    code: str       # stable machine-readable code
    location: str   # field path
    message: str

    def as_dict(self):
        return {"severity": self.severity, "code": self.code,
                "location": self.location, "message": self.message}


@dataclass(frozen=True)
class SystemDef:
    name: str
    coordinates: tuple
    parameters: tuple
    conformal_lambda: Expression          # None for general-metric charts
    g: tuple                              # 2x2 tuple of Expressions
    potential: Expression
    symmetries: dict                      # name -> Observable
    symmetry_orders: dict                 # name -> declared order
    box: DomainBox
    real_dynamics: bool = True

    def hamiltonian(self) -> Observable:
        (g11, g12), (_, g22) = self.g
        terms = {(2, 0): g11, (1, 1): ex.mul(ex.constant(2), g12),
                 (0, 2): g22, (0, 0): self.potential}
        return Observable(terms, self.coordinates)

    def free_hamiltonian(self) -> Observable:
        (g11, g12), (_, g22) = self.g
        return Observable({(2, 0): g11, (1, 1): ex.mul(ex.constant(2), g12),
                           (0, 2): g22}, self.coordinates)

    def symmetry(self, name: str) -> Observable:
        return self.symmetries[name]

    def a_matrix(self, name: str):
        """The quadratic-form part of a declared symmetry as a 2x2 tuple."""
        obs = self.symmetries[name]
        half = ex.constant(0.5)
        a12 = ex.simplify_basic(ex.mul(half, obs.coeff(1, 1)))
        return ((obs.coeff(2, 0), a12), (a12, obs.coeff(0, 2)))

    def scalar_part(self, name: str) -> Expression:
        return self.symmetries[name].coeff(0, 0)


def _expect_keys(obj: dict, allowed, location: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise SchemaError(f"{location}: unknown keys {sorted(unknown)}")


def _parse_expr(text, params, location: str) -> Expression:
    if not isinstance(text, str):
        raise SchemaError(f"{location}: expected an expression string")
    try:
        return ex.parse(text, param_names=params)
    except ex.ExprSyntaxError as err:
        raise SchemaError(f"{location}: {err}") from err


def _parse_observable(entry: dict, params, coords, location: str):
    _expect_keys(entry, ("name", "order", "terms", "form"), location)
    if "name" not in entry or "order" not in entry:
        raise SchemaError(f"{location}: symmetry needs 'name' and 'order'")
    has_terms = "terms" in entry
    has_form = "form" in entry
    if has_terms == has_form:
        raise SchemaError(f"{location}: give exactly one of 'terms' or 'form'")
    if has_terms:
        terms = {}
        for key, text in entry["terms"].items():
            parts = key.split(",")
            try:
                d1, d2 = (int(p) for p in parts)
                if d1 < 0 or d2 < 0 or len(parts) != 2:
                    raise ValueError
            except ValueError:
                raise SchemaError(
                    f"{location}.terms: bad monomial key {key!r}") from None
            terms[(d1, d2)] = _parse_expr(text, params,
                                          f"{location}.terms[{key}]")
        return Observable(terms, coords)
    form = entry["form"]
    _expect_keys(form, ("a", "w"), f"{location}.form")
    a = form.get("a")
    if (not isinstance(a, list) or len(a) != 2
            or any(not isinstance(row, list) or len(row) != 2 for row in a)):
        raise SchemaError(f"{location}.form.a: expected a 2x2 matrix")
    a11 = _parse_expr(a[0][0], params, f"{location}.form.a[0][0]")
    a12 = _parse_expr(a[0][1], params, f"{location}.form.a[0][1]")
    a21 = _parse_expr(a[1][0], params, f"{location}.form.a[1][0]")
    a22 = _parse_expr(a[1][1], params, f"{location}.form.a[1][1]")
    if a12 is not a21:
        raise SchemaError(f"{location}.form.a: matrix must be symmetric")
    terms = {(2, 0): a11, (1, 1): ex.mul(ex.constant(2), a12), (0, 2): a22}
    if "w" in form:
        terms[(0, 0)] = _parse_expr(form["w"], params, f"{location}.form.w")
    return Observable(terms, coords)


def loads(text: str, source: str = "<string>") -> SystemDef:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"{source}: not valid JSON: {err}") from err
    _expect_keys(doc, ("name", "coordinates", "parameters", "metric",
                       "potential", "symmetries", "domain", "real_dynamics"),
                 source)
    for required in ("name", "coordinates", "metric", "symmetries"):
        if required not in doc:
            raise SchemaError(f"{source}: missing required key {required!r}")
    coords = doc["coordinates"]
    if (not isinstance(coords, list) or len(coords) != 2
            or any(not isinstance(c, str) for c in coords)):
        raise SchemaError(f"{source}.coordinates: expected exactly 2 names")
    coords = tuple(coords)
    params = tuple(doc.get("parameters", ()))

    metric = doc["metric"]
    _expect_keys(metric, ("conformal_lambda", "g"), f"{source}.metric")
    if ("conformal_lambda" in metric) == ("g" in metric):
        raise SchemaError(
            f"{source}.metric: give exactly one of 'conformal_lambda' or 'g'")
    if "conformal_lambda" in metric:
        lam = _parse_expr(metric["conformal_lambda"], params,
                          f"{source}.metric.conformal_lambda")
        inv = ex.simplify_basic(ex.div(ex.ONE, lam))
        g = ((inv, ex.ZERO), (ex.ZERO, inv))
    else:
        lam = None
        rows = metric["g"]
        if (not isinstance(rows, list) or len(rows) != 2
                or any(not isinstance(r, list) or len(r) != 2 for r in rows)):
            raise SchemaError(f"{source}.metric.g: expected a 2x2 matrix")
        g = tuple(tuple(_parse_expr(rows[r][c], params,
                                    f"{source}.metric.g[{r}][{c}]")
                        for c in range(2)) for r in range(2))
        if g[0][1] is not g[1][0]:
            raise SchemaError(f"{source}.metric.g: matrix must be symmetric")

    potential = (_parse_expr(doc["potential"], params, f"{source}.potential")
                 if "potential" in doc and doc["potential"] is not None
                 else ex.ZERO)

    symmetries, orders = {}, {}
    for k, entry in enumerate(doc["symmetries"]):
        loc = f"{source}.symmetries[{k}]"
        obs = _parse_observable(entry, params, coords, loc)
        sname = entry["name"]
        if sname in symmetries:
            raise SchemaError(f"{loc}: duplicate symmetry name {sname!r}")
        declared = int(entry["order"])
        if obs.degree > declared:
            raise SchemaError(
                f"{loc}: terms of degree {obs.degree} exceed declared order")
        symmetries[sname] = obs
        orders[sname] = declared

    intervals = {}
    for var, spec in doc.get("domain", {}).items():
        _expect_keys(spec, ("re", "im"), f"{source}.domain.{var}")
        re = spec.get("re", (-1.0, 1.0))
        im = spec.get("im", (-0.5, 0.5))
        intervals[var] = ((float(re[0]), float(re[1])),
                          (float(im[0]), float(im[1])))
    box = DomainBox(intervals=intervals)

    free = set()
    for obs in symmetries.values():
        free |= obs.free_names()
    free |= ex.free_names(potential)
    for row in g:
        for entry_e in row:
            free |= ex.free_names(entry_e)
    undeclared = free - set(coords) - set(params)
    if undeclared:
        raise SchemaError(
            f"{source}: undeclared names in expressions: {sorted(undeclared)}")

    return SystemDef(name=doc["name"], coordinates=coords, parameters=params,
                     conformal_lambda=lam, g=g, potential=potential,
                     symmetries=symmetries, symmetry_orders=orders, box=box,
                     real_dynamics=bool(doc.get("real_dynamics", True)))


def load_system(path) -> SystemDef:
    path = Path(path)
    sysdef = loads(path.read_text(encoding="utf-8"), source=str(path))
    issues = validate(sysdef)
    errors = [i for i in issues if i.severity == "error"]
    if errors:
        lines = "; ".join(f"{i.location}: {i.message}" for i in errors)
        raise SchemaError(f"{path}: validation failed: {lines}")
    return sysdef


_builtin_cache = {}


def builtin(name: str, verify: bool = True) -> SystemDef:
    if name not in BUILTIN_NAMES:
        raise KeyError(f"unknown builtin system {name!r}; "
                       f"available: {', '.join(BUILTIN_NAMES)}")
    cached = _builtin_cache.get((name, verify))
    if cached is not None:
        return cached
    path = _DATA_DIR / f"{name}.json"
    sysdef = (load_system(path) if verify
              else loads(path.read_text(encoding="utf-8"), source=str(path)))
    _builtin_cache[(name, verify)] = sysdef
    return sysdef


def resolve(name_or_path: str, verify: bool = True) -> SystemDef:
    """Accept either a builtin name or a file path."""
    if name_or_path in BUILTIN_NAMES:
        return builtin(name_or_path, verify=verify)
    return load_system(name_or_path)


def validate(sysdef: SystemDef, samples: int = 32, tol: float = 1e-8) -> list:
    """Constancy, independence, and domain-sanity checks. Never mutates."""
    from .observables import is_constant_of_motion
    from .algebra import symmetry_space_rank
    issues = []
    h = sysdef.hamiltonian()
    for sname, obs in sysdef.symmetries.items():
        try:
            report = is_constant_of_motion(h, obs, sysdef.box, samples=samples,
                                           tol=tol)
        except Exception as err:
            issues.append(ValidationIssue(
                "error", "constancy-unevaluable", f"symmetries.{sname}",
                f"could not evaluate bracket: {err}"))
            continue
        if not report.verdict:
            issues.append(ValidationIssue(
                "error", "constancy", f"symmetries.{sname}",
                f"bracket with H has max residual {report.max_residual:.3e}"))
    names = list(sysdef.symmetries)
    if len(names) > 1:
        rank, _ = symmetry_space_rank(list(sysdef.symmetries.values()),
                                      sysdef.box, samples=samples)
        if rank < len(names):
            issues.append(ValidationIssue(
                "warning", "rank-deficient", "symmetries",
                f"rank-deficient symmetry list (rank {rank} of {len(names)})"))
    # Domain sanity: rejection-rate estimate on the Hamiltonian coefficients.
    from .sampling import identity_stats, DomainTooSingularError
    try:
        stats = identity_stats(list(h.terms.values()), sysdef.box,
                               samples=samples, tol=float("inf"))
        total = stats.n_accepted + stats.n_rejected
        rate = stats.n_rejected / total if total else 0.0
        if rate > 0.2:
            issues.append(ValidationIssue(
                "warning", "domain-pole", "domain",
                f"sampling rejection rate {rate:.0%} suggests a pole or "
                f"overflow region inside the domain box"))
    except DomainTooSingularError:
        issues.append(ValidationIssue(
            "error", "domain-pole", "domain",
            "domain box is almost entirely singular for the Hamiltonian"))
    return issues
