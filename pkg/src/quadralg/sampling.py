"""Random complex sampling boxes and the numeric equality notion.

Identity testing everywhere in this package means: evaluate both sides at
random complex points inside a DomainBox and compare relative residuals.
Catalog coefficients have poles, so points where evaluation blows up are
rejected and resampled, with an error if the box is mostly singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluation import compile_exprs, run_tape
from .expressions import Expression, free_names

DEFAULT_TOL = 1e-8
DEFAULT_SAMPLES = 64
DEFAULT_CAP = 1e12
DEFAULT_SEED = 20090120
DEFAULT_INTERVAL = ((-1.0, 1.0), (-0.5, 0.5))

_MAX_ROUNDS = 8


class DomainTooSingularError(ValueError):
    """Fewer than half the requested samples survived rejection."""


@dataclass(frozen=True)
class DomainBox:
    """Per-name sampling rectangles (real interval x imaginary interval)."""

    intervals: dict = field(default_factory=dict)
    cap: float = DEFAULT_CAP
    seed: int = DEFAULT_SEED

    def interval(self, name):
        return self.intervals.get(name, DEFAULT_INTERVAL)

    def with_seed(self, seed) -> "DomainBox":
        return DomainBox(intervals=self.intervals, cap=self.cap, seed=seed)

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng((self.seed, stream))

    def sample(self, names, n: int, rng) -> dict:
        """Draw n points; names are sampled in sorted order for determinism."""
        out = {}
        for name in sorted(names):
            (rlo, rhi), (ilo, ihi) = self.interval(name)
            re = rng.uniform(rlo, rhi, n)
            im = rng.uniform(ilo, ihi, n)
            out[name] = re + 1j * im
        return out


@dataclass(frozen=True)
class ResidualStats:
    name: str
    max_residual: float
    mean_residual: float
    n_accepted: int
    n_rejected: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tol

    def as_dict(self) -> dict:
        return {"name": self.name, "verdict": "pass" if self.passed else "fail",
                "max_residual": self.max_residual, "mean_residual": self.mean_residual,
                "n_accepted": self.n_accepted, "n_rejected": self.n_rejected,
                "tol": self.tol}


def _finite_within(values, cap):
    ok = np.isfinite(values.real) & np.isfinite(values.imag)
    return ok & (np.abs(values) <= cap)


def _batched_accept(exprs, box, samples, stream, accept_and_measure):
    """Shared sample/evaluate/reject loop.

    accept_and_measure(values_list) -> (mask, per_point_residuals); points
    outside the mask are rejected and resampled (bounded rounds).
    """
    names = set()
    for e in exprs:
        names |= free_names(e)
    tape = compile_exprs(exprs)
    rng = box.rng(stream)
    residuals = []
    n_rejected = 0
    for _ in range(_MAX_ROUNDS):
        need = samples - len(residuals)
        if need <= 0:
            break
        pts = box.sample(names, need, rng)
        values = run_tape(tape, pts, n_points=need) if names or True else []
        mask, res = accept_and_measure(values)
        n_rejected += int(need - mask.sum())
        residuals.extend(np.asarray(res)[mask].tolist())
    return residuals, n_rejected


def equivalence_stats(e1: Expression, e2: Expression, box: DomainBox,
                      samples: int = DEFAULT_SAMPLES, tol: float = DEFAULT_TOL,
                      stream: int = 0, name: str = "equivalent") -> ResidualStats:
    """Relative-residual statistics for e1 == e2 over the box.

    Relative residual at a point is |e1-e2| / max(1, |e1|, |e2|).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")

    def measure(values):
        v1, v2 = values
        mask = _finite_within(v1, box.cap) & _finite_within(v2, box.cap)
        denom = np.maximum(1.0, np.maximum(np.abs(v1), np.abs(v2)))
        return mask, np.abs(v1 - v2) / denom

    residuals, n_rejected = _batched_accept([e1, e2], box, samples, stream, measure)
    if len(residuals) < samples / 2:
        raise DomainTooSingularError(
            f"only {len(residuals)}/{samples} sample points accepted")
    arr = np.asarray(residuals)
    return ResidualStats(name=name, max_residual=float(arr.max()),
                         mean_residual=float(arr.mean()), n_accepted=len(residuals),
                         n_rejected=n_rejected, tol=tol)


def equivalent(e1: Expression, e2: Expression, box: DomainBox,
               samples: int = DEFAULT_SAMPLES, tol: float = DEFAULT_TOL,
               stream: int = 0):
    """Randomized equality test; returns (bool, ResidualStats)."""
    stats = equivalence_stats(e1, e2, box, samples=samples, tol=tol, stream=stream)
    return stats.passed, stats


def is_zero(e: Expression, box: DomainBox, samples: int = DEFAULT_SAMPLES,
            tol: float = DEFAULT_TOL, stream: int = 0, name: str = "zero") -> ResidualStats:
    from .expressions import ZERO
    return equivalence_stats(e, ZERO, box, samples=samples, tol=tol,
                             stream=stream, name=name)


def identity_stats(terms, box: DomainBox, samples: int = DEFAULT_SAMPLES,
                   tol: float = DEFAULT_TOL, stream: int = 0,
                   name: str = "identity") -> ResidualStats:
    """Residual of the identity sum(terms) == 0, scale-normalized.

    The per-point residual is |sum terms| / max(1, max_k |term_k|), so an
    identity between huge quantities is not failed for float roundoff and
    a tiny-but-wrong one is not passed for being small.
    """
    terms = list(terms)

    def measure(values):
        stacked = np.vstack(values)
        mask = np.ones(stacked.shape[1], dtype=bool)
        for row in stacked:
            mask &= _finite_within(row, box.cap)
        total = stacked.sum(axis=0)
        denom = np.maximum(1.0, np.abs(stacked).max(axis=0))
        return mask, np.abs(total) / denom

    residuals, n_rejected = _batched_accept(terms, box, samples, stream, measure)
    if len(residuals) < samples / 2:
        raise DomainTooSingularError(
            f"only {len(residuals)}/{samples} sample points accepted")
    arr = np.asarray(residuals)
    return ResidualStats(name=name, max_residual=float(arr.max()),
                         mean_residual=float(arr.mean()), n_accepted=len(residuals),
                         n_rejected=n_rejected, tol=tol)
