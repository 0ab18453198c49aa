"""quadralg: symbolic-numeric verification of 2D superintegrable systems."""

from .expressions import (Expression, parse, to_text, constant, variable,
                          parameter, differentiate, simplify_basic, substitute,
                          free_names)
from .evaluation import evaluate, compile_exprs, run_tape, BACKEND_NAME
from .sampling import DomainBox, equivalent, equivalence_stats, identity_stats

__version__ = "0.1.0"
