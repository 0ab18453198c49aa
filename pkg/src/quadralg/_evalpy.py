"""Pure-Python (numpy-vectorized) tape evaluator, fallback for _evalcore.

Semantics must match the compiled kernel instruction for instruction:
integer powers are left-fold repeated multiplications, general powers are
exp(b*ln(a)) with principal branches.
"""

import numpy as np


def _powi(u, n):
    if n == 0:
        return np.ones_like(u)
    m = -n if n < 0 else n
    r = u.copy()
    for _ in range(m - 1):
        r = r * u
    if n < 0:
        r = 1.0 / r
    return r


def run(ops, dest, arg1, arg2, slots):
    for k in range(len(ops)):
        op = ops[k]
        d, a, b = dest[k], arg1[k], arg2[k]
        if op == 2:
            slots[d] = slots[a] + slots[b]
        elif op == 3:
            slots[d] = slots[a] - slots[b]
        elif op == 4:
            slots[d] = slots[a] * slots[b]
        elif op == 5:
            slots[d] = slots[a] / slots[b]
        elif op == 6:
            slots[d] = -slots[a]
        elif op == 7:
            slots[d] = _powi(slots[a], int(b))
        elif op == 8:
            slots[d] = np.exp(slots[b] * np.log(slots[a]))
        elif op == 9:
            slots[d] = np.sin(slots[a])
        elif op == 10:
            slots[d] = np.cos(slots[a])
        elif op == 11:
            slots[d] = np.tan(slots[a])
        elif op == 12:
            slots[d] = np.exp(slots[a])
        elif op == 13:
            slots[d] = np.log(slots[a])
        elif op == 14:
            slots[d] = np.sqrt(slots[a])
        else:
            raise ValueError(f"bad opcode {op}")
