# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape evaluator.

Instruction semantics must match _evalpy.run exactly: integer powers are
left-fold repeated multiplications, general powers are exp(b*ln(a)) with
principal branches.
"""

cimport cython

cdef extern from "complex.h" nogil:
    double complex csin(double complex)
    double complex ccos(double complex)
    double complex ctan(double complex)
    double complex cexp(double complex)
    double complex clog(double complex)
    double complex csqrt(double complex)


cdef inline double complex _powi(double complex u, long n) nogil:
    cdef long m = -n if n < 0 else n
    cdef double complex r = u
    cdef long j
    if n == 0:
        return 1.0 + 0.0j
    for j in range(m - 1):
        r = r * u
    if n < 0:
        r = 1.0 / r
    return r


def run(int[::1] ops, int[::1] dest, int[::1] arg1, int[::1] arg2,
        double complex[:, ::1] slots):
    cdef Py_ssize_t k, p
    cdef Py_ssize_t n_instr = ops.shape[0]
    cdef Py_ssize_t n_points = slots.shape[1]
    cdef int op, d, a, b
    with nogil:
        for k in range(n_instr):
            op = ops[k]
            d = dest[k]
            a = arg1[k]
            b = arg2[k]
            if op == 2:
                for p in range(n_points):
                    slots[d, p] = slots[a, p] + slots[b, p]
            elif op == 3:
                for p in range(n_points):
                    slots[d, p] = slots[a, p] - slots[b, p]
            elif op == 4:
                for p in range(n_points):
                    slots[d, p] = slots[a, p] * slots[b, p]
            elif op == 5:
                for p in range(n_points):
                    slots[d, p] = slots[a, p] / slots[b, p]
            elif op == 6:
                for p in range(n_points):
                    slots[d, p] = -slots[a, p]
            elif op == 7:
                for p in range(n_points):
                    slots[d, p] = _powi(slots[a, p], b)
            elif op == 8:
                for p in range(n_points):
                    slots[d, p] = cexp(slots[b, p] * clog(slots[a, p]))
            elif op == 9:
                for p in range(n_points):
                    slots[d, p] = csin(slots[a, p])
            elif op == 10:
                for p in range(n_points):
                    slots[d, p] = ccos(slots[a, p])
            elif op == 11:
                for p in range(n_points):
                    slots[d, p] = ctan(slots[a, p])
            elif op == 12:
                for p in range(n_points):
                    slots[d, p] = cexp(slots[a, p])
            elif op == 13:
                for p in range(n_points):
                    slots[d, p] = clog(slots[a, p])
            elif op == 14:
                for p in range(n_points):
                    slots[d, p] = csqrt(slots[a, p])
            else:
                with gil:
                    raise ValueError(f"bad opcode {op}")
