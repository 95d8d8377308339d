"""Compiled inner loop shared by the forward and adjoint advection operators.

The induction operator restricted to the wavevector cube acts mode by mode:
each flow mode contributes, at output cell k,

    w * [ (a . k) src(k + s) + (d . src(k + s)) e ]

for constant 3-vectors a, d, e and integer shift s. Reads falling outside the
cube are zero (sharp truncation). Callers restrict the write range to an
inclusive index box; every cell of the box is overwritten.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["apply_modes"]


@njit(cache=True, nogil=True)
def apply_modes(src, dst, lo0, hi0, lo1, hi1, lo2, hi2, N, shifts, avec, dvec, evec):
    n = 2 * N + 1
    nq = shifts.shape[0]
    for i0 in range(lo0, hi0 + 1):
        k0 = i0 - N
        for i1 in range(lo1, hi1 + 1):
            k1 = i1 - N
            for i2 in range(lo2, hi2 + 1):
                k2 = i2 - N
                o0 = 0.0j
                o1 = 0.0j
                o2 = 0.0j
                for q in range(nq):
                    j0 = i0 + shifts[q, 0]
                    if j0 < 0 or j0 >= n:
                        continue
                    j1 = i1 + shifts[q, 1]
                    if j1 < 0 or j1 >= n:
                        continue
                    j2 = i2 + shifts[q, 2]
                    if j2 < 0 or j2 >= n:
                        continue
                    s0 = src[j0, j1, j2, 0]
                    s1 = src[j0, j1, j2, 1]
                    s2 = src[j0, j1, j2, 2]
                    scal = avec[q, 0] * k0 + avec[q, 1] * k1 + avec[q, 2] * k2
                    dotd = dvec[q, 0] * s0 + dvec[q, 1] * s1 + dvec[q, 2] * s2
                    o0 += scal * s0 + dotd * evec[q, 0]
                    o1 += scal * s1 + dotd * evec[q, 1]
                    o2 += scal * s2 + dotd * evec[q, 2]
                dst[i0, i1, i2, 0] = o0
                dst[i0, i1, i2, 1] = o1
                dst[i0, i1, i2, 2] = o2
