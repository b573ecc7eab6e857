"""Compiled inner loops."""

import numpy as np
from numba import njit


@njit(cache=True)
def dykstra_halfspaces(base, ci, cj, max_cycles, feas_tol, step_tol):
    """Cyclic projection onto {z : z[ci[c]] >= z[cj[c]]} with Dykstra corrections.

    For half-spaces the correction of constraint c is a nonnegative multiple
    ``lam[c]`` of its normal e_i - e_j (squared norm 2), so the iterate always
    satisfies z = base + sum_c lam[c] * (e_i - e_j).

    Returns (z, lam, cycles, max_violation, converged).
    """
    m = ci.shape[0]
    z = base.copy()
    lam = np.zeros(m)
    max_viol = 0.0
    for cycle in range(max_cycles):
        max_step = 0.0
        for c in range(m):
            i = ci[c]
            j = cj[c]
            s = z[i] - z[j]
            new = lam[c] - 0.5 * s
            if new < 0.0:
                new = 0.0
            d = new - lam[c]
            if d != 0.0:
                z[i] += d
                z[j] -= d
                lam[c] = new
                if abs(d) > max_step:
                    max_step = abs(d)
        if max_step <= step_tol:
            max_viol = 0.0
            for c in range(m):
                v = z[cj[c]] - z[ci[c]]
                if v > max_viol:
                    max_viol = v
            if max_viol <= feas_tol:
                return z, lam, cycle + 1, max_viol, True
    max_viol = 0.0
    for c in range(m):
        v = z[cj[c]] - z[ci[c]]
        if v > max_viol:
            max_viol = v
    return z, lam, max_cycles, max_viol, max_viol <= feas_tol
