"""Sign-scan plus bisection root bracketing for scalar functions on a grid."""

import numpy as np


def sign_changes(values):
    """Indices i where values[i] and values[i+1] bracket a root.

    An exact zero at a grid node is reported once, attached to the cell on
    its left (or the first cell when the zero is the first node).
    """
    v = np.asarray(values, dtype=float)
    s = np.sign(v)
    idx = []
    for i in range(len(v) - 1):
        if s[i] == 0:
            if i == 0:
                idx.append(i)
            continue
        if s[i + 1] == 0 or s[i] != s[i + 1]:
            idx.append(i)
    return idx


def bisect(f, lo, hi, ftol, xtol, max_iter=200):
    """Bisect a bracketed sign change of ``f`` on [lo, hi].

    Stops once |f| <= ftol and the bracket is narrower than ``xtol``; returns
    the endpoint with the smaller |f| together with that residual.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, 0.0
    if fhi == 0:
        return hi, 0.0
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("interval does not bracket a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0:
            return mid, 0.0
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        if hi - lo <= xtol and min(abs(flo), abs(fhi)) <= ftol:
            break
    if abs(flo) <= abs(fhi):
        return lo, flo
    return hi, fhi
