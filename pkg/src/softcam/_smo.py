"""Two-coordinate SMO for the epsilon-SVR dual.

The dual variables are kept as ``alpha`` and ``alpha_star`` (both length n)
together with the kernel expansion ``f = K (alpha - alpha_star)``.  With
residual ``r = y - f`` the first-order scores are ``r - eps`` for ``alpha``
and ``r + eps`` for ``alpha_star``; the maximal violating pair is the
largest score over variables that may move up and the smallest over those
that may move down.
"""

import numpy as np
from numba import njit

OK = 0
MAX_ITER = 1


@njit(cache=True)
def _row(i, x, sqn, gamma, gram, slot_of, owner, stamp, clock, precomputed):
    if precomputed:
        return gram[i]
    s = slot_of[i]
    if s < 0:
        # evict the least recently used slot
        s = 0
        best = stamp[0]
        for k in range(1, owner.shape[0]):
            if stamp[k] < best:
                best = stamp[k]
                s = k
        if owner[s] >= 0:
            slot_of[owner[s]] = -1
        owner[s] = i
        slot_of[i] = s
        r = gram[s]
        xi = x[i]
        for k in range(x.shape[0]):
            d = sqn[i] + sqn[k] - 2.0 * np.dot(xi, x[k])
            if d < 0.0:
                d = 0.0
            r[k] = np.exp(-gamma * d)
        r[i] = 1.0
    stamp[s] = clock
    return gram[s]


@njit(cache=True)
def smo(x, sqn, t, eps, c, gamma, tol, max_iter, gram, precomputed):
    """Returns ``(alpha, alpha_star, f, bias, iterations, violation, status)``."""
    n = t.shape[0]
    alpha = np.zeros(n)
    astar = np.zeros(n)
    f = np.zeros(n)
    cap = gram.shape[0]
    slot_of = -np.ones(n, dtype=np.int64)
    owner = -np.ones(cap, dtype=np.int64)
    stamp = np.zeros(cap, dtype=np.int64)
    it = 0
    status = OK
    while True:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        iv = 0
        jv = 0
        for k in range(n):
            r = t[k] - f[k]
            sa = r - eps
            ss = r + eps
            if alpha[k] < c and sa > gmax:
                gmax = sa
                i = k
                iv = 0
            # on a tie prefer shrinking alpha_star, so alpha and alpha_star never both grow
            if astar[k] > 0.0 and (ss > gmax or (ss == gmax and i == k)):
                gmax = ss
                i = k
                iv = 1
            if alpha[k] > 0.0 and sa < gmin:
                gmin = sa
                j = k
                jv = 0
            if astar[k] < c and ss < gmin:
                gmin = ss
                j = k
                jv = 1
        viol = gmax - gmin
        if viol < tol:
            break
        if it >= max_iter:
            status = MAX_ITER
            break
        it += 1
        ki = _row(i, x, sqn, gamma, gram, slot_of, owner, stamp, 2 * it, precomputed)
        kij = ki[j]
        kj = _row(j, x, sqn, gamma, gram, slot_of, owner, stamp, 2 * it + 1, precomputed)
        if not precomputed and slot_of[i] < 0:
            # row i was evicted to make room for row j
            ki = _row(i, x, sqn, gamma, gram, slot_of, owner, stamp, 2 * it + 1, precomputed)
        a = 1.0 + 1.0 - 2.0 * kij
        if a <= 1e-12:
            a = 1e-12
        delta = viol / a
        # coef_i rises by delta, coef_j falls by delta
        lim_i = c - alpha[i] if iv == 0 else astar[i]
        lim_j = alpha[j] if jv == 0 else c - astar[j]
        clip_i = False
        clip_j = False
        if delta >= lim_i:
            delta = lim_i
            clip_i = True
        if delta >= lim_j:
            delta = lim_j
            clip_j = True
            clip_i = delta >= lim_i
        # land exactly on a bound when clipped
        if iv == 0:
            alpha[i] = c if clip_i else alpha[i] + delta
        else:
            astar[i] = 0.0 if clip_i else astar[i] - delta
        if jv == 0:
            alpha[j] = 0.0 if clip_j else alpha[j] - delta
        else:
            astar[j] = c if clip_j else astar[j] + delta
        if i != j:
            for k in range(n):
                f[k] += delta * (ki[k] - kj[k])

    # bias: average over free variables, else the middle of the feasible interval
    total = 0.0
    count = 0
    for k in range(n):
        r = t[k] - f[k]
        if 0.0 < alpha[k] < c:
            total += r - eps
            count += 1
        if 0.0 < astar[k] < c:
            total += r + eps
            count += 1
    if count > 0:
        bias = total / count
    else:
        bias = 0.5 * (gmax + gmin)
    return alpha, astar, f, bias, it, viol, status
