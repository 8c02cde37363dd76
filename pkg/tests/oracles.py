"""Independent reference implementations used by the tests.

Deliberately naive: python loops and scalar math, no shared code with the package.
"""

import math

import numpy as np


def naive_sinrs(alloc, g_bc, g_tr, g_tc, g_br, cross, pb, pd, noise):
    """CUE m sits on RB m. Returns (cue list, d2d list)."""
    M, N = len(g_bc), len(g_tr)
    cue = []
    for m in range(M):
        interference = 0.0
        for n in range(N):
            if alloc[n] == m:
                interference += pd * g_tc[n][m]
        cue.append(pb * g_bc[m] / (interference + noise))
    d2d = []
    for n in range(N):
        interference = pb * g_br[n]
        for i in range(N):
            if i != n and alloc[i] == alloc[n]:
                interference += pd * cross[i][n]
        d2d.append(pd * g_tr[n] / (interference + noise))
    return cue, d2d


def naive_reward(n, alloc, cue, d2d, threshold_db=0.0, negative=-1.0):
    if cue[alloc[n]] < 10 ** (threshold_db / 10):
        return negative
    return math.log2(1 + d2d[n])


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_check(loss_fn, arrays, grads, rng, per_array=None, h=1e-6):
    """Central differences on (a sample of) entries of each array in ``arrays``.

    ``loss_fn()`` must re-read the arrays, which are perturbed in place. If a
    probe straddles a ReLU kink the estimate jumps; such entries are re-probed
    with a smaller step before being counted. Returns the max relative error.
    """
    worst = 0.0
    for arr, g in zip(arrays, grads):
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        idx = np.arange(flat.size)
        if per_array is not None and flat.size > per_array:
            idx = rng.choice(flat.size, per_array, replace=False)
        for j in idx:
            err = None
            for step in (h, h / 10, h / 100, h / 1000):
                old = flat[j]
                flat[j] = old + step
                up = loss_fn()
                flat[j] = old - step
                down = loss_fn()
                flat[j] = old
                num = (up - down) / (2 * step)
                e = rel_err(gflat[j], num)
                err = e if err is None else min(err, e)
                if err <= 1e-6:
                    break
            worst = max(worst, err)
    return worst
