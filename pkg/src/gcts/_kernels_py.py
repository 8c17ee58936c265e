"""Pure numpy consensus-projection loop (fallback for the compiled kernel)."""

from __future__ import annotations

import numpy as np


def consensus_rounds(proj, weights, x0, target, tol, max_rounds, use_target):
    x = np.array(x0, dtype=np.float64, copy=True)
    res_trace = [0.0]
    dis_trace = [0.0]
    r = 0
    while True:
        dis_trace[-1] = float(np.sqrt(((x - x.mean(axis=0)) ** 2).sum()))
        if use_target:
            err = x - target
            res_trace[-1] = float(np.sqrt((err**2).sum()))
            if np.abs(err).max(initial=0.0) <= tol:
                break
        if r >= max_rounds:
            break
        delta = np.einsum("ikl,il->ik", proj, weights @ x - x)
        x = x + delta
        r += 1
        res_trace.append(0.0)
        dis_trace.append(0.0)
        if not use_target and np.abs(delta).max(initial=0.0) <= tol:
            break
    return x, r, np.array(res_trace), np.array(dis_trace)
