"""Local linear regression with tricube weights and a nearest-neighbour span."""
import math

import numpy as np


def loess(x, y, x_eval, span=0.3, chunk=64):
    """Evaluate a local linear fit of (x, y) at `x_eval`.

    Args:
        x, y: pooled samples, any order.
        x_eval: evaluation abscissae.
        span: fraction of the samples inside each local window.
        chunk: evaluation points processed per vectorised block.

    Returns:
        Array of fitted values, one per `x_eval` entry.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    x_eval = np.asarray(x_eval, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise ValueError("loess needs at least one sample")
    if not 0 < span <= 1:
        raise ValueError(f"span must lie in (0, 1], got {span}")
    q = min(n, max(2, int(math.ceil(span * n))))
    out = np.empty(x_eval.size)
    for s in range(0, x_eval.size, chunk):
        x0 = x_eval[s : s + chunk, None]
        dx = x[None, :] - x0
        dist = np.abs(dx)
        radius = np.partition(dist, q - 1, axis=1)[:, q - 1 : q]
        # widen slightly so the q-th neighbour keeps a positive weight
        radius = np.maximum(radius * (1 + 1e-10), 1e-12)
        u = np.clip(dist / radius, 0.0, 1.0)
        wt = (1 - u**3) ** 3
        s0 = wt.sum(axis=1)
        s1 = (wt * dx).sum(axis=1)
        s2 = (wt * dx * dx).sum(axis=1)
        t0 = (wt * y).sum(axis=1)
        t1 = (wt * dx * y).sum(axis=1)
        det = s0 * s2 - s1 * s1
        flat = np.abs(det) <= 1e-12 * np.maximum(s0 * s2, 1e-300)
        with np.errstate(invalid="ignore", divide="ignore"):
            fit = np.where(flat, t0 / s0, (s2 * t0 - s1 * t1) / det)
        out[s : s + chunk] = fit
    return out
