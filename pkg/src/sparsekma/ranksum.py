"""Two-sided Mann-Whitney U test, normal approximation with tie correction."""
import math

import numpy as np
from scipy.stats import rankdata


def mann_whitney_u(x, y, use_continuity=True):
    """Return (U statistic of x, two-sided p-value).

    Identical pooled values (zero variance) give p = 1.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = rankdata(np.concatenate([x, y]))
    u1 = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(counts**3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return u1, 1.0
    big_u = max(u1, n1 * n2 - u1)
    num = big_u - n1 * n2 / 2.0 - (0.5 if use_continuity else 0.0)
    z = max(num, 0.0) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return u1, min(1.0, p)
