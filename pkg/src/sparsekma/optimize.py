import math

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


def golden_section(f, lo, hi, tol=1e-6, max_iter=60):
    """Golden-section minimisation of a unimodal f on [lo, hi].

    Returns (x, f(x)) for the best point actually evaluated.
    """
    lo, hi = min(lo, hi), max(lo, hi)
    h = hi - lo
    if h <= tol:
        x = 0.5 * (lo + hi)
        return x, f(x)

    c = lo + INV_PHI2 * h
    d = lo + INV_PHI * h
    fc, fd = f(c), f(d)
    best = (c, fc) if fc <= fd else (d, fd)
    for _ in range(max_iter):
        if h <= tol:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            h = INV_PHI * h
            c = lo + INV_PHI2 * h
            fc = f(c)
            if fc < best[1]:
                best = (c, fc)
        else:
            lo, c, fc = c, d, fd
            h = INV_PHI * h
            d = lo + INV_PHI * h
            fd = f(d)
            if fd < best[1]:
                best = (d, fd)
    return best
