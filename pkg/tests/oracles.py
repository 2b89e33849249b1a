"""Independent reference implementations used as test oracles.

Nothing here imports the package's solvers or metrics; each oracle is written
from the defining formula.
"""
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


def star_normal_matrix(weights, center, lam):
    """Hessian/2 of the star energy: lam*I plus the star-graph Laplacian."""
    n = len(weights)
    a = np.eye(n) * lam
    for i in range(n):
        if i == center:
            continue
        w = weights[i]
        a[i, i] += w
        a[center, center] += w
        a[i, center] -= w
        a[center, i] -= w
    return a


def dense_star_solve(unary, weights, center, lam):
    a = star_normal_matrix(weights, center, lam)
    return np.linalg.solve(a, lam * np.asarray(unary, dtype=np.float64))


def star_energy(d, unary, weights, center, lam):
    """Loop evaluation in extended precision so finite differences are not rounding-limited."""
    d = np.asarray(d, dtype=np.longdouble)
    unary = np.asarray(unary, dtype=np.longdouble)
    weights = np.asarray(weights, dtype=np.longdouble)
    lam = np.longdouble(lam)
    total = np.longdouble(0.0)
    for i in range(len(d)):
        total += lam * (d[i] - unary[i]) ** 2
        if i != center:
            total += weights[i] * (d[i] - d[center]) ** 2
    return total


def central_difference(f, x, step=1e-5):
    x = np.asarray(x, dtype=np.longdouble)
    g = np.empty(x.size)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = float((f(hi) - f(lo)) / (2 * np.longdouble(step)))
    return g


def brute_metrics(pred, gt, threshold, edges):
    """Loop-based delta/MRE/MAE/RMSE and per-bin MAE."""
    n = len(pred)
    d = [0, 0, 0]
    rel = abs_sum = sq_sum = 0.0
    for p, g in zip(pred, gt):
        r = max(p / g, g / p)
        for k in range(3):
            if r < threshold ** (k + 1):
                d[k] += 1
        e = p - g
        rel += abs(e) / g
        abs_sum += abs(e)
        sq_sum += e * e
    nb = len(edges) - 1
    sums = [0.0] * nb
    counts = [0] * nb
    for p, g in zip(pred, gt):
        for b in range(nb):
            last = b == nb - 1
            if edges[b] <= g < edges[b + 1] or (last and g == edges[b + 1]):
                sums[b] += abs(p - g)
                counts[b] += 1
                break
    bins = [(sums[b] / counts[b] if counts[b] else None, counts[b]) for b in range(nb)]
    return (d[0] / n, d[1] / n, d[2] / n, rel / n, abs_sum / n, math.sqrt(sq_sum / n), bins)


def grid_dijkstra(occ, start, goal):
    """8-connected shortest path cost with the no-corner-cutting rule."""
    nr, nc = occ.shape
    rows, cols, vals = [], [], []
    for r in range(nr):
        for c in range(nc):
            if occ[r, c]:
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < nr and 0 <= cc < nc) or occ[rr, cc]:
                        continue
                    if dr and dc and (occ[r + dr, c] or occ[r, c + dc]):
                        continue
                    rows.append(r * nc + c)
                    cols.append(rr * nc + cc)
                    vals.append(math.sqrt(2.0) if dr and dc else 1.0)
    g = csr_matrix((vals, (rows, cols)), shape=(nr * nc, nr * nc))
    dist = dijkstra(g, indices=start[0] * nc + start[1])
    return float(dist[goal[0] * nc + goal[1]])


def random_star_field(rng, n_max=32 * 32):
    """Random region: rectangle sides 1..32, depths in [1, 200], weights from random features."""
    rows, cols = rng.integers(1, 33, size=2)
    n = int(rows * cols)
    center = int(rng.integers(0, n))
    unary = rng.uniform(1.0, 200.0, n)
    feats = rng.uniform(0.0, 1.0, (n, 4))
    sigma = rng.uniform(0.05, 1.0)
    w = np.exp(-np.sum((feats - feats[center]) ** 2, axis=1) / (2 * sigma * sigma))
    w = np.clip(w, np.finfo(np.float64).tiny, 1.0)
    w[center] = 1.0
    lam = rng.uniform(0.1, 5.0)
    return unary, w, center, lam, feats, sigma
