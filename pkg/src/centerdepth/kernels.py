"""Hot numeric loops.

Every kernel exists twice: a ``*_numba`` loop version compiled with
``numba.njit`` and a ``*_numpy`` vectorized version. The unsuffixed name is
bound to one of the two at import time according to
:data:`centerdepth._accel.USE_NUMBA`. Both variants are importable at all
times so tests and ``benchmarks/bench_kernels.py`` can compare them.
"""
import heapq
import math

import numpy as np

from ._accel import USE_NUMBA, njit

SQRT2 = math.sqrt(2.0)
# largest double below 1.0; keeps omega < 1 whenever the features differ
_BELOW_ONE = np.nextafter(1.0, 0.0)
_TINY = np.finfo(np.float64).tiny


# --------------------------------------------------------------------------
# feature-similarity weights
# --------------------------------------------------------------------------

def feature_weights_numpy(feats, center, sigma_f):
    diff = feats - center
    sq = np.einsum("ij,ij->i", diff, diff)
    w = np.exp(-sq / (2.0 * sigma_f * sigma_f))
    # equality is decided on the vectors: tiny differences can square to 0
    same = np.all(diff == 0.0, axis=1)
    w = np.where(same, 1.0, np.minimum(w, _BELOW_ONE))
    return np.maximum(w, _TINY)


@njit
def feature_weights_numba(feats, center, sigma_f):
    n, c = feats.shape
    out = np.empty(n)
    inv = 1.0 / (2.0 * sigma_f * sigma_f)
    for i in range(n):
        s = 0.0
        same = True
        for k in range(c):
            d = feats[i, k] - center[k]
            if d != 0.0:
                same = False
            s += d * d
        if same:
            out[i] = 1.0
        else:
            w = math.exp(-s * inv)
            if w > _BELOW_ONE:
                w = _BELOW_ONE
            if w < _TINY:
                w = _TINY
            out[i] = w
    return out


# --------------------------------------------------------------------------
# star-graph quadratic energy: closed form and coordinate descent
# --------------------------------------------------------------------------

def star_solve_numpy(unary, weights, center, lam):
    w = weights.copy()
    w[center] = 0.0
    alpha = w / (lam + w)
    dc = (unary[center] + alpha @ unary) / (1.0 + alpha.sum())
    d = (lam * unary + w * dc) / (lam + w)
    d[center] = dc
    return d


@njit
def star_solve_numba(unary, weights, center, lam):
    n = unary.shape[0]
    num = unary[center]
    den = 1.0
    for i in range(n):
        if i != center:
            a = weights[i] / (lam + weights[i])
            num += a * unary[i]
            den += a
    dc = num / den
    d = np.empty(n)
    for i in range(n):
        if i == center:
            d[i] = dc
        else:
            d[i] = (lam * unary[i] + weights[i] * dc) / (lam + weights[i])
    return d


def coordinate_descent_numpy(unary, weights, center, lam, max_iters, tol):
    """Exact per-variable minimization sweeps, leaves first and center last.

    Returns ``(depths, sweeps, decreases)``; ``decreases[k]`` is the exact
    energy drop of sweep ``k`` (sum of curvature * step**2 per variable).
    """
    w = weights.copy()
    w[center] = 0.0
    leaf = np.ones(unary.shape[0], dtype=bool)
    leaf[center] = False
    curv = lam + w
    wsum = w.sum()
    d = unary.astype(np.float64).copy()
    decreases = np.empty(max_iters)
    sweeps = 0
    for it in range(max_iters):
        dc = d[center]
        new = (lam * unary + w * dc) / curv
        step = np.where(leaf, d - new, 0.0)
        drop = float(np.sum(curv * step * step))
        d = np.where(leaf, new, d)
        new_c = (lam * unary[center] + w @ d) / (lam + wsum)
        drop += (lam + wsum) * (dc - new_c) ** 2
        d[center] = new_c
        decreases[it] = drop
        sweeps = it + 1
        if drop < tol:
            break
    return d, sweeps, decreases[:sweeps]


@njit
def coordinate_descent_numba(unary, weights, center, lam, max_iters, tol):
    n = unary.shape[0]
    d = unary.astype(np.float64).copy()
    wsum = 0.0
    for i in range(n):
        if i != center:
            wsum += weights[i]
    decreases = np.empty(max_iters)
    sweeps = 0
    for it in range(max_iters):
        dc = d[center]
        drop = 0.0
        acc = 0.0
        for i in range(n):
            if i == center:
                continue
            curv = lam + weights[i]
            new = (lam * unary[i] + weights[i] * dc) / curv
            step = d[i] - new
            drop += curv * step * step
            d[i] = new
            acc += weights[i] * new
        new_c = (lam * unary[center] + acc) / (lam + wsum)
        drop += (lam + wsum) * (dc - new_c) * (dc - new_c)
        d[center] = new_c
        decreases[it] = drop
        sweeps = it + 1
        if drop < tol:
            break
    return d, sweeps, decreases[:sweeps]


# --------------------------------------------------------------------------
# heatmaps
# --------------------------------------------------------------------------

def splat_gaussian_numpy(values, xc, yc, sigma):
    """In-place elementwise max of ``values`` with a unit Gaussian at (xc, yc).

    Evaluated separably as exp(-dx^2/2s^2) * exp(-dy^2/2s^2); this is exact at
    the peak and along its axes and within a few ulp elsewhere.
    """
    h, w = values.shape
    inv = 1.0 / (2.0 * sigma * sigma)
    ex = np.exp(-((np.arange(w) - xc) ** 2) * inv)
    ey = np.exp(-((np.arange(h) - yc) ** 2) * inv)
    np.maximum(values, ey[:, None] * ex[None, :], out=values)
    return values


@njit
def splat_gaussian_numba(values, xc, yc, sigma):
    h, w = values.shape
    inv = 1.0 / (2.0 * sigma * sigma)
    ex = np.empty(w)
    for x in range(w):
        ex[x] = math.exp(-((x - xc) * (x - xc)) * inv)
    for y in range(h):
        ey = math.exp(-((y - yc) * (y - yc)) * inv)
        for x in range(w):
            g = ey * ex[x]
            if g > values[y, x]:
                values[y, x] = g
    return values


def peak_mask_numpy(values, threshold, half):
    """Cells >= threshold that strictly dominate their (2*half+1)^2 window.

    Ties go to the neighbor with the smaller row-major index.
    """
    h, w = values.shape
    pad = np.full((h + 2 * half, w + 2 * half), -np.inf)
    pad[half:half + h, half:half + w] = values
    keep = values >= threshold
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[half + dy:half + dy + h, half + dx:half + dx + w]
            if dy < 0 or (dy == 0 and dx < 0):
                keep &= values > nb
            else:
                keep &= values >= nb
    return keep


@njit
def peak_mask_numba(values, threshold, half):
    h, w = values.shape
    keep = np.zeros((h, w), dtype=np.bool_)
    for y in range(h):
        for x in range(w):
            v = values[y, x]
            if v < threshold:
                continue
            ok = True
            for dy in range(-half, half + 1):
                yy = y + dy
                if yy < 0 or yy >= h:
                    continue
                for dx in range(-half, half + 1):
                    xx = x + dx
                    if xx < 0 or xx >= w or (dy == 0 and dx == 0):
                        continue
                    nb = values[yy, xx]
                    if dy < 0 or (dy == 0 and dx < 0):
                        if not v > nb:
                            ok = False
                            break
                    elif not v >= nb:
                        ok = False
                        break
                if not ok:
                    break
            keep[y, x] = ok
    return keep


# --------------------------------------------------------------------------
# occupancy rasterization
# --------------------------------------------------------------------------

def disk_occupancy_numpy(xs, zs, radii, x_min, z_min, res, nz, nx):
    occ = np.zeros((nz, nx), dtype=bool)
    cx = x_min + (np.arange(nx) + 0.5) * res
    cz = z_min + (np.arange(nz) + 0.5) * res
    for x, z, r in zip(xs, zs, radii):
        occ |= ((cx[None, :] - x) ** 2 + (cz[:, None] - z) ** 2) <= r * r
    return occ


@njit
def disk_occupancy_numba(xs, zs, radii, x_min, z_min, res, nz, nx):
    occ = np.zeros((nz, nx), dtype=np.bool_)
    for k in range(xs.shape[0]):
        r2 = radii[k] * radii[k]
        for i in range(nz):
            dz = z_min + (i + 0.5) * res - zs[k]
            dz2 = dz * dz
            if dz2 > r2:
                continue
            for j in range(nx):
                dx = x_min + (j + 0.5) * res - xs[k]
                if dx * dx + dz2 <= r2:
                    occ[i, j] = True
    return occ


# --------------------------------------------------------------------------
# A* on an 8-connected grid (no corner cutting)
# --------------------------------------------------------------------------

_DR = np.array([-1, 1, 0, 0, -1, -1, 1, 1], dtype=np.int64)
_DC = np.array([0, 0, -1, 1, -1, 1, -1, 1], dtype=np.int64)


def _octile(r, c, gr, gc):
    dr = abs(r - gr)
    dc = abs(c - gc)
    return (dr + dc) + (SQRT2 - 2.0) * min(dr, dc)


def astar_numpy(occ, sr, sc, gr, gc):
    """Returns ``(cost, parent)``; cost is inf when the goal is unreachable."""
    nr, nc = occ.shape
    g = np.full(nr * nc, np.inf)
    parent = np.full(nr * nc, -1, dtype=np.int64)
    closed = np.zeros(nr * nc, dtype=bool)
    start = sr * nc + sc
    goal = gr * nc + gc
    g[start] = 0.0
    seq = 0
    heap = [(_octile(sr, sc, gr, gc), seq, start)]
    while heap:
        _, _, node = heapq.heappop(heap)
        if closed[node]:
            continue
        if node == goal:
            return g[goal], parent
        closed[node] = True
        r, c = divmod(node, nc)
        for k in range(8):
            rr = r + _DR[k]
            cc = c + _DC[k]
            if rr < 0 or rr >= nr or cc < 0 or cc >= nc or occ[rr, cc]:
                continue
            if k >= 4:
                if occ[r, cc] or occ[rr, c]:
                    continue
                step = SQRT2
            else:
                step = 1.0
            nxt = rr * nc + cc
            if closed[nxt]:
                continue
            cand = g[node] + step
            if cand < g[nxt]:
                g[nxt] = cand
                parent[nxt] = node
                seq += 1
                heapq.heappush(heap, (cand + _octile(rr, cc, gr, gc), seq, nxt))
    return np.inf, parent


@njit
def _heap_less(hf, hs, a, b):
    return hf[a] < hf[b] or (hf[a] == hf[b] and hs[a] < hs[b])


@njit
def _heap_swap(hf, hs, hn, a, b):
    hf[a], hf[b] = hf[b], hf[a]
    hs[a], hs[b] = hs[b], hs[a]
    hn[a], hn[b] = hn[b], hn[a]


@njit
def astar_numba(occ, sr, sc, gr, gc):
    nr, nc = occ.shape
    n = nr * nc
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    cap = 8 * n + 1
    hf = np.empty(cap)
    hs = np.empty(cap, dtype=np.int64)
    hn = np.empty(cap, dtype=np.int64)
    start = sr * nc + sc
    goal = gr * nc + gc
    g[start] = 0.0
    dr0 = abs(sr - gr)
    dc0 = abs(sc - gc)
    hf[0] = (dr0 + dc0) + (SQRT2 - 2.0) * min(dr0, dc0)
    hs[0] = 0
    hn[0] = start
    size = 1
    seq = 0
    while size > 0:
        node = hn[0]
        size -= 1
        if size > 0:
            hf[0] = hf[size]
            hs[0] = hs[size]
            hn[0] = hn[size]
            i = 0
            while True:
                left = 2 * i + 1
                if left >= size:
                    break
                best = left
                right = left + 1
                if right < size and _heap_less(hf, hs, right, left):
                    best = right
                if _heap_less(hf, hs, best, i):
                    _heap_swap(hf, hs, hn, best, i)
                    i = best
                else:
                    break
        if closed[node]:
            continue
        if node == goal:
            return g[goal], parent
        closed[node] = True
        r = node // nc
        c = node % nc
        for k in range(8):
            rr = r + _DR[k]
            cc = c + _DC[k]
            if rr < 0 or rr >= nr or cc < 0 or cc >= nc or occ[rr, cc]:
                continue
            if k >= 4:
                if occ[r, cc] or occ[rr, c]:
                    continue
                step = SQRT2
            else:
                step = 1.0
            nxt = rr * nc + cc
            if closed[nxt]:
                continue
            cand = g[node] + step
            if cand < g[nxt]:
                g[nxt] = cand
                parent[nxt] = node
                seq += 1
                dr = abs(rr - gr)
                dc = abs(cc - gc)
                hf[size] = cand + (dr + dc) + (SQRT2 - 2.0) * min(dr, dc)
                hs[size] = seq
                hn[size] = nxt
                j = size
                size += 1
                while j > 0:
                    p = (j - 1) // 2
                    if _heap_less(hf, hs, j, p):
                        _heap_swap(hf, hs, hn, j, p)
                        j = p
                    else:
                        break
    return np.inf, parent


if USE_NUMBA:
    feature_weights = feature_weights_numba
    star_solve = star_solve_numba
    coordinate_descent = coordinate_descent_numba
    splat_gaussian = splat_gaussian_numba
    peak_mask = peak_mask_numba
    disk_occupancy = disk_occupancy_numba
    astar_search = astar_numba
else:
    feature_weights = feature_weights_numpy
    star_solve = star_solve_numpy
    coordinate_descent = coordinate_descent_numpy
    splat_gaussian = splat_gaussian_numpy
    peak_mask = peak_mask_numpy
    disk_occupancy = disk_occupancy_numpy
    astar_search = astar_numpy
