"""Naive reference implementations, written straight from the definitions.

They share no code with the package: plain Python loops, exact Fractions
where the definition is rational, and scalar ``math`` calls.
"""

from __future__ import annotations

import math
from fractions import Fraction

HALF = Fraction(1, 2)


def pixel(img, x, y, c):
    return img.samples[(y * img.width + x) * img.channels + c]


def naive_grayscale(r, g, b):
    return math.floor(Fraction(299 * r + 587 * g + 114 * b, 1000) + HALF)


def _tile_ranges(length, tiles):
    base = length // tiles
    return [(t * base, (t + 1) * base if t < tiles - 1 else length) for t in range(tiles)]


def naive_tile_map(values, clip_limit):
    """Clipped-histogram equalization map for one tile, as a list of 256 ints."""
    hist = [0] * 256
    for v in values:
        hist[v] += 1
    npix = len(values)
    limit = max(1, math.floor(clip_limit * npix / 256))
    excess = 0
    for b in range(256):
        if hist[b] > limit:
            excess += hist[b] - limit
            hist[b] = limit
    for b in range(256):
        hist[b] += excess // 256
    for b in range(excess % 256):
        hist[b] += 1
    assert sum(hist) == npix
    cdf, running = [], 0
    for b in range(256):
        running += hist[b]
        cdf.append(running)
    first = next(b for b in range(256) if hist[b] > 0)
    cdf_min = cdf[first]
    if npix == cdf_min:
        return list(range(256))
    out = []
    for b in range(256):
        level = Fraction(255 * (cdf[b] - cdf_min), npix - cdf_min)
        out.append(min(255, max(0, math.floor(level + HALF))))
    return out


def _neighbours(coord, centres):
    if coord <= centres[0]:
        return [(0, Fraction(1))]
    if coord >= centres[-1]:
        return [(len(centres) - 1, Fraction(1))]
    for t in range(len(centres) - 1):
        if centres[t] <= coord < centres[t + 1]:
            w = (coord - centres[t]) / (centres[t + 1] - centres[t])
            return [(t, 1 - w), (t + 1, w)]
    raise AssertionError("unreachable")


def naive_clahe(img, tiles_x, tiles_y, clip_limit):
    """Returns the output samples as a list (same layout as ``img.samples``)."""
    W, H = img.width, img.height
    xr, yr = _tile_ranges(W, tiles_x), _tile_ranges(H, tiles_y)
    cx = [Fraction(x0 + x1 - 1, 2) for x0, x1 in xr]
    cy = [Fraction(y0 + y1 - 1, 2) for y0, y1 in yr]
    out = [0] * (W * H * 3)
    for c in range(3):
        maps = [
            [
                naive_tile_map(
                    [pixel(img, x, y, c) for y in range(y0, y1) for x in range(x0, x1)], clip_limit
                )
                for (x0, x1) in xr
            ]
            for (y0, y1) in yr
        ]
        for y in range(H):
            ny = _neighbours(Fraction(y), cy)
            for x in range(W):
                nx = _neighbours(Fraction(x), cx)
                v = pixel(img, x, y, c)
                value = sum(wy * wx * maps[ty][tx][v] for ty, wy in ny for tx, wx in nx)
                out[(y * W + x) * 3 + c] = min(255, max(0, math.floor(value + HALF)))
    return out


def naive_bilateral(img, radius, sigma_space, sigma_range):
    W, H, C = img.width, img.height, img.channels
    out = [0] * (W * H * C)
    for c in range(C):
        for y in range(H):
            for x in range(W):
                ip = pixel(img, x, y, c)
                num = den = 0.0
                for qy in range(max(0, y - radius), min(H - 1, y + radius) + 1):
                    for qx in range(max(0, x - radius), min(W - 1, x + radius) + 1):
                        iq = pixel(img, qx, qy, c)
                        ws = math.exp(-((qy - y) ** 2 + (qx - x) ** 2) / (2.0 * sigma_space * sigma_space))
                        wr = math.exp(-((iq - ip) ** 2) / (2.0 * sigma_range * sigma_range))
                        w = ws * wr
                        num += w * iq
                        den += w
                out[(y * W + x) * C + c] = min(255, max(0, math.floor(num / den + 0.5)))
    return out


def naive_gaussian_blur(img, radius, sigma):
    W, H, C = img.width, img.height, img.channels
    out = []
    for y in range(H):
        for x in range(W):
            for c in range(C):
                num = den = 0.0
                for qy in range(max(0, y - radius), min(H - 1, y + radius) + 1):
                    for qx in range(max(0, x - radius), min(W - 1, x + radius) + 1):
                        w = math.exp(-((qy - y) ** 2 + (qx - x) ** 2) / (2 * sigma**2))
                        num += w * pixel(img, qx, qy, c)
                        den += w
                out.append(round(num / den))
    return out


def otsu_exhaustive(values):
    """Lowest t maximizing w0*w1*(mu0-mu1)^2 over classes <= t and > t."""
    n = len(values)
    best_t, best = None, Fraction(-1)
    for t in range(256):
        lo = [v for v in values if v <= t]
        hi = [v for v in values if v > t]
        if not lo or not hi:
            continue
        w0, w1 = Fraction(len(lo), n), Fraction(len(hi), n)
        mu0, mu1 = Fraction(sum(lo), len(lo)), Fraction(sum(hi), len(hi))
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best:
            best_t, best = t, var
    return best_t


def pair_count_auc(scored):
    """P(s+ > s-) + P(s+ == s-) / 2 over all positive x negative pairs, exactly."""
    pos = [s for s, y in scored if y]
    neg = [s for s, y in scored if not y]
    twice_wins = 0
    for p in pos:
        for q in neg:
            twice_wins += 2 if p > q else 1 if p == q else 0
    return Fraction(twice_wins, 2 * len(pos) * len(neg))


def two_pass_anova(groups):
    """Plain-float F from group means first, then squared deviations."""
    allx = [x for g in groups for x in g]
    grand = sum(allx) / len(allx)
    means = [sum(g) / len(g) for g in groups]
    ssb = sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = sum((x - m) ** 2 for g, m in zip(groups, means) for x in g)
    k, n = len(groups), len(allx)
    return (ssb / (k - 1)) / (ssw / (n - k))


def textbook_anova(groups):
    """Exact sums of squares via the raw-score (computational) formulas."""
    data = [[Fraction(x) for x in g] for g in groups]
    n_total = sum(len(g) for g in data)
    grand_total = sum(sum(g) for g in data)
    sum_sq = sum(x * x for g in data for x in g)
    sst = sum_sq - grand_total**2 / n_total
    ssb = sum(sum(g) ** 2 / len(g) for g in data) - grand_total**2 / n_total
    ssw = sst - ssb
    k = len(data)
    msb = ssb / (k - 1)
    msw = ssw / (n_total - k)
    return {"sst": sst, "ssb": ssb, "ssw": ssw, "msb": msb, "msw": msw, "f": msb / msw if msw else None}


class ReplaySplitMix:
    """Scalar SplitMix64, re-typed from the published algorithm."""

    def __init__(self, seed):
        self.s = seed % 2**64

    def next(self):
        self.s = (self.s + 0x9E3779B97F4A7C15) % 2**64
        z = self.s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next() >> 11) / 2.0**53

    def normal(self):
        u1, u2 = self.uniform(), self.uniform()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def replay_perturb(img, noise_sigma, slope, contrast, seed):
    rng = ReplaySplitMix(seed)
    out = []
    for y in range(img.height):
        for x in range(img.width):
            for c in range(img.channels):
                v = (pixel(img, x, y, c) - 128.0) * contrast + 128.0 + slope * x
                if noise_sigma > 0:
                    v = v + noise_sigma * rng.normal()
                r = math.floor(v + 0.5) if v >= 0 else -math.floor(-v + 0.5)
                out.append(min(255, max(0, r)))
    return out
