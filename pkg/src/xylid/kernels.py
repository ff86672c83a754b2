"""Hot per-pixel kernels: LBP code counting and GLCM pair counting.

Both kernels exist twice: a numba ``@njit`` version and a vectorized
pure-numpy version. The numpy path is selected by setting the environment
variable ``XYLID_NO_NUMBA=1`` before import, or automatically when numba
is not installed. The two paths use the same arithmetic expression
structure, so their outputs are bitwise identical; ``benchmarks/`` holds
a script comparing their speed.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

NUMBA_DISABLED = os.environ.get("XYLID_NO_NUMBA", "").lower() in ("1", "true", "yes")

if not NUMBA_DISABLED:
    try:
        from numba import njit
        HAS_NUMBA = True
    except ImportError:
        warnings.warn("numba not available; falling back to pure-numpy kernels")
        HAS_NUMBA = False
else:
    HAS_NUMBA = False

if not HAS_NUMBA:
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


# --------------------------------------------------------------------------
# Neighbor geometry for circular LBP sampling
# --------------------------------------------------------------------------

def neighbor_geometry(radius: float, neighbors: int):
    """Precompute bilinear sampling geometry for points on a radius circle.

    Neighbor k sits at angle 2*pi*k/neighbors, counter-clockwise from the
    +column axis with rows growing downward: offset (dy, dx) =
    (-radius*sin, radius*cos). Offsets within 1e-9 of an integer are
    snapped so the four cardinal samples of the P=8, R=1 configuration are
    exact array reads rather than degenerate interpolations.

    Returns integer index offsets (ya, yb, xa, xb), bilinear weights
    (w00, w01, w10, w11), a per-neighbor exact-hit flag (both coordinates
    snapped, so the sample is the single array read img[y+ya, x+xa]), and
    the interior margins (my, mx) inside which every sample stays in
    bounds.
    """
    ya = np.empty(neighbors, dtype=np.int64)
    yb = np.empty(neighbors, dtype=np.int64)
    xa = np.empty(neighbors, dtype=np.int64)
    xb = np.empty(neighbors, dtype=np.int64)
    w00 = np.empty(neighbors, dtype=np.float64)
    w01 = np.empty(neighbors, dtype=np.float64)
    w10 = np.empty(neighbors, dtype=np.float64)
    w11 = np.empty(neighbors, dtype=np.float64)
    exact = np.empty(neighbors, dtype=np.bool_)
    for k in range(neighbors):
        theta = 2.0 * math.pi * k / neighbors
        dy = -radius * math.sin(theta)
        dx = radius * math.cos(theta)
        if abs(dy - round(dy)) < 1e-9:
            dy = float(round(dy))
        if abs(dx - round(dx)) < 1e-9:
            dx = float(round(dx))
        y0 = math.floor(dy)
        x0 = math.floor(dx)
        fy = dy - y0
        fx = dx - x0
        ya[k] = y0
        yb[k] = y0 + 1 if fy > 0.0 else y0
        xa[k] = x0
        xb[k] = x0 + 1 if fx > 0.0 else x0
        w00[k] = (1.0 - fy) * (1.0 - fx)
        w01[k] = (1.0 - fy) * fx
        w10[k] = fy * (1.0 - fx)
        w11[k] = fy * fx
        exact[k] = fy == 0.0 and fx == 0.0
    my = int(max(0, max(-ya.min(), yb.max())))
    mx = int(max(0, max(-xa.min(), xb.max())))
    return ya, yb, xa, xb, w00, w01, w10, w11, exact, my, mx


# --------------------------------------------------------------------------
# LBP code map
# --------------------------------------------------------------------------

@njit(cache=True)
def _lbp_code_map_numba(img, ya, yb, xa, xb, w00, w01, w10, w11, exact, my, mx):
    h, w = img.shape
    n = ya.shape[0]
    codes = np.zeros((h, w), dtype=np.int32)
    for y in range(my, h - my):
        for x in range(mx, w - mx):
            center = img[y, x]
            code = 0
            for k in range(n):
                if exact[k]:
                    v = img[y + ya[k], x + xa[k]]
                else:
                    v = (w00[k] * img[y + ya[k], x + xa[k]]
                         + w01[k] * img[y + ya[k], x + xb[k]]
                         + w10[k] * img[y + yb[k], x + xa[k]]
                         + w11[k] * img[y + yb[k], x + xb[k]])
                if v >= center:
                    code |= 1 << k
            codes[y, x] = code
    return codes


def _lbp_code_map_numpy(img, ya, yb, xa, xb, w00, w01, w10, w11, exact, my, mx):
    h, w = img.shape
    n = ya.shape[0]
    center = img[my:h - my, mx:w - mx]
    interior = np.zeros(center.shape, dtype=np.int32)
    for k in range(n):
        rows_a = slice(my + ya[k], h - my + ya[k])
        rows_b = slice(my + yb[k], h - my + yb[k])
        cols_a = slice(mx + xa[k], w - mx + xa[k])
        cols_b = slice(mx + xb[k], w - mx + xb[k])
        if exact[k]:
            v = img[rows_a, cols_a]
        else:
            v = (w00[k] * img[rows_a, cols_a]
                 + w01[k] * img[rows_a, cols_b]
                 + w10[k] * img[rows_b, cols_a]
                 + w11[k] * img[rows_b, cols_b])
        interior |= (v >= center).astype(np.int32) << k
    codes = np.zeros((h, w), dtype=np.int32)
    codes[my:h - my, mx:w - mx] = interior
    return codes


def lbp_code_map(img: np.ndarray, radius: float, neighbors: int) -> np.ndarray:
    """Raw LBP code (threshold: neighbor >= center) per pixel.

    Valid only on the interior where the whole sampling circle fits; the
    margin returned by :func:`lbp_margins` is zero-filled and must be
    excluded by callers. Expects non-negative pixel values (grayscale
    images live in [0, 1]), which lets exact-integer samples skip the
    zero-weight interpolation terms without changing any bit.
    """
    geo = neighbor_geometry(radius, neighbors)
    if HAS_NUMBA:
        return _lbp_code_map_numba(np.ascontiguousarray(img), *geo)
    return _lbp_code_map_numpy(img, *geo)


def lbp_margins(radius: float, neighbors: int) -> tuple[int, int]:
    """(row, column) interior margins of the LBP sampling circle."""
    geo = neighbor_geometry(radius, neighbors)
    return geo[-2], geo[-1]


# --------------------------------------------------------------------------
# GLCM pair counting
# --------------------------------------------------------------------------

@njit(cache=True)
def _glcm_pair_counts_numba(q, levels, dx, dy):
    h, w = q.shape
    counts = np.zeros((levels, levels), dtype=np.int64)
    y0 = max(0, -dy)
    y1 = h - max(0, dy)
    x0 = max(0, -dx)
    x1 = w - max(0, dx)
    for y in range(y0, y1):
        for x in range(x0, x1):
            counts[q[y, x], q[y + dy, x + dx]] += 1
    return counts


def _glcm_pair_counts_numpy(q, levels, dx, dy):
    h, w = q.shape
    y0 = max(0, -dy)
    y1 = h - max(0, dy)
    x0 = max(0, -dx)
    x1 = w - max(0, dx)
    a = q[y0:y1, x0:x1].astype(np.int64)
    b = q[y0 + dy:y1 + dy, x0 + dx:x1 + dx].astype(np.int64)
    flat = a * levels + b
    return np.bincount(flat.ravel(), minlength=levels * levels).reshape(levels, levels)


def glcm_pair_counts(q: np.ndarray, levels: int, dx: int, dy: int) -> np.ndarray:
    """Count directed co-occurrences of quantized levels at offset (dx, dy).

    (dx, dy) is (column shift, row shift); the caller symmetrizes.
    """
    if HAS_NUMBA:
        return _glcm_pair_counts_numba(np.ascontiguousarray(q), levels, dx, dy)
    return _glcm_pair_counts_numpy(q, levels, dx, dy)


# --------------------------------------------------------------------------
# Rectangular region histograms
# --------------------------------------------------------------------------

@njit(cache=True)
def _region_bincounts_numba(m, n_bins, y0, y1, x0, x1):
    n = y0.shape[0]
    out = np.zeros((n, n_bins), dtype=np.int64)
    for i in range(n):
        for y in range(y0[i], y1[i]):
            for x in range(x0[i], x1[i]):
                out[i, m[y, x]] += 1
    return out


def _region_bincounts_numpy(m, n_bins, y0, y1, x0, x1):
    n = y0.shape[0]
    out = np.zeros((n, n_bins), dtype=np.int64)
    for i in range(n):
        region = m[y0[i]:y1[i], x0[i]:x1[i]]
        out[i] = np.bincount(region.ravel(), minlength=n_bins)
    return out


def region_bincounts(
    m: np.ndarray,
    n_bins: int,
    y0: np.ndarray,
    y1: np.ndarray,
    x0: np.ndarray,
    x1: np.ndarray,
) -> np.ndarray:
    """Histogram each rectangle [y0:y1, x0:x1] of an integer map.

    Values must lie in [0, n_bins). Returns int64 counts of shape
    (len(y0), n_bins).
    """
    y0 = np.ascontiguousarray(y0, dtype=np.int64)
    y1 = np.ascontiguousarray(y1, dtype=np.int64)
    x0 = np.ascontiguousarray(x0, dtype=np.int64)
    x1 = np.ascontiguousarray(x1, dtype=np.int64)
    if HAS_NUMBA:
        return _region_bincounts_numba(np.ascontiguousarray(m), n_bins, y0, y1, x0, x1)
    return _region_bincounts_numpy(m, n_bins, y0, y1, x0, x1)


def warmup() -> None:
    """Trigger JIT compilation so first real requests pay no compile cost."""
    if not HAS_NUMBA:
        return
    img = np.linspace(0.0, 1.0, 64, dtype=np.float64).reshape(8, 8)
    lbp_code_map(img, 1.0, 8)
    q = (img * 4).astype(np.int32).clip(0, 3)
    glcm_pair_counts(q, 4, 1, 0)
    glcm_pair_counts(q, 4, 0, 1)
    idx = np.array([0], dtype=np.int64)
    region_bincounts(q, 4, idx, idx + 8, idx, idx + 8)
