"""Texture descriptors feeding the classifier: uniform LBP histograms and
GLCM statistics, mean-pooled over a patch grid into one vector per image.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .imaging import extract_patches

DEFAULT_GLCM_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))
N_LBP_BINS = 59  # 58 uniform P=8 codes + 1 catch-all
N_GLCM_STATS = 4  # contrast, energy, homogeneity, correlation


@dataclass(frozen=True)
class FeatureSpec:
    lbp_radius: float = 1.0
    lbp_neighbors: int = 8
    glcm_levels: int = 16
    glcm_offsets: tuple[tuple[int, int], ...] = DEFAULT_GLCM_OFFSETS
    patch_size: int = 128
    patch_stride: int = 64

    def validate(self) -> None:
        if self.lbp_neighbors != 8:
            raise ValueError("only lbp_neighbors = 8 is supported")
        if self.lbp_radius <= 0:
            raise ValueError("lbp_radius must be positive")
        if self.glcm_levels < 2:
            raise ValueError("glcm_levels must be >= 2")
        if not self.glcm_offsets or any(o == (0, 0) for o in self.glcm_offsets):
            raise ValueError("glcm_offsets must be non-empty and non-zero")
        if self.patch_size <= 2 * self.lbp_radius:
            raise ValueError("patch_size must exceed twice the LBP radius")
        if self.patch_stride < 1:
            raise ValueError("patch_stride must be >= 1")

    @property
    def dim(self) -> int:
        return N_LBP_BINS + N_GLCM_STATS * len(self.glcm_offsets)

    def to_dict(self) -> dict:
        return {
            "lbp_radius": self.lbp_radius,
            "lbp_neighbors": self.lbp_neighbors,
            "glcm_levels": self.glcm_levels,
            "glcm_offsets": [list(o) for o in self.glcm_offsets],
            "patch_size": self.patch_size,
            "patch_stride": self.patch_stride,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            lbp_radius=float(d["lbp_radius"]),
            lbp_neighbors=int(d["lbp_neighbors"]),
            glcm_levels=int(d["glcm_levels"]),
            glcm_offsets=tuple(tuple(int(v) for v in o) for o in d["glcm_offsets"]),
            patch_size=int(d["patch_size"]),
            patch_stride=int(d["patch_stride"]),
        )

    def spec_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class FeatureVector:
    values: np.ndarray
    spec_hash: str

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def uniform_lbp_table(neighbors: int = 8) -> np.ndarray:
    """Map each raw code to its uniform-u2 bin.

    Uniform codes (at most 2 transitions around the circular bit string)
    get bins 0..57 in ascending code order; everything else shares the
    final catch-all bin.
    """
    n_codes = 1 << neighbors
    table = np.empty(n_codes, dtype=np.int32)
    uniform_bin = 0
    catch_all = sum(1 for c in range(n_codes) if _transitions(c, neighbors) <= 2)
    for code in range(n_codes):
        if _transitions(code, neighbors) <= 2:
            table[code] = uniform_bin
            uniform_bin += 1
        else:
            table[code] = catch_all
    return table


def _transitions(code: int, neighbors: int) -> int:
    bits = [(code >> k) & 1 for k in range(neighbors)]
    return sum(bits[k] != bits[(k + 1) % neighbors] for k in range(neighbors))


_U2_TABLE = uniform_lbp_table(8)


def lbp_histogram(patch: np.ndarray, radius: float = 1.0, neighbors: int = 8) -> np.ndarray:
    """L1-normalized 59-bin uniform LBP histogram of a gray patch."""
    if neighbors != 8:
        raise ValueError("only neighbors = 8 is supported")
    h, w = patch.shape
    if min(h, w) <= 2 * radius:
        raise ValueError(f"patch {w}x{h} too small for LBP radius {radius}")
    codes = kernels.lbp_code_map(patch, radius, neighbors)
    my, mx = kernels.lbp_margins(radius, neighbors)
    counts = np.bincount(codes[my:h - my, mx:w - mx].ravel(), minlength=1 << neighbors)
    hist = np.bincount(_U2_TABLE, weights=counts.astype(np.float64), minlength=N_LBP_BINS)
    return hist / hist.sum()


def quantize_levels(patch: np.ndarray, levels: int) -> np.ndarray:
    """Uniform quantization of [0,1] intensities into integer levels."""
    q = (patch * levels).astype(np.int32)
    return np.clip(q, 0, levels - 1)


def glcm_features(
    patch: np.ndarray,
    levels: int = 16,
    offsets: tuple[tuple[int, int], ...] = DEFAULT_GLCM_OFFSETS,
) -> np.ndarray:
    """Per-offset (contrast, energy, homogeneity, correlation) from the
    symmetric normalized co-occurrence matrix.

    Correlation of a zero-variance patch is defined as 0.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    h, w = patch.shape
    q = quantize_levels(patch, levels)
    idx = np.arange(levels, dtype=np.float64)
    di = idx[:, None] - idx[None, :]
    weights_contrast = di * di
    weights_homog = 1.0 / (1.0 + di * di)
    out = np.empty(N_GLCM_STATS * len(offsets), dtype=np.float64)
    for n, (dx, dy) in enumerate(offsets):
        if abs(dx) >= w or abs(dy) >= h:
            raise ValueError(f"patch {w}x{h} too small for GLCM offset ({dx}, {dy})")
        counts = kernels.glcm_pair_counts(q, levels, dx, dy)
        m = counts + counts.T
        p = m / m.sum()
        contrast = float((p * weights_contrast).sum())
        energy = float((p * p).sum())
        homogeneity = float((p * weights_homog).sum())
        marginal = p.sum(axis=1)
        mu = float((idx * marginal).sum())
        var = float((((idx - mu) ** 2) * marginal).sum())
        if var < 1e-12:
            correlation = 0.0
        else:
            correlation = float(
                (((idx[:, None] - mu) * (idx[None, :] - mu)) * p).sum() / var
            )
        out[4 * n:4 * n + 4] = (contrast, energy, homogeneity, correlation)
    return out


def _glcm_stats_batch(counts: np.ndarray, levels: int) -> np.ndarray:
    """(..., levels, levels) directed counts -> (..., 4) statistics."""
    idx = np.arange(levels, dtype=np.float64)
    di = idx[:, None] - idx[None, :]
    w_contrast = di * di
    w_homog = 1.0 / (1.0 + di * di)
    m = counts + np.swapaxes(counts, -1, -2)
    p = m / m.sum(axis=(-1, -2), keepdims=True)
    contrast = (p * w_contrast).sum(axis=(-1, -2))
    energy = (p * p).sum(axis=(-1, -2))
    homogeneity = (p * w_homog).sum(axis=(-1, -2))
    marginal = p.sum(axis=-1)
    mu = (marginal * idx).sum(axis=-1)
    var = (marginal * (idx - mu[..., None]) ** 2).sum(axis=-1)
    dev_i = idx - mu[..., None]
    cov = (dev_i[..., :, None] * dev_i[..., None, :] * p).sum(axis=(-1, -2))
    correlation = np.where(var < 1e-12, 0.0, cov / np.where(var < 1e-12, 1.0, var))
    return np.stack([contrast, energy, homogeneity, correlation], axis=-1)


def extract_features(img: np.ndarray, spec: FeatureSpec) -> FeatureVector:
    """Patch the image per ``spec``, compute lbp ++ glcm per patch, and
    mean-pool across patches into a single vector.

    LBP codes and GLCM pairs are purely local, so they are computed once
    over the whole image and sliced per patch; this matches the naive
    per-patch computation but avoids redoing overlapping-patch work.
    """
    spec.validate()
    h, w = img.shape
    size, stride = spec.patch_size, spec.patch_stride
    if h < size or w < size:
        raise ValueError(f"image {w}x{h} smaller than patch_size {size}")
    levels = spec.glcm_levels
    my, mx = kernels.lbp_margins(spec.lbp_radius, spec.lbp_neighbors)
    code59 = _U2_TABLE[kernels.lbp_code_map(img, spec.lbp_radius, spec.lbp_neighbors)]
    q = quantize_levels(img, levels)
    pair_maps = []
    for dx, dy in spec.glcm_offsets:
        if abs(dx) >= size or abs(dy) >= size:
            raise ValueError(f"patch size {size} too small for GLCM offset ({dx}, {dy})")
        ys = slice(max(0, -dy), h - max(0, dy))
        xs = slice(max(0, -dx), w - max(0, dx))
        pm = np.zeros((h, w), dtype=np.int32)
        pm[ys, xs] = q[ys, xs].astype(np.int32) * levels + q[
            ys.start + dy:ys.stop + dy, xs.start + dx:xs.stop + dx
        ]
        pair_maps.append(pm)

    oy = np.repeat(np.arange(0, h - size + 1, stride, dtype=np.int64),
                   len(range(0, w - size + 1, stride)))
    ox = np.tile(np.arange(0, w - size + 1, stride, dtype=np.int64),
                 len(range(0, h - size + 1, stride)))
    n_pat = oy.shape[0]
    lbp_hists = kernels.region_bincounts(
        code59, N_LBP_BINS, oy + my, oy + size - my, ox + mx, ox + size - mx
    ).astype(np.float64)
    lbp_hists /= lbp_hists.sum(axis=1, keepdims=True)
    glcm_counts = np.empty((n_pat, len(spec.glcm_offsets), levels, levels), dtype=np.int64)
    for n, (dx, dy) in enumerate(spec.glcm_offsets):
        counts = kernels.region_bincounts(
            pair_maps[n], levels * levels,
            oy + max(0, -dy), oy + size - max(0, dy),
            ox + max(0, -dx), ox + size - max(0, dx),
        )
        glcm_counts[:, n] = counts.reshape(n_pat, levels, levels)
    stats = _glcm_stats_batch(glcm_counts, levels)
    pooled = np.concatenate(
        [lbp_hists.mean(axis=0), stats.reshape(n_pat, -1).mean(axis=0)]
    )
    return FeatureVector(values=pooled, spec_hash=spec.spec_hash())
