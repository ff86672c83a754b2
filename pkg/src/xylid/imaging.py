"""Image decoding, grayscale pipeline, patching, augmentation, and the
synthetic wood-texture generator used as the benchmark dataset stand-in.

Images flow through this module as plain numpy arrays: an RGB image is a
(H, W, 3) uint8 array, a gray image is a (H, W) float64 array with every
intensity in [0, 1].
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np
from PIL import Image, UnidentifiedImageError

MIN_IDENTIFY_SIDE = 64
CLOCK_SKEW_TOLERANCE_S = 300
GRAIN_AMPLITUDE = 0.10
RAY_BRIGHTNESS = 0.08
NORMALIZE_TARGET_MEAN = 0.5
NORMALIZE_TARGET_STD = 0.15
DEFAULT_NORMALIZE_TILE = 64


class ImageDecodeError(ValueError):
    """Bytes could not be decoded as a supported PNG/JPEG image."""


class ImageTooSmallError(ImageDecodeError):
    """Decoded image is below the minimum identification size."""


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG or JPEG bytes into an (H, W, 3) uint8 RGB array.

    Rejects other container formats and anything smaller than 64x64.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            fmt = im.format
            if fmt not in ("PNG", "JPEG"):
                raise ImageDecodeError(f"unsupported image format: {fmt}")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageDecodeError("undecodable image bytes") from exc
    except OSError as exc:
        raise ImageDecodeError(f"corrupt image data: {exc}") from exc
    h, w = arr.shape[:2]
    if w < MIN_IDENTIFY_SIDE or h < MIN_IDENTIFY_SIDE:
        raise ImageTooSmallError(
            f"image {w}x{h} below minimum {MIN_IDENTIFY_SIDE}x{MIN_IDENTIFY_SIDE}"
        )
    return arr


def image_format(data: bytes) -> str:
    """Return 'png' or 'jpg' for supported bytes, without full decode."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            fmt = im.format
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError("undecodable image bytes") from exc
    if fmt == "PNG":
        return "png"
    if fmt == "JPEG":
        return "jpg"
    raise ImageDecodeError(f"unsupported image format: {fmt}")


def encode_png(img: np.ndarray, compress_level: int = 1) -> bytes:
    """Encode a gray float [0,1] or uint8 array as PNG bytes."""
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG", compress_level=compress_level)
    return buf.getvalue()


# per-channel luma lookup tables; gathering precomputed products is
# bit-identical to multiplying each converted channel
_LUMA_LUT = tuple(
    coef * np.arange(256, dtype=np.float64) for coef in (0.299, 0.587, 0.114)
)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Video-luma grayscale: (0.299 R + 0.587 G + 0.114 B) / 255."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB array, got shape {img.shape}")
    if img.dtype == np.uint8:
        out = _LUMA_LUT[0][img[:, :, 0]]
        out += _LUMA_LUT[1][img[:, :, 1]]
        out += _LUMA_LUT[2][img[:, :, 2]]
        out /= 255.0
        return out
    r = img[:, :, 0].astype(np.float64)
    g = img[:, :, 1].astype(np.float64)
    b = img[:, :, 2].astype(np.float64)
    return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0


def _tile_edges(n: int, tile: int) -> list[tuple[int, int]]:
    # full tiles, with the trailing remainder merged into the last tile
    starts = list(range(0, n - n % tile, tile))
    spans = [(s, s + tile) for s in starts]
    if spans:
        spans[-1] = (spans[-1][0], n)
    else:
        spans = [(0, n)]
    return spans


def normalize_illumination(img: np.ndarray, tile: int = DEFAULT_NORMALIZE_TILE) -> np.ndarray:
    """Tile-local contrast normalization against uncontrolled field lighting.

    Each tile is shifted and scaled to mean 0.5 / std 0.15, then clamped to
    [0, 1]. Tiles with std below 1e-6 become constant 0.5. The trailing
    partial row/column of tiles is merged into the last full tile.
    """
    h, w = img.shape
    if tile < 16 or tile > min(h, w):
        raise ValueError(f"tile {tile} out of range [16, {min(h, w)}]")
    if h % tile == 0 and w % tile == 0:
        blocks = img.reshape(h // tile, tile, w // tile, tile)
        m = blocks.mean(axis=(1, 3), keepdims=True)
        s = blocks.std(axis=(1, 3), keepdims=True)
        flat = s < 1e-6
        scaled = (blocks - m) / np.where(flat, 1.0, s) * NORMALIZE_TARGET_STD
        scaled += NORMALIZE_TARGET_MEAN
        out = np.where(flat, NORMALIZE_TARGET_MEAN, np.clip(scaled, 0.0, 1.0))
        return out.reshape(h, w).astype(np.float64, copy=False)
    out = np.empty_like(img, dtype=np.float64)
    for y0, y1 in _tile_edges(h, tile):
        for x0, x1 in _tile_edges(w, tile):
            block = img[y0:y1, x0:x1]
            m = block.mean()
            s = block.std()
            if s < 1e-6:
                out[y0:y1, x0:x1] = NORMALIZE_TARGET_MEAN
            else:
                scaled = (block - m) / s * NORMALIZE_TARGET_STD + NORMALIZE_TARGET_MEAN
                out[y0:y1, x0:x1] = np.clip(scaled, 0.0, 1.0)
    return out


def extract_patches(img: np.ndarray, size: int, stride: int) -> list[np.ndarray]:
    """Tile an image into size x size patches in row-major scan order."""
    h, w = img.shape
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds image {w}x{h}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    patches = []
    for y in range(0, h - size + 1, stride):
        for x in range(0, w - size + 1, stride):
            patches.append(img[y:y + size, x:x + size])
    return patches


@dataclass
class CaptureMetadata:
    capture_id: str
    device_id: str
    captured_at: datetime
    magnification: float | None = None

    def validate(self, now: datetime | None = None) -> None:
        import uuid

        try:
            uuid.UUID(self.capture_id)
        except (ValueError, AttributeError, TypeError) as exc:
            raise ValueError(f"malformed capture_id: {self.capture_id!r}") from exc
        if self.captured_at.tzinfo is None:
            raise ValueError("captured_at must be timezone-aware UTC")
        now = now or datetime.now(timezone.utc)
        if self.captured_at > now + timedelta(seconds=CLOCK_SKEW_TOLERANCE_S):
            raise ValueError("captured_at is in the future beyond clock-skew tolerance")

    def to_dict(self) -> dict:
        return {
            "capture_id": self.capture_id,
            "device_id": self.device_id,
            "captured_at": self.captured_at.isoformat().replace("+00:00", "Z"),
            "magnification": self.magnification,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaptureMetadata":
        ts = d["captured_at"].replace("Z", "+00:00")
        return cls(
            capture_id=d["capture_id"],
            device_id=d["device_id"],
            captured_at=datetime.fromisoformat(ts),
            magnification=d.get("magnification"),
        )


@dataclass
class SynthClassParams:
    """Knobs for one synthetic timber class.

    The generator renders anatomically inspired, not anatomically accurate,
    texture: oriented sinusoidal grain, dark elliptical pores, bright ray
    lines, and pixel noise over a base intensity. pore_density is pores per
    10^4 px^2; ray_width of 0 disables rays.
    """

    grain_angle: float = 0.0
    grain_period: float = 16.0
    pore_density: float = 3.0
    pore_radius_mean: float = 3.0
    pore_radius_std: float = 0.8
    ray_spacing: float = 24.0
    ray_width: float = 1.5
    base_intensity: float = 0.5
    noise_std: float = 0.04

    def validate(self) -> None:
        if self.grain_period <= 0:
            raise ValueError("grain_period must be positive")
        if self.pore_radius_mean <= 0:
            raise ValueError("pore_radius_mean must be positive")
        if self.pore_radius_std < 0:
            raise ValueError("pore_radius_std must be non-negative")
        if self.pore_density < 0:
            raise ValueError("pore_density must be non-negative")
        if self.ray_width < 0:
            raise ValueError("ray_width must be non-negative")
        if self.ray_width > 0 and self.ray_spacing <= 0:
            raise ValueError("ray_spacing must be positive when rays are enabled")
        if not 0.0 <= self.base_intensity <= 1.0:
            raise ValueError("base_intensity must be in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    def to_dict(self) -> dict:
        return {
            "grain_angle": self.grain_angle,
            "grain_period": self.grain_period,
            "pore_density": self.pore_density,
            "pore_radius_mean": self.pore_radius_mean,
            "pore_radius_std": self.pore_radius_std,
            "ray_spacing": self.ray_spacing,
            "ray_width": self.ray_width,
            "base_intensity": self.base_intensity,
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthClassParams":
        return cls(**d)


_GRID_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _coord_grids(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    key = (width, height)
    grids = _GRID_CACHE.get(key)
    if grids is None:
        if len(_GRID_CACHE) >= 8:
            _GRID_CACHE.clear()
        xs = np.arange(width, dtype=np.float64)[None, :]
        ys = np.arange(height, dtype=np.float64)[:, None]
        grids = _GRID_CACHE[key] = (xs, ys)
    return grids


def render_texture(
    params: SynthClassParams, width: int, height: int, seed: int
) -> tuple[np.ndarray, dict]:
    """Render one synthetic wood surface; returns (image, render stats).

    Deterministic for a given (params, width, height, seed): all randomness
    comes from one PCG64 stream consumed in a fixed order (grain phase, ray
    jitter, pore count, pore attributes, pixel noise).
    """
    params.validate()
    rng = np.random.default_rng(seed)
    theta = math.radians(params.grain_angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    xs, ys = _coord_grids(width, height)

    phase = rng.uniform(0.0, 2.0 * math.pi)
    u = xs * cos_t + ys * sin_t
    u *= 2.0 * math.pi / params.grain_period
    u += phase
    img = np.sin(u, out=u)
    img *= GRAIN_AMPLITUDE
    img += params.base_intensity

    if params.ray_width > 0 and params.ray_spacing > 0:
        ray_jitter = rng.uniform(0.0, params.ray_spacing)
        v = ys * cos_t - xs * sin_t
        v -= ray_jitter
        np.mod(v, params.ray_spacing, out=v)
        img += RAY_BRIGHTNESS * (v < params.ray_width)

    area = width * height
    n_pores = int(rng.poisson(params.pore_density * area / 1e4))
    if n_pores > 0:
        cx = rng.uniform(0.0, width, n_pores)
        cy = rng.uniform(0.0, height, n_pores)
        radius = np.maximum(
            0.6, rng.normal(params.pore_radius_mean, params.pore_radius_std, n_pores)
        )
        aspect = rng.uniform(0.55, 0.9, n_pores)
        orient = theta + rng.normal(0.0, 0.2, n_pores)
        depth = rng.uniform(0.25, 0.45, n_pores)
        for i in range(n_pores):
            a = radius[i]
            b = radius[i] * aspect[i]
            half = int(math.ceil(a)) + 1
            x0 = max(0, int(cx[i]) - half)
            x1 = min(width, int(cx[i]) + half + 1)
            y0 = max(0, int(cy[i]) - half)
            y1 = min(height, int(cy[i]) + half + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            px = xs[0, x0:x1] - cx[i]
            py = ys[y0:y1, :] - cy[i]
            co, so = math.cos(orient[i]), math.sin(orient[i])
            du = (px * co + py * so) / a
            dv = (py * co - px * so) / b
            d = np.sqrt(du * du + dv * dv)
            img[y0:y1, x0:x1] -= depth[i] * np.clip(1.5 * (1.0 - d), 0.0, 1.0)

    if params.noise_std > 0:
        img += rng.normal(0.0, params.noise_std, (height, width))

    np.clip(img, 0.0, 1.0, out=img)
    return img, {"pore_count": n_pores, "phase": phase}


def synth_texture(params: SynthClassParams, width: int, height: int, seed: int) -> np.ndarray:
    return render_texture(params, width, height, seed)[0]


@dataclass
class AugmentSpec:
    """Ranges the augmenter samples from; defaults are the identity."""

    brightness_range: tuple[float, float] = (0.0, 0.0)
    contrast_range: tuple[float, float] = (1.0, 1.0)
    rotations: tuple[int, ...] = (0,)

    def validate(self) -> None:
        lo, hi = self.brightness_range
        if not (-0.3 <= lo <= hi <= 0.3):
            raise ValueError("brightness offset range must lie in [-0.3, 0.3]")
        lo, hi = self.contrast_range
        if not (0.5 <= lo <= hi <= 1.5):
            raise ValueError("contrast factor range must lie in [0.5, 1.5]")
        if not self.rotations or any(r not in (0, 90, 180, 270) for r in self.rotations):
            raise ValueError("rotations must be a non-empty subset of {0, 90, 180, 270}")


def augment(img: np.ndarray, spec: AugmentSpec, seed: int) -> np.ndarray:
    """Apply a seeded brightness/contrast/quarter-rotation draw from ``spec``.

    Contrast pivots on mid-gray: out = (v - 0.5) * c + 0.5 + b, clamped.
    No-op draws leave pixels bitwise untouched.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    b = rng.uniform(*spec.brightness_range)
    c = rng.uniform(*spec.contrast_range)
    rot = int(spec.rotations[rng.integers(0, len(spec.rotations))])
    if rot in (90, 270) and img.shape[0] != img.shape[1]:
        raise ValueError("quarter rotations require square input")
    out = img
    if c != 1.0 or b != 0.0:
        out = np.clip((out - 0.5) * c + 0.5 + b, 0.0, 1.0)
    if rot != 0:
        out = np.rot90(out, rot // 90)
    return np.ascontiguousarray(out)
