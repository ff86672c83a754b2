"""Synthetic benchmark dataset: one texture-parameter set per class spread
across parameter space, optional look-alike sibling pairs within a family,
deterministic per-image seeds, and a JSON manifest.

Layout on disk: one directory per class_id holding PNG images, plus
``manifest.json`` listing every image as (relative path, class_id, seed,
params hash) together with the per-class parameters and the flagged
sibling pairs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import taxonomy as taxonomy_mod
from .features import FeatureSpec, FeatureVector, extract_features
from .imaging import (
    SynthClassParams,
    decode_image,
    encode_png,
    normalize_illumination,
    render_texture,
    to_grayscale,
)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = "1"
DEFAULT_IMAGE_SIDE = 512

ANGLE_STEP_DEG = 15.0
GRAIN_PERIODS = (7.0, 11.0, 17.0, 26.0, 40.0)

# Same-family look-alike candidates, in assignment order. Both members sit
# in the first taxonomy column so they are available even for small
# --classes values; all pairs share family Dipterocarpaceae.
SIBLING_CANDIDATES: tuple[tuple[str, str], ...] = (
    ("dark-red-meranti", "light-red-meranti"),
    ("white-meranti", "yellow-meranti"),
    ("balau", "red-balau"),
    ("merawan", "giam"),
    ("keruing", "kapur"),
    ("resak", "gerutu"),
)

SIBLING_ANGLE_DELTA_DEG = 1.0
SIBLING_PORE_DENSITY_FACTOR = 1.08


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SiblingPair:
    a: str
    b: str
    family: str


@dataclass(frozen=True)
class ManifestImage:
    path: str
    class_id: str
    seed: int
    params_hash: str


@dataclass(frozen=True)
class ManifestClass:
    class_id: str
    family: str | None
    params: SynthClassParams
    params_hash: str


@dataclass
class Manifest:
    version: str
    seed: int
    width: int
    height: int
    classes: list[ManifestClass]
    sibling_pairs: list[SiblingPair]
    images: list[ManifestImage]

    def class_ids(self) -> list[str]:
        return [c.class_id for c in self.classes]

    def labeled_paths(self) -> list[tuple[str, str]]:
        return [(img.path, img.class_id) for img in self.images]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "classes": [
                {
                    "class_id": c.class_id,
                    "family": c.family,
                    "params": dataclasses.asdict(c.params),
                    "params_hash": c.params_hash,
                }
                for c in self.classes
            ],
            "sibling_pairs": [
                {"a": p.a, "b": p.b, "family": p.family} for p in self.sibling_pairs
            ],
            "images": [
                {
                    "path": i.path,
                    "class_id": i.class_id,
                    "seed": i.seed,
                    "params_hash": i.params_hash,
                }
                for i in self.images
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(
            version=d["version"],
            seed=int(d["seed"]),
            width=int(d["width"]),
            height=int(d["height"]),
            classes=[
                ManifestClass(
                    class_id=c["class_id"],
                    family=c.get("family"),
                    params=SynthClassParams(**c["params"]),
                    params_hash=c["params_hash"],
                )
                for c in d["classes"]
            ],
            sibling_pairs=[
                SiblingPair(a=p["a"], b=p["b"], family=p["family"])
                for p in d["sibling_pairs"]
            ],
            images=[
                ManifestImage(
                    path=i["path"],
                    class_id=i["class_id"],
                    seed=int(i["seed"]),
                    params_hash=i["params_hash"],
                )
                for i in d["images"]
            ],
        )


def params_hash(params: SynthClassParams) -> str:
    canon = json.dumps(dataclasses.asdict(params), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def image_seed(dataset_seed: int, class_index: int, image_index: int) -> int:
    """Stable per-image render seed via numpy's SeedSequence mixing."""
    ss = np.random.SeedSequence([dataset_seed, class_index, image_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _base_params(class_index: int, dataset_seed: int) -> SynthClassParams:
    """Deterministic per-class parameters: angle and grain period walk a
    12 x 5 grid; the remaining knobs come from a per-class stream."""
    rng = np.random.default_rng(np.random.SeedSequence([dataset_seed, 1, class_index]))
    return SynthClassParams(
        grain_angle=(class_index % 12) * ANGLE_STEP_DEG,
        grain_period=GRAIN_PERIODS[(class_index // 12) % len(GRAIN_PERIODS)],
        pore_density=float(rng.uniform(0.8, 3.2)),
        pore_radius_mean=float(rng.uniform(2.2, 4.2)),
        pore_radius_std=float(rng.uniform(0.5, 1.1)),
        ray_spacing=float(rng.uniform(18.0, 34.0)),
        ray_width=float(rng.choice([0.0, 1.5, 2.5])),
        base_intensity=float(rng.uniform(0.42, 0.62)),
        noise_std=float(rng.uniform(0.02, 0.05)),
    )


def sibling_params(base: SynthClassParams) -> SynthClassParams:
    """Near-identical parameters for a look-alike class: small grain-angle
    and pore-density deltas off the first member's parameters."""
    return dataclasses.replace(
        base,
        grain_angle=base.grain_angle + SIBLING_ANGLE_DELTA_DEG,
        pore_density=base.pore_density * SIBLING_PORE_DENSITY_FACTOR,
    )


def plan_dataset(
    n_classes: int,
    per_class: int,
    n_sibling_pairs: int,
    seed: int,
    width: int = DEFAULT_IMAGE_SIDE,
    height: int = DEFAULT_IMAGE_SIDE,
) -> Manifest:
    """Lay out classes, parameters, sibling pairs, and per-image seeds
    without rendering anything."""
    tax = taxonomy_mod.default_taxonomy()
    if not 2 <= n_classes <= len(tax):
        raise DatasetError(f"classes must be in [2, {len(tax)}], got {n_classes}")
    if per_class < 1:
        raise DatasetError(f"per-class must be >= 1, got {per_class}")
    if n_sibling_pairs < 0:
        raise DatasetError("sibling-pairs must be >= 0")
    class_ids = tax.class_ids()[:n_classes]
    id_to_index = {cid: i for i, cid in enumerate(class_ids)}
    available = [
        (a, b) for a, b in SIBLING_CANDIDATES if a in id_to_index and b in id_to_index
    ]
    if n_sibling_pairs > len(available):
        raise DatasetError(
            f"only {len(available)} sibling pair(s) available for {n_classes} "
            f"classes, requested {n_sibling_pairs}"
        )
    chosen = available[:n_sibling_pairs]

    params = {cid: _base_params(i, seed) for i, cid in enumerate(class_ids)}
    pairs = []
    for a, b in chosen:
        params[b] = sibling_params(params[a])
        family = taxonomy_mod.family_of(tax, a)
        pairs.append(SiblingPair(a=a, b=b, family=family or "unassigned"))

    classes = [
        ManifestClass(
            class_id=cid,
            family=taxonomy_mod.family_of(tax, cid),
            params=params[cid],
            params_hash=params_hash(params[cid]),
        )
        for cid in class_ids
    ]
    images = [
        ManifestImage(
            path=f"{cid}/{j:04d}.png",
            class_id=cid,
            seed=image_seed(seed, i, j),
            params_hash=classes[i].params_hash,
        )
        for i, cid in enumerate(class_ids)
        for j in range(per_class)
    ]
    return Manifest(
        version=MANIFEST_VERSION,
        seed=seed,
        width=width,
        height=height,
        classes=classes,
        sibling_pairs=pairs,
        images=images,
    )


def write_dataset(
    manifest: Manifest,
    out_dir: str | Path,
    progress: Callable[[int, int], None] | None = None,
) -> Path:
    """Render every manifest image to disk and write manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_id = {c.class_id: c for c in manifest.classes}
    total = len(manifest.images)
    for n, img in enumerate(manifest.images):
        target = out / img.path
        target.parent.mkdir(exist_ok=True)
        pixels, _ = render_texture(
            by_id[img.class_id].params, manifest.width, manifest.height, img.seed
        )
        target.write_bytes(encode_png(pixels, compress_level=0))
        if progress is not None:
            progress(n + 1, total)
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_text(
        json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return manifest_path


def generate_dataset(
    out_dir: str | Path,
    n_classes: int,
    per_class: int,
    n_sibling_pairs: int = 0,
    seed: int = 0,
    width: int = DEFAULT_IMAGE_SIDE,
    height: int = DEFAULT_IMAGE_SIDE,
    progress: Callable[[int, int], None] | None = None,
) -> Manifest:
    manifest = plan_dataset(n_classes, per_class, n_sibling_pairs, seed, width, height)
    write_dataset(manifest, out_dir, progress=progress)
    return manifest


def load_manifest(path: str | Path) -> Manifest:
    """Read manifest.json from a dataset directory or explicit file path."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.is_file():
        raise DatasetError(f"no manifest at {p}")
    try:
        return Manifest.from_dict(json.loads(p.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DatasetError(f"malformed manifest {p}: {e}") from None


def features_from_image_bytes(data: bytes, spec: FeatureSpec) -> FeatureVector:
    """Full preprocessing pipeline: decode, grayscale, illumination
    normalization, patch features."""
    rgb = decode_image(data)
    gray = to_grayscale(rgb)
    normalized = normalize_illumination(gray)
    return extract_features(normalized, spec)


def featurize_items(
    root: str | Path,
    items: Sequence[tuple[str, str]],
    spec: FeatureSpec,
    progress: Callable[[int, int], None] | None = None,
) -> list[tuple[FeatureVector, str]]:
    """Compute features for (relative path, class_id) pairs under root."""
    rootp = Path(root)
    out = []
    for n, (rel, class_id) in enumerate(items):
        fv = features_from_image_bytes((rootp / rel).read_bytes(), spec)
        out.append((fv, class_id))
        if progress is not None:
            progress(n + 1, len(items))
    return out
