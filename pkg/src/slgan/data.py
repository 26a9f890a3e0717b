"""Dataset loading, region-mask derivation, landmark heatmaps, batch sampling.

Expected layout under a dataset root:

    images/makeup/*.png       images/non-makeup/*.png
    segs/makeup/*.png         segs/non-makeup/*.png
    landmarks/makeup/*.txt    landmarks/non-makeup/*.txt   (optional)

Parsing maps are precomputed label images in the 19-class face-parsing
convention (skin=1, eyes=4/5, eyebrows=6/7, nose=10, lips=12/13, hair=17).
Landmark files hold 68 lines of "x y" floats in source-pixel units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import binary_dilation

from .errors import (
    DecodeError,
    EmptyDomain,
    InvalidConfig,
    MissingDirectory,
    NonRGBInput,
    OrphanImage,
    OutOfBoundsLandmark,
    UnknownLabel,
)

DOMAIN_NAMES = ("non-makeup", "makeup")
NON_MAKEUP, MAKEUP = 0, 1

NUM_LABELS = 19
SKIN, NOSE, HAIR = 1, 10, 17
EYE_LABELS = (4, 5)
BROW_LABELS = (6, 7)
LIP_LABELS = (12, 13)
# Labels counted as facial components for the full-face mask; hair and
# background stay out so the style encoder never sees them.
FACE_COMPONENT_LABELS = (SKIN, *EYE_LABELS, *BROW_LABELS, NOSE, *LIP_LABELS)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

REGION_NAMES = ("lips", "eyes", "face")


@dataclass
class RegionMasks:
    """The three disjoint loss regions plus the full-face union.

    Fields are H×W arrays for a single face or stacked B×H×W tensors for a
    batch; `eyes` is the eye-shadow ring, not the eyeballs.
    """

    lips: object
    eyes: object
    face: object
    full_face: object

    def region(self, name: str):
        if name not in REGION_NAMES:
            raise KeyError(f"unknown region {name!r}")
        return getattr(self, name)

    def to_tensors(self) -> "RegionMasks":
        return RegionMasks(*(torch.as_tensor(np.asarray(getattr(self, f), dtype=np.float32))
                             for f in ("lips", "eyes", "face", "full_face")))

    @staticmethod
    def stack(items: list) -> "RegionMasks":
        tensors = [it.to_tensors() for it in items]
        return RegionMasks(*(torch.stack([getattr(t, f) for t in tensors])
                             for f in ("lips", "eyes", "face", "full_face")))


@dataclass
class DatasetIndex:
    root: Path
    resolution: int
    makeup_paths: list = field(default_factory=list)
    nonmakeup_paths: list = field(default_factory=list)
    seg_paths: dict = field(default_factory=dict)
    landmark_paths: dict = field(default_factory=dict)

    def counts(self) -> tuple:
        return len(self.makeup_paths), len(self.nonmakeup_paths)

    def domain_paths(self, domain: int) -> list:
        return self.makeup_paths if domain == MAKEUP else self.nonmakeup_paths


def load_manifest(root_path, resolution: int) -> DatasetIndex:
    """Index every image with its parsing map; landmark files are optional."""
    root = Path(root_path)
    for sub in ("images", "segs"):
        for name in DOMAIN_NAMES:
            if not (root / sub / name).is_dir():
                raise MissingDirectory(f"missing {sub}/{name} under {root}")
    index = DatasetIndex(root=root, resolution=int(resolution))
    for domain, name in enumerate(DOMAIN_NAMES):
        image_dir = root / "images" / name
        seg_dir = root / "segs" / name
        lm_dir = root / "landmarks" / name
        paths = sorted(p for p in image_dir.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        for path in paths:
            seg = _find_by_stem(seg_dir, path.stem)
            if seg is None:
                raise OrphanImage(f"{path} has no parsing map in {seg_dir}")
            index.seg_paths[path] = seg
            lm = lm_dir / f"{path.stem}.txt"
            if lm.is_file():
                index.landmark_paths[path] = lm
        if domain == MAKEUP:
            index.makeup_paths = paths
        else:
            index.nonmakeup_paths = paths
    return index


def _find_by_stem(directory: Path, stem: str):
    for suffix in IMAGE_SUFFIXES:
        candidate = directory / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def preprocess_image(raw, resolution: int) -> torch.Tensor:
    """Decode, bilinear-resize to resolution², map 8-bit values by v/127.5 - 1."""
    if isinstance(raw, (str, Path)):
        try:
            with Image.open(raw) as img:
                img.load()
        except Exception as exc:
            raise DecodeError(f"cannot decode {raw}: {exc}") from exc
    elif isinstance(raw, Image.Image):
        img = raw
    else:
        arr = np.asarray(raw)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise NonRGBInput(f"expected H×W×3 array, got shape {arr.shape}")
        img = Image.fromarray(arr.astype(np.uint8), mode="RGB")
    if img.mode != "RGB":
        raise NonRGBInput(f"expected RGB input, got mode {img.mode}")
    if img.size != (resolution, resolution):
        img = img.resize((resolution, resolution), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def postprocess_image(tensor: torch.Tensor) -> np.ndarray:
    """Inverse of the preprocessing map, back onto the 8-bit lattice."""
    arr = tensor.detach().cpu().numpy()
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    arr = np.clip((arr + 1.0) * 127.5, 0.0, 255.0)
    return np.round(arr).astype(np.uint8)


def load_parsing_map(path, resolution: int) -> np.ndarray:
    """Label image as int array, nearest-resized to preserve label identity."""
    try:
        with Image.open(path) as img:
            img.load()
    except Exception as exc:
        raise DecodeError(f"cannot decode parsing map {path}: {exc}") from exc
    if img.mode not in ("L", "P", "I"):
        img = img.convert("L")
    if img.size != (resolution, resolution):
        img = img.resize((resolution, resolution), Image.NEAREST)
    return np.asarray(img, dtype=np.int64)


def derive_region_masks(parsing_map: np.ndarray, dilation_px: int) -> RegionMasks:
    """Binary lips / eye-shadow-ring / face / full-face masks from a label map.

    The ring is a morphological dilation of the eye labels (city-block
    structuring element, `dilation_px` iterations) minus eyes, eyebrows,
    hair, and lips, intersected with the face components so the three loss
    regions stay pairwise disjoint and inside the face.
    """
    seg = np.asarray(parsing_map)
    if seg.ndim != 2:
        raise UnknownLabel(f"parsing map must be 2-D, got shape {seg.shape}")
    if seg.size and (seg.min() < 0 or seg.max() >= NUM_LABELS):
        raise UnknownLabel(f"label ids outside [0, {NUM_LABELS - 1}] present")
    if dilation_px < 0:
        raise InvalidConfig("dilation_px must be >= 0")
    lips = np.isin(seg, LIP_LABELS)
    eye = np.isin(seg, EYE_LABELS)
    brow = np.isin(seg, BROW_LABELS)
    hair = seg == HAIR
    full_face = np.isin(seg, FACE_COMPONENT_LABELS)
    if dilation_px > 0 and eye.any():
        ring = binary_dilation(eye, iterations=dilation_px)
    else:
        ring = np.zeros_like(eye)
    eyes = ring & ~eye & ~brow & ~hair & ~lips & full_face
    face = (np.isin(seg, (SKIN, NOSE))) & ~lips & ~eyes
    return RegionMasks(lips=lips, eyes=eyes, face=face, full_face=full_face)


def landmark_heatmap(landmarks, resolution: int, sigma: float) -> np.ndarray:
    """Superposition of unit-height Gaussian bumps per landmark, in [0, 1].

    Bumps combine by per-pixel maximum so coincident landmarks leave the map
    unchanged; the final clip is then a no-op safety net.
    """
    if sigma <= 0:
        raise InvalidConfig("sigma must be positive")
    points = np.asarray(landmarks, dtype=np.float64).reshape(-1, 2)
    heat = np.zeros((1, resolution, resolution), dtype=np.float32)
    if points.size == 0:
        return heat
    if points.min() < 0 or points.max() > resolution - 1:
        raise OutOfBoundsLandmark(
            f"landmark outside [0, {resolution - 1}] square: "
            f"min {points.min():.2f}, max {points.max():.2f}")
    grid = np.arange(resolution, dtype=np.float64)
    xs, ys = np.meshgrid(grid, grid)  # xs varies along columns
    acc = np.zeros((resolution, resolution), dtype=np.float64)
    for x, y in points:
        bump = np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2.0 * sigma * sigma))
        np.maximum(acc, bump, out=acc)
    heat[0] = np.clip(acc, 0.0, 1.0).astype(np.float32)
    return heat


def load_landmarks(path) -> np.ndarray:
    """Parse an "x y" per-line landmark file into an (N, 2) float array."""
    try:
        rows = [line.split() for line in Path(path).read_text().split("\n") if line.strip()]
        points = np.array([[float(a), float(b)] for a, b in rows], dtype=np.float64)
    except Exception as exc:
        raise DecodeError(f"malformed landmark file {path}: {exc}") from exc
    return points


@dataclass
class TrainingBatch:
    source_images: torch.Tensor
    source_domains: torch.Tensor
    reference_images: torch.Tensor
    reference_domains: torch.Tensor
    source_masks: RegionMasks
    reference_masks: RegionMasks
    source_heatmaps: torch.Tensor
    heatmap_present: torch.Tensor
    source_ids: list
    reference_ids: list

    @property
    def batch_size(self) -> int:
        return self.source_images.shape[0]


def default_dilation_px(resolution: int) -> int:
    """12 px at 256², scaled linearly with resolution, at least 1."""
    return max(1, round(12 * resolution / 256))


def load_example(index: DatasetIndex, path, *, dilation_px=None, sigma: float = 2.0,
                 cache: dict | None = None):
    """One image with its masks and heatmap at the index resolution.

    Pass a dict as `cache` to memoize decoded examples across steps; entries
    are keyed by path and never invalidated.
    """
    if cache is not None and path in cache:
        return cache[path]
    res = index.resolution
    if dilation_px is None:
        dilation_px = default_dilation_px(res)
    image = preprocess_image(path, res)
    seg = load_parsing_map(index.seg_paths[path], res)
    masks = derive_region_masks(seg, dilation_px)
    lm_path = index.landmark_paths.get(path)
    if lm_path is None:
        heatmap = np.zeros((1, res, res), dtype=np.float32)
        present = False
    else:
        points = load_landmarks(lm_path)
        with Image.open(path) as img:
            w, h = img.size
        scaled = points * np.array([(res - 1) / max(w - 1, 1), (res - 1) / max(h - 1, 1)])
        heatmap = landmark_heatmap(scaled, res, sigma)
        present = True
    example = (image, masks, torch.from_numpy(heatmap), present)
    if cache is not None:
        cache[path] = example
    return example


def sample_training_batch(index: DatasetIndex, rng_seed: int, batch_size: int,
                          *, dilation_px=None, sigma: float = 2.0,
                          cache: dict | None = None) -> TrainingBatch:
    """Deterministic batch with element-wise opposite source/reference domains."""
    if batch_size < 1:
        raise InvalidConfig("batch_size must be >= 1")
    for domain in (NON_MAKEUP, MAKEUP):
        if not index.domain_paths(domain):
            raise EmptyDomain(f"no images in domain {DOMAIN_NAMES[domain]!r}")
    rng = np.random.default_rng(rng_seed)
    src_domains = rng.integers(0, 2, size=batch_size)
    src_imgs, ref_imgs, src_masks, ref_masks = [], [], [], []
    heatmaps, present_flags, src_ids, ref_ids = [], [], [], []
    for src_domain in src_domains:
        ref_domain = 1 - int(src_domain)
        src_pool = index.domain_paths(int(src_domain))
        ref_pool = index.domain_paths(ref_domain)
        src_path = src_pool[int(rng.integers(len(src_pool)))]
        ref_path = ref_pool[int(rng.integers(len(ref_pool)))]
        img, masks, heat, present = load_example(
            index, src_path, dilation_px=dilation_px, sigma=sigma, cache=cache)
        rimg, rmasks, _, _ = load_example(
            index, ref_path, dilation_px=dilation_px, sigma=sigma, cache=cache)
        src_imgs.append(img)
        ref_imgs.append(rimg)
        src_masks.append(masks)
        ref_masks.append(rmasks)
        heatmaps.append(heat)
        present_flags.append(present)
        src_ids.append(str(src_path.relative_to(index.root)))
        ref_ids.append(str(ref_path.relative_to(index.root)))
    return TrainingBatch(
        source_images=torch.stack(src_imgs),
        source_domains=torch.as_tensor(src_domains, dtype=torch.long),
        reference_images=torch.stack(ref_imgs),
        reference_domains=1 - torch.as_tensor(src_domains, dtype=torch.long),
        source_masks=RegionMasks.stack(src_masks),
        reference_masks=RegionMasks.stack(ref_masks),
        source_heatmaps=torch.stack(heatmaps),
        heatmap_present=torch.as_tensor(present_flags, dtype=torch.bool),
        source_ids=src_ids,
        reference_ids=ref_ids,
    )
