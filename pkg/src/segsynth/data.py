"""Dataset ingestion, landmark-based segmentation construction, and the
procedural shapes dataset used for desk-scale runs.

Landmark files are sidecars (one per image, 68 lines "x y"). Segmentation
files are single-channel 8-bit index images. The manifest is plain text,
one whitespace-separated record per line: image path, segmentation path,
comma-joined attribute bits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .core import (
    BACKGROUND_CLASS,
    LandmarkSet,
    ValidationError,
    one_hot_encode,
    parse_manifest_line,
)

# ---------------------------------------------------------------------------
# polygon rasterization


def _polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def rasterize_polygon(points: np.ndarray, height: int, width: int) -> np.ndarray:
    """Boolean mask of pixels whose center lies inside the polygon.

    Pixel (row i, col j) has its center at coordinates (x=j, y=i). Even-odd
    rule; points exactly on an edge count as inside. Degenerate polygons
    (area ~ 0) contribute nothing.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValidationError(f"polygon needs >= 3 (x, y) points, got {pts.shape}")
    if _polygon_area(pts) < 1e-12:
        return np.zeros((height, width), dtype=bool)

    cols, rows = np.meshgrid(np.arange(width), np.arange(height))
    px = cols.ravel().astype(np.float64)
    py = rows.ravel().astype(np.float64)

    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)

    inside = np.zeros(px.shape[0], dtype=bool)
    on_edge = np.zeros(px.shape[0], dtype=bool)
    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        # ray cast toward +x: does the edge straddle the pixel row?
        straddles = (ey1 > py) != (ey2 > py)
        if straddles.any():
            x_int = ex1 + (py - ey1) * (ex2 - ex1) / (ey2 - ey1)
            inside ^= straddles & (x_int > px)
        # boundary test: pixel center on the closed segment
        dx, dy = ex2 - ex1, ey2 - ey1
        seg_len2 = dx * dx + dy * dy
        if seg_len2 < 1e-18:
            on_edge |= (np.abs(px - ex1) < 1e-9) & (np.abs(py - ey1) < 1e-9)
            continue
        cross = (px - ex1) * dy - (py - ey1) * dx
        t = ((px - ex1) * dx + (py - ey1) * dy) / seg_len2
        on_edge |= (np.abs(cross) < 1e-9 * max(1.0, np.sqrt(seg_len2))) & (t >= 0) & (t <= 1)

    return (inside | on_edge).reshape(height, width)


# ---------------------------------------------------------------------------
# landmark templates

# 68-point convention: jaw 0-16, brows 17-21 / 22-26, nose bridge 27-30,
# nose base 31-35, eye rings 36-41 / 42-47, outer lip 48-59, inner lip 60-67.

_FACE_HULL = list(range(0, 17)) + [26, 25, 24, 23, 22, 21, 20, 19, 18, 17]


@dataclass(frozen=True)
class RegionTemplate:
    """Maps landmark subsets to segmentation classes.

    regions: list of (class_index, polygons), each polygon a list of landmark
    indices. Listed order is paint order; later regions overwrite earlier
    ones. Class 0 stays background.
    """

    name: str
    point_count: int
    regions: tuple = field(default_factory=tuple)

    @property
    def n_s(self) -> int:
        return 1 + max(class_idx for class_idx, _ in self.regions)

    def validate(self):
        for class_idx, polygons in self.regions:
            if class_idx <= BACKGROUND_CLASS:
                raise ValidationError("template classes must be >= 1")
            for poly in polygons:
                for idx in poly:
                    if not (0 <= idx < self.point_count):
                        raise ValidationError(
                            f"template references landmark {idx} outside [0, {self.point_count})"
                        )


def build_face_template() -> RegionTemplate:
    """Six foreground regions over 68 facial landmarks (n_s = 7 with background).

    Paint order: face hull first, then brows, eyes, nose, mouth, so inner
    features overwrite the hull.
    """
    template = RegionTemplate(
        name="face68",
        point_count=68,
        regions=(
            (1, ([*_FACE_HULL],)),
            (2, (list(range(17, 22)),)),
            (3, (list(range(22, 27)),)),
            (4, (list(range(36, 42)), list(range(42, 48)))),
            (5, ([27, 31, 32, 33, 34, 35],)),
            (6, (list(range(48, 60)),)),
        ),
    )
    template.validate()
    return template


def landmarks_to_segmentation(
    landmarks: LandmarkSet, height: int, width: int, template: RegionTemplate
):
    """Rasterize template regions over the landmarks into a one-hot map."""
    if landmarks.count != template.point_count:
        raise ValidationError(
            f"template {template.name} needs {template.point_count} points, "
            f"got {landmarks.count}"
        )
    template.validate()
    index_map = np.full((height, width), BACKGROUND_CLASS, dtype=np.int64)
    pts = landmarks.points
    for class_idx, polygons in template.regions:
        for poly in polygons:
            mask = rasterize_polygon(pts[list(poly)], height, width)
            index_map[mask] = class_idx
    return one_hot_encode(index_map, template.n_s)


def load_landmark_file(path: str) -> LandmarkSet:
    """Sidecar format: one "x y" pair per line."""
    coords = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            x, y = line.split()
            coords.append((float(x), float(y)))
    return LandmarkSet(np.array(coords, dtype=np.float64))


# ---------------------------------------------------------------------------
# in-memory dataset

SHAPE_NAMES = ("circle", "square", "triangle")


@dataclass
class Dataset:
    """Materialized samples: images in [-1,1] HWC, index masks, attribute bits."""

    images: np.ndarray  # (N, H, W, 3) float32 in [-1, 1]
    index_maps: np.ndarray  # (N, H, W) uint8
    labels: np.ndarray  # (N, n_c) float32 of {0, 1}
    n_s: int
    attribute_names: tuple = ()

    def __post_init__(self):
        if not (len(self.images) == len(self.index_maps) == len(self.labels)):
            raise ValidationError("dataset arrays must share length")
        if self.index_maps.max(initial=0) >= self.n_s:
            raise ValidationError("index map exceeds n_s")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_size(self) -> int:
        return self.images.shape[1]

    @property
    def n_c(self) -> int:
        return self.labels.shape[1]

    def one_hot_segmentations(self, indices) -> np.ndarray:
        """(len(indices), n_s, H, W) float32 one-hot, channel-first."""
        idx = self.index_maps[indices]
        out = np.zeros((idx.shape[0], self.n_s, idx.shape[1], idx.shape[2]), np.float32)
        n, rows, cols = np.indices(idx.shape, sparse=False)
        out[n, idx, rows, cols] = 1.0
        return out

    def batch_tensors(self, indices):
        """(images CHW, labels, one-hot segmentations) as float32 numpy."""
        imgs = np.transpose(self.images[indices], (0, 3, 1, 2)).astype(np.float32)
        return imgs, self.labels[indices].copy(), self.one_hot_segmentations(indices)


def horizontal_flip(image: np.ndarray, index_map: np.ndarray):
    """Mirror an image (HWC) and its index map left-right, consistently."""
    return np.ascontiguousarray(image[:, ::-1]), np.ascontiguousarray(index_map[:, ::-1])


def mirror_landmarks(landmarks: LandmarkSet, width: int) -> LandmarkSet:
    """Mirror x coordinates across the vertical center line."""
    pts = landmarks.points.copy()
    pts[:, 0] = (width - 1) - pts[:, 0]
    return LandmarkSet(pts)


@dataclass(frozen=True)
class DatasetSpec:
    root: str
    manifest: str
    image_size: int
    n_s: int
    n_c: int
    attribute_names: tuple = ()
    region_template: str = "face68"
    augment_hflip: bool = False


def load_dataset(spec: DatasetSpec) -> Dataset:
    """Read the manifest, load and normalize every sample eagerly."""
    manifest_path = os.path.join(spec.root, spec.manifest) if not os.path.isabs(spec.manifest) else spec.manifest
    images, masks, labels = [], [], []
    with open(manifest_path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    for row_no, row in enumerate(rows, start=1):
        img_path, seg_path, bits = parse_manifest_line(row)
        if bits.shape[0] != spec.n_c:
            raise ValidationError(
                f"manifest row {row_no}: expected {spec.n_c} attribute bits, got {bits.shape[0]}"
            )
        img_file = os.path.join(spec.root, img_path)
        seg_file = os.path.join(spec.root, seg_path)
        try:
            with Image.open(img_file) as im:
                raw = np.asarray(im.convert("RGB"), dtype=np.uint8)
            with Image.open(seg_file) as sm:
                mask = np.asarray(sm.convert("L"), dtype=np.uint8)
        except (OSError, FileNotFoundError) as exc:
            raise ValidationError(f"manifest row {row_no}: cannot read sample ({exc})") from exc
        if raw.shape[:2] != (spec.image_size, spec.image_size):
            raise ValidationError(
                f"manifest row {row_no}: image is {raw.shape[1]}x{raw.shape[0]}, "
                f"expected {spec.image_size}x{spec.image_size}"
            )
        if mask.shape != raw.shape[:2]:
            raise ValidationError(f"manifest row {row_no}: segmentation size mismatch")
        if mask.max(initial=0) >= spec.n_s:
            raise ValidationError(f"manifest row {row_no}: class index >= n_s")
        images.append(raw.astype(np.float32) / 127.5 - 1.0)
        masks.append(mask)
        labels.append(bits)
    if not images:
        raise ValidationError(f"manifest {manifest_path} is empty")
    if spec.augment_hflip:
        for i in range(len(masks)):
            f_img, f_mask = horizontal_flip(images[i], masks[i])
            images.append(f_img)
            masks.append(f_mask)
            labels.append(labels[i].copy())
    return Dataset(
        images=np.stack(images),
        index_maps=np.stack(masks),
        labels=np.stack(labels),
        n_s=spec.n_s,
        attribute_names=tuple(spec.attribute_names),
    )


def sample_batch(dataset: Dataset, m: int, rng: np.random.Generator):
    """Draw m distinct indices and return their tensors."""
    if m < 1 or m > len(dataset):
        raise ValidationError(f"batch size {m} invalid for dataset of {len(dataset)}")
    indices = rng.choice(len(dataset), size=m, replace=False)
    return indices, dataset.batch_tensors(indices)


class EpochSampler:
    """Without-replacement batch stream; reshuffles when a pass completes."""

    def __init__(self, n: int, m: int, rng: np.random.Generator):
        if n < m:
            raise ValidationError(f"dataset of {n} smaller than batch size {m}")
        self.n = n
        self.m = m
        self.rng = rng
        self.perm = rng.permutation(n)
        self.cursor = 0

    def next_indices(self) -> np.ndarray:
        if self.cursor + self.m > self.n:
            self.perm = self.rng.permutation(self.n)
            self.cursor = 0
        out = self.perm[self.cursor : self.cursor + self.m]
        self.cursor += self.m
        return out

    def state(self) -> dict:
        return {"perm": self.perm.tolist(), "cursor": self.cursor}

    def restore(self, state: dict):
        self.perm = np.array(state["perm"], dtype=np.int64)
        self.cursor = int(state["cursor"])


# ---------------------------------------------------------------------------
# procedural shapes dataset

DEFAULT_PALETTE = ((230, 60, 50), (60, 200, 70), (60, 90, 230))


@dataclass(frozen=True)
class ShapesConfig:
    image_size: int = 32
    n_samples: int = 2000
    n_shapes: int = 3  # circle, square, triangle
    palette: tuple = DEFAULT_PALETTE
    # shape radius as a fraction of image size; small shapes keep the
    # shuffled-pair floor close to a spatially uninformed predictor
    min_scale: float = 0.08
    max_scale: float = 0.15
    background_noise: float = 0.04
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.n_shapes <= len(SHAPE_NAMES)):
            raise ValidationError(f"n_shapes must be in [1, {len(SHAPE_NAMES)}]")
        if len(self.palette) < 1:
            raise ValidationError("palette must not be empty")
        if not (0 < self.min_scale <= self.max_scale < 0.5):
            raise ValidationError("scales must satisfy 0 < min <= max < 0.5")

    @property
    def n_s(self) -> int:
        return self.n_shapes + 1

    @property
    def n_c(self) -> int:
        return len(self.palette)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "n_samples": self.n_samples,
            "n_shapes": self.n_shapes,
            "palette": [list(c) for c in self.palette],
            "min_scale": self.min_scale,
            "max_scale": self.max_scale,
            "background_noise": self.background_noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapesConfig":
        d = dict(d)
        if "palette" in d:
            d["palette"] = tuple(tuple(c) for c in d["palette"])
        return cls(**d)


def shape_mask(kind: str, cx: float, cy: float, r: float, size: int) -> np.ndarray:
    """Analytic mask for one shape; pixel centers at integer coordinates."""
    cols, rows = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64))
    if kind == "circle":
        return (cols - cx) ** 2 + (rows - cy) ** 2 <= r * r
    if kind == "square":
        return (np.abs(cols - cx) <= r) & (np.abs(rows - cy) <= r)
    if kind == "triangle":
        # equilateral, apex up, circumradius r
        verts = []
        for k in range(3):
            ang = -np.pi / 2 + 2 * np.pi * k / 3
            verts.append((cx + r * np.cos(ang), cy + r * np.sin(ang)))
        (x0, y0), (x1, y1), (x2, y2) = verts
        d0 = (cols - x0) * (y1 - y0) - (rows - y0) * (x1 - x0)
        d1 = (cols - x1) * (y2 - y1) - (rows - y1) * (x2 - x1)
        d2 = (cols - x2) * (y0 - y2) - (rows - y2) * (x0 - x2)
        return ((d0 >= 0) & (d1 >= 0) & (d2 >= 0)) | ((d0 <= 0) & (d1 <= 0) & (d2 <= 0))
    raise ValidationError(f"unknown shape kind {kind!r}")


def _background(size: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Gray gradient plus noise; stays far from the palette hues."""
    base = rng.uniform(90, 165)
    tilt_x, tilt_y = rng.uniform(-28, 28, size=2)
    cols, rows = np.meshgrid(np.linspace(-1, 1, size), np.linspace(-1, 1, size))
    plane = base + tilt_x * cols + tilt_y * rows
    img = np.repeat(plane[:, :, None], 3, axis=2)
    img += rng.normal(0.0, noise * 255.0, size=img.shape)
    return np.clip(img, 0, 255)


def generate_shapes_dataset(cfg: ShapesConfig) -> Dataset:
    """Emit n_samples one-shape images with exact masks and color attributes."""
    rng = np.random.default_rng(cfg.seed)
    size = cfg.image_size
    images = np.empty((cfg.n_samples, size, size, 3), dtype=np.float32)
    masks = np.empty((cfg.n_samples, size, size), dtype=np.uint8)
    labels = np.zeros((cfg.n_samples, cfg.n_c), dtype=np.float32)

    for i in range(cfg.n_samples):
        shape_class = int(rng.integers(1, cfg.n_shapes + 1))
        color_idx = int(rng.integers(0, cfg.n_c))
        r = rng.uniform(cfg.min_scale, cfg.max_scale) * size
        cx = rng.uniform(r + 1, size - r - 2)
        cy = rng.uniform(r + 1, size - r - 2)
        mask = shape_mask(SHAPE_NAMES[shape_class - 1], cx, cy, r, size)

        img = _background(size, cfg.background_noise, rng)
        shade = rng.uniform(0.85, 1.1)
        color = np.clip(np.array(cfg.palette[color_idx], dtype=np.float64) * shade, 0, 255)
        img[mask] = color

        images[i] = img.astype(np.float32) / 127.5 - 1.0
        masks[i] = np.where(mask, shape_class, BACKGROUND_CLASS).astype(np.uint8)
        labels[i, color_idx] = 1.0

    names = tuple(f"color_{r}_{g}_{b}" for r, g, b in cfg.palette)
    return Dataset(images=images, index_maps=masks, labels=labels, n_s=cfg.n_s, attribute_names=names)


def write_dataset(dataset: Dataset, out_dir: str, manifest_name: str = "manifest.txt") -> str:
    """Write PNGs plus a manifest; returns the manifest path."""
    from .core import denormalize_image, format_manifest_line

    img_dir = os.path.join(out_dir, "images")
    seg_dir = os.path.join(out_dir, "segmentations")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(seg_dir, exist_ok=True)
    lines = []
    for i in range(len(dataset)):
        img_rel = os.path.join("images", f"{i:06d}.png")
        seg_rel = os.path.join("segmentations", f"{i:06d}.png")
        Image.fromarray(denormalize_image(dataset.images[i])).save(os.path.join(out_dir, img_rel))
        Image.fromarray(dataset.index_maps[i], mode="L").save(os.path.join(out_dir, seg_rel))
        lines.append(format_manifest_line(img_rel, seg_rel, dataset.labels[i]))
    manifest_path = os.path.join(out_dir, manifest_name)
    with open(manifest_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest_path
