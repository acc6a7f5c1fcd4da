"""Domain types and the shape/normalization contracts shared by every module.

All array interfaces at module boundaries use (height, width, channel)
layout. Values are validated at construction; instances are immutable and
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Index 0 is reserved for background in every segmentation map.
BACKGROUND_CLASS = 0


class ValidationError(ValueError):
    """Raised when a domain value violates its contract."""


def _as_float_array(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ImageTensor:
    """An H x W x 3 image with values in [-1, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.data, "image")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(f"image must be HxWx3, got {arr.shape}")
        if arr.min() < -1.0 or arr.max() > 1.0:
            raise ValidationError("image values must lie in [-1, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SegmentationMap:
    """A strictly one-hot H x W x n_s class map."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValidationError(f"segmentation must be HxWxC, got {arr.shape}")
        if arr.shape[2] < 2:
            raise ValidationError("segmentation needs at least 2 classes")
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ValidationError("segmentation entries must be 0 or 1")
        if not (arr.sum(axis=2) == 1.0).all():
            raise ValidationError("segmentation must be one-hot at every pixel")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def n_s(self) -> int:
        return self.data.shape[2]

    def to_index_map(self) -> np.ndarray:
        """Decode back to an H x W integer class map (inverse of one_hot_encode)."""
        return np.argmax(self.data, axis=2).astype(np.int64)


@dataclass(frozen=True)
class AttributeLabel:
    """A 1 x n_c binary attribute vector."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.float32).reshape(-1)
        if arr.size == 0:
            raise ValidationError("attribute label must have at least one bit")
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ValidationError("attribute bits must be 0 or 1")
        object.__setattr__(self, "bits", arr)

    @property
    def n_c(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class LatentVector:
    """A 1 x n_z real vector, finite everywhere."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if arr.size == 0:
            raise ValidationError("latent vector must be non-empty")
        if not np.isfinite(arr).all():
            raise ValidationError("latent vector contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def n_z(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class JointSample:
    """One (image, attribute label, segmentation) triple."""

    image: ImageTensor
    label: AttributeLabel
    segmentation: SegmentationMap

    def __post_init__(self):
        if (self.image.height, self.image.width) != (
            self.segmentation.height,
            self.segmentation.width,
        ):
            raise ValidationError(
                "image and segmentation sizes differ: "
                f"{self.image.height}x{self.image.width} vs "
                f"{self.segmentation.height}x{self.segmentation.width}"
            )


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered (x, y) pixel coordinates; 68 points for the face template."""

    points: np.ndarray
    width: int = field(default=0)
    height: int = field(default=0)

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError(f"landmarks must be Kx2, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("landmark coordinates must be finite")
        if self.width and self.height:
            x, y = arr[:, 0], arr[:, 1]
            if (x < 0).any() or (x >= self.width).any() or (y < 0).any() or (y >= self.height).any():
                raise ValidationError(
                    f"landmarks must lie within [0,{self.width})x[0,{self.height})"
                )
        object.__setattr__(self, "points", arr)

    @property
    def count(self) -> int:
        return self.points.shape[0]


def one_hot_encode(index_map: np.ndarray, n_s: int) -> SegmentationMap:
    """Expand an H x W integer class map into a one-hot SegmentationMap.

    Inverse of SegmentationMap.to_index_map.
    """
    idx = np.asarray(index_map)
    if idx.ndim != 2:
        raise ValidationError(f"index map must be HxW, got shape {idx.shape}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValidationError(f"index map must be integer, got dtype {idx.dtype}")
    if n_s < 2:
        raise ValidationError("n_s must be at least 2")
    if idx.min() < 0 or idx.max() >= n_s:
        raise ValidationError(
            f"class indices must lie in [0, {n_s}), got range "
            f"[{idx.min()}, {idx.max()}]"
        )
    onehot = np.zeros((*idx.shape, n_s), dtype=np.float32)
    rows, cols = np.indices(idx.shape)
    onehot[rows, cols, idx] = 1.0
    return SegmentationMap(onehot)


def normalize_image(raw: np.ndarray) -> ImageTensor:
    """Map 8-bit RGB in [0, 255] to [-1, 1] via raw / 127.5 - 1."""
    arr = np.asarray(raw)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"raw image must be HxWx3, got {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValidationError("raw image values must lie in [0, 255]")
    return ImageTensor(arr.astype(np.float32) / 127.5 - 1.0)


def denormalize_image(image: ImageTensor | np.ndarray) -> np.ndarray:
    """Map [-1, 1] back to rounded 8-bit RGB. Inverse of normalize_image."""
    arr = image.data if isinstance(image, ImageTensor) else np.asarray(image)
    out = np.rint((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5)
    return out.astype(np.uint8)


def parse_manifest_line(line: str) -> tuple[str, str, np.ndarray]:
    """Parse one manifest record: image path, segmentation path, comma-joined bits.

    Fields are whitespace-separated; paths containing spaces are unsupported.
    """
    parts = line.split()
    if len(parts) != 3:
        raise ValidationError(
            f"manifest line must have 3 whitespace-separated fields, got {len(parts)}: {line!r}"
        )
    image_path, seg_path, bits_field = parts
    try:
        bits = np.array([int(b) for b in bits_field.split(",")], dtype=np.float32)
    except ValueError as exc:
        raise ValidationError(f"malformed attribute bits {bits_field!r}") from exc
    if not np.isin(bits, (0.0, 1.0)).all():
        raise ValidationError(f"attribute bits must be 0/1, got {bits_field!r}")
    return image_path, seg_path, bits


def format_manifest_line(image_path: str, seg_path: str, bits) -> str:
    bit_str = ",".join(str(int(b)) for b in np.asarray(bits).reshape(-1))
    return f"{image_path}\t{seg_path}\t{bit_str}"
