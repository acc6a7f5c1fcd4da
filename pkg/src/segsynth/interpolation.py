"""Interpolation toolkit: latent lerps, landmark-domain spatial
interpolation, attribute sweeps, and sequence rendering.

Channel-space lerping of one-hot maps is kept only as a demonstrator; its
interior frames are fractional and are not valid generator inputs. The
landmark route interpolates coordinates, then re-rasterizes, so every frame
stays strictly one-hot.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .core import LandmarkSet, ValidationError, denormalize_image
from .data import RegionTemplate, landmarks_to_segmentation


def lerp_latent(z0: np.ndarray, z1: np.ndarray, t: float) -> np.ndarray:
    if not (0.0 <= t <= 1.0):
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise ValidationError("latent endpoints must have equal length")
    return (1.0 - t) * z0 + t * z1


def lerp_landmarks(l0: LandmarkSet, l1: LandmarkSet, t: float) -> LandmarkSet:
    if not (0.0 <= t <= 1.0):
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    if l0.count != l1.count:
        raise ValidationError(f"landmark counts differ: {l0.count} vs {l1.count}")
    pts = (1.0 - t) * l0.points + t * l1.points
    return LandmarkSet(pts)


def channel_lerp(s0: np.ndarray, s1: np.ndarray, t: float) -> np.ndarray:
    """Naive per-channel average of two one-hot maps.

    Interior t of differing endpoints yields fractional values: a fade, not
    a spatial morph. Not a valid generator input; kept for demonstration.
    """
    if s0.shape != s1.shape:
        raise ValidationError("segmentation shapes differ")
    return (1.0 - t) * np.asarray(s0, dtype=np.float64) + t * np.asarray(s1, dtype=np.float64)


def t_grid(steps: int) -> np.ndarray:
    if steps < 2:
        raise ValidationError("need at least 2 steps")
    return np.linspace(0.0, 1.0, steps)


def segmentation_sequence(l0: LandmarkSet, l1: LandmarkSet, steps: int,
                          template: RegionTemplate, height: int, width: int) -> list:
    """Rasterized segmentations along the landmark interpolation path."""
    frames = []
    for t in t_grid(steps):
        lm = lerp_landmarks(l0, l1, float(t))
        frames.append(landmarks_to_segmentation(lm, height, width, template))
    return frames


@dataclass(frozen=True)
class SweepSpec:
    """What varies along a rendered sequence; exactly one dimension (or the
    latent x spatial grid) must vary.

    mode: "latent" (z0 -> z1), "spatial" (landmark pair), "attribute"
    (list of labels), or "grid" (latent pair x landmark pair).
    """

    mode: str
    steps: int = 8
    z: np.ndarray | None = None
    z0: np.ndarray | None = None
    z1: np.ndarray | None = None
    c: np.ndarray | None = None
    c_list: tuple = ()
    l0: LandmarkSet | None = None
    l1: LandmarkSet | None = None
    s: np.ndarray | None = None  # fixed one-hot segmentation, (n_s, H, W)
    template: RegionTemplate | None = None

    def validate(self):
        if self.mode == "latent":
            if self.z0 is None or self.z1 is None or self.c is None or self.s is None:
                raise ValidationError("latent sweep needs z0, z1, fixed c and s")
            if np.array_equal(self.z0, self.z1):
                raise ValidationError("latent sweep endpoints are identical: nothing varies")
        elif self.mode == "spatial":
            if self.l0 is None or self.l1 is None or self.template is None:
                raise ValidationError("spatial sweep needs l0, l1 and a template")
            if self.z is None or self.c is None:
                raise ValidationError("spatial sweep needs fixed z and c")
            if np.array_equal(self.l0.points, self.l1.points):
                raise ValidationError("spatial sweep endpoints are identical: nothing varies")
        elif self.mode == "attribute":
            if not self.c_list or self.z is None or self.s is None:
                raise ValidationError("attribute sweep needs c_list, fixed z and s")
            if len(self.c_list) < 2:
                raise ValidationError("attribute sweep needs at least 2 labels")
        elif self.mode == "grid":
            if (
                self.z0 is None or self.z1 is None
                or self.l0 is None or self.l1 is None
                or self.template is None or self.c is None
            ):
                raise ValidationError("grid sweep needs z pair, landmark pair, template, fixed c")
        else:
            raise ValidationError(f"unknown sweep mode {self.mode!r}")


@dataclass
class RenderedFrame:
    index: int
    t: float  # interpolation position; for grids, the spatial axis
    t2: float | None  # second axis for grids
    image: np.ndarray  # (H, W, 3) uint8
    label: np.ndarray
    segmentation_indices: np.ndarray  # (H, W) uint8


def _render(generator, z: np.ndarray, c: np.ndarray, s_one_hot: np.ndarray) -> np.ndarray:
    zt = torch.from_numpy(np.asarray(z, dtype=np.float32)).view(1, -1)
    ct = torch.from_numpy(np.asarray(c, dtype=np.float32)).view(1, -1)
    st = torch.from_numpy(np.asarray(s_one_hot, dtype=np.float32)).unsqueeze(0)
    generator.eval()
    with torch.no_grad():
        img = generator(zt, ct, st)[0]
    return denormalize_image(img.permute(1, 2, 0).numpy())


def _seg_chw(s_hwc_or_chw: np.ndarray, n_s: int) -> np.ndarray:
    s = np.asarray(s_hwc_or_chw, dtype=np.float32)
    if s.ndim != 3:
        raise ValidationError("segmentation must be 3-d")
    if s.shape[0] == n_s:
        return s
    if s.shape[2] == n_s:
        return np.transpose(s, (2, 0, 1))
    raise ValidationError(f"cannot locate the {n_s}-class axis in shape {s.shape}")


def generate_interpolation(generator, arch, spec: SweepSpec) -> list:
    """Render the sweep; returns RenderedFrame objects in order."""
    spec.validate()
    frames: list[RenderedFrame] = []
    size = arch.image_size

    if spec.mode == "latent":
        s = _seg_chw(spec.s, arch.n_s)
        for i, t in enumerate(t_grid(spec.steps)):
            z = lerp_latent(spec.z0, spec.z1, float(t))
            img = _render(generator, z, spec.c, s)
            frames.append(RenderedFrame(i, float(t), None, img, np.asarray(spec.c), s.argmax(0).astype(np.uint8)))
    elif spec.mode == "spatial":
        for i, t in enumerate(t_grid(spec.steps)):
            lm = lerp_landmarks(spec.l0, spec.l1, float(t))
            seg = landmarks_to_segmentation(lm, size, size, spec.template)
            s = np.transpose(seg.data, (2, 0, 1))
            img = _render(generator, spec.z, spec.c, s)
            frames.append(RenderedFrame(i, float(t), None, img, np.asarray(spec.c), seg.to_index_map().astype(np.uint8)))
    elif spec.mode == "attribute":
        s = _seg_chw(spec.s, arch.n_s)
        for i, c in enumerate(spec.c_list):
            img = _render(generator, spec.z, np.asarray(c), s)
            t = i / (len(spec.c_list) - 1)
            frames.append(RenderedFrame(i, float(t), None, img, np.asarray(c), s.argmax(0).astype(np.uint8)))
    elif spec.mode == "grid":
        i = 0
        for tz in t_grid(spec.steps):
            z = lerp_latent(spec.z0, spec.z1, float(tz))
            for ts in t_grid(spec.steps):
                lm = lerp_landmarks(spec.l0, spec.l1, float(ts))
                seg = landmarks_to_segmentation(lm, size, size, spec.template)
                s = np.transpose(seg.data, (2, 0, 1))
                img = _render(generator, z, spec.c, s)
                frames.append(RenderedFrame(i, float(ts), float(tz), img, np.asarray(spec.c), seg.to_index_map().astype(np.uint8)))
                i += 1
    return frames


def spec_hash(spec: SweepSpec) -> str:
    h = hashlib.sha256()
    h.update(spec.mode.encode())
    for part in (spec.z, spec.z0, spec.z1, spec.c, spec.s):
        if part is not None:
            h.update(np.ascontiguousarray(np.asarray(part, dtype=np.float64)).tobytes())
    for c in spec.c_list:
        h.update(np.ascontiguousarray(np.asarray(c, dtype=np.float64)).tobytes())
    for lm in (spec.l0, spec.l1):
        if lm is not None:
            h.update(np.ascontiguousarray(lm.points).tobytes())
    h.update(str(spec.steps).encode())
    return h.hexdigest()[:16]


def export_sequence(frames: list, spec: SweepSpec, out_dir: str) -> str:
    """Write numbered PNGs plus a JSON-lines manifest; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    digest = spec_hash(spec)
    manifest_path = os.path.join(out_dir, "sequence.jsonl")
    with open(manifest_path, "w") as fh:
        for frame in frames:
            name = f"frame_{frame.index:04d}.png"
            Image.fromarray(frame.image).save(os.path.join(out_dir, name))
            rec = {
                "index": frame.index,
                "t": frame.t,
                "spec_hash": digest,
                "path": name,
            }
            if frame.t2 is not None:
                rec["t2"] = frame.t2
            fh.write(json.dumps(rec) + "\n")
    return manifest_path
