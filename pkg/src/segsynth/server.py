"""HTTP generation API consumed by the CLI and the studio UI.

Segmentations travel as base64 of the 8-bit index image plus explicit
n_s / height / width fields; one-hot expansion and validation happen
server-side. Models are immutable while served; request handling is
stateless, so generation is reproducible from (model_id, seed/z, c, s).
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import io
import os

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel, Field

from .checkpoint import load_checkpoint
from .core import denormalize_image
from .data import build_face_template
from .interpolation import SweepSpec, generate_interpolation, spec_hash
from .training import ModelBundle

MAX_PAYLOAD_BYTES = 8 * 1024 * 1024


class Registry:
    """model id -> read-only ModelBundle."""

    def __init__(self):
        self._models: dict[str, ModelBundle] = {}

    def add(self, model_id: str, bundle: ModelBundle):
        bundle.eval_mode()
        self._models[model_id] = bundle

    def get(self, model_id: str) -> ModelBundle:
        if model_id not in self._models:
            raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}")
        return self._models[model_id]

    def ids(self) -> list:
        return sorted(self._models)

    @classmethod
    def from_directory(cls, path: str) -> "Registry":
        reg = cls()
        for name in sorted(os.listdir(path)):
            if name.endswith(".ckpt"):
                reg.add(name[: -len(".ckpt")], load_checkpoint(os.path.join(path, name)))
        return reg


class SegmentationPayload(BaseModel):
    data_b64: str
    height: int = Field(gt=0)
    width: int = Field(gt=0)
    n_s: int = Field(ge=2)


class GenerateRequest(BaseModel):
    model_id: str
    seed: int | None = None
    z: list[float] | None = None
    attributes: list[int]
    segmentation: SegmentationPayload


class SegmentRequest(BaseModel):
    model_id: str
    image_b64: str


class InterpolateRequest(BaseModel):
    model_id: str
    mode: str
    steps: int = 8
    seed0: int | None = None
    seed1: int | None = None
    z0: list[float] | None = None
    z1: list[float] | None = None
    seed: int | None = None
    attributes: list[int] | None = None
    attribute_list: list[list[int]] | None = None
    segmentation: SegmentationPayload | None = None
    landmarks0: list[list[float]] | None = None
    landmarks1: list[list[float]] | None = None


def _field_error(field: str, reason: str):
    raise HTTPException(status_code=422, detail=[{"field": field, "reason": reason}])


def _decode_segmentation(payload: SegmentationPayload, bundle: ModelBundle) -> np.ndarray:
    arch = bundle.arch
    if len(payload.data_b64) > MAX_PAYLOAD_BYTES:
        raise HTTPException(
            status_code=413,
            detail=f"segmentation payload exceeds the {MAX_PAYLOAD_BYTES} byte limit",
        )
    if payload.height != arch.image_size or payload.width != arch.image_size:
        _field_error(
            "segmentation",
            f"expected {arch.image_size}x{arch.image_size}, got {payload.height}x{payload.width}",
        )
    if payload.n_s != arch.n_s:
        _field_error("segmentation.n_s", f"expected {arch.n_s}, got {payload.n_s}")
    try:
        raw = base64.b64decode(payload.data_b64, validate=True)
    except (binascii.Error, ValueError):
        _field_error("segmentation.data_b64", "not valid base64")
    if len(raw) != payload.height * payload.width:
        _field_error(
            "segmentation.data_b64",
            f"expected {payload.height * payload.width} bytes, got {len(raw)}",
        )
    idx = np.frombuffer(raw, dtype=np.uint8).reshape(payload.height, payload.width)
    if idx.max(initial=0) >= arch.n_s:
        _field_error(
            "segmentation.data_b64",
            f"class index {int(idx.max())} out of range for n_s={arch.n_s}",
        )
    one_hot = np.zeros((arch.n_s, payload.height, payload.width), dtype=np.float32)
    rows, cols = np.indices(idx.shape)
    one_hot[idx, rows, cols] = 1.0
    return one_hot


def _resolve_latent(seed, z, n_z: int, field: str = "z") -> tuple[np.ndarray, int | None]:
    if z is not None:
        arr = np.asarray(z, dtype=np.float32)
        if arr.shape != (n_z,):
            _field_error(field, f"expected {n_z} values, got {arr.shape}")
        if not np.isfinite(arr).all():
            _field_error(field, "latent values must be finite")
        return arr, None
    used_seed = seed if seed is not None else 0
    gen = torch.Generator().manual_seed(int(used_seed))
    return torch.randn(n_z, generator=gen).numpy(), int(used_seed)


def _attributes(bits, n_c: int, field: str = "attributes") -> np.ndarray:
    arr = np.asarray(bits, dtype=np.float32)
    if arr.shape != (n_c,):
        _field_error(field, f"expected {n_c} bits, got shape {tuple(arr.shape)}")
    if not np.isin(arr, (0.0, 1.0)).all():
        _field_error(field, "attribute bits must be 0 or 1")
    return arr


def _png_b64(image_hwc_uint8: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image_hwc_uint8).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def create_app(registry: Registry) -> FastAPI:
    app = FastAPI(title="segsynth")

    @app.get("/models")
    def list_models():
        out = []
        for model_id in registry.ids():
            arch = registry.get(model_id).arch
            out.append(
                {
                    "id": model_id,
                    "image_size": arch.image_size,
                    "n_s": arch.n_s,
                    "n_c": arch.n_c,
                    "n_z": arch.n_z,
                    "generator_order": arch.generator_order.value,
                }
            )
        return {"models": out}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        bundle = registry.get(req.model_id)
        arch = bundle.arch
        s = _decode_segmentation(req.segmentation, bundle)
        c = _attributes(req.attributes, arch.n_c)
        z, used_seed = _resolve_latent(req.seed, req.z, arch.n_z)

        zt = torch.from_numpy(z).view(1, -1)
        ct = torch.from_numpy(c).view(1, -1)
        st = torch.from_numpy(s).unsqueeze(0)
        with torch.no_grad():
            img = bundle.generator(zt, ct, st)[0]
        png = _png_b64(denormalize_image(img.permute(1, 2, 0).numpy()))
        seg_sha = hashlib.sha256(s.tobytes()).hexdigest()
        return {
            "model_id": req.model_id,
            "image_b64": png,
            "seed": used_seed,
            "z_sha256": hashlib.sha256(z.tobytes()).hexdigest(),
            "attributes": [int(b) for b in c],
            "segmentation_sha256": seg_sha,
        }

    @app.post("/segment")
    def segment(req: SegmentRequest):
        bundle = registry.get(req.model_id)
        arch = bundle.arch
        if len(req.image_b64) > MAX_PAYLOAD_BYTES:
            raise HTTPException(
                status_code=413,
                detail=f"image payload exceeds the {MAX_PAYLOAD_BYTES} byte limit",
            )
        try:
            raw = base64.b64decode(req.image_b64, validate=True)
            with Image.open(io.BytesIO(raw)) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except (binascii.Error, ValueError, OSError):
            _field_error("image_b64", "not a decodable image")
        if rgb.shape[:2] != (arch.image_size, arch.image_size):
            _field_error(
                "image_b64",
                f"expected {arch.image_size}x{arch.image_size}, got {rgb.shape[1]}x{rgb.shape[0]}",
            )
        x = torch.from_numpy(
            np.transpose(rgb.astype(np.float32) / 127.5 - 1.0, (2, 0, 1))
        ).unsqueeze(0)
        with torch.no_grad():
            logits = bundle.segmentor(x)
        idx = logits.argmax(dim=1)[0].to(torch.uint8).numpy()
        return {
            "index_map_b64": base64.b64encode(idx.tobytes()).decode(),
            "height": int(idx.shape[0]),
            "width": int(idx.shape[1]),
            "n_s": arch.n_s,
        }

    @app.post("/interpolate")
    def interpolate(req: InterpolateRequest):
        bundle = registry.get(req.model_id)
        arch = bundle.arch
        from .core import LandmarkSet, ValidationError

        kwargs: dict = {"mode": req.mode, "steps": req.steps}
        if req.mode == "latent":
            z0, _ = _resolve_latent(req.seed0, req.z0, arch.n_z, "z0")
            z1, _ = _resolve_latent(req.seed1, req.z1, arch.n_z, "z1")
            if req.attributes is None or req.segmentation is None:
                _field_error("attributes/segmentation", "latent sweep needs fixed c and s")
            kwargs.update(
                z0=z0,
                z1=z1,
                c=_attributes(req.attributes, arch.n_c),
                s=_decode_segmentation(req.segmentation, bundle),
            )
        elif req.mode == "attribute":
            z, _ = _resolve_latent(req.seed, req.z0, arch.n_z)
            if not req.attribute_list or req.segmentation is None:
                _field_error("attribute_list/segmentation", "attribute sweep needs labels and s")
            kwargs.update(
                z=z,
                c_list=tuple(_attributes(c, arch.n_c, "attribute_list") for c in req.attribute_list),
                s=_decode_segmentation(req.segmentation, bundle),
            )
        elif req.mode == "spatial":
            z, _ = _resolve_latent(req.seed, req.z0, arch.n_z)
            if req.attributes is None or req.landmarks0 is None or req.landmarks1 is None:
                _field_error("landmarks0/landmarks1", "spatial sweep needs c and both landmark sets")
            try:
                l0 = LandmarkSet(np.asarray(req.landmarks0, dtype=np.float64))
                l1 = LandmarkSet(np.asarray(req.landmarks1, dtype=np.float64))
            except ValidationError as exc:
                _field_error("landmarks", str(exc))
            kwargs.update(
                z=z,
                c=_attributes(req.attributes, arch.n_c),
                l0=l0,
                l1=l1,
                template=build_face_template(),
            )
        else:
            _field_error("mode", f"unknown sweep mode {req.mode!r}")

        try:
            spec = SweepSpec(**kwargs)
            frames = generate_interpolation(bundle.generator, arch, spec)
        except ValidationError as exc:
            _field_error("spec", str(exc))
        out = []
        for frame in frames:
            rec = {"index": frame.index, "t": frame.t, "image_b64": _png_b64(frame.image)}
            if frame.t2 is not None:
                rec["t2"] = frame.t2
            out.append(rec)
        return {"model_id": req.model_id, "spec_hash": spec_hash(spec), "frames": out}

    return app


def serve(registry_dir: str, bind: str = "127.0.0.1:8765"):
    """Blocking server entry point used by the CLI."""
    import uvicorn

    registry = Registry.from_directory(registry_dir)
    host, _, port = bind.partition(":")
    uvicorn.run(create_app(registry), host=host or "127.0.0.1", port=int(port or 8765))
