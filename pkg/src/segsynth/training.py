"""The adversarial training loop.

Schedule per outer iteration: n_repeat x (sample batch -> critic step ->
segmentor step) followed by one generator step that reuses the last
sampled batch. Every random draw comes from an owned, seeded generator so
single-worker runs reproduce bit-for-bit (float64) or to accumulated
rounding (float32).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .core import ValidationError
from .data import Dataset, EpochSampler
from .losses import (
    LossReport,
    LossWeights,
    attribute_classification_loss,
    compose_totals,
    critic_objective,
    pixelwise_cross_entropy_from_logits,
)
from .networks import (
    ArchConfig,
    Discriminator,
    Generator,
    Segmentor,
    build_discriminator,
    build_generator,
    build_segmentor,
)

SNAPSHOT_COUNT = 8


class SegmentorMode(str, enum.Enum):
    JOINT = "joint"
    PRETRAINED_FROZEN = "pretrained_frozen"


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, parts: dict):
        super().__init__(f"non-finite loss at iteration {iteration}: {parts}")
        self.iteration = iteration
        self.parts = parts


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchConfig = field(default_factory=ArchConfig)
    m: int = 16
    n_repeat: int = 5
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    epochs: int = 1
    seed: int = 0
    segmentor_mode: SegmentorMode = SegmentorMode.JOINT
    disable_segmentor: bool = False
    disable_classifier: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError("batch size m must be >= 1")
        if self.n_repeat < 1:
            raise ValidationError("n_repeat must be >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValidationError("learning rate must be positive")
        object.__setattr__(self, "segmentor_mode", SegmentorMode(self.segmentor_mode))

    @property
    def segmentor_updates_enabled(self) -> bool:
        return (
            not self.disable_segmentor
            and self.segmentor_mode is SegmentorMode.JOINT
        )

    @property
    def seg_term_in_g(self) -> bool:
        return not self.disable_segmentor

    def to_dict(self) -> dict:
        return {
            "arch": self.arch.to_dict(),
            "m": self.m,
            "n_repeat": self.n_repeat,
            "weights": self.weights.to_dict(),
            "lr": self.lr,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "epochs": self.epochs,
            "seed": self.seed,
            "segmentor_mode": self.segmentor_mode.value,
            "disable_segmentor": self.disable_segmentor,
            "disable_classifier": self.disable_classifier,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["arch"] = ArchConfig.from_dict(d["arch"])
        d["weights"] = LossWeights(**d["weights"])
        return cls(**d)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


# plain-text key-value config files: "key = value", '#' comments,
# arch fields under "arch.", loss weights as lambda_cls / lambda_seg / lambda_gp

_BOOL_KEYS = {"disable_segmentor", "disable_classifier"}
_INT_KEYS = {"m", "n_repeat", "epochs", "seed"}
_FLOAT_KEYS = {"lr", "adam_beta1", "adam_beta2"}
_ARCH_INT = {"image_size", "n_s", "n_c", "n_z", "base_channels"}


def parse_config_text(text: str, overrides: dict | None = None) -> TrainConfig:
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line is not 'key = value': {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    for key, val in (overrides or {}).items():
        values[str(key)] = str(val)

    arch_kwargs: dict = {}
    weight_kwargs: dict = {}
    cfg_kwargs: dict = {}
    for key, val in values.items():
        if key.startswith("arch."):
            name = key[5:]
            if name in _ARCH_INT:
                arch_kwargs[name] = int(val)
            elif name == "leaky_slope":
                arch_kwargs[name] = float(val)
            elif name == "generator_order":
                arch_kwargs[name] = val
            else:
                raise ValidationError(f"unknown arch key {key!r}")
        elif key in ("lambda_cls", "lambda_seg", "lambda_gp"):
            weight_kwargs[key] = float(val)
        elif key in _BOOL_KEYS:
            cfg_kwargs[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            cfg_kwargs[key] = int(val)
        elif key in _FLOAT_KEYS:
            cfg_kwargs[key] = float(val)
        elif key == "segmentor_mode":
            cfg_kwargs[key] = val
        else:
            raise ValidationError(f"unknown config key {key!r}")
    return TrainConfig(
        arch=ArchConfig(**arch_kwargs),
        weights=LossWeights(**weight_kwargs),
        **cfg_kwargs,
    )


def load_config_file(path: str, overrides: dict | None = None) -> TrainConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), overrides)


@dataclass
class ModelBundle:
    """The three networks plus the configuration that shaped them."""

    arch: ArchConfig
    generator: Generator
    discriminator: Discriminator
    segmentor: Segmentor
    opt_g: torch.optim.Adam | None = None
    opt_d: torch.optim.Adam | None = None
    opt_s: torch.optim.Adam | None = None
    iteration: int = 0
    epoch: int = 0
    d_updates: int = 0
    s_updates: int = 0
    g_updates: int = 0

    def eval_mode(self):
        self.generator.eval()
        self.discriminator.eval()
        self.segmentor.eval()
        return self


def build_bundle(config: TrainConfig, with_optimizers: bool = True, dtype=None) -> ModelBundle:
    seed = config.seed
    bundle = ModelBundle(
        arch=config.arch,
        generator=build_generator(config.arch, seed + 1, dtype=dtype),
        discriminator=build_discriminator(config.arch, seed + 2, dtype=dtype),
        segmentor=build_segmentor(config.arch, seed + 3, dtype=dtype),
    )
    if with_optimizers:
        betas = (config.adam_beta1, config.adam_beta2)
        bundle.opt_g = torch.optim.Adam(bundle.generator.parameters(), lr=config.lr, betas=betas)
        bundle.opt_d = torch.optim.Adam(bundle.discriminator.parameters(), lr=config.lr, betas=betas)
        bundle.opt_s = torch.optim.Adam(bundle.segmentor.parameters(), lr=config.lr, betas=betas)
    return bundle


@dataclass
class TrainingBatch:
    """One sampled batch: real triples plus the draws that accompany them."""

    x: torch.Tensor  # (m, 3, H, W)
    c: torch.Tensor  # (m, n_c)
    s: torch.Tensor  # (m, n_s, H, W) ground truth
    s_t: torch.Tensor  # (m, n_s, H, W) shuffled targets
    z: torch.Tensor  # (m, n_z)
    eps: torch.Tensor  # (m,)


def shuffle_targets(segmentations: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    """Uniformly permute the batch of target segmentations (fixed points allowed)."""
    if segmentations.shape[0] < 1:
        raise ValidationError("cannot shuffle an empty batch")
    perm = rng.permutation(segmentations.shape[0])
    return segmentations[torch.from_numpy(perm)]


def _item(t: torch.Tensor) -> float:
    v = float(t.detach().item())
    return v


def _check_finite(parts: dict, iteration: int):
    for name, val in parts.items():
        if val is not None and not math.isfinite(val):
            raise TrainingDiverged(iteration, parts)


def discriminator_step(bundle: ModelBundle, batch: TrainingBatch, config: TrainConfig) -> dict:
    """One optimizer step on total_D; touches only the critic's parameters."""
    with torch.no_grad():
        x_fake = bundle.generator(batch.z, batch.c, batch.s_t)
    try:
        objective, w_part, gp = critic_objective(
            bundle.discriminator, batch.x, x_fake, batch.eps, config.weights
        )
        _, real_logits = bundle.discriminator(batch.x)
        cls_real = attribute_classification_loss(batch.c, real_logits).mean()
    except ValidationError as exc:
        if "NaN" in str(exc):
            raise TrainingDiverged(bundle.iteration, {"error": str(exc)}) from exc
        raise
    total = objective
    if not config.disable_classifier:
        total = total + config.weights.lambda_cls * cls_real
    bundle.opt_d.zero_grad(set_to_none=True)
    total.backward()
    bundle.opt_d.step()
    bundle.d_updates += 1
    parts = {"adv": _item(w_part), "gp": _item(gp), "cls_real": _item(cls_real)}
    _check_finite(parts, bundle.iteration)
    return parts


def segmentor_step(bundle: ModelBundle, batch: TrainingBatch, config: TrainConfig) -> dict:
    """One optimizer step on seg_real (real images, ground-truth maps only)."""
    if config.segmentor_mode is not SegmentorMode.JOINT:
        raise ValidationError("segmentor_step requires JOINT mode")
    if config.disable_segmentor:
        raise ValidationError("segmentor updates are disabled by the ablation flag")
    logits = bundle.segmentor(batch.x)
    seg_real = pixelwise_cross_entropy_from_logits(batch.s, logits).mean()
    bundle.opt_s.zero_grad(set_to_none=True)
    seg_real.backward()
    bundle.opt_s.step()
    bundle.s_updates += 1
    parts = {"seg_real": _item(seg_real)}
    _check_finite(parts, bundle.iteration)
    return parts


def generator_step(bundle: ModelBundle, batch: TrainingBatch, config: TrainConfig) -> dict:
    """One optimizer step on total_G; fake images use the shuffled targets."""
    try:
        x_fake = bundle.generator(batch.z, batch.c, batch.s_t)
        critic_map, fake_logits = bundle.discriminator(x_fake)
        adv_g = critic_map.mean(dim=(1, 2, 3)).mean()
        cls_fake = attribute_classification_loss(batch.c, fake_logits).mean()
        total = -adv_g
        if not config.disable_classifier:
            total = total + config.weights.lambda_cls * cls_fake
        seg_fake_val: float | None = None
        if config.seg_term_in_g:
            seg_logits = bundle.segmentor(x_fake)
            seg_fake = pixelwise_cross_entropy_from_logits(batch.s_t, seg_logits).mean()
            total = total + config.weights.lambda_seg * seg_fake
            seg_fake_val = _item(seg_fake)
    except ValidationError as exc:
        if "NaN" in str(exc):
            raise TrainingDiverged(bundle.iteration, {"error": str(exc)}) from exc
        raise
    bundle.opt_g.zero_grad(set_to_none=True)
    total.backward()
    bundle.opt_g.step()
    bundle.g_updates += 1
    parts = {"adv_g": _item(adv_g), "cls_fake": _item(cls_fake), "seg_fake": seg_fake_val}
    _check_finite(parts, bundle.iteration)
    return parts


@dataclass
class IterationRecord:
    iteration: int
    epoch: int
    wall_time: float
    d_updates: int
    s_updates: int
    g_updates: int
    report: LossReport

    def to_row(self) -> dict:
        row = {
            "iteration": self.iteration,
            "epoch": self.epoch,
            "wall_time": self.wall_time,
            "d_updates": self.d_updates,
            "s_updates": self.s_updates,
            "g_updates": self.g_updates,
        }
        row.update(self.report.to_dict())
        return row


@dataclass
class EpochSnapshot:
    epoch: int
    images: np.ndarray  # (SNAPSHOT_COUNT, H, W, 3) uint8


@dataclass
class TrainHistory:
    config: TrainConfig
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    CSV_COLUMNS = (
        "iteration", "epoch", "wall_time",
        "d_updates", "s_updates", "g_updates",
    ) + LossReport.FIELDS

    def append(self, record: IterationRecord):
        self.records.append(record)

    def loss_stream(self, name: str) -> list:
        return [getattr(rec.report, name) for rec in self.records]

    def epoch_records(self, epoch: int) -> list:
        return [rec for rec in self.records if rec.epoch == epoch]

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for rec in self.records:
                row = rec.to_row()
                cells = []
                for col in self.CSV_COLUMNS:
                    val = row[col]
                    if val is None:
                        cells.append("")
                    elif isinstance(val, float):
                        cells.append(repr(val))
                    else:
                        cells.append(str(val))
                fh.write(",".join(cells) + "\n")


class Trainer:
    """Owns one training run: bundle, samplers, counters, history."""

    def __init__(self, config: TrainConfig, dataset: Dataset,
                 pretrained_segmentor: Segmentor | None = None):
        if len(dataset) < config.m:
            raise ValidationError(
                f"dataset of {len(dataset)} smaller than batch size {config.m}"
            )
        if dataset.n_s != config.arch.n_s or dataset.n_c != config.arch.n_c:
            raise ValidationError(
                "dataset classes/attributes do not match the architecture "
                f"(n_s {dataset.n_s} vs {config.arch.n_s}, n_c {dataset.n_c} vs {config.arch.n_c})"
            )
        if dataset.image_size != config.arch.image_size:
            raise ValidationError("dataset image size does not match the architecture")
        if config.segmentor_mode is SegmentorMode.PRETRAINED_FROZEN and (
            pretrained_segmentor is None and not config.disable_segmentor
        ):
            raise ValidationError("PRETRAINED_FROZEN mode needs a pretrained segmentor")

        self.config = config
        self.dataset = dataset
        self.bundle = build_bundle(config)
        if pretrained_segmentor is not None:
            self.bundle.segmentor.load_state_dict(pretrained_segmentor.state_dict())
        if config.segmentor_mode is SegmentorMode.PRETRAINED_FROZEN:
            # gradients still flow through the segmentor into the generator
            for p in self.bundle.segmentor.parameters():
                p.requires_grad_(False)
        seed = config.seed
        self.z_gen = torch.Generator().manual_seed(seed + 4)
        self.eps_gen = torch.Generator().manual_seed(seed + 5)
        self.snapshot_gen = torch.Generator().manual_seed(seed + 6)
        self.sampler_rng = np.random.default_rng(seed + 7)
        self.shuffle_rng = np.random.default_rng(seed + 8)
        self.sampler = EpochSampler(len(dataset), config.m, self.sampler_rng)
        self.history = TrainHistory(config=config)
        self._snapshot_inputs = self._fixed_snapshot_inputs()

    @property
    def iterations_per_epoch(self) -> int:
        return math.ceil(len(self.dataset) / self.config.m)

    def _fixed_snapshot_inputs(self):
        n = min(SNAPSHOT_COUNT, len(self.dataset))
        z = torch.randn(n, self.config.arch.n_z, generator=self.snapshot_gen)
        imgs, labels, segs = self.dataset.batch_tensors(np.arange(n))
        del imgs
        return z, torch.from_numpy(labels), torch.from_numpy(segs)

    def _sample_batch(self) -> TrainingBatch:
        cfg = self.config
        z = torch.randn(cfg.m, cfg.arch.n_z, generator=self.z_gen)
        indices = self.sampler.next_indices()
        imgs, labels, segs = self.dataset.batch_tensors(indices)
        eps = torch.rand(cfg.m, generator=self.eps_gen)
        x = torch.from_numpy(imgs)
        c = torch.from_numpy(labels)
        s = torch.from_numpy(segs)
        s_t = shuffle_targets(s, self.shuffle_rng)
        return TrainingBatch(x=x, c=c, s=s, s_t=s_t, z=z, eps=eps)

    def run_iteration(self) -> IterationRecord:
        cfg = self.config
        self.bundle.iteration += 1
        batch = None
        d_parts: dict = {}
        s_parts: dict = {"seg_real": None}
        for _ in range(cfg.n_repeat):
            batch = self._sample_batch()
            d_parts = discriminator_step(self.bundle, batch, cfg)
            if cfg.segmentor_updates_enabled:
                s_parts = segmentor_step(self.bundle, batch, cfg)
        g_parts = generator_step(self.bundle, batch, cfg)
        report = LossReport(
            adv=d_parts["adv"],
            gp=d_parts["gp"],
            cls_real=d_parts["cls_real"],
            seg_real=s_parts["seg_real"],
            adv_g=g_parts["adv_g"],
            cls_fake=g_parts["cls_fake"],
            seg_fake=g_parts["seg_fake"],
        )
        compose_totals(
            report,
            cfg.weights,
            classifier_enabled=not cfg.disable_classifier,
            segmentor_enabled=cfg.seg_term_in_g,
        )
        record = IterationRecord(
            iteration=self.bundle.iteration,
            epoch=self.bundle.epoch + 1,
            wall_time=time.time(),
            d_updates=self.bundle.d_updates,
            s_updates=self.bundle.s_updates,
            g_updates=self.bundle.g_updates,
            report=report,
        )
        self.history.append(record)
        return record

    def snapshot(self) -> EpochSnapshot:
        z, c, s = self._snapshot_inputs
        self.bundle.generator.eval()
        with torch.no_grad():
            imgs = self.bundle.generator(z, c, s)
        self.bundle.generator.train()
        arr = ((imgs.clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
        snap = EpochSnapshot(
            epoch=self.bundle.epoch,
            images=arr.permute(0, 2, 3, 1).numpy(),
        )
        self.history.snapshots.append(snap)
        return snap

    def run_epoch(self, on_iteration=None):
        for _ in range(self.iterations_per_epoch):
            record = self.run_iteration()
            if on_iteration is not None:
                on_iteration(record)
        self.bundle.epoch += 1
        self.snapshot()

    def run(self, on_epoch=None, on_iteration=None):
        while self.bundle.epoch < self.config.epochs:
            self.run_epoch(on_iteration=on_iteration)
            if on_epoch is not None:
                on_epoch(self)
        return self.bundle, self.history


def train(config: TrainConfig, dataset: Dataset,
          pretrained_segmentor: Segmentor | None = None,
          on_epoch=None) -> tuple[ModelBundle, TrainHistory]:
    trainer = Trainer(config, dataset, pretrained_segmentor=pretrained_segmentor)
    return trainer.run(on_epoch=on_epoch)


def pretrain_segmentor(config: TrainConfig, dataset: Dataset) -> Segmentor:
    """Train the segmentor alone on real pairs for the configured epochs."""
    if len(dataset) < config.m:
        raise ValidationError("dataset smaller than batch size")
    segmentor = build_segmentor(config.arch, config.seed + 3)
    opt = torch.optim.Adam(
        segmentor.parameters(),
        lr=config.lr,
        betas=(config.adam_beta1, config.adam_beta2),
    )
    rng = np.random.default_rng(config.seed + 9)
    sampler = EpochSampler(len(dataset), config.m, rng)
    iters = math.ceil(len(dataset) / config.m)
    for _ in range(config.epochs):
        for _ in range(iters):
            indices = sampler.next_indices()
            imgs, _, segs = dataset.batch_tensors(indices)
            logits = segmentor(torch.from_numpy(imgs))
            loss = pixelwise_cross_entropy_from_logits(torch.from_numpy(segs), logits).mean()
            if not math.isfinite(float(loss.item())):
                raise TrainingDiverged(0, {"seg_real": float(loss.item())})
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
    return segmentor
