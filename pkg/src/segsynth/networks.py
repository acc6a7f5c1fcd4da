"""The three networks: generator, critic with attribute head, and segmentor.

One ArchConfig drives every shape. The reference configuration is
image_size=128 / base_channels=64 / n_z=512; the same code scales down to
desk-size images (>= 16, powers of two).

Layout conventions (internal): tensors are NCHW; segmentations are one-hot
float maps; images live in [-1, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ValidationError

WEIGHT_INIT_STD = 0.02


class GeneratorOrder(str, enum.Enum):
    # step_by_step: segmentation in first, latent second, attributes last.
    # reversed: latent first through upsampling, segmentation and attributes later.
    STEP_BY_STEP = "step_by_step"
    REVERSED = "reversed"


@dataclass(frozen=True)
class ArchConfig:
    image_size: int = 128
    n_s: int = 7
    n_c: int = 5
    n_z: int = 512
    base_channels: int = 64
    generator_order: GeneratorOrder = GeneratorOrder.STEP_BY_STEP
    leaky_slope: float = 0.2

    def __post_init__(self):
        s = self.image_size
        if s < 16 or (s & (s - 1)) != 0:
            raise ValidationError(
                f"image_size must be a power of two >= 16, got {s}"
            )
        if self.base_channels < 4:
            raise ValidationError("base_channels must be >= 4")
        if self.n_s < 2 or self.n_c < 1 or self.n_z < 1:
            raise ValidationError("n_s >= 2, n_c >= 1 and n_z >= 1 required")
        object.__setattr__(
            self, "generator_order", GeneratorOrder(self.generator_order)
        )

    @property
    def bottleneck_size(self) -> int:
        # the segmentation encoder always applies 4 halvings
        return self.image_size // 16

    @property
    def disc_layers(self) -> int:
        # drop trailing downsamplings so the final feature map stays 2x2
        return self.image_size.bit_length() - 2

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "n_s": self.n_s,
            "n_c": self.n_c,
            "n_z": self.n_z,
            "base_channels": self.base_channels,
            "generator_order": self.generator_order.value,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**d)


def _conv(in_ch, out_ch, k, s, p):
    return nn.Conv2d(in_ch, out_ch, kernel_size=k, stride=s, padding=p)


class InstanceNorm(nn.Module):
    """Per-sample, per-channel normalization over spatial dims with affine.

    Same math as InstanceNorm2d (biased variance, eps inside the sqrt) but
    accepts 1x1 feature maps, where the normalized value collapses to 0 and
    the output is the shift parameter.
    """

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        mean = x.mean(dim=(2, 3), keepdim=True)
        var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
        normed = (x - mean) / torch.sqrt(var + self.eps)
        return normed * self.weight[:, None, None] + self.bias[:, None, None]


def _norm(ch):
    # instance statistics only, learnable scale/shift
    return InstanceNorm(ch)


class ResBlock(nn.Module):
    """x + F(x), F = conv3-IN-ReLU-conv3-IN. Channels preserved."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3, 1, 1)
        self.norm1 = _norm(channels)
        self.conv2 = _conv(channels, channels, 3, 1, 1)
        self.norm2 = _norm(channels)

    def forward(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return x + h


class UpResBlock(nn.Module):
    """Residual block with nearest-neighbor 2x upsampling on both paths.

    Main path: up2 -> conv3-IN-ReLU-conv3-IN; skip path: up2 -> 1x1 conv.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = _conv(in_channels, out_channels, 3, 1, 1)
        self.norm1 = _norm(out_channels)
        self.conv2 = _conv(out_channels, out_channels, 3, 1, 1)
        self.norm2 = _norm(out_channels)
        self.skip = _conv(in_channels, out_channels, 1, 1, 0)

    def forward(self, x):
        up = F.interpolate(x, scale_factor=2, mode="nearest")
        h = F.relu(self.norm1(self.conv1(up)))
        h = self.norm2(self.conv2(h))
        return h + self.skip(up)


def _check_batched(t: torch.Tensor, name: str, channels: int, size: int):
    if t.ndim != 4 or t.shape[1] != channels or t.shape[2] != size or t.shape[3] != size:
        raise ValidationError(
            f"{name} must be (B, {channels}, {size}, {size}), got {tuple(t.shape)}"
        )


def _check_one_hot(s: torch.Tensor):
    binary = ((s == 0) | (s == 1)).all()
    if not binary or not (s.sum(dim=1) == 1).all():
        raise ValidationError("segmentation input must be strictly one-hot")


class Generator(nn.Module):
    """Maps (z, c, s) to an image in (-1, 1).

    Step-by-step order: 4 downsampling convs encode s to the bottleneck,
    the latent is projected and concatenated there, two upsampling residual
    blocks run, the attribute vector is tiled and concatenated at 1/4
    resolution, two more upsampling residual blocks and a tanh conv finish.

    Reversed order consumes z first (projection + two upsampling blocks),
    then concatenates a nearest-downsampled s, then c.
    """

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        bs = config.bottleneck_size
        self.reversed_order = config.generator_order is GeneratorOrder.REVERSED

        if not self.reversed_order:
            self.enc = nn.ModuleList()
            enc_channels = [config.n_s, b, 2 * b, 4 * b, 8 * b]
            for cin, cout in zip(enc_channels[:-1], enc_channels[1:]):
                self.enc.append(
                    nn.Sequential(_conv(cin, cout, 4, 2, 1), _norm(cout), nn.ReLU())
                )
            self.latent_fc = nn.Linear(config.n_z, b * bs * bs)
            self.latent_norm = _norm(b)
            self.up1 = UpResBlock(9 * b, 8 * b)
            self.up2 = UpResBlock(8 * b, 4 * b)
            self.up3 = UpResBlock(4 * b + config.n_c, 2 * b)
            self.up4 = UpResBlock(2 * b, b)
        else:
            self.latent_fc = nn.Linear(config.n_z, 9 * b * bs * bs)
            self.latent_norm = _norm(9 * b)
            self.up1 = UpResBlock(9 * b, 8 * b)
            self.up2 = UpResBlock(8 * b, 4 * b)
            self.up3 = UpResBlock(4 * b + config.n_s, 2 * b)
            self.up4 = UpResBlock(2 * b + config.n_c, b)
        self.to_rgb = _conv(b, 3, 3, 1, 1)

    def forward(self, z: torch.Tensor, c: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if z.ndim != 2 or z.shape[1] != cfg.n_z:
            raise ValidationError(f"z must be (B, {cfg.n_z}), got {tuple(z.shape)}")
        if c.ndim != 2 or c.shape[1] != cfg.n_c:
            raise ValidationError(f"c must be (B, {cfg.n_c}), got {tuple(c.shape)}")
        _check_batched(s, "s", cfg.n_s, cfg.image_size)
        _check_one_hot(s)
        if not (z.shape[0] == c.shape[0] == s.shape[0]):
            raise ValidationError("z, c and s must share the batch dimension")

        bs = cfg.bottleneck_size
        if not self.reversed_order:
            h = s
            for layer in self.enc:
                h = layer(h)
            zp = self.latent_fc(z).view(-1, cfg.base_channels, bs, bs)
            zp = F.relu(self.latent_norm(zp))
            h = torch.cat([h, zp], dim=1)
            h = self.up1(h)
            h = self.up2(h)
            cq = c[:, :, None, None].expand(-1, -1, h.shape[2], h.shape[3])
            h = torch.cat([h, cq], dim=1)
            h = self.up3(h)
            h = self.up4(h)
        else:
            zp = self.latent_fc(z).view(-1, 9 * cfg.base_channels, bs, bs)
            h = F.relu(self.latent_norm(zp))
            h = self.up1(h)
            h = self.up2(h)
            s_small = F.interpolate(s, size=h.shape[2:], mode="nearest")
            h = torch.cat([h, s_small], dim=1)
            h = self.up3(h)
            cq = c[:, :, None, None].expand(-1, -1, h.shape[2], h.shape[3])
            h = torch.cat([h, cq], dim=1)
            h = self.up4(h)
        return torch.tanh(self.to_rgb(h))


class Discriminator(nn.Module):
    """PatchGAN critic with an attribute classification head; no normalization.

    Returns (critic_map, class_logits). The scalar critic value is the mean
    of the patch map (see critic_value).
    """

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        layers = []
        cin = 3
        for i in range(config.disc_layers):
            cout = b * (2**i)
            layers.append(_conv(cin, cout, 4, 2, 1))
            layers.append(nn.LeakyReLU(config.leaky_slope))
            cin = cout
        self.features = nn.Sequential(*layers)
        # final feature map is 2x2 at every valid image size
        self.critic_head = _conv(cin, 1, 3, 1, 1)
        self.class_head = _conv(cin, config.n_c, 2, 1, 0)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        _check_batched(x, "x", 3, self.config.image_size)
        h = self.features(x)
        critic_map = self.critic_head(h)
        class_logits = self.class_head(h).flatten(1)
        return critic_map, class_logits

    def critic_value(self, x: torch.Tensor) -> torch.Tensor:
        """Per-sample scalar critic: mean over the patch map."""
        critic_map, _ = self.forward(x)
        return critic_map.mean(dim=(1, 2, 3))


class Segmentor(nn.Module):
    """Encoder, 4 residual bottleneck blocks, decoder; full-resolution logits."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        self.enc1 = nn.Sequential(_conv(3, b, 4, 2, 1), _norm(b), nn.ReLU())
        self.enc2 = nn.Sequential(_conv(b, 2 * b, 4, 2, 1), _norm(2 * b), nn.ReLU())
        self.res = nn.Sequential(*[ResBlock(2 * b) for _ in range(4)])
        self.dec1 = nn.Sequential(
            nn.ConvTranspose2d(2 * b, b, 4, 2, 1), _norm(b), nn.ReLU()
        )
        self.dec2 = nn.Sequential(
            nn.ConvTranspose2d(b, b // 2, 4, 2, 1), _norm(b // 2), nn.ReLU()
        )
        self.head = _conv(b // 2, config.n_s, 3, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_batched(x, "x", 3, self.config.image_size)
        h = self.enc2(self.enc1(x))
        h = self.res(h)
        h = self.dec2(self.dec1(h))
        return self.head(h)


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Weights ~ N(0, 0.02) for conv/linear, scale 1 / shift 0 for norms, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            with torch.no_grad():
                m.weight.normal_(0.0, WEIGHT_INIT_STD, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, InstanceNorm):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()


def _build(cls, config: ArchConfig, seed: int | torch.Generator, dtype) -> nn.Module:
    net = cls(config)
    if dtype is not None:
        net = net.to(dtype)
    if isinstance(seed, torch.Generator):
        gen = seed
    else:
        gen = torch.Generator().manual_seed(int(seed))
    init_parameters(net, gen)
    return net


def build_generator(config: ArchConfig, seed: int | torch.Generator = 0, dtype=None) -> Generator:
    return _build(Generator, config, seed, dtype)


def build_discriminator(config: ArchConfig, seed: int | torch.Generator = 0, dtype=None) -> Discriminator:
    return _build(Discriminator, config, seed, dtype)


def build_segmentor(config: ArchConfig, seed: int | torch.Generator = 0, dtype=None) -> Segmentor:
    return _build(Segmentor, config, seed, dtype)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def generator_layer_shapes(config: ArchConfig) -> dict[str, tuple[int, ...]]:
    """Intermediate output shapes of the step-by-step generator, by stage.

    Computed by tracing a forward pass; used by shape-conformance checks.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    g = Generator(config)
    b, bs, n = config.base_channels, config.bottleneck_size, config.image_size
    z = torch.zeros(1, config.n_z)
    c = torch.zeros(1, config.n_c)
    s = torch.zeros(1, config.n_s, n, n)
    s[:, 0] = 1.0
    with torch.no_grad():
        h = s
        for i, layer in enumerate(g.enc, start=1):
            h = layer(h)
            shapes[f"enc{i}"] = tuple(h.shape[1:])
        zp = F.relu(g.latent_norm(g.latent_fc(z).view(-1, b, bs, bs)))
        shapes["latent_block"] = tuple(zp.shape[1:])
        h = torch.cat([h, zp], dim=1)
        shapes["concat_latent"] = tuple(h.shape[1:])
        h = g.up1(h)
        shapes["up1"] = tuple(h.shape[1:])
        h = g.up2(h)
        shapes["up2"] = tuple(h.shape[1:])
        cq = c[:, :, None, None].expand(-1, -1, h.shape[2], h.shape[3])
        shapes["attr_expand"] = tuple(cq.shape[1:])
        h = torch.cat([h, cq], dim=1)
        shapes["concat_attr"] = tuple(h.shape[1:])
        h = g.up3(h)
        shapes["up3"] = tuple(h.shape[1:])
        h = g.up4(h)
        shapes["up4"] = tuple(h.shape[1:])
        out = torch.tanh(g.to_rgb(h))
        shapes["output"] = tuple(out.shape[1:])
    return shapes


def discriminator_layer_shapes(config: ArchConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    d = Discriminator(config)
    x = torch.zeros(1, 3, config.image_size, config.image_size)
    with torch.no_grad():
        h = x
        i = 0
        for layer in d.features:
            h = layer(h)
            if isinstance(layer, nn.Conv2d):
                i += 1
                shapes[f"conv{i}"] = tuple(h.shape[1:])
        shapes["critic_map"] = tuple(d.critic_head(h).shape[1:])
        shapes["class_logits"] = tuple(d.class_head(h).shape[1:])
    return shapes


def segmentor_layer_shapes(config: ArchConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    s = Segmentor(config)
    x = torch.zeros(1, 3, config.image_size, config.image_size)
    with torch.no_grad():
        h = s.enc1(x)
        shapes["enc1"] = tuple(h.shape[1:])
        h = s.enc2(h)
        shapes["enc2"] = tuple(h.shape[1:])
        for i, blk in enumerate(s.res, start=1):
            h = blk(h)
            shapes[f"res{i}"] = tuple(h.shape[1:])
        h = s.dec1(h)
        shapes["dec1"] = tuple(h.shape[1:])
        h = s.dec2(h)
        shapes["dec2"] = tuple(h.shape[1:])
        shapes["logits"] = tuple(s.head(h).shape[1:])
    return shapes
