"""Loss terms and composite objectives.

Every term is reconcilable with a straight-from-formula scalar
recomputation: expectations are batch means, per-sample values sum over
pixels/channels/attributes. Cross-entropies run through a stabilized
log-softmax; a probability-entry path exists for direct checks and clamps
at PROB_FLOOR.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .core import ValidationError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 5.0
    lambda_seg: float = 1.0
    lambda_gp: float = 10.0

    def __post_init__(self):
        if self.lambda_cls < 0 or self.lambda_seg < 0 or self.lambda_gp < 0:
            raise ValidationError("loss weights must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "lambda_cls": self.lambda_cls,
            "lambda_seg": self.lambda_seg,
            "lambda_gp": self.lambda_gp,
        }


@dataclass
class LossReport:
    """One training iteration's decomposed losses.

    `adv` is the critic difference mean[D_d(fake)] - mean[D_d(real)] at the
    last critic step of the iteration; `adv_g` is mean[D_d(fake)] at the
    generator step (evaluated after the critic updates, so it is a distinct
    number). Segmentation entries are None when the segmentor is ablated.
    Totals recompose exactly from the recorded parts at float64:

        total_D = adv + lambda_gp * gp + lambda_cls * cls_real
        total_S = seg_real
        total_G = -adv_g + lambda_cls * cls_fake + lambda_seg * seg_fake

    with ablated terms contributing zero.
    """

    adv: float = 0.0
    gp: float = 0.0
    cls_real: float = 0.0
    seg_real: float | None = None
    adv_g: float = 0.0
    cls_fake: float = 0.0
    seg_fake: float | None = None
    total_D: float = 0.0
    total_S: float | None = None
    total_G: float = 0.0

    FIELDS = (
        "adv", "gp", "cls_real", "seg_real",
        "adv_g", "cls_fake", "seg_fake",
        "total_D", "total_S", "total_G",
    )

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "LossReport":
        return cls(**{name: d[name] for name in cls.FIELDS})


def compose_totals(
    report: LossReport,
    weights: LossWeights,
    classifier_enabled: bool = True,
    segmentor_enabled: bool = True,
) -> LossReport:
    """Fill the three totals from the recorded parts (float64 arithmetic)."""
    l_cls = weights.lambda_cls if classifier_enabled else 0.0
    l_seg = weights.lambda_seg if segmentor_enabled else 0.0
    report.total_D = report.adv + weights.lambda_gp * report.gp + l_cls * report.cls_real
    report.total_S = report.seg_real if segmentor_enabled else None
    seg_fake = report.seg_fake if report.seg_fake is not None else 0.0
    report.total_G = -report.adv_g + l_cls * report.cls_fake + l_seg * seg_fake
    return report


def _reject_nan(t: torch.Tensor, name: str):
    if torch.isnan(t).any():
        raise ValidationError(f"{name} contains NaN")


def pixelwise_cross_entropy_from_logits(target: torch.Tensor, logits: torch.Tensor) -> torch.Tensor:
    """-sum target * log_softmax(logits) over classes and pixels, per sample.

    target: (B, n_s, H, W) one-hot; logits: same shape. Returns (B,).
    """
    _reject_nan(logits, "logits")
    log_probs = F.log_softmax(logits, dim=1)
    return -(target * log_probs).sum(dim=(1, 2, 3))


def pixelwise_cross_entropy(target: torch.Tensor, probs: torch.Tensor) -> torch.Tensor:
    """Direct-probability entry: -sum target * log(probs), clamped at PROB_FLOOR.

    probs rows must be per-pixel probability vectors (nonnegative, sum to 1
    within 1e-5). A zero probability at a true-class position is clamped and
    flagged with a warning. Returns per-sample sums, shape (B,).
    """
    _reject_nan(probs, "probabilities")
    if (probs < 0).any():
        raise ValidationError("probabilities must be nonnegative")
    sums = probs.sum(dim=1)
    if (sums - 1.0).abs().max() > 1e-5:
        raise ValidationError("per-pixel probabilities must sum to 1 within 1e-5")
    if (probs[target == 1] == 0).any():
        warnings.warn(
            f"zero probability at a true-class position; clamped to {PROB_FLOOR}",
            RuntimeWarning,
            stacklevel=2,
        )
    return -(target * torch.log(probs.clamp_min(PROB_FLOOR))).sum(dim=(1, 2, 3))


def attribute_classification_loss(c: torch.Tensor, logits: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy with logits, summed over attributes, per sample.

    c, logits: (B, n_c). Returns (B,).
    """
    _reject_nan(logits, "classification logits")
    return F.binary_cross_entropy_with_logits(logits, c, reduction="none").sum(dim=1)


def gradient_penalty(
    discriminator,
    x_real: torch.Tensor,
    x_fake: torch.Tensor,
    eps: torch.Tensor,
    create_graph: bool = True,
) -> torch.Tensor:
    """mean over the batch of (||grad_xhat D_d(xhat)||_2 - 1)^2.

    xhat = eps * x_real + (1 - eps) * x_fake, eps per-sample in (0, 1).
    D_d is the scalar patch-mean critic; the norm runs over all pixels and
    channels of each sample.
    """
    if x_real.shape != x_fake.shape:
        raise ValidationError(
            f"real/fake batches must align, got {tuple(x_real.shape)} vs {tuple(x_fake.shape)}"
        )
    if eps.numel() != x_real.shape[0]:
        raise ValidationError("one eps value per sample required")
    eps = eps.to(x_real.dtype).view(-1, 1, 1, 1)
    x_hat = (eps * x_real + (1.0 - eps) * x_fake.detach()).requires_grad_(True)
    d_hat = discriminator.critic_value(x_hat)
    grads = torch.autograd.grad(
        outputs=d_hat.sum(),
        inputs=x_hat,
        create_graph=create_graph,
    )[0]
    norms = grads.flatten(1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def classification_loss_real(discriminator, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    _, logits = discriminator(x)
    return attribute_classification_loss(c, logits).mean()


def classification_loss_fake(discriminator, x_fake: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    _, logits = discriminator(x_fake)
    return attribute_classification_loss(c, logits).mean()


def segmentation_loss_real(segmentor, x: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    logits = segmentor(x)
    return pixelwise_cross_entropy_from_logits(s, logits).mean()


def segmentation_loss_fake(segmentor, x_fake: torch.Tensor, s_target: torch.Tensor) -> torch.Tensor:
    logits = segmentor(x_fake)
    return pixelwise_cross_entropy_from_logits(s_target, logits).mean()


def critic_objective(
    discriminator,
    x_real: torch.Tensor,
    x_fake: torch.Tensor,
    eps: torch.Tensor,
    weights: LossWeights,
    create_graph: bool = True,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """The critic's adversarial objective and its parts.

    Returns (objective, wasserstein_part, penalty):
    objective = mean D_d(fake) - mean D_d(real) + lambda_gp * penalty.
    The critic descends this (fake scores pushed down, real scores up).
    """
    if x_real.shape[0] != x_fake.shape[0]:
        raise ValidationError("real/fake batch sizes differ")
    d_fake = discriminator.critic_value(x_fake.detach())
    d_real = discriminator.critic_value(x_real)
    w_part = d_fake.mean() - d_real.mean()
    gp = gradient_penalty(discriminator, x_real, x_fake, eps, create_graph=create_graph)
    return w_part + weights.lambda_gp * gp, w_part, gp


def generator_adversarial(discriminator, x_fake: torch.Tensor) -> torch.Tensor:
    """-mean D_d(fake); the generator descends this (fake scores pushed up)."""
    return -discriminator.critic_value(x_fake).mean()
