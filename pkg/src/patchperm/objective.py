"""Adversarial, content and combined generator losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

EPS = 1e-7
LAMBDA_RANGE = (1e-6, 1e-5)  # documented guidance, not enforced


class LossContractError(ValueError):
    pass


@dataclass
class LossReport:
    d_loss: float
    g_adv: float
    g_content: float
    g_total: float
    lam: float

    def row(self, iteration: int) -> list:
        return [iteration, repr(self.d_loss), repr(self.g_adv), repr(self.g_content),
                repr(self.g_total)]


def _prob(p, name):
    p = torch.as_tensor(p, dtype=torch.get_default_dtype()) if not torch.is_tensor(p) else p
    with torch.no_grad():
        if not torch.all(torch.isfinite(p)) or torch.any(p < 0) or torch.any(p > 1):
            raise LossContractError(f"{name} must be a probability in [0, 1]")
    return p.clamp(EPS, 1.0 - EPS)


def adversarial_terms(p_real, p_fake, saturating: bool = False):
    """Discriminator and generator losses from pooled probabilities.

    Batched inputs are reduced by the mean of the log terms. With
    ``saturating=True`` the generator minimizes ``log(1 - p_fake)``
    literally instead of the non-saturating ``-log p_fake``.
    """
    p_real = _prob(p_real, "p_real")
    p_fake = _prob(p_fake, "p_fake")
    d_loss = -(torch.log(p_real).mean() + torch.log1p(-p_fake).mean())
    return d_loss, generator_adversarial(p_fake, saturating)


def generator_adversarial(p_fake, saturating: bool = False):
    p_fake = _prob(p_fake, "p_fake")
    if saturating:
        return torch.log1p(-p_fake).mean()
    return -torch.log(p_fake).mean()


def content_loss(phi_x: torch.Tensor, phi_gx: torch.Tensor) -> torch.Tensor:
    """Squared feature distance divided by C*H*W, averaged over the batch.

    Accepts ``C x H x W`` or ``B x C x H x W`` tensors of equal shape.
    """
    if phi_x.shape != phi_gx.shape:
        raise LossContractError(
            f"feature maps differ in shape: {tuple(phi_x.shape)} vs {tuple(phi_gx.shape)}")
    if phi_x.dim() == 3:
        phi_x, phi_gx = phi_x.unsqueeze(0), phi_gx.unsqueeze(0)
    if phi_x.dim() != 4:
        raise LossContractError("feature maps must be C x H x W or B x C x H x W")
    chw = phi_x.shape[1] * phi_x.shape[2] * phi_x.shape[3]
    per_item = (phi_x - phi_gx).pow(2).flatten(1).sum(dim=1) / chw
    return per_item.mean()


def check_lambda(lam: float) -> float:
    if not math.isfinite(lam) or lam < 0:
        raise ValueError(f"content weight lambda must be a finite value >= 0, got {lam}")
    return lam


def total_generator_loss(g_adv, g_content, lam: float):
    check_lambda(lam)
    return g_adv + lam * g_content
