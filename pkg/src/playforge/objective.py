"""Training objective: mixture NLL plus three auxiliary terms.

All terms operate on possibly-batched mixture parameters and masked
displacement targets, normalize by valid (frame, agent) counts, and are
computed in log-space with explicit forward substitution through the
Cholesky factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from .data import Play
from .model import MoGParams, realize_covariance
from .numerics import DEFAULT_DTYPE, softplus

LOG_2PI = math.log(2.0 * math.pi)

#: Guard inside sqrt so L2-norm losses keep a finite gradient at zero error.
_NORM_EPS = 1e-300


@dataclass(frozen=True)
class LossWeights:
    ade: float = 1.0
    entropy: float = 0.1
    smooth: float = 0.5

    def __post_init__(self):
        if min(self.ade, self.entropy, self.smooth) < 0:
            raise ValueError("loss weights must be non-negative")


#: Headline weighting from the training recipe.
DEFAULT_WEIGHTS = LossWeights(ade=1.0, entropy=0.1, smooth=0.5)
#: Alternate preset with all three auxiliary terms at 0.1.
UNIFORM_WEIGHTS = LossWeights(ade=0.1, entropy=0.1, smooth=0.1)


@dataclass
class DisplacementTargets:
    """Per-frame displacement targets with validity masks.

    ``d`` is (B, T-1, N, 2): under the absolute-displacement target,
    ``d[t-1] = x^(t) - formation``; under the frame-delta target,
    ``d[t-1] = x^(t) - x^(t-1)``.
    """

    d: Tensor                 # (B, T-1, N, 2)
    frame_mask: Tensor        # (B, T-1) bool
    agent_mask: Tensor        # (B, N) bool

    @property
    def pair_mask(self) -> Tensor:
        return self.frame_mask[:, :, None] & self.agent_mask[:, None, :]


def displacement_targets(
    plays: Sequence[Play],
    prediction_target: str = "absolute_displacement",
    dtype: torch.dtype = DEFAULT_DTYPE,
) -> DisplacementTargets:
    """Stack plays (uniform T and N) into batched targets."""
    shapes = {p.trajectory.shape for p in plays}
    if len(shapes) != 1:
        raise ValueError(f"plays in a batch must share (T, N): got {sorted(shapes)}")
    traj = torch.as_tensor(np.stack([p.trajectory for p in plays]), dtype=dtype)
    frame_valid = torch.as_tensor(np.stack([p.frame_valid for p in plays]))
    agent_mask = torch.as_tensor(np.stack([p.agent_valid for p in plays]))
    if prediction_target == "absolute_displacement":
        d = traj[:, 1:] - traj[:, :1]
        frame_mask = frame_valid[:, 1:]
    elif prediction_target == "frame_delta":
        d = traj[:, 1:] - traj[:, :-1]
        frame_mask = frame_valid[:, 1:] & frame_valid[:, :-1]
    else:
        raise ValueError(f"unknown prediction target: {prediction_target!r}")
    return DisplacementTargets(d=d, frame_mask=frame_mask, agent_mask=agent_mask)


@dataclass
class LossBreakdown:
    nll: Tensor
    ade: Tensor
    entropy: Tensor
    smooth: Tensor
    total: Tensor

    def floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("nll", "ade", "entropy", "smooth", "total")}


def argmax_lowest(x: Tensor, dim: int = -1) -> Tensor:
    """Argmax with ties broken toward the lowest index (torch guarantees this)."""
    return torch.argmax(x, dim=dim)


def _gaussian_log_density(diff: Tensor, chol_raw: Tensor, floor: float) -> Tensor:
    """2D Gaussian log-density via forward substitution.

    diff: (..., 2) observed minus mean; chol_raw: (..., 3).
    """
    l11 = softplus(chol_raw[..., 0]) + floor
    l21 = chol_raw[..., 1]
    l22 = softplus(chol_raw[..., 2]) + floor
    z1 = diff[..., 0] / l11
    z2 = (diff[..., 1] - l21 * z1) / l22
    return -LOG_2PI - torch.log(l11) - torch.log(l22) - 0.5 * (z1 * z1 + z2 * z2)


def mog_nll(params: MoGParams, targets: DisplacementTargets, floor: float = 0.01) -> Tensor:
    """Joint negative log-likelihood under shared mixture weights.

    Per frame the mixture couples all agents: the component log-weight is
    added to the *sum* of per-agent Gaussian log-densities before the
    logsumexp over components.  Normalized by the count of valid
    (frame, agent) pairs.
    """
    p = params.batched()
    valid = targets.pair_mask
    num_pairs = valid.sum()
    if int(num_pairs) == 0:
        raise ValueError("no valid (frame, agent) pairs")
    diff = targets.d[:, :, :, None, :] - p.mu          # (B, F, N, M, 2)
    log_dens = _gaussian_log_density(diff, p.chol_raw, floor)
    log_dens = log_dens * valid[:, :, :, None].to(log_dens.dtype)
    joint = torch.log(p.pi) + log_dens.sum(dim=2)       # (B, F, M)
    per_frame = torch.logsumexp(joint, dim=-1)
    frame_w = targets.frame_mask.to(per_frame.dtype)
    return -(per_frame * frame_w).sum() / num_pairs.to(per_frame.dtype)


def _select_dominant(params: MoGParams) -> tuple[Tensor, Tensor]:
    """Per-frame dominant component index and its means (no grad through argmax)."""
    p = params.batched()
    k_star = argmax_lowest(p.pi, dim=-1)                # (B, F)
    b, f, n, m, _ = p.mu.shape
    idx = k_star[:, :, None, None, None].expand(b, f, n, 1, 2)
    mu_sel = p.mu.gather(3, idx).squeeze(3)             # (B, F, N, 2)
    return k_star, mu_sel


def best_component_ade(params: MoGParams, targets: DisplacementTargets) -> Tensor:
    """Mean L2 error of the dominant component's means against the targets."""
    _, mu_sel = _select_dominant(params)
    valid = targets.pair_mask
    num_pairs = valid.sum()
    if int(num_pairs) == 0:
        raise ValueError("no valid (frame, agent) pairs")
    err = torch.sqrt(((mu_sel - targets.d) ** 2).sum(dim=-1) + _NORM_EPS)
    return (err * valid.to(err.dtype)).sum() / num_pairs.to(err.dtype)


def weight_entropy_loss(params: MoGParams, frame_mask: Optional[Tensor] = None) -> Tensor:
    """Mean over frames of sum_k pi_k log pi_k (the negated entropy).

    Lies in [-ln M, 0]; minimizing it pushes the weights toward uniform.
    """
    p = params.batched()
    neg_entropy = torch.special.xlogy(p.pi, p.pi).sum(dim=-1)   # (B, F)
    if frame_mask is None:
        return neg_entropy.mean()
    w = frame_mask.to(neg_entropy.dtype)
    count = w.sum()
    if int(count) == 0:
        raise ValueError("no valid frames")
    return (neg_entropy * w).sum() / count


def smoothness_loss(params: MoGParams, targets: Optional[DisplacementTargets] = None) -> Tensor:
    """Mean L2 norm of frame-to-frame changes in the dominant-component means.

    The dominant component is re-selected at every frame t and the change is
    measured to frame t+1 under frame t's selection.  A single predicted
    frame yields 0.
    """
    p = params.batched()
    b, f, n, m, _ = p.mu.shape
    if f < 2:
        return p.mu.new_zeros(())
    k_star = argmax_lowest(p.pi, dim=-1)
    idx = k_star[:, :-1, None, None, None].expand(b, f - 1, n, 1, 2)
    mu_t = p.mu[:, :-1].gather(3, idx).squeeze(3)
    mu_next = p.mu[:, 1:].gather(3, idx).squeeze(3)
    step = torch.sqrt(((mu_next - mu_t) ** 2).sum(dim=-1) + _NORM_EPS)   # (B, F-1, N)

    if targets is None:
        return step.mean()
    pair_valid = (
        targets.frame_mask[:, 1:] & targets.frame_mask[:, :-1]
    )[:, :, None] & targets.agent_mask[:, None, :]
    count = pair_valid.sum()
    if int(count) == 0:
        return p.mu.new_zeros(())
    return (step * pair_valid.to(step.dtype)).sum() / count.to(step.dtype)


def total_loss(
    params: MoGParams,
    targets: DisplacementTargets,
    weights: LossWeights = DEFAULT_WEIGHTS,
    floor: float = 0.01,
) -> LossBreakdown:
    nll = mog_nll(params, targets, floor)
    ade = best_component_ade(params, targets)
    entropy = weight_entropy_loss(params, targets.frame_mask)
    smooth = smoothness_loss(params, targets)
    total = nll + weights.ade * ade + weights.entropy * entropy + weights.smooth * smooth
    return LossBreakdown(nll=nll, ade=ade, entropy=entropy, smooth=smooth, total=total)
