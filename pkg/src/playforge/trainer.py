"""Training loop: AdamW with decoupled decay, cosine schedule with warmup,
global-norm gradient clipping, and early stopping on validation ADE with
best-weights restoration."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from .data import AugmentationConfig, Play, augment
from .metrics import EvalConfig, evaluate_dataset
from .model import PlayModel
from .objective import DEFAULT_WEIGHTS, LossWeights, displacement_targets, total_loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    warmup_steps: int = 500
    max_epochs: int = 100
    clip_norm: float = 1.0
    batch_size: int = 32
    patience: int = 10
    loss_weights: LossWeights = field(default_factory=lambda: DEFAULT_WEIGHTS)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    augmentation: Optional[AugmentationConfig] = None

    def __post_init__(self):
        if min(self.learning_rate, self.clip_norm, self.batch_size, self.max_epochs) <= 0:
            raise ValueError("learning_rate, clip_norm, batch_size, max_epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.warmup_steps < 0 or self.weight_decay < 0:
            raise ValueError("warmup_steps and weight_decay must be non-negative")


def lr_schedule(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear warmup to the peak rate, then cosine decay to zero."""
    if step < 0:
        raise ValueError("step must be >= 0")
    peak = config.learning_rate
    if config.warmup_steps > 0 and step < config.warmup_steps:
        return peak * step / config.warmup_steps
    if total_steps <= config.warmup_steps:
        return peak
    progress = (step - config.warmup_steps) / (total_steps - config.warmup_steps)
    progress = min(progress, 1.0)
    return peak * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_gradients(grads: dict[str, Tensor], clip_norm: float) -> tuple[dict[str, Tensor], float]:
    """Scale all gradients in place if the global L2 norm exceeds the cap."""
    total_sq = 0.0
    for name, g in grads.items():
        if not bool(torch.isfinite(g).all()):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        total_sq += float((g * g).sum())
    total = math.sqrt(total_sq)
    if total > clip_norm and total > 0:
        scale = clip_norm / total
        for g in grads.values():
            g.mul_(scale)
    return grads, total


@dataclass
class OptimizerState:
    exp_avg: dict[str, Tensor]
    exp_avg_sq: dict[str, Tensor]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "OptimizerState":
        return cls(
            exp_avg={n: torch.zeros_like(p) for n, p in params.items()},
            exp_avg_sq={n: torch.zeros_like(p) for n, p in params.items()},
        )


def optimizer_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: OptimizerState,
    config: TrainConfig,
    lr: Optional[float] = None,
) -> tuple[dict[str, Tensor], OptimizerState]:
    """One AdamW update: bias-corrected adaptive step plus decoupled decay.

    ``p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps)``; parameters are
    updated in place.
    """
    if lr is None:
        lr = config.learning_rate
    state.step += 1
    bc1 = 1.0 - config.beta1 ** state.step
    bc2 = 1.0 - config.beta2 ** state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state.exp_avg[name]
            v = state.exp_avg_sq[name]
            m.mul_(config.beta1).add_(g, alpha=1.0 - config.beta1)
            v.mul_(config.beta2).addcmul_(g, g, value=1.0 - config.beta2)
            denom = (v / bc2).sqrt_().add_(config.adam_eps)
            update = (m / bc1) / denom
            if config.weight_decay > 0:
                p.add_(p, alpha=-lr * config.weight_decay)
            p.add_(update, alpha=-lr)
    return params, state


@dataclass
class EpochStats:
    epoch: int
    train_nll: float
    train_ade: float
    train_entropy: float
    train_smooth: float
    train_total: float
    val_ade: float
    val_fde: float
    val_entropy: float
    lr: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_ade: float = math.inf
    total_steps: int = 0
    wall_time_s: float = 0.0
    loss_weights: dict = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self, include_wall_time: bool = True) -> dict:
        d = {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_ade": self.best_val_ade,
            "total_steps": self.total_steps,
            "loss_weights": self.loss_weights,
            "error": self.error,
        }
        if include_wall_time:
            d["wall_time_s"] = self.wall_time_s
        return d


def _batches(indices: np.ndarray, batch_size: int):
    for start in range(0, len(indices), batch_size):
        yield indices[start:start + batch_size]


def train(
    model: PlayModel,
    train_set: Sequence[Play],
    val_set: Sequence[Play],
    config: TrainConfig,
) -> tuple[PlayModel, TrainReport]:
    """Optimize the model, returning it loaded with the best-ADE weights.

    Mini-batches are reshuffled each epoch from the run seed; augmentation
    (when configured) is applied on the fly to training plays only.
    Validation ADE uses the deterministic tau=0 dominant-component mode so
    the early-stopping signal is noise-free.
    """
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    started = time.perf_counter()
    model.init_params(config.seed)
    params = dict(model.named_parameters())
    state = OptimizerState.for_params(params)
    steps_per_epoch = math.ceil(len(train_set) / config.batch_size)
    total_steps = steps_per_epoch * config.max_epochs

    report = TrainReport(total_steps=total_steps, loss_weights=asdict(config.loss_weights))
    # Seed the restorable checkpoint with the (finite) initial weights so a
    # divergence before the first validation still leaves usable parameters.
    best_state: Optional[dict[str, Tensor]] = {n: p.detach().clone() for n, p in params.items()}
    epochs_since_best = 0
    step = 0

    for epoch in range(config.max_epochs):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_set))
        sums = {"nll": 0.0, "ade": 0.0, "entropy": 0.0, "smooth": 0.0, "total": 0.0}
        batches = 0
        diverged = None
        last_lr = 0.0
        for batch_idx in _batches(order, config.batch_size):
            plays = [train_set[i] for i in batch_idx]
            if config.augmentation is not None:
                plays = [augment(p, config.augmentation, rng) for p in plays]
            targets = displacement_targets(plays, model.config.prediction_target, model.dtype)
            formation = torch.as_tensor(
                np.stack([p.formation for p in plays]), dtype=model.dtype)
            roles = torch.as_tensor(np.stack([p.roles for p in plays]))
            out = model(formation, roles, targets.agent_mask, num_frames=plays[0].num_frames)
            breakdown = total_loss(out, targets, config.loss_weights,
                                   model.config.covariance_floor)
            if not bool(torch.isfinite(breakdown.total)):
                diverged = f"non-finite loss at epoch {epoch}, step {step}"
                break
            model.zero_grad(set_to_none=True)
            breakdown.total.backward()
            grads = {n: p.grad for n, p in params.items() if p.grad is not None}
            try:
                clip_gradients(grads, config.clip_norm)
            except FloatingPointError as exc:
                diverged = f"{exc} at epoch {epoch}, step {step}"
                break
            last_lr = lr_schedule(step, config, total_steps)
            optimizer_step({n: params[n] for n in grads}, grads, state, config, lr=last_lr)
            step += 1
            for key, value in breakdown.floats().items():
                sums[key] += value
            batches += 1

        if diverged is not None:
            report.error = diverged
            break

        with torch.no_grad():
            val = evaluate_dataset(model, val_set, EvalConfig(apd_samples=0, seed=config.seed))
        report.epochs.append(EpochStats(
            epoch=epoch,
            train_nll=sums["nll"] / batches,
            train_ade=sums["ade"] / batches,
            train_entropy=sums["entropy"] / batches,
            train_smooth=sums["smooth"] / batches,
            train_total=sums["total"] / batches,
            val_ade=val.ade,
            val_fde=val.fde,
            val_entropy=val.mixture_entropy,
            lr=last_lr,
        ))
        if val.ade < report.best_val_ade:
            report.best_val_ade = val.ade
            report.best_epoch = epoch
            best_state = {n: p.detach().clone() for n, p in params.items()}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    report.wall_time_s = time.perf_counter() - started
    return model, report
