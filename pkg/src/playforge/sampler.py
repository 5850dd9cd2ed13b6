"""Single-forward-pass play generation.

One mixture component is chosen per trajectory from the time-averaged
weights, then every frame's position is reconstructed directly from the
formation: ``x^(t) = f + mu_k^(t) + tau * L_k^(t) eps``.  With the shared
noise mode a single eps per agent is reused across frames, so diversity
comes without frame-to-frame jitter.  Temperature scales both the
component-selection logits and the noise term; tau = 0 is fully
deterministic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from .model import MoGParams, PlayModel, realize_covariance
from .objective import argmax_lowest

NOISE_MODES = ("shared_eps", "independent_eps")


@dataclass(frozen=True)
class SampleConfig:
    temperature: float = 0.8
    seed: int = 0
    component_override: Optional[int] = None
    num_samples: int = 1
    noise_mode: str = "shared_eps"

    def __post_init__(self):
        if not (self.temperature >= 0.0 and np.isfinite(self.temperature)):
            raise ValueError("temperature must be finite and >= 0")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")


@dataclass
class GeneratedPlay:
    trajectory: np.ndarray      # (T, N, 2) normalized; frame 0 is the formation
    component_used: int
    pi_bar: np.ndarray          # (M,)
    seed: int


def derive_seed(base_seed: int, index: int) -> int:
    """Stable per-sample seed so each of the K samples reproduces alone."""
    digest = hashlib.blake2b(f"{base_seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFF


def average_weights(pi: Tensor) -> Tensor:
    """Arithmetic mean of the per-frame weights: a simplex point."""
    return pi.mean(dim=-2)


def select_component(pi_bar: Tensor, temperature: float, rng: torch.Generator) -> int:
    """Sample k from softmax(log pi_bar / tau); tau = 0 takes the argmax."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0.0:
        return int(argmax_lowest(pi_bar).item())
    logits = torch.log(torch.clamp(pi_bar, min=1e-12)) / temperature
    probs = torch.softmax(logits, dim=-1)
    return int(torch.multinomial(probs, 1, generator=rng).item())


def sample_trajectory(
    formation: Tensor,
    params: MoGParams,
    component: int,
    temperature: float,
    rng: torch.Generator,
    noise_mode: str = "shared_eps",
    floor: float = 0.01,
) -> Tensor:
    """Reconstruct one trajectory (T, N, 2) under absolute displacements."""
    mu_k = params.mu[:, :, component, :]                       # (F, N, 2)
    positions = formation[None] + mu_k
    if temperature > 0.0:
        chol, _ = realize_covariance(params.chol_raw[:, :, component, :], floor)
        eps = _draw_eps(mu_k.shape, noise_mode, rng, mu_k.dtype)
        noise = (chol @ eps[..., None]).squeeze(-1)
        positions = positions + temperature * noise
    return torch.cat([formation[None], positions], dim=0)


def reconstruct_frame_delta(
    formation: Tensor,
    params: MoGParams,
    component: int,
    temperature: float,
    rng: torch.Generator,
    noise_mode: str = "shared_eps",
    floor: float = 0.01,
) -> Tensor:
    """Trajectory from per-frame deltas: cumulative sum added to the formation."""
    delta = params.mu[:, :, component, :]
    if temperature > 0.0:
        chol, _ = realize_covariance(params.chol_raw[:, :, component, :], floor)
        eps = _draw_eps(delta.shape, noise_mode, rng, delta.dtype)
        delta = delta + temperature * (chol @ eps[..., None]).squeeze(-1)
    positions = formation[None] + torch.cumsum(delta, dim=0)
    return torch.cat([formation[None], positions], dim=0)


def _draw_eps(shape, noise_mode: str, rng: torch.Generator, dtype) -> Tensor:
    frames, agents, _ = shape
    if noise_mode == "shared_eps":
        eps = torch.randn(agents, 2, generator=rng, dtype=dtype)
        return eps[None].expand(frames, agents, 2)
    if noise_mode == "independent_eps":
        return torch.randn(frames, agents, 2, generator=rng, dtype=dtype)
    raise ValueError(f"unknown noise mode: {noise_mode!r}")


def generate(
    model: PlayModel,
    formation,
    roles,
    sample_cfg: SampleConfig,
    num_frames: Optional[int] = None,
    agent_mask=None,
) -> list[GeneratedPlay]:
    """Draw K trajectories from a single forward pass.

    Each sample gets its own seed derived from the base seed, selects its
    component from the time-averaged weights (unless overridden), and draws
    fresh noise.  The reconstruction path follows the model's configured
    prediction target.
    """
    m = model.config.mixture_components
    if sample_cfg.component_override is not None and not (
        0 <= sample_cfg.component_override < m
    ):
        raise ValueError(f"component_override must lie in [0, {m})")
    formation_t = torch.as_tensor(formation, dtype=model.dtype)
    with torch.no_grad():
        params = model(formation_t, roles, agent_mask, num_frames=num_frames)
        pi_bar = average_weights(params.pi)
        reconstruct = (
            reconstruct_frame_delta
            if model.config.prediction_target == "frame_delta"
            else sample_trajectory
        )
        out = []
        for i in range(sample_cfg.num_samples):
            seed = derive_seed(sample_cfg.seed, i)
            rng = torch.Generator().manual_seed(seed)
            if sample_cfg.component_override is not None:
                k = sample_cfg.component_override
            else:
                k = select_component(pi_bar, sample_cfg.temperature, rng)
            traj = reconstruct(
                formation_t, params, k, sample_cfg.temperature, rng,
                sample_cfg.noise_mode, model.config.covariance_floor,
            )
            out.append(GeneratedPlay(
                trajectory=traj.numpy(),
                component_used=k,
                pi_bar=pi_bar.numpy().copy(),
                seed=seed,
            ))
    return out


def concept_means(
    model: PlayModel,
    formation,
    roles,
    num_frames: Optional[int] = None,
    agent_mask=None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Deterministic (tau = 0) trajectory of every mixture component.

    One forward pass; returns ([M trajectories], pi_bar)."""
    formation_t = torch.as_tensor(formation, dtype=model.dtype)
    reconstruct = (
        reconstruct_frame_delta
        if model.config.prediction_target == "frame_delta"
        else sample_trajectory
    )
    with torch.no_grad():
        params = model(formation_t, roles, agent_mask, num_frames=num_frames)
        pi_bar = average_weights(params.pi)
        rng = torch.Generator().manual_seed(0)
        trajectories = [
            reconstruct(formation_t, params, k, 0.0, rng,
                        floor=model.config.covariance_floor).numpy()
            for k in range(model.config.mixture_components)
        ]
    return trajectories, pi_bar.numpy().copy()
