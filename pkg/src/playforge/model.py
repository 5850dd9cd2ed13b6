"""Formation-conditioned trajectory network with a Gaussian-mixture head.

The network sees the starting formation only.  Per prediction frame it
receives the same projected formation plus a sinusoidal frame embedding,
runs a stack of spatial-attention blocks whose attention scores carry
per-head biases derived from pairwise player geometry, cross-attends to the
formation encoding, exchanges information across frames with one
bidirectional temporal block, and finally emits per-frame mixture weights
(shared by all players) plus per-player component means and Cholesky
factors for the displacement distributions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import Tensor, nn

from .numerics import (
    DEFAULT_DTYPE,
    MultiHeadAttention,
    init_linear,
    sinusoidal_embedding,
    softplus,
)

PREDICTION_TARGETS = ("absolute_displacement", "frame_delta")

CHECKPOINT_FORMAT_VERSION = 1
_CHECKPOINT_MAGIC = b"PFCKPT1\n"


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    num_layers: int = 4
    num_heads: int = 4
    mixture_components: int = 8
    relational_dim: int = 16
    role_embed_dim: int = 32
    max_frames: int = 50
    prediction_target: str = "absolute_displacement"
    covariance_floor: float = 0.01

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if self.mixture_components < 1:
            raise ValueError("mixture_components must be >= 1")
        if self.covariance_floor <= 0:
            raise ValueError("covariance_floor must be positive")
        if self.max_frames < 2:
            raise ValueError("max_frames must be >= 2")
        if self.prediction_target not in PREDICTION_TARGETS:
            raise ValueError(f"prediction_target must be one of {PREDICTION_TARGETS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown ModelConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MoGParams:
    """Per-frame mixture parameters; tensors may carry a leading batch axis.

    pi: (..., T-1, M) simplex rows; mu: (..., T-1, N, M, 2) displacement
    means; chol_raw: (..., T-1, N, M, 3) raw (l11, l21, l22) values.
    """

    pi: Tensor
    mu: Tensor
    chol_raw: Tensor

    @property
    def is_batched(self) -> bool:
        return self.pi.ndim == 3

    def batched(self) -> "MoGParams":
        if self.is_batched:
            return self
        return MoGParams(self.pi[None], self.mu[None], self.chol_raw[None])

    def play(self, index: int) -> "MoGParams":
        if not self.is_batched:
            raise ValueError("not a batched MoGParams")
        return MoGParams(self.pi[index], self.mu[index], self.chol_raw[index])


def realize_covariance(chol_raw: Tensor, floor: float) -> tuple[Tensor, Tensor]:
    """Build lower-triangular factors and covariances from raw head outputs.

    ``chol_raw`` is (..., 3) holding (l11, l21, l22); the diagonal passes
    through softplus plus ``floor`` so every covariance stays positive
    definite.  Returns (L, Sigma) with trailing shape (..., 2, 2).
    """
    l11 = softplus(chol_raw[..., 0]) + floor
    l21 = chol_raw[..., 1]
    l22 = softplus(chol_raw[..., 2]) + floor
    zero = torch.zeros_like(l11)
    chol = torch.stack(
        [torch.stack([l11, zero], dim=-1), torch.stack([l21, l22], dim=-1)], dim=-2
    )
    return chol, chol @ chol.transpose(-1, -2)


def masked_mean(x: Tensor, mask: Tensor) -> Tensor:
    """Mean of ``x`` (..., N, D) over valid agents given ``mask`` (..., N)."""
    counts = mask.sum(dim=-1)
    if bool((counts == 0).any()):
        raise ValueError("cannot pool a frame with no valid agents")
    weights = mask.to(x.dtype)
    return (x * weights[..., None]).sum(dim=-2) / counts[..., None].to(x.dtype)


def _feed_forward(dim: int, dtype: torch.dtype) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(dim, 4 * dim, dtype=dtype),
        nn.GELU(),
        nn.Linear(4 * dim, dim, dtype=dtype),
    )


class FormationEncoder(nn.Module):
    """One self-attention encoder layer over (position ++ role embedding)."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype):
        super().__init__()
        d = cfg.hidden_dim
        self.role_embed = nn.Embedding(8, cfg.role_embed_dim, dtype=dtype)
        self.in_proj = nn.Linear(2 + cfg.role_embed_dim, d, dtype=dtype)
        self.ln_attn = nn.LayerNorm(d, dtype=dtype)
        self.attn = MultiHeadAttention(d, cfg.num_heads, dtype=dtype)
        self.ln_ffn = nn.LayerNorm(d, dtype=dtype)
        self.ffn = _feed_forward(d, dtype)

    def forward(self, formation: Tensor, roles: Tensor, agent_mask: Tensor) -> Tensor:
        if bool((roles < 0).any()) or bool((roles > 7).any()):
            raise ValueError("role id out of range [0, 7]")
        x = self.in_proj(torch.cat([formation, self.role_embed(roles)], dim=-1))
        h = self.ln_attn(x)
        x = x + self.attn(h, h, h, key_mask=agent_mask)
        x = x + self.ffn(self.ln_ffn(x))
        return x * agent_mask[..., None].to(x.dtype)


class RelationalBias(nn.Module):
    """Per-head attention biases from pairwise offsets and distances."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(3, cfg.relational_dim, dtype=dtype),
            nn.GELU(),
            nn.Linear(cfg.relational_dim, cfg.num_heads, dtype=dtype),
        )

    def forward(self, positions: Tensor) -> Tensor:
        """positions (..., N, 2) -> biases (..., H, N, N), entry [i, j] from p_i - p_j."""
        delta = positions[..., :, None, :] - positions[..., None, :, :]
        # keep the gradient finite at coincident points (the diagonal)
        dist = torch.sqrt((delta * delta).sum(dim=-1) + 1e-300)
        feats = torch.cat([delta, dist[..., None]], dim=-1)
        return self.mlp(feats).movedim(-1, -3)


class SpatialBlock(nn.Module):
    """Relative spatial attention + formation cross-attention + feed-forward."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype):
        super().__init__()
        d = cfg.hidden_dim
        self.ln_spatial = nn.LayerNorm(d, dtype=dtype)
        self.spatial_attn = MultiHeadAttention(d, cfg.num_heads, dtype=dtype)
        self.ln_cross_q = nn.LayerNorm(d, dtype=dtype)
        self.ln_cross_kv = nn.LayerNorm(d, dtype=dtype)
        self.cross_attn = MultiHeadAttention(d, cfg.num_heads, dtype=dtype)
        self.ln_ffn = nn.LayerNorm(d, dtype=dtype)
        self.ffn = _feed_forward(d, dtype)

    def forward(self, x: Tensor, formation_feats: Tensor, bias: Tensor, agent_mask: Tensor) -> Tensor:
        # x: (B, F, N, D); formation_feats: (B, N, D); bias: (B, H, N, N); agent_mask: (B, N)
        h = self.ln_spatial(x)
        x = x + self.spatial_attn(h, h, h, head_bias=bias[:, None], key_mask=agent_mask[:, None])
        kv = self.ln_cross_kv(formation_feats)[:, None]
        x = x + self.cross_attn(self.ln_cross_q(x), kv, kv, key_mask=agent_mask[:, None])
        x = x + self.ffn(self.ln_ffn(x))
        return x


class TemporalBlock(nn.Module):
    """Pool agents per frame, attend across all frames, broadcast back."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype):
        super().__init__()
        d = cfg.hidden_dim
        self.position_embed = nn.Parameter(torch.zeros(cfg.max_frames - 1, d, dtype=dtype))
        self.ln_attn = nn.LayerNorm(d, dtype=dtype)
        self.attn = MultiHeadAttention(d, cfg.num_heads, dtype=dtype)
        self.ln_ffn = nn.LayerNorm(d, dtype=dtype)
        self.ffn = _feed_forward(d, dtype)

    def forward(self, x: Tensor, agent_mask: Tensor) -> Tensor:
        frames = x.shape[1]
        pooled = masked_mean(x, agent_mask[:, None, :]) + self.position_embed[:frames]
        h = self.ln_attn(pooled)
        pooled = pooled + self.attn(h, h, h)
        pooled = pooled + self.ffn(self.ln_ffn(pooled))
        return x + pooled[:, :, None, :]


class MixtureHead(nn.Module):
    """Shared mixture weights plus per-agent means and Cholesky factors."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype):
        super().__init__()
        d, m = cfg.hidden_dim, cfg.mixture_components
        self.final_ln = nn.LayerNorm(d, dtype=dtype)
        self.pi_mlp = nn.Sequential(
            nn.Linear(d, d, dtype=dtype), nn.GELU(), nn.Linear(d, m, dtype=dtype)
        )
        self.mu_proj = nn.Linear(d, 2 * m, dtype=dtype)
        self.chol_proj = nn.Linear(d, 3 * m, dtype=dtype)
        self.mixture_components = m

    def forward(self, x: Tensor, agent_mask: Tensor) -> MoGParams:
        b, f, n, _ = x.shape
        h = self.final_ln(x)
        pooled = masked_mean(h, agent_mask[:, None, :])
        pi = torch.softmax(self.pi_mlp(pooled), dim=-1)
        mu = self.mu_proj(h).view(b, f, n, self.mixture_components, 2)
        chol_raw = self.chol_proj(h).view(b, f, n, self.mixture_components, 3)
        return MoGParams(pi=pi, mu=mu, chol_raw=chol_raw)


class PlayModel(nn.Module):
    """The full formation-to-mixture network."""

    def __init__(self, config: ModelConfig, dtype: torch.dtype = DEFAULT_DTYPE):
        super().__init__()
        self.config = config
        self.dtype = dtype
        self.formation_encoder = FormationEncoder(config, dtype)
        self.relational = RelationalBias(config, dtype)
        self.in_proj = nn.Linear(2, config.hidden_dim, dtype=dtype)
        self.blocks = nn.ModuleList(
            SpatialBlock(config, dtype) for _ in range(config.num_layers)
        )
        self.temporal = TemporalBlock(config, dtype)
        self.head = MixtureHead(config, dtype)

    #: Extra shrink applied to the mixture head's output weights.  With plain
    #: fan-in init the component means start several field-widths from the
    #: data; one component then wins all responsibility within a few hundred
    #: steps and the rest never receive gradient again.  Starting all
    #: components tightly clustered (with the softplus floor keeping early
    #: densities flat) keeps responsibilities soft until the components can
    #: split onto separate scenario lobes.
    HEAD_INIT_SCALE = 0.1

    def init_params(self, seed: int = 0) -> "PlayModel":
        """Scaled-uniform fan-in linear weights, zero biases, N(0, 0.02) embeddings."""
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.Linear):
                    init_linear(module, gen)
                elif isinstance(module, nn.Embedding):
                    module.weight.normal_(0.0, 0.02, generator=gen)
                elif isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()
            self.temporal.position_embed.normal_(0.0, 0.02, generator=gen)
            for layer in (self.head.mu_proj, self.head.chol_proj, self.head.pi_mlp[-1]):
                layer.weight.mul_(self.HEAD_INIT_SCALE)
            # Start every component's scale at exactly twice the floor: an
            # untrained component is then at most ~7 nats of log-density
            # behind a fully sharpened one, so its responsibility (and hence
            # its gradient) cannot underflow to zero.
            floor = self.config.covariance_floor
            raw_at_floor = math.log(math.expm1(floor))
            for idx in range(self.head.mixture_components):
                self.head.chol_proj.bias[3 * idx] = raw_at_floor
                self.head.chol_proj.bias[3 * idx + 2] = raw_at_floor
        return self

    # -- spec operations ---------------------------------------------------

    def encode_formation(self, formation, roles, agent_mask=None) -> Tensor:
        formation, roles, agent_mask, batched = self._coerce(formation, roles, agent_mask)
        out = self.formation_encoder(formation, roles, agent_mask)
        return out if batched else out[0]

    def relational_bias(self, positions) -> Tensor:
        positions = torch.as_tensor(positions, dtype=self.dtype)
        return self.relational(positions)

    def forward(self, formation, roles, agent_mask=None, num_frames: Optional[int] = None) -> MoGParams:
        """Mixture parameters for ``num_frames - 1`` prediction frames."""
        if num_frames is None:
            num_frames = self.config.max_frames
        if not (2 <= num_frames <= self.config.max_frames):
            raise ValueError(
                f"num_frames must lie in [2, {self.config.max_frames}], got {num_frames}"
            )
        formation, roles, agent_mask, batched = self._coerce(formation, roles, agent_mask)

        h_f = self.formation_encoder(formation, roles, agent_mask)
        bias = self.relational(formation)
        steps = torch.arange(1, num_frames, dtype=self.dtype)
        step_embed = sinusoidal_embedding(steps, self.config.hidden_dim, dtype=self.dtype)
        x = self.in_proj(formation)[:, None, :, :] + step_embed[None, :, None, :]
        for block in self.blocks:
            x = block(x, h_f, bias, agent_mask)
        x = self.temporal(x, agent_mask)
        out = self.head(x, agent_mask)
        return out if batched else out.play(0)

    def _coerce(self, formation, roles, agent_mask):
        formation = torch.as_tensor(formation, dtype=self.dtype)
        roles = torch.as_tensor(roles, dtype=torch.long)
        batched = formation.ndim == 3
        if not batched:
            formation, roles = formation[None], roles[None]
            if agent_mask is not None:
                agent_mask = torch.as_tensor(agent_mask)[None]
        if agent_mask is None:
            agent_mask = torch.ones(formation.shape[:2], dtype=torch.bool)
        else:
            agent_mask = torch.as_tensor(agent_mask, dtype=torch.bool)
        return formation, roles, agent_mask, batched


def count_params(config: ModelConfig) -> int:
    """Exact learnable scalar count for this architecture."""
    model = PlayModel(config, dtype=torch.float32)
    return sum(p.numel() for p in model.parameters())


# ---------------------------------------------------------------------------
# Checkpoints: deterministic binary container (JSON header + raw tensors)
# ---------------------------------------------------------------------------

def save_checkpoint(
    path: str | Path,
    config: ModelConfig,
    state: dict[str, Tensor],
    extra: Optional[dict] = None,
) -> None:
    """Write a byte-deterministic checkpoint (little-endian payload)."""
    tensors = []
    payload = bytearray()
    for name in sorted(state):
        t = state[name].detach().cpu()
        arr = t.numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes()
        tensors.append({
            "name": name,
            "shape": list(t.shape),
            "dtype": str(arr.dtype),
            "offset": len(payload),
            "nbytes": len(raw),
        })
        payload.extend(raw)
    header = {
        "format": CHECKPOINT_FORMAT_VERSION,
        "model_config": config.to_dict(),
        "extra": extra or {},
        "tensors": tensors,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, Tensor], dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size).decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
        payload = fh.read()
    state = {}
    for meta in header["tensors"]:
        raw = payload[meta["offset"]: meta["offset"] + meta["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(meta["dtype"])).reshape(meta["shape"]).copy()
        state[meta["name"]] = torch.from_numpy(arr)
    config = ModelConfig.from_dict(header["model_config"])
    return config, state, header.get("extra", {})


def model_from_checkpoint(path: str | Path) -> tuple[PlayModel, dict]:
    config, state, extra = load_checkpoint(path)
    dtype = next(iter(state.values())).dtype if state else DEFAULT_DTYPE
    model = PlayModel(config, dtype=dtype)
    model.load_state_dict(state)
    return model, extra
