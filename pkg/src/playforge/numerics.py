"""Primitive differentiable operations and a gradient-verification harness.

Tensors are ``torch.Tensor`` values on CPU; gradients come from torch's
reverse-mode tape.  Every op here is also checked against central finite
differences (see :func:`check_gradients`), which is the contract the rest of
the package relies on.  Verification and acceptance runs use float64; float32
is allowed for speed runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import torch
from torch import Tensor, nn

DEFAULT_DTYPE = torch.float64

#: Additive pre-softmax penalty for masked keys.  Large enough that the
#: masked weights underflow to exactly 0.0 after max-subtraction, while the
#: gradient path stays consistent (no post-hoc zeroing).
MASK_PENALTY = 1e9

SOFTPLUS_THRESHOLD = 20.0


def assert_finite(x: Tensor, what: str = "tensor") -> Tensor:
    """Raise ``FloatingPointError`` if ``x`` contains NaN or Inf."""
    if not bool(torch.isfinite(x).all()):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def softplus(x: Tensor) -> Tensor:
    """Overflow-safe ``log(1 + exp(x))``.

    For ``x`` above :data:`SOFTPLUS_THRESHOLD` the identity
    ``x + log1p(exp(-x))`` is used, which is exact and cannot overflow.
    Both branches are clamped so the unselected branch never produces
    NaN gradients under ``torch.where``.
    """
    if not torch.is_tensor(x):
        x = torch.as_tensor(x, dtype=DEFAULT_DTYPE)
    pos = torch.clamp(x, min=0.0)
    neg = torch.clamp(x, max=SOFTPLUS_THRESHOLD)
    return torch.where(x > 0, pos + torch.log1p(torch.exp(-pos)), torch.log1p(torch.exp(neg)))


def logsumexp(v: Tensor, dim: int = -1) -> Tensor:
    """``log sum exp`` along ``dim``, stabilized by max-subtraction."""
    if not torch.is_tensor(v):
        v = torch.as_tensor(v, dtype=DEFAULT_DTYPE)
    if v.shape[dim] == 0:
        raise ValueError("logsumexp over an empty dimension")
    return torch.logsumexp(v, dim=dim)


def masked_softmax_with_bias(logits: Tensor, bias: Optional[Tensor], key_mask: Tensor) -> Tensor:
    """Row-wise softmax of ``logits + bias`` with hard key masking.

    ``key_mask`` is boolean over the last (key) axis, True = attendable.
    Masked keys receive an additive ``-MASK_PENALTY`` before the softmax so
    their weights underflow to exactly zero.  A query row whose keys are all
    masked is an error.

    Shapes: ``logits`` (..., Q, K); ``bias`` broadcastable to ``logits`` or
    None; ``key_mask`` broadcastable to (..., 1, K) or (..., Q, K).
    """
    if bias is not None:
        if bias.shape[-2:] != logits.shape[-2:]:
            raise ValueError(f"bias shape {tuple(bias.shape)} does not match logits {tuple(logits.shape)}")
        logits = logits + bias
    mask = key_mask.to(torch.bool)
    if not bool(mask.any(dim=-1).all()):
        raise ValueError("softmax row with all keys masked")
    logits = logits - (~mask).to(logits.dtype) * MASK_PENALTY
    return torch.softmax(logits, dim=-1)


def sinusoidal_embedding(t: Tensor | int, dim: int, dtype: torch.dtype = DEFAULT_DTYPE) -> Tensor:
    """Interleaved sin/cos frame-index embedding (base 10000).

    ``emb[2i] = sin(t / 10000^(2i/dim))``, ``emb[2i+1] = cos(...)``.
    ``t`` may be a scalar or an integer tensor of frame indices; output gains
    a trailing ``dim`` axis.
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t = torch.as_tensor(t, dtype=dtype)
    if bool((t < 0).any()):
        raise ValueError("frame index must be non-negative")
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype) * 2.0 / dim)
    args = t[..., None] * freqs
    emb = torch.zeros(*t.shape, dim, dtype=dtype)
    emb[..., 0::2] = torch.sin(args)
    emb[..., 1::2] = torch.cos(args)
    return emb


def init_linear(layer: nn.Linear, generator: Optional[torch.Generator] = None) -> nn.Linear:
    """Scaled-uniform fan-in init for weights, zeros for biases."""
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=generator)
        if layer.bias is not None:
            layer.bias.zero_()
    return layer


class MultiHeadAttention(nn.Module):
    """Multi-head attention with optional per-head additive score biases.

    Scores are ``QK^T / sqrt(d_head)`` plus, when given, a per-head bias
    matrix over (query, key) pairs.  With ``head_bias=None`` this reduces to
    standard attention; passing an explicit zero bias is bit-identical.
    """

    def __init__(self, dim: int, num_heads: int, dtype: torch.dtype = DEFAULT_DTYPE):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"feature dim {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        kw = {"dtype": dtype}
        self.w_q = nn.Linear(dim, dim, **kw)
        self.w_k = nn.Linear(dim, dim, **kw)
        self.w_v = nn.Linear(dim, dim, **kw)
        self.w_o = nn.Linear(dim, dim, **kw)

    def init_params(self, generator: Optional[torch.Generator] = None) -> None:
        for layer in (self.w_q, self.w_k, self.w_v, self.w_o):
            init_linear(layer, generator)

    def forward(
        self,
        queries: Tensor,
        keys: Tensor,
        values: Tensor,
        head_bias: Optional[Tensor] = None,
        key_mask: Optional[Tensor] = None,
    ) -> Tensor:
        """Attend ``queries`` (…, Q, dim) over ``keys``/``values`` (…, K, dim).

        ``head_bias``: (…, H, Q, K) additive scores, or None.
        ``key_mask``: (…, K) boolean, True = attendable; None = all keys.
        """
        if queries.shape[-1] != self.dim or keys.shape[-1] != self.dim:
            raise ValueError("feature dimension mismatch")
        q = self._split_heads(self.w_q(queries))  # (..., H, Q, d)
        k = self._split_heads(self.w_k(keys))     # (..., H, K, d)
        v = self._split_heads(self.w_v(values))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if key_mask is None:
            key_mask = torch.ones(keys.shape[:-1], dtype=torch.bool, device=keys.device)
        weights = masked_softmax_with_bias(scores, head_bias, key_mask[..., None, None, :])
        out = weights @ v  # (..., H, Q, d)
        out = out.transpose(-3, -2).flatten(-2)  # (..., Q, dim)
        return self.w_o(out)

    def _split_heads(self, x: Tensor) -> Tensor:
        *lead, n, _ = x.shape
        return x.view(*lead, n, self.num_heads, self.head_dim).transpose(-3, -2)


@dataclass
class GradientContract:
    """A scalar-valued function of named parameters to verify against FD."""

    function: Callable[[Mapping[str, Tensor]], Tensor]
    params: dict[str, Tensor]
    step: float = 1e-5
    tolerance: float = 1e-4


@dataclass
class GradientCheckReport:
    per_param: dict[str, float] = field(default_factory=dict)
    max_rel_error: float = 0.0
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def worst(self) -> str:
        if not self.per_param:
            return "<no parameters>"
        return max(self.per_param, key=self.per_param.get)


def _rel_error(a: float, b: float) -> float:
    # Floor the denominator so finite-difference roundoff on near-zero
    # gradients does not register as a relative failure.
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


def check_gradients(contract: GradientContract) -> GradientCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    Every scalar in every parameter is perturbed by ``±step`` (in the
    parameter's own dtype; use float64 parameters for meaningful results).
    Passes iff the max relative error over all scalars is below tolerance.
    """
    params = {name: p.detach().clone().requires_grad_(True) for name, p in contract.params.items()}
    value = contract.function(params)
    if value.ndim != 0:
        raise ValueError("gradient contract requires a scalar-valued function")
    if not bool(torch.isfinite(value)):
        raise FloatingPointError("function value is not finite at the evaluation point")
    grads = torch.autograd.grad(value, list(params.values()), allow_unused=True)

    report = GradientCheckReport(tolerance=contract.tolerance)
    h = contract.step
    with torch.no_grad():
        frozen = {name: p.detach().clone() for name, p in params.items()}
        for (name, p), g in zip(frozen.items(), grads):
            worst = 0.0
            flat = p.view(-1)
            gflat = torch.zeros_like(flat) if g is None else g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                f_plus = contract.function(frozen).item()
                flat[i] = orig - h
                f_minus = contract.function(frozen).item()
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                worst = max(worst, _rel_error(gflat[i].item(), fd))
            report.per_param[name] = worst
            report.max_rel_error = max(report.max_rel_error, worst)
    return report
