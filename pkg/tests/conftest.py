import numpy as np
import pytest
import torch

from playforge.data import SyntheticConfig, synthesize_dataset
from playforge.model import ModelConfig, PlayModel


TINY_CONFIG = ModelConfig(
    hidden_dim=8,
    num_layers=1,
    num_heads=2,
    mixture_components=2,
    relational_dim=4,
    role_embed_dim=4,
    max_frames=4,
)


@pytest.fixture
def tiny_model() -> PlayModel:
    return PlayModel(TINY_CONFIG).init_params(0)


@pytest.fixture
def tiny_plays():
    cfg = SyntheticConfig(
        concept_count=2, plays_per_concept=3, num_agents=3, num_frames=4, noise_sigma=0.1
    )
    return synthesize_dataset(cfg, np.random.default_rng(11))


def batch_tensors(plays, dtype=torch.float64):
    formation = torch.as_tensor(np.stack([p.formation for p in plays]), dtype=dtype)
    roles = torch.as_tensor(np.stack([p.roles for p in plays]))
    agent_mask = torch.as_tensor(np.stack([p.agent_valid for p in plays]))
    return formation, roles, agent_mask
