import dataclasses
import math

import numpy as np
import pytest
import torch

import playforge.trainer as trainer_mod
from playforge.data import SyntheticConfig, split, synthesize_dataset
from playforge.model import ModelConfig, PlayModel
from playforge.objective import LossWeights
from playforge.trainer import (
    OptimizerState,
    TrainConfig,
    clip_gradients,
    lr_schedule,
    optimizer_step,
    train,
)

from conftest import TINY_CONFIG


class TestLrSchedule:
    CFG = TrainConfig(learning_rate=1e-4, warmup_steps=500)

    def test_warmup_endpoints(self):
        assert lr_schedule(0, self.CFG, total_steps=2000) == 0.0
        assert lr_schedule(500, self.CFG, total_steps=2000) == pytest.approx(1e-4)

    def test_warmup_midpoint(self):
        assert lr_schedule(250, self.CFG, total_steps=2000) == pytest.approx(5e-5)

    def test_continuous_at_junction(self):
        below = lr_schedule(499, self.CFG, total_steps=2000)
        at = lr_schedule(500, self.CFG, total_steps=2000)
        assert at - below == pytest.approx(1e-4 / 500, rel=1e-6)

    def test_decays_to_zero(self):
        assert lr_schedule(2000, self.CFG, total_steps=2000) == pytest.approx(0.0, abs=1e-20)
        mid = lr_schedule(1250, self.CFG, total_steps=2000)
        assert mid == pytest.approx(5e-5, rel=1e-9)

    def test_monotone_after_warmup(self):
        values = [lr_schedule(s, self.CFG, 2000) for s in range(500, 2001, 50)]
        assert all(b <= a for a, b in zip(values, values[1:]))


class TestClipGradients:
    def test_below_threshold_unchanged(self):
        grads = {"w": torch.tensor([0.3, 0.4], dtype=torch.float64)}
        out, norm = clip_gradients(grads, 1.0)
        assert norm == pytest.approx(0.5)
        assert torch.allclose(out["w"], torch.tensor([0.3, 0.4], dtype=torch.float64))

    def test_above_threshold_scaled(self):
        grads = {"w": torch.tensor([2.0], dtype=torch.float64)}
        out, norm = clip_gradients(grads, 1.0)
        assert norm == pytest.approx(2.0)
        assert out["w"].item() == pytest.approx(1.0)

    def test_zero_gradients_unchanged(self):
        grads = {"w": torch.zeros(3, dtype=torch.float64)}
        out, norm = clip_gradients(grads, 1.0)
        assert norm == 0.0
        assert torch.equal(out["w"], torch.zeros(3, dtype=torch.float64))

    @pytest.mark.parametrize("seed", range(5))
    def test_clipped_norm_bounded(self, seed):
        gen = torch.Generator().manual_seed(seed)
        grads = {f"p{i}": torch.randn(4, generator=gen, dtype=torch.float64) * 3
                 for i in range(3)}
        clip_gradients(grads, 1.0)
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        assert norm <= 1.0 + 1e-9

    def test_nonfinite_gradient_names_parameter(self):
        grads = {"fine": torch.zeros(1, dtype=torch.float64),
                 "broken": torch.tensor([float("nan")], dtype=torch.float64)}
        with pytest.raises(FloatingPointError, match="broken"):
            clip_gradients(grads, 1.0)


class TestOptimizerStep:
    def test_first_step_magnitude(self):
        params = {"w": torch.tensor([1.0], dtype=torch.float64)}
        grads = {"w": torch.tensor([0.5], dtype=torch.float64)}
        state = OptimizerState.for_params(params)
        cfg = TrainConfig(learning_rate=1e-4, weight_decay=0.0)
        optimizer_step(params, grads, state, cfg)
        assert params["w"].item() == pytest.approx(1.0 - 1e-4, rel=1e-6)
        assert state.step == 1

    def test_pure_decoupled_decay(self):
        params = {"w": torch.tensor([1.0], dtype=torch.float64)}
        grads = {"w": torch.zeros(1, dtype=torch.float64)}
        state = OptimizerState.for_params(params)
        cfg = TrainConfig(learning_rate=1e-4, weight_decay=0.01)
        optimizer_step(params, grads, state, cfg)
        assert params["w"].item() == pytest.approx(1.0 - 1e-6, abs=1e-15)

    def test_matches_torch_adamw(self):
        gen = torch.Generator().manual_seed(0)
        init = torch.randn(6, generator=gen, dtype=torch.float64)
        ours = {"w": init.clone()}
        state = OptimizerState.for_params(ours)
        cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.01)

        theirs = init.clone().requires_grad_(True)
        opt = torch.optim.AdamW([theirs], lr=1e-3, weight_decay=0.01,
                                betas=(0.9, 0.999), eps=1e-8)
        for i in range(5):
            g = torch.randn(6, generator=gen, dtype=torch.float64)
            optimizer_step(ours, {"w": g.clone()}, state, cfg)
            theirs.grad = g.clone()
            opt.step()
        assert torch.allclose(ours["w"], theirs.detach(), atol=1e-12)


def _tiny_dataset(n_per_concept=30, frames=6, agents=3, seed=0):
    cfg = SyntheticConfig(concept_count=2, plays_per_concept=n_per_concept,
                          num_agents=agents, num_frames=frames, noise_sigma=0.1)
    plays = synthesize_dataset(cfg, np.random.default_rng(seed))
    return split(plays, 0.8, seed=0)


def _fast_train_config(**over):
    base = dict(learning_rate=3e-3, warmup_steps=10, max_epochs=3, batch_size=16,
                patience=10, seed=1, weight_decay=0.01,
                loss_weights=LossWeights(1.0, 0.1, 0.5))
    base.update(over)
    return TrainConfig(**base)


class TestTrain:
    def test_loss_halves_within_200_steps(self):
        train_set, val_set = _tiny_dataset(n_per_concept=64)
        model = PlayModel(dataclasses.replace(TINY_CONFIG, max_frames=6))
        # 7 batches/epoch * 29 epochs ~ 200 steps
        cfg = _fast_train_config(max_epochs=29, batch_size=16)
        _, report = train(model, train_set, val_set, cfg)
        assert report.epochs[-1].train_total < 0.5 * report.epochs[0].train_total

    def test_early_stopping_rule_and_restoration(self, monkeypatch):
        train_set, val_set = _tiny_dataset(n_per_concept=12)
        model = PlayModel(dataclasses.replace(TINY_CONFIG, max_frames=6))
        scripted = iter([5.0, 4.0, 4.1, 4.2, 4.3, 3.0, 2.0])
        snapshots = []

        def fake_eval(mdl, plays, cfg, *args, **kwargs):
            snapshots.append({n: p.detach().clone() for n, p in mdl.named_parameters()})
            from playforge.metrics import MetricsReport
            return MetricsReport(ade=next(scripted), fde=0.0, mixture_entropy=0.0, apd=0.0)

        monkeypatch.setattr(trainer_mod, "evaluate_dataset", fake_eval)
        cfg = _fast_train_config(max_epochs=50, patience=3)
        model, report = train(model, train_set, val_set, cfg)
        assert len(report.epochs) == 5            # stops after the fifth epoch
        assert report.best_epoch == 1
        assert report.best_val_ade == 4.0
        for name, param in model.named_parameters():
            assert torch.equal(param.detach(), snapshots[1][name])

    def test_restored_weights_reproduce_best_ade(self):
        train_set, val_set = _tiny_dataset(n_per_concept=12)
        model = PlayModel(dataclasses.replace(TINY_CONFIG, max_frames=6))
        cfg = _fast_train_config(max_epochs=4)
        model, report = train(model, train_set, val_set, cfg)
        from playforge.metrics import EvalConfig, evaluate_dataset
        again = evaluate_dataset(model, val_set, EvalConfig(apd_samples=0, seed=cfg.seed))
        assert again.ade == pytest.approx(report.best_val_ade, abs=1e-9)

    def test_deterministic_given_seed(self):
        train_set, val_set = _tiny_dataset(n_per_concept=12)
        cfg = _fast_train_config(max_epochs=2)
        runs = []
        for _ in range(2):
            model = PlayModel(dataclasses.replace(TINY_CONFIG, max_frames=6))
            model, report = train(model, train_set, val_set, cfg)
            runs.append((report, {n: p.detach().clone() for n, p in model.named_parameters()}))
        assert runs[0][0].to_dict(include_wall_time=False) == \
            runs[1][0].to_dict(include_wall_time=False)
        for name in runs[0][1]:
            assert torch.equal(runs[0][1][name], runs[1][1][name])

    def test_divergence_aborts_with_error(self):
        train_set, val_set = _tiny_dataset(n_per_concept=12)
        model = PlayModel(dataclasses.replace(TINY_CONFIG, max_frames=6))
        cfg = _fast_train_config(learning_rate=1e8, max_epochs=5, warmup_steps=0)
        model, report = train(model, train_set, val_set, cfg)
        assert report.error is not None
        for param in model.parameters():
            assert torch.isfinite(param).all()

    def test_empty_sets_rejected(self):
        model = PlayModel(TINY_CONFIG)
        with pytest.raises(ValueError):
            train(model, [], [], _fast_train_config())

    def test_augmentation_path_runs(self):
        from playforge.data import AugmentationConfig

        train_set, val_set = _tiny_dataset(n_per_concept=12)
        model = PlayModel(dataclasses.replace(TINY_CONFIG, max_frames=6))
        cfg = _fast_train_config(
            max_epochs=2,
            augmentation=AugmentationConfig(flip_probability=0.5, jitter_sigma=0.2,
                                            spread_range=(0.9, 1.1)))
        _, report = train(model, train_set, val_set, cfg)
        assert len(report.epochs) == 2
