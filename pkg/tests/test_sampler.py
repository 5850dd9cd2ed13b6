import math

import numpy as np
import pytest
import torch

from playforge.model import MoGParams, ModelConfig, PlayModel
from playforge.sampler import (
    SampleConfig,
    average_weights,
    concept_means,
    derive_seed,
    generate,
    reconstruct_frame_delta,
    sample_trajectory,
    select_component,
)

from test_objective import RAW_UNIT


def _constant_params(frames=5, agents=2, components=3, mu_value=0.2):
    pi = torch.full((frames, components), 1.0 / components, dtype=torch.float64)
    mu = torch.full((frames, agents, components, 2), mu_value, dtype=torch.float64)
    chol_raw = torch.zeros(frames, agents, components, 3, dtype=torch.float64)
    chol_raw[..., 0] = RAW_UNIT
    chol_raw[..., 2] = RAW_UNIT
    return MoGParams(pi, mu, chol_raw)


class TestAverageWeights:
    def test_constant(self):
        pi = torch.tensor([[0.3, 0.7]] * 4, dtype=torch.float64)
        assert torch.allclose(average_weights(pi), torch.tensor([0.3, 0.7], dtype=torch.float64))

    def test_two_frames(self):
        pi = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        assert torch.allclose(average_weights(pi), torch.tensor([0.5, 0.5], dtype=torch.float64))

    def test_sums_to_one(self):
        gen = torch.Generator().manual_seed(0)
        pi = torch.softmax(torch.randn(7, 5, generator=gen, dtype=torch.float64), dim=-1)
        assert average_weights(pi).sum().item() == pytest.approx(1.0, abs=1e-10)


class TestSelectComponent:
    def test_one_hot_any_temperature(self):
        pi_bar = torch.tensor([0.0, 0.0, 0.0, 1.0], dtype=torch.float64)
        for tau in (0.0, 0.5, 1.0, 2.0):
            rng = torch.Generator().manual_seed(1)
            assert select_component(pi_bar, tau, rng) == 3

    def test_argmax_at_zero_temperature(self):
        rng = torch.Generator().manual_seed(0)
        pi_bar = torch.tensor([0.2, 0.5, 0.3], dtype=torch.float64)
        assert select_component(pi_bar, 0.0, rng) == 1

    def test_tie_breaks_lowest_index(self):
        rng = torch.Generator().manual_seed(0)
        pi_bar = torch.tensor([0.4, 0.4, 0.2], dtype=torch.float64)
        assert select_component(pi_bar, 0.0, rng) == 0

    def test_single_component(self):
        rng = torch.Generator().manual_seed(0)
        assert select_component(torch.ones(1, dtype=torch.float64), 0.8, rng) == 0

    def test_empirical_frequencies_at_unit_temperature(self):
        pi_bar = torch.tensor([0.25, 0.1, 0.45, 0.2], dtype=torch.float64)
        rng = torch.Generator().manual_seed(123)
        draws = 100_000
        logits = torch.log(pi_bar)
        probs = torch.softmax(logits, dim=-1)
        counts = torch.multinomial(probs, draws, replacement=True, generator=rng)
        freq = torch.bincount(counts, minlength=4).double() / draws
        assert torch.allclose(freq, pi_bar, atol=0.01)
        # spot-check the per-call path agrees with the batched draw protocol
        rng2 = torch.Generator().manual_seed(7)
        singles = [select_component(pi_bar, 1.0, rng2) for _ in range(2000)]
        freq2 = np.bincount(singles, minlength=4) / 2000
        assert np.allclose(freq2, pi_bar.numpy(), atol=0.04)


class TestSampleTrajectory:
    def test_zero_temperature_is_concept_mean(self):
        params = _constant_params()
        formation = torch.tensor([[0.1, 0.0], [-0.1, 0.2]], dtype=torch.float64)
        rng = torch.Generator().manual_seed(0)
        traj = sample_trajectory(formation, params, 1, 0.0, rng)
        assert torch.equal(traj[0], formation)
        expected = formation[None] + params.mu[:, :, 1, :]
        assert torch.equal(traj[1:], expected)

    def test_shared_eps_constant_params_is_static(self):
        params = _constant_params()
        formation = torch.zeros(2, 2, dtype=torch.float64)
        rng = torch.Generator().manual_seed(5)
        traj = sample_trajectory(formation, params, 0, 0.7, rng, "shared_eps")
        body = traj[1:]
        assert torch.allclose(body - body[0:1], torch.zeros_like(body), atol=1e-12)

    def test_independent_eps_jitters(self):
        params = _constant_params()
        formation = torch.zeros(2, 2, dtype=torch.float64)
        rng = torch.Generator().manual_seed(5)
        traj = sample_trajectory(formation, params, 0, 0.7, rng, "independent_eps")
        body = traj[1:]
        assert not torch.allclose(body - body[0:1], torch.zeros_like(body), atol=1e-6)

    def test_deterministic_for_seed(self):
        params = _constant_params()
        formation = torch.zeros(2, 2, dtype=torch.float64)
        a = sample_trajectory(formation, params, 2, 0.9,
                              torch.Generator().manual_seed(11))
        b = sample_trajectory(formation, params, 2, 0.9,
                              torch.Generator().manual_seed(11))
        assert torch.equal(a, b)

    def test_noise_scales_linearly_with_temperature(self):
        params = _constant_params()
        formation = torch.zeros(2, 2, dtype=torch.float64)
        base = formation[None] + params.mu[:, :, 0, :]
        t1 = sample_trajectory(formation, params, 0, 0.5,
                               torch.Generator().manual_seed(3))[1:]
        t2 = sample_trajectory(formation, params, 0, 1.0,
                               torch.Generator().manual_seed(3))[1:]
        assert torch.allclose(t2 - base, 2.0 * (t1 - base), atol=1e-12)


class TestGenerate:
    def test_sample_count_and_components_from_pi_bar(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        out = generate(tiny_model, play.formation, play.roles,
                       SampleConfig(temperature=0.8, seed=0, num_samples=10),
                       num_frames=4)
        assert len(out) == 10
        assert all(0 <= s.component_used < 2 for s in out)
        assert all(s.trajectory.shape == (4, 3, 2) for s in out)

    def test_component_override(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        out = generate(tiny_model, play.formation, play.roles,
                       SampleConfig(temperature=0.8, seed=0, num_samples=5,
                                    component_override=1),
                       num_frames=4)
        assert [s.component_used for s in out] == [1] * 5

    def test_override_out_of_range(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        with pytest.raises(ValueError, match="component_override"):
            generate(tiny_model, play.formation, play.roles,
                     SampleConfig(component_override=2), num_frames=4)

    def test_forward_called_once(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        calls = {"n": 0}
        original = tiny_model.forward

        def counting_forward(*args, **kwargs):
            calls["n"] += 1
            return original(*args, **kwargs)

        tiny_model.forward = counting_forward
        try:
            generate(tiny_model, play.formation, play.roles,
                     SampleConfig(num_samples=16, seed=1), num_frames=4)
        finally:
            del tiny_model.forward
        assert calls["n"] == 1

    def test_per_sample_seeds_reproduce_individually(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        cfg = SampleConfig(temperature=1.0, seed=9, num_samples=4)
        batch = generate(tiny_model, play.formation, play.roles, cfg, num_frames=4)
        again = generate(tiny_model, play.formation, play.roles, cfg, num_frames=4)
        for a, b in zip(batch, again):
            assert a.seed == b.seed
            assert np.array_equal(a.trajectory, b.trajectory)
        assert len({s.seed for s in batch}) == 4
        assert batch[2].seed == derive_seed(9, 2)

    def test_zero_temperature_identical_across_seeds(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        a = generate(tiny_model, play.formation, play.roles,
                     SampleConfig(temperature=0.0, seed=1), num_frames=4)[0]
        b = generate(tiny_model, play.formation, play.roles,
                     SampleConfig(temperature=0.0, seed=999), num_frames=4)[0]
        assert np.array_equal(a.trajectory, b.trajectory)

    def test_frame_zero_is_formation_for_any_temperature(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        for tau in (0.0, 0.4, 1.3):
            [s] = generate(tiny_model, play.formation, play.roles,
                           SampleConfig(temperature=tau, seed=2), num_frames=4)
            assert np.array_equal(s.trajectory[0], play.formation)

    def test_invalid_sample_config(self):
        with pytest.raises(ValueError):
            SampleConfig(temperature=-0.1)
        with pytest.raises(ValueError):
            SampleConfig(num_samples=0)
        with pytest.raises(ValueError):
            SampleConfig(noise_mode="per_play")


class TestFrameDeltaReconstruction:
    def test_zero_deltas_static(self):
        params = _constant_params(mu_value=0.0)
        formation = torch.tensor([[0.2, -0.1]], dtype=torch.float64)[:1]
        formation = torch.zeros(2, 2, dtype=torch.float64)
        traj = reconstruct_frame_delta(formation, params, 0, 0.0,
                                       torch.Generator().manual_seed(0))
        assert torch.allclose(traj, traj[0:1].expand_as(traj), atol=1e-12)

    def test_constant_delta_accumulates(self):
        frames, agents = 10, 2
        pi = torch.full((frames, 1), 1.0, dtype=torch.float64)
        mu = torch.zeros(frames, agents, 1, 2, dtype=torch.float64)
        mu[..., 0] = 0.1
        params = MoGParams(pi, mu, torch.zeros(frames, agents, 1, 3, dtype=torch.float64))
        formation = torch.zeros(agents, 2, dtype=torch.float64)
        traj = reconstruct_frame_delta(formation, params, 0, 0.0,
                                       torch.Generator().manual_seed(0))
        assert traj[-1, 0, 0].item() == pytest.approx(1.0, abs=1e-12)
        assert traj[-1, 0, 1].item() == pytest.approx(0.0, abs=1e-12)

    def test_random_walk_final_position_std(self):
        # independent unit noise per step: final-position std grows as sqrt(T-1)
        frames = 16
        pi = torch.ones(frames, 1, dtype=torch.float64)
        mu = torch.zeros(frames, 1, 1, 2, dtype=torch.float64)
        chol_raw = torch.zeros(frames, 1, 1, 3, dtype=torch.float64)
        chol_raw[..., 0] = RAW_UNIT
        chol_raw[..., 2] = RAW_UNIT
        params = MoGParams(pi, mu, chol_raw)
        formation = torch.zeros(1, 2, dtype=torch.float64)
        rng = torch.Generator().manual_seed(0)
        finals = torch.stack([
            reconstruct_frame_delta(formation, params, 0, 1.0, rng, "independent_eps")[-1, 0]
            for _ in range(4000)
        ])
        assert finals.std(dim=0).mean().item() == pytest.approx(math.sqrt(frames), rel=0.05)


class TestConceptMeans:
    def test_enumerates_all_components(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        trajs, pi_bar = concept_means(tiny_model, play.formation, play.roles, num_frames=4)
        assert len(trajs) == tiny_model.config.mixture_components
        assert pi_bar.shape == (2,)
        for traj in trajs:
            assert np.array_equal(traj[0], play.formation)

    def test_matches_override_generation(self, tiny_model, tiny_plays):
        play = tiny_plays[0]
        trajs, _ = concept_means(tiny_model, play.formation, play.roles, num_frames=4)
        [direct] = generate(tiny_model, play.formation, play.roles,
                            SampleConfig(temperature=0.0, component_override=1),
                            num_frames=4)
        assert np.array_equal(trajs[1], direct.trajectory)
