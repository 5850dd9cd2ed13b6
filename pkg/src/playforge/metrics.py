"""Evaluation metrics, reported in yards.

Distances are measured after mapping normalized coordinates back to yards
(per-axis scaling), since the normalization is anisotropic.  Frame 0 is the
given formation for both prediction and truth and is excluded everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .data import DEFAULT_NORMALIZATION, NormalizationSpec, Play, denormalize_coords
from .model import PlayModel
from .sampler import SampleConfig, derive_seed, generate


def _valid_pair_mask(T: int, N: int, frame_valid, agent_valid) -> np.ndarray:
    fv = np.ones(T, dtype=bool) if frame_valid is None else np.asarray(frame_valid, dtype=bool)
    av = np.ones(N, dtype=bool) if agent_valid is None else np.asarray(agent_valid, dtype=bool)
    mask = fv[:, None] & av[None, :]
    mask[0] = False
    return mask


def _distances_yards(pred, truth, spec: NormalizationSpec) -> np.ndarray:
    delta = denormalize_coords(pred, spec) - denormalize_coords(truth, spec)
    return np.linalg.norm(delta, axis=-1)


def ade(
    pred: np.ndarray,
    truth: np.ndarray,
    frame_valid=None,
    agent_valid=None,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> float:
    """Mean distance in yards over valid (frame >= 1, agent) pairs."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    mask = _valid_pair_mask(pred.shape[0], pred.shape[1], frame_valid, agent_valid)
    if not mask.any():
        raise ValueError("no valid (frame, agent) pairs")
    return float(_distances_yards(pred, truth, spec)[mask].mean())


def fde(
    pred: np.ndarray,
    truth: np.ndarray,
    frame_valid=None,
    agent_valid=None,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> float:
    """Mean distance in yards at the last valid frame, over valid agents."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    mask = _valid_pair_mask(pred.shape[0], pred.shape[1], frame_valid, agent_valid)
    valid_frames = np.flatnonzero(mask.any(axis=1))
    if len(valid_frames) == 0:
        raise ValueError("no valid frames")
    last = valid_frames[-1]
    dists = _distances_yards(pred[last], truth[last], spec)
    return float(dists[mask[last]].mean())


def mixture_entropy(pi_bar) -> float:
    """Shannon entropy of a simplex vector in nats (0 log 0 = 0)."""
    p = np.asarray(pi_bar, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def apd(
    samples: Sequence[np.ndarray],
    frame_valid=None,
    agent_valid=None,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> float:
    """Mean pairwise ADE in yards across all C(K, 2) sample pairs."""
    if len(samples) < 2:
        raise ValueError("apd needs at least 2 samples")
    pair_values = [
        ade(a, b, frame_valid, agent_valid, spec) for a, b in combinations(samples, 2)
    ]
    return float(np.mean(pair_values))


@dataclass
class HorizonRow:
    horizon: int
    ade: float
    fde: float
    apd: float


@dataclass
class MetricsReport:
    ade: float
    fde: float
    mixture_entropy: float
    apd: float
    per_horizon: list[HorizonRow] = field(default_factory=list)
    mean_play_entropy: float = 0.0
    num_plays: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        lines = [
            f"{'metric':<18}{'value':>12}",
            f"{'ade (yards)':<18}{self.ade:>12.4f}",
            f"{'fde (yards)':<18}{self.fde:>12.4f}",
            f"{'mixture_entropy':<18}{self.mixture_entropy:>12.4f}",
            f"{'apd (yards)':<18}{self.apd:>12.4f}",
        ]
        if self.per_horizon:
            lines.append("")
            lines.append(f"{'horizon':>8}{'ade':>10}{'fde':>10}{'apd':>10}")
            for row in self.per_horizon:
                lines.append(f"{row.horizon:>8d}{row.ade:>10.4f}{row.fde:>10.4f}{row.apd:>10.4f}")
        return "\n".join(lines)


@dataclass(frozen=True)
class EvalConfig:
    """Dataset-level evaluation protocol.

    ADE/FDE default to deterministic concept-mean generation (tau = 0 with
    the dominant averaged component); set ``sampled_ade=True`` to score a
    stochastic sample at ``temperature`` instead.  APD always uses
    ``apd_samples`` draws at ``temperature``.
    """

    temperature: float = 0.8
    apd_samples: int = 10
    sampled_ade: bool = False
    seed: int = 0
    horizons: tuple[int, ...] = ()
    noise_mode: str = "shared_eps"


def evaluate_dataset(
    model: PlayModel,
    plays: Sequence[Play],
    cfg: EvalConfig = EvalConfig(),
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> MetricsReport:
    """Aggregate metrics over a dataset.

    The headline mixture entropy is the entropy of the dataset-averaged
    time-averaged weights: it measures component *utilization* across plays
    (ln M when every component is exercised equally).  The mean per-play
    entropy is reported alongside.
    """
    if not plays:
        raise ValueError("empty dataset")
    for horizon in cfg.horizons:
        if not (2 <= horizon <= plays[0].num_frames):
            raise ValueError(f"horizon {horizon} outside [2, {plays[0].num_frames}]")

    ade_vals, fde_vals, apd_vals, play_entropies = [], [], [], []
    pi_bar_sum = None
    horizon_acc: dict[int, dict[str, list[float]]] = {
        h: {"ade": [], "fde": [], "apd": []} for h in cfg.horizons
    }

    for idx, play in enumerate(plays):
        base_seed = derive_seed(cfg.seed, idx)
        T = play.num_frames
        det_cfg = SampleConfig(temperature=0.0, seed=base_seed, num_samples=1)
        if cfg.sampled_ade:
            det_cfg = SampleConfig(
                temperature=cfg.temperature, seed=base_seed, num_samples=1,
                noise_mode=cfg.noise_mode,
            )
        [det] = generate(model, play.formation, play.roles, det_cfg,
                         num_frames=T, agent_mask=play.agent_valid)
        pi_bar = det.pi_bar
        pi_bar_sum = pi_bar if pi_bar_sum is None else pi_bar_sum + pi_bar
        play_entropies.append(mixture_entropy(pi_bar))

        ade_vals.append(ade(det.trajectory, play.trajectory,
                            play.frame_valid, play.agent_valid, spec))
        fde_vals.append(fde(det.trajectory, play.trajectory,
                            play.frame_valid, play.agent_valid, spec))

        sample_trajs = []
        if cfg.apd_samples >= 2:
            samples = generate(
                model, play.formation, play.roles,
                SampleConfig(temperature=cfg.temperature, seed=base_seed,
                             num_samples=cfg.apd_samples, noise_mode=cfg.noise_mode),
                num_frames=T, agent_mask=play.agent_valid,
            )
            sample_trajs = [s.trajectory for s in samples]
            apd_vals.append(apd(sample_trajs, play.frame_valid, play.agent_valid, spec))

        for h in cfg.horizons:
            acc = horizon_acc[h]
            acc["ade"].append(ade(det.trajectory[:h], play.trajectory[:h],
                                  play.frame_valid[:h], play.agent_valid, spec))
            acc["fde"].append(fde(det.trajectory[:h], play.trajectory[:h],
                                  play.frame_valid[:h], play.agent_valid, spec))
            if sample_trajs:
                acc["apd"].append(apd([s[:h] for s in sample_trajs],
                                      play.frame_valid[:h], play.agent_valid, spec))

    pi_util = pi_bar_sum / len(plays)
    rows = [
        HorizonRow(
            horizon=h,
            ade=float(np.mean(horizon_acc[h]["ade"])),
            fde=float(np.mean(horizon_acc[h]["fde"])),
            apd=float(np.mean(horizon_acc[h]["apd"])) if horizon_acc[h]["apd"] else 0.0,
        )
        for h in cfg.horizons
    ]
    return MetricsReport(
        ade=float(np.mean(ade_vals)),
        fde=float(np.mean(fde_vals)),
        mixture_entropy=mixture_entropy(pi_util),
        apd=float(np.mean(apd_vals)) if apd_vals else 0.0,
        per_horizon=rows,
        mean_play_entropy=float(np.mean(play_entropies)),
        num_plays=len(plays),
    )


def horizon_eval(
    model: PlayModel,
    plays: Sequence[Play],
    horizons: Sequence[int],
    cfg: EvalConfig = EvalConfig(),
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> list[HorizonRow]:
    """Metrics at truncated horizons; generation still runs at full length."""
    report = evaluate_dataset(
        model, plays,
        EvalConfig(temperature=cfg.temperature, apd_samples=cfg.apd_samples,
                   sampled_ade=cfg.sampled_ade, seed=cfg.seed,
                   horizons=tuple(horizons), noise_mode=cfg.noise_mode),
        spec,
    )
    return report.per_horizon
