"""Command-line entry points.

Every command exits 0 on success and nonzero with a single
``error: <message>`` line on stderr otherwise (2 for missing inputs or
usage problems).  Run outputs are deterministic for fixed seeds; wall-clock
timings go to a separate ``run_meta.json`` that is excluded from that
guarantee.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_run_config
from .data import (
    DEFAULT_NORMALIZATION,
    Role,
    read_dataset,
    split,
    synthesize_dataset,
    validate_play,
    write_dataset,
)
from .metrics import EvalConfig, evaluate_dataset
from .model import PlayModel, model_from_checkpoint, save_checkpoint
from .sampler import SampleConfig
from .service import parse_formation, serve, trajectory_to_yards
from .svg import render_play_svg
from .trainer import train


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}", exit_code=2)
    return p


def _prepare_outdir(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _archive_config(cfg: RunConfig, outdir: Path) -> None:
    (outdir / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    cfg = load_run_config(args.config, args.set)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise CliError(f"output file {out} exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    plays = synthesize_dataset(cfg.synth, rng)
    for play in plays:
        validate_play(play)
    count = write_dataset(out, plays)
    print(f"wrote {count} plays to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    dataset_path = _require_file(args.dataset, "dataset")
    outdir = _prepare_outdir(args.out, args.force)
    _archive_config(cfg, outdir)

    plays = read_dataset(dataset_path)
    train_set, val_set = split(plays, cfg.split_ratio, cfg.split_seed)
    model = PlayModel(cfg.model, dtype=cfg.torch_dtype())
    started = time.perf_counter()
    model, report = train(model, train_set, val_set, cfg.train)
    elapsed = time.perf_counter() - started

    extra = {"num_agents": plays[0].num_agents, "num_frames": plays[0].num_frames}
    save_checkpoint(outdir / "checkpoint_best.ckpt", cfg.model,
                    dict(model.named_parameters()), extra=extra)
    save_checkpoint(outdir / "checkpoint_final.ckpt", cfg.model,
                    dict(model.named_parameters()), extra=extra)
    _write_json(outdir / "report.json", report.to_dict(include_wall_time=False))
    _write_json(outdir / "run_meta.json", {"wall_time_s": elapsed})
    if report.error:
        raise CliError(f"training aborted: {report.error}")
    print(f"best epoch {report.best_epoch} val_ade={report.best_val_ade:.4f} "
          f"-> {outdir / 'checkpoint_best.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config, args.set)
    checkpoint = _require_file(args.checkpoint, "checkpoint")
    dataset_path = _require_file(args.dataset, "dataset")
    model, _ = model_from_checkpoint(checkpoint)
    plays = read_dataset(dataset_path)
    horizons = cfg.eval.horizons
    if args.horizons:
        horizons = tuple(int(h) for h in args.horizons.split(","))
    eval_cfg = EvalConfig(
        temperature=cfg.eval.temperature,
        apd_samples=cfg.eval.apd_samples,
        sampled_ade=cfg.eval.sampled_ade,
        seed=cfg.eval.seed,
        horizons=horizons,
        noise_mode=cfg.eval.noise_mode,
    )
    report = evaluate_dataset(model, plays, eval_cfg)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_table())
    return 0


def load_formation_file(path: Path) -> tuple[list, list]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "formation" not in doc or "roles" not in doc:
        raise CliError(f"{path}: formation file needs 'formation' and 'roles' fields")
    return doc["formation"], doc["roles"]


def cmd_generate(args) -> int:
    checkpoint = _require_file(args.checkpoint, "checkpoint")
    formation_path = _require_file(args.formation, "formation file")
    model, extra = model_from_checkpoint(checkpoint)
    formation, roles = load_formation_file(formation_path)
    try:
        parsed = parse_formation(formation, roles, expected_agents=None)
    except ValueError as exc:
        raise CliError(f"invalid formation: {exc}")

    from .sampler import generate as sample_generate

    num_frames = args.num_frames or extra.get("num_frames") or model.config.max_frames
    cfg = SampleConfig(
        temperature=args.temperature,
        seed=args.seed,
        component_override=args.component,
        num_samples=args.num_samples,
    )
    samples = sample_generate(model, parsed.normalized, parsed.roles, cfg,
                              num_frames=num_frames)
    payload = {
        "format": 1,
        "formation": parsed.yards.tolist(),
        "roles": [Role(int(r)).name for r in parsed.roles],
        "temperature": args.temperature,
        "seed": args.seed,
        "samples": [
            {
                "trajectory": trajectory_to_yards(s.trajectory, parsed),
                "component": s.component_used,
                "seed": s.seed,
            }
            for s in samples
        ],
        "pi_bar": samples[0].pi_bar.tolist(),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, payload)
    if args.svg:
        yard_trajs = [np.asarray(s["trajectory"]) for s in payload["samples"]]
        Path(args.svg).write_text(
            render_play_svg(yard_trajs, [int(r) for r in parsed.roles]), encoding="utf-8")
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_serve(args) -> int:
    checkpoint = _require_file(args.checkpoint, "checkpoint")
    model, extra = model_from_checkpoint(checkpoint)
    serve(model, host=args.host, port=args.port,
          expected_agents=extra.get("num_agents"))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="playforge",
                                     description="Formation-conditioned play generation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="YAML run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set model.hidden_dim=64")

    p = sub.add_parser("synth-data", help="write a synthetic dataset (JSONL)")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--horizons", default=None, help="comma-separated horizon list")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="sample plays for a formation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--formation", required=True, help="JSON file with formation and roles")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.add_argument("--num-samples", type=int, default=3)
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--component", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-frames", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FileNotFoundError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
