"""HTTP JSON inference service.

Wire coordinates are yards in the client's own frame; the service anchors
on the Center player internally and maps generated trajectories back, so
returned frame 0 overlays the submitted formation.  Responses are pure
functions of (checkpoint, request body) once a seed is fixed; requests
without a seed get one from a server counter, echoed back.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .data import DEFAULT_NORMALIZATION, NormalizationSpec, Role
from .model import PlayModel
from .sampler import SampleConfig, concept_means, generate

MAX_NUM_SAMPLES = 64


class RequestError(ValueError):
    def __init__(self, error: str, detail: str = ""):
        super().__init__(detail or error)
        self.error = error
        self.detail = detail or error


@dataclass
class ParsedFormation:
    yards: np.ndarray          # (N, 2) as submitted
    normalized: np.ndarray     # (N, 2) anchored + scaled
    anchor: np.ndarray         # (2,) the Center's submitted position
    roles: np.ndarray          # (N,) ints


def parse_formation(
    formation, roles, expected_agents: Optional[int],
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> ParsedFormation:
    try:
        arr = np.asarray(formation, dtype=np.float64)
    except (TypeError, ValueError):
        raise RequestError("malformed formation", "formation must be an array of [x, y] pairs")
    if arr.ndim != 2 or arr.shape[1] != 2 or not np.isfinite(arr).all():
        raise RequestError("malformed formation", "formation must be finite [x, y] pairs")
    if not isinstance(roles, (list, tuple)) or len(roles) != arr.shape[0]:
        raise RequestError("malformed formation", "roles must match the formation length")
    if expected_agents is not None and arr.shape[0] != expected_agents:
        raise RequestError(
            "malformed formation",
            f"expected {expected_agents} players, got {arr.shape[0]}",
        )
    try:
        role_ids = np.array([int(Role.from_name(str(r))) for r in roles], dtype=np.int64)
    except ValueError as exc:
        raise RequestError("unknown role", str(exc))
    anchors = np.flatnonzero(role_ids == int(spec.anchor_role))
    if len(anchors) != 1:
        raise RequestError(
            "malformed formation",
            f"formation must contain exactly one {spec.anchor_role.name}, found {len(anchors)}",
        )
    anchor = arr[anchors[0]].copy()
    normalized = (arr - anchor) / spec.scale
    return ParsedFormation(yards=arr, normalized=normalized, anchor=anchor, roles=role_ids)


def trajectory_to_yards(traj: np.ndarray, parsed: ParsedFormation,
                        spec: NormalizationSpec = DEFAULT_NORMALIZATION) -> list:
    return (traj * spec.scale + parsed.anchor).tolist()


def create_app(
    model: PlayModel,
    expected_agents: Optional[int] = None,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> FastAPI:
    app = FastAPI(title="playforge inference service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    counter_lock = threading.Lock()
    counter = {"next": 0}

    def next_seed() -> int:
        with counter_lock:
            seed = counter["next"]
            counter["next"] += 1
        return seed

    def error_response(exc: RequestError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": exc.error, "detail": exc.detail})

    @app.get("/api/model")
    def model_info():
        return {
            "config": model.config.to_dict(),
            "param_count": sum(p.numel() for p in model.parameters()),
            "M": model.config.mixture_components,
            "num_agents": expected_agents,
        }

    @app.post("/api/generate")
    async def generate_samples(request: Request):
        try:
            try:
                body = await request.json()
            except json.JSONDecodeError:
                raise RequestError("malformed request", "body must be JSON")
            if not isinstance(body, dict):
                raise RequestError("malformed request", "body must be a JSON object")
            parsed = parse_formation(
                body.get("formation"), body.get("roles"), expected_agents, spec)
            temperature = _float_field(body, "temperature", default=0.8, minimum=0.0)
            num_samples = _int_field(body, "num_samples", default=1, minimum=1)
            if num_samples > MAX_NUM_SAMPLES:
                raise RequestError(
                    "too many samples", f"num_samples must be <= {MAX_NUM_SAMPLES}")
            seed = body.get("seed")
            if seed is None:
                seed = next_seed()
            elif not isinstance(seed, int):
                raise RequestError("malformed request", "seed must be an integer")
            component = body.get("component")
            if component is not None:
                if not isinstance(component, int) or not (
                    0 <= component < model.config.mixture_components
                ):
                    raise RequestError(
                        "invalid component",
                        f"component must lie in [0, {model.config.mixture_components})",
                    )
        except RequestError as exc:
            return error_response(exc)

        cfg = SampleConfig(
            temperature=temperature, seed=seed,
            component_override=component, num_samples=num_samples,
        )
        samples = generate(model, parsed.normalized, parsed.roles, cfg)
        return {
            "samples": [
                {
                    "trajectory": trajectory_to_yards(s.trajectory, parsed, spec),
                    "component": s.component_used,
                    "seed": s.seed,
                }
                for s in samples
            ],
            "pi_bar": samples[0].pi_bar.tolist(),
            "seed": seed,
        }

    @app.get("/api/concepts")
    def concepts(formation: str, roles: str):
        try:
            try:
                formation_val = json.loads(formation)
                roles_val = json.loads(roles)
            except json.JSONDecodeError:
                raise RequestError(
                    "malformed request", "formation and roles must be JSON-encoded arrays")
            parsed = parse_formation(formation_val, roles_val, expected_agents, spec)
        except RequestError as exc:
            return error_response(exc)
        trajectories, pi_bar = concept_means(model, parsed.normalized, parsed.roles)
        out = [
            {"component": k, "trajectory": trajectory_to_yards(traj, parsed, spec)}
            for k, traj in enumerate(trajectories)
        ]
        return {"concepts": out, "pi_bar": pi_bar.tolist()}

    return app


def _float_field(body: dict, key: str, default: float, minimum: float) -> float:
    value = body.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise RequestError("malformed request", f"{key} must be a number")
    value = float(value)
    if not np.isfinite(value) or value < minimum:
        raise RequestError("malformed request", f"{key} must be finite and >= {minimum}")
    return value


def _int_field(body: dict, key: str, default: int, minimum: int) -> int:
    value = body.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise RequestError("malformed request", f"{key} must be an integer")
    if value < minimum:
        raise RequestError("malformed request", f"{key} must be >= {minimum}")
    return value


def serve(model: PlayModel, host: str = "127.0.0.1", port: int = 8000,
          expected_agents: Optional[int] = None) -> None:
    import uvicorn

    app = create_app(model, expected_agents=expected_agents)
    uvicorn.run(app, host=host, port=port, log_level="info")
