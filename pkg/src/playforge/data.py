"""Play ingestion, normalization, augmentation, and synthetic data.

Coordinate conventions: a normalized play lives in a formation-relative
frame with the snap anchor (the Center) at the origin, offense facing +x,
x divided by the half-field length (60 yards) and y by the half-field
width (26.65 yards).  The first trajectory frame *is* the formation.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1


class Role(IntEnum):
    """Offensive role identifiers with a fixed integer mapping."""

    QB = 0
    RB = 1
    FB = 2
    WR = 3
    TE = 4
    C = 5
    G = 6
    T = 7

    @classmethod
    def from_name(cls, name: str) -> "Role":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown role name: {name!r}") from None


ROLE_NAMES = [r.name for r in Role]
LINE_ROLES = (Role.C, Role.G, Role.T)

#: Role order used when building synthetic teams of a given size (one Center
#: always present, then the skill positions, then the rest of the line).
ROLE_SEQUENCE = (
    Role.C, Role.QB, Role.WR, Role.WR, Role.RB, Role.TE,
    Role.G, Role.G, Role.T, Role.T, Role.WR,
)


@dataclass(frozen=True)
class NormalizationSpec:
    half_length: float = 60.0
    half_width: float = 26.65
    anchor_role: Role = Role.C
    orientation: str = "offense-right"

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("normalization scale factors must be positive")

    @property
    def scale(self) -> np.ndarray:
        return np.array([self.half_length, self.half_width], dtype=np.float64)


DEFAULT_NORMALIZATION = NormalizationSpec()


@dataclass
class Play:
    """One snap: formation, roles, trajectory, and validity masks."""

    play_id: str
    formation: np.ndarray        # (N, 2) normalized
    roles: np.ndarray            # (N,) int
    trajectory: np.ndarray       # (T, N, 2) normalized
    frame_valid: np.ndarray      # (T,) bool
    agent_valid: np.ndarray      # (N,) bool
    frame_rate: float = 10.0
    metadata: dict = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return self.trajectory.shape[0]

    @property
    def num_agents(self) -> int:
        return self.trajectory.shape[1]


def validate_play(play: Play, coord_bound: float = 1.5) -> Play:
    """Enforce every Play invariant; raises ValueError on violation."""
    T, N, two = play.trajectory.shape
    if two != 2:
        raise ValueError("trajectory must have a trailing xy axis")
    if T < 2:
        raise ValueError(f"play {play.play_id}: needs at least 2 frames, got {T}")
    if play.formation.shape != (N, 2):
        raise ValueError(f"play {play.play_id}: formation shape {play.formation.shape} != ({N}, 2)")
    if play.roles.shape != (N,) or play.frame_valid.shape != (T,) or play.agent_valid.shape != (N,):
        raise ValueError(f"play {play.play_id}: mask/role shapes inconsistent")
    if not play.frame_valid[0]:
        raise ValueError(f"play {play.play_id}: snap frame must be valid")
    if play.roles.min() < 0 or play.roles.max() > 7:
        raise ValueError(f"play {play.play_id}: role id out of range")
    if not np.isfinite(play.trajectory).all() or not np.isfinite(play.formation).all():
        raise ValueError(f"play {play.play_id}: non-finite coordinates")
    valid = play.agent_valid
    if not np.array_equal(play.trajectory[0][valid], play.formation[valid]):
        raise ValueError(f"play {play.play_id}: first frame does not equal the formation")
    coords = play.trajectory[np.ix_(play.frame_valid, valid)]
    if coords.size and np.abs(coords).max() > coord_bound:
        raise ValueError(f"play {play.play_id}: coordinates exceed |{coord_bound}|")
    return play


# ---------------------------------------------------------------------------
# Dataset serialization (line-delimited JSON, format 1)
# ---------------------------------------------------------------------------

def play_to_record(play: Play) -> dict:
    return {
        "format": DATASET_FORMAT_VERSION,
        "play_id": play.play_id,
        "formation": play.formation.tolist(),
        "roles": play.roles.astype(int).tolist(),
        "trajectory": play.trajectory.tolist(),
        "frame_valid": play.frame_valid.astype(bool).tolist(),
        "agent_valid": play.agent_valid.astype(bool).tolist(),
        "frame_rate": float(play.frame_rate),
        "metadata": play.metadata,
    }


def play_from_record(record: dict) -> Play:
    version = record.get("format")
    if version != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset record format: {version!r}")
    return Play(
        play_id=str(record["play_id"]),
        formation=np.asarray(record["formation"], dtype=np.float64),
        roles=np.asarray(record["roles"], dtype=np.int64),
        trajectory=np.asarray(record["trajectory"], dtype=np.float64),
        frame_valid=np.asarray(record["frame_valid"], dtype=bool),
        agent_valid=np.asarray(record["agent_valid"], dtype=bool),
        frame_rate=float(record.get("frame_rate", 10.0)),
        metadata=dict(record.get("metadata", {})),
    )


def write_dataset(path: str | Path, plays: Iterable[Play]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for play in plays:
            fh.write(json.dumps(play_to_record(play), sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_dataset(path: str | Path) -> list[Play]:
    plays = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                plays.append(play_from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: bad record on line {line_no}: {exc}") from exc
    return plays


# ---------------------------------------------------------------------------
# Tracking CSV ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column-name mapping for tracking CSVs (public NFL release layout)."""

    game_id: str = "gameId"
    play_id: str = "playId"
    frame_id: str = "frameId"
    player_id: str = "nflId"
    x: str = "x"
    y: str = "y"
    role: str = "position"
    direction: str = "playDirection"
    frame_rate: float = 10.0

    def required_columns(self) -> tuple[str, ...]:
        return (self.game_id, self.play_id, self.frame_id, self.player_id,
                self.x, self.y, self.role, self.direction)


@dataclass
class RawTrackingPlay:
    """A play straight out of the CSV: raw field yards, unoriented."""

    play_id: str
    positions: np.ndarray    # (T, N, 2) raw yards
    roles: np.ndarray        # (N,) int
    direction: str           # "left" or "right"
    frame_rate: float = 10.0


@dataclass
class LoadStats:
    loaded: int = 0
    dropped: int = 0


def load_tracking_csv(
    path: str | Path,
    schema: CsvSchema = CsvSchema(),
    expected_players: int = 11,
) -> tuple[list[RawTrackingPlay], LoadStats]:
    """Group tracking rows into plays, keeping only complete offenses.

    Rows whose role column is not one of the eight offensive roles are
    ignored (defenders, ball).  A play is dropped when it does not have
    exactly ``expected_players`` offensive players each present in every
    frame, or fewer than two frames.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))

    groups: dict[tuple[str, str], dict] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return [], LoadStats()
        for col in schema.required_columns():
            if col not in reader.fieldnames:
                raise ValueError(f"missing required column: {col!r}")
        for row in reader:
            line_no = reader.line_num
            try:
                key = (row[schema.game_id].strip(), row[schema.play_id].strip())
                groups.setdefault(key, {"rows": {}, "roles": {}, "direction": "right"})
                role_name = (row[schema.role] or "").strip().upper()
                if role_name not in Role.__members__:
                    continue
                frame = int(row[schema.frame_id])
                player = row[schema.player_id].strip()
                pos = (float(row[schema.x]), float(row[schema.y]))
                direction = (row[schema.direction] or "right").strip().lower()
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: unparseable row at line {line_no}: {exc}") from exc
            group = groups[key]
            group["rows"][(frame, player)] = pos
            group["roles"][player] = Role[role_name]
            group["direction"] = direction

    plays: list[RawTrackingPlay] = []
    stats = LoadStats()
    for key in sorted(groups):
        group = groups[key]
        players = sorted(group["roles"])
        frames = sorted({f for f, _ in group["rows"]})
        complete = (
            len(players) == expected_players
            and len(frames) >= 2
            and all((f, p) in group["rows"] for f in frames for p in players)
        )
        if not complete:
            stats.dropped += 1
            continue
        positions = np.array(
            [[group["rows"][(f, p)] for p in players] for f in frames], dtype=np.float64
        )
        roles = np.array([int(group["roles"][p]) for p in players], dtype=np.int64)
        plays.append(RawTrackingPlay(
            play_id=f"{key[0]}_{key[1]}",
            positions=positions,
            roles=roles,
            direction=group["direction"],
            frame_rate=schema.frame_rate,
        ))
        stats.loaded += 1
    if stats.dropped:
        log.info("load_tracking_csv(%s): kept %d plays, dropped %d incomplete",
                 path, stats.loaded, stats.dropped)
    return plays, stats


def normalize_play(raw: RawTrackingPlay, spec: NormalizationSpec = DEFAULT_NORMALIZATION) -> Play:
    """Anchor on the Center at the snap, orient offense to +x, and scale."""
    anchor_idx = np.flatnonzero(raw.roles == int(spec.anchor_role))
    if len(anchor_idx) != 1:
        raise ValueError(
            f"play {raw.play_id}: expected exactly one {spec.anchor_role.name}, "
            f"found {len(anchor_idx)}"
        )
    coords = raw.positions - raw.positions[0, anchor_idx[0]]
    if raw.direction == "left":
        coords = coords.copy()
        coords[..., 0] = -coords[..., 0]
    coords = coords / spec.scale
    T, N = coords.shape[:2]
    return Play(
        play_id=raw.play_id,
        formation=coords[0].copy(),
        roles=raw.roles.copy(),
        trajectory=coords,
        frame_valid=np.ones(T, dtype=bool),
        agent_valid=np.ones(N, dtype=bool),
        frame_rate=raw.frame_rate,
    )


def normalize_coords(coords: np.ndarray, spec: NormalizationSpec = DEFAULT_NORMALIZATION) -> np.ndarray:
    """Scale yard coordinates (anchor-relative) into normalized units."""
    return np.asarray(coords, dtype=np.float64) / spec.scale


def denormalize_coords(coords: np.ndarray, spec: NormalizationSpec = DEFAULT_NORMALIZATION) -> np.ndarray:
    """Scale normalized coordinates back to anchor-relative yards."""
    return np.asarray(coords, dtype=np.float64) * spec.scale


def denormalize_play(play: Play, spec: NormalizationSpec = DEFAULT_NORMALIZATION) -> Play:
    """The inverse of the scaling step: a Play expressed in yards.

    Orientation and anchoring are not undone; coordinates stay in the
    offense-right anchor-relative frame.
    """
    return replace(
        play,
        formation=denormalize_coords(play.formation, spec),
        trajectory=denormalize_coords(play.trajectory, spec),
    )


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentationConfig:
    flip_probability: float = 0.5
    jitter_sigma: float = 0.25          # yards
    spread_range: tuple[float, float] = (0.9, 1.1)
    #: Line roles keep their rigid alignment: their jitter is scaled down.
    line_jitter_scale: float = 0.25

    def __post_init__(self):
        lo, hi = self.spread_range
        if not (0.0 < lo <= 1.0 <= hi):
            raise ValueError(f"spread_range must satisfy 0 < lo <= 1 <= hi, got {self.spread_range}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be non-negative")
        if not (0.0 <= self.flip_probability <= 1.0):
            raise ValueError("flip_probability must lie in [0, 1]")


def flip_lateral(play: Play) -> Play:
    """Mirror a play about the x-axis (negate y everywhere)."""
    formation = play.formation.copy()
    trajectory = play.trajectory.copy()
    formation[:, 1] = -formation[:, 1]
    trajectory[..., 1] = -trajectory[..., 1]
    return replace(play, formation=formation, trajectory=trajectory)


def augment(
    play: Play,
    cfg: AugmentationConfig,
    rng: np.random.Generator,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> Play:
    """Randomized lateral flip, per-player jitter, and spread perturbation.

    Jitter and spread offsets are applied to a player's formation position
    and every trajectory frame together, so the first frame keeps matching
    the formation.
    """
    if rng.random() < cfg.flip_probability:
        play = flip_lateral(play)
    formation = play.formation.copy()
    trajectory = play.trajectory.copy()
    n = play.num_agents

    sigma = np.full(n, cfg.jitter_sigma, dtype=np.float64)
    line = np.isin(play.roles, [int(r) for r in LINE_ROLES])
    sigma[line] *= cfg.line_jitter_scale
    jitter = rng.standard_normal((n, 2)) * sigma[:, None] / spec.scale
    formation += jitter
    trajectory += jitter

    factor = rng.uniform(cfg.spread_range[0], cfg.spread_range[1])
    anchor_idx = np.flatnonzero(play.roles == int(spec.anchor_role))
    anchor_y = formation[anchor_idx[0], 1] if len(anchor_idx) else 0.0
    offset_y = (factor - 1.0) * (formation[:, 1] - anchor_y)
    formation[:, 1] += offset_y
    trajectory[..., 1] += offset_y

    return replace(play, formation=formation, trajectory=trajectory)


# ---------------------------------------------------------------------------
# Synthetic route-based dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Route:
    """Piecewise-linear route template: waypoint offsets in yards over frames.

    ``waypoints`` is a sequence of (dx, dy, frame) starting at (0, 0, 0) with
    strictly increasing frame times.  ``mirror_lateral=True`` flips the dy
    offsets for players lined up at negative y, so breaks stay inward/outward
    relative to the player's side of the formation.
    """

    waypoints: tuple[tuple[float, float, float], ...]
    mirror_lateral: bool = False

    def __post_init__(self):
        if not self.waypoints or self.waypoints[0] != (0.0, 0.0, 0.0):
            raise ValueError("route must start at offset (0, 0) at frame 0")
        times = [w[2] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("route waypoint times must be strictly increasing")

    @property
    def last_time(self) -> float:
        return self.waypoints[-1][2]

    @property
    def path_length(self) -> float:
        pts = np.array([(x, y) for x, y, _ in self.waypoints])
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    @property
    def nominal_speed(self) -> float:
        """Average yards per frame along the template polyline."""
        return self.path_length / self.last_time if self.last_time > 0 else 0.0


def route_position(route: Route, frame: float, scale: float = 1.0, side: float = 1.0) -> np.ndarray:
    """Offset (yards) of an agent on ``route`` at ``frame``.

    ``scale`` multiplies the spatial offsets; ``side`` (+1/-1) mirrors dy when
    the route is side-mirrored.  Positions hold at the final waypoint.
    """
    xs = np.array([w[0] for w in route.waypoints])
    ys = np.array([w[1] for w in route.waypoints])
    ts = np.array([w[2] for w in route.waypoints])
    fx = np.interp(frame, ts, xs)
    fy = np.interp(frame, ts, ys)
    if route.mirror_lateral:
        fy = fy * side
    return np.array([fx, fy]) * scale


@dataclass(frozen=True)
class RouteConcept:
    """A named play concept: one route per role."""

    name: str
    routes: dict[int, Route]

    def route_for(self, role: int) -> Route:
        if role not in self.routes:
            raise ValueError(f"concept {self.name!r} assigns no route to role {Role(role).name}")
        return self.routes[role]


def default_route_library(num_frames: int) -> dict[str, Route]:
    """Six stock templates, with waypoint times placed within ``num_frames``.

    The four skill routes have near-identical polyline lengths (~13 yards)
    so one per-role speed range traverses any of them at a multiplier
    close to 1.
    """
    end = 0.95 * (num_frames - 1)

    def w(*points):
        return tuple((float(x), float(y), float(t)) for x, y, t in points)

    return {
        "go": Route(w((0, 0, 0), (12, 0, end))),
        "slant": Route(w((0, 0, 0), (3, 0, 0.25 * end), (10, -5, end)), mirror_lateral=True),
        "out": Route(w((0, 0, 0), (7, 0, 0.55 * end), (7.5, 4.5, end)), mirror_lateral=True),
        "screen": Route(w((0, 0, 0), (-1, 5, 0.35 * end), (4.5, 8.5, end)), mirror_lateral=True),
        "qb_dropback": Route(w((0, 0, 0), (-4, 0, 0.3 * end), (-4.2, 0, end))),
        "ol_block": Route(
            w((0, 0, 0), (-0.6, 0.3, 0.3 * end), (-1.0, -0.2, 0.6 * end), (-1.2, 0.1, end))
        ),
    }


#: Per-role sampling ranges in yards per frame.  The ranges are deliberately
#: wide (roughly +-30% of the stock templates' pace) so that each concept
#: produces a broad, continuous lobe of trajectories rather than a razor-thin
#: mode; overlapping lobes keep mixture responsibilities soft during
#: training, which is what lets every component stay alive.
DEFAULT_SPEED_RANGES: dict[int, tuple[float, float]] = {
    int(Role.QB): (0.18, 0.28),
    int(Role.RB): (0.50, 0.75),
    int(Role.FB): (0.48, 0.72),
    int(Role.WR): (0.45, 0.85),
    int(Role.TE): (0.45, 0.80),
    int(Role.C): (0.06, 0.14),
    int(Role.G): (0.06, 0.14),
    int(Role.T): (0.06, 0.14),
}

#: Within one formation family the concept is *not* inferable pre-snap: the
#: receivers' route is the hidden play call, so the mixture has to keep one
#: mode per concept alive.  Extra concept groups beyond the first four get a
#: wider receiver split (a new family).
_WR_ROUTE_BY_CONCEPT = ["go", "slant", "out", "screen"]
_RB_ROUTE_BY_FAMILY = ["out", "screen"]


def _family_split(family: int) -> float:
    return 11.0 + 3.0 * family


def default_concepts(count: int, num_frames: int) -> list[RouteConcept]:
    """Build ``count`` concepts from the stock route library."""
    if count < 1:
        raise ValueError("need at least one concept")
    lib = default_route_library(num_frames)
    concepts = []
    for c in range(count):
        family = c // 4
        skill = lib[_WR_ROUTE_BY_CONCEPT[c % 4]]
        back = lib[_RB_ROUTE_BY_FAMILY[family % 2]]
        routes = {
            int(Role.QB): lib["qb_dropback"],
            int(Role.C): lib["ol_block"],
            int(Role.G): lib["ol_block"],
            int(Role.T): lib["ol_block"],
            int(Role.WR): skill,
            int(Role.TE): skill,
            int(Role.RB): back,
            int(Role.FB): back,
        }
        concepts.append(
            RouteConcept(name=f"{_WR_ROUTE_BY_CONCEPT[c % 4]}-f{family}", routes=routes))
    return concepts


@dataclass
class SyntheticConfig:
    concept_count: int = 4
    plays_per_concept: int = 500
    num_agents: int = 5
    num_frames: int = 20
    frame_rate: float = 10.0
    noise_sigma: float = 0.3             # yards, per frame after the snap
    formation_jitter: float = 0.5        # yards, uniform, per player
    speed_ranges: dict[int, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_SPEED_RANGES))
    concepts: Optional[list[RouteConcept]] = None

    def __post_init__(self):
        if self.concept_count < 1:
            raise ValueError("concept_count must be >= 1")
        if self.num_frames < 2:
            raise ValueError("num_frames must be >= 2")
        if self.num_agents < 1 or self.num_agents > len(ROLE_SEQUENCE):
            raise ValueError(f"num_agents must lie in [1, {len(ROLE_SEQUENCE)}]")

    def resolved_concepts(self) -> list[RouteConcept]:
        if self.concepts is not None:
            if len(self.concepts) != self.concept_count:
                raise ValueError("concepts list must match concept_count")
            return self.concepts
        return default_concepts(self.concept_count, self.num_frames)


def synthetic_roles(num_agents: int) -> np.ndarray:
    return np.array([int(r) for r in ROLE_SEQUENCE[:num_agents]], dtype=np.int64)


def _synthetic_formation(
    roles: np.ndarray, concept_idx: int, cfg: SyntheticConfig, rng: np.random.Generator
) -> np.ndarray:
    """Role-zone formation in yards, with a family-dependent receiver split."""
    split = _family_split(concept_idx // 4)
    positions = np.zeros((len(roles), 2))
    counts: dict[int, int] = {}
    for i, role in enumerate(roles):
        k = counts.get(int(role), 0)
        counts[int(role)] = k + 1
        side = 1.0 if k % 2 == 0 else -1.0
        if role == Role.C:
            positions[i] = (0.0, 0.0)
        elif role == Role.G:
            positions[i] = (0.0, side * 1.3)
        elif role == Role.T:
            positions[i] = (0.0, side * 2.6)
        elif role == Role.QB:
            positions[i] = (-5.0, 0.0)
        elif role == Role.RB:
            positions[i] = (-7.0, side * (2.0 + 0.25 * split))
        elif role == Role.FB:
            positions[i] = (-6.0, side * 1.0)
        elif role == Role.TE:
            positions[i] = (-0.5, side * 4.5)
        elif role == Role.WR:
            positions[i] = (-1.0, side * (split + 4.0 * (k // 2)))
    jitter = rng.uniform(-cfg.formation_jitter, cfg.formation_jitter, size=positions.shape)
    jitter[roles == int(Role.C)] = 0.0   # the anchor defines the origin
    return positions + jitter


def synthesize_play(
    play_id: str,
    concept: RouteConcept,
    concept_idx: int,
    cfg: SyntheticConfig,
    rng: np.random.Generator,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> Play:
    roles = synthetic_roles(cfg.num_agents)
    T, N = cfg.num_frames, cfg.num_agents
    formation = _synthetic_formation(roles, concept_idx, cfg, rng)

    trajectory = np.zeros((T, N, 2))
    for i, role in enumerate(roles):
        route = concept.route_for(int(role))
        if route.last_time > T:
            raise ValueError(
                f"concept {concept.name!r}: route for {Role(int(role)).name} runs to frame "
                f"{route.last_time}, beyond {T} frames"
            )
        lo, hi = cfg.speed_ranges.get(int(role), (0.0, 0.0))
        speed = rng.uniform(lo, hi)
        scale = speed / route.nominal_speed if route.nominal_speed > 0 else 1.0
        side = 1.0 if formation[i, 1] >= 0 else -1.0
        for t in range(T):
            trajectory[t, i] = formation[i] + route_position(route, t, scale, side)

    if cfg.noise_sigma > 0:
        trajectory[1:] += rng.normal(0.0, cfg.noise_sigma, size=(T - 1, N, 2))

    return Play(
        play_id=play_id,
        formation=normalize_coords(formation, spec),
        roles=roles,
        trajectory=normalize_coords(trajectory, spec),
        frame_valid=np.ones(T, dtype=bool),
        agent_valid=np.ones(N, dtype=bool),
        frame_rate=cfg.frame_rate,
        metadata={"concept": concept.name, "concept_index": concept_idx},
    )


def synthesize_dataset(
    cfg: SyntheticConfig,
    rng: np.random.Generator,
    spec: NormalizationSpec = DEFAULT_NORMALIZATION,
) -> list[Play]:
    """Generate ``concept_count * plays_per_concept`` plays, shuffled.

    Every concept contributes exactly ``plays_per_concept`` plays so the
    concept marginal is uniform by construction.
    """
    concepts = cfg.resolved_concepts()
    plays = []
    for c, concept in enumerate(concepts):
        for j in range(cfg.plays_per_concept):
            plays.append(synthesize_play(f"synth-{c:02d}-{j:05d}", concept, c, cfg, rng, spec))
    order = rng.permutation(len(plays))
    return [plays[i] for i in order]


def split(plays: Sequence[Play], ratio: float, seed: int) -> tuple[list[Play], list[Play]]:
    """Deterministic shuffled train/validation split (train gets floor(n*ratio))."""
    if not (0.0 < ratio < 1.0):
        raise ValueError("split ratio must lie strictly between 0 and 1")
    if len(plays) < 2:
        raise ValueError("need at least 2 plays to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(plays))
    n_train = min(max(int(math.floor(len(plays) * ratio)), 1), len(plays) - 1)
    train = [plays[i] for i in order[:n_train]]
    val = [plays[i] for i in order[n_train:]]
    return train, val
