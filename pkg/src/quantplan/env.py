"""Toy wall-navigation environment.

A point agent lives in the unit square.  A vertical wall at x = wall_x
blocks movement except through a gap; start and goal of every episode are
on opposite sides of the wall, so success requires planning through the
gap.  Observations are small grayscale images.  Everything is a pure
function of its inputs; all randomness flows through explicit streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ValidationError
from .store import Model, TensorRecord

WALL_EPS = 1e-3


@dataclass(frozen=True)
class WallEnvConfig:
    wall_x: float = 0.5
    gap_center: float = 0.5
    gap_half_width: float = 0.1
    max_step: float = 0.125
    image_side: int = 16
    success_radius: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.wall_x < 1.0:
            raise ValidationError("wall_x must be in (0, 1)")
        lo, hi = self.gap_center - self.gap_half_width, self.gap_center + self.gap_half_width
        if lo < 0.0 or hi > 1.0:
            raise ValidationError("gap interval must lie within [0, 1]")
        if self.max_step <= 0 or self.success_radius <= 0:
            raise ValidationError("max_step and success_radius must be positive")


@dataclass(frozen=True)
class EpisodeSpec:
    seed: int
    episode_id: int
    start: tuple[float, float]
    goal: tuple[float, float]
    initial_goal_distance: float


@dataclass
class Dataset:
    """Random-policy transitions used to train the world model."""

    obs: np.ndarray  # (n, image_side**2)
    action: np.ndarray  # (n, 2)
    next_obs: np.ndarray  # (n, image_side**2)
    state: np.ndarray  # (n, 2)
    next_state: np.ndarray  # (n, 2)
    cfg: WallEnvConfig = field(default_factory=WallEnvConfig)

    def __len__(self) -> int:
        return self.obs.shape[0]


def _in_gap(y: float, cfg: WallEnvConfig) -> bool:
    return cfg.gap_center - cfg.gap_half_width <= y <= cfg.gap_center + cfg.gap_half_width


def step(state: np.ndarray, action: np.ndarray, cfg: WallEnvConfig) -> np.ndarray:
    """One environment transition; pure and deterministic."""
    pos = np.asarray(state, dtype=np.float64)
    a = np.clip(np.asarray(action, dtype=np.float64), -cfg.max_step, cfg.max_step)
    cand = np.clip(pos + a, 0.0, 1.0)
    x0, x1 = pos[0], cand[0]
    crosses = (x0 - cfg.wall_x) * (x1 - cfg.wall_x) < 0
    if crosses:
        t = (cfg.wall_x - x0) / (x1 - x0)
        y_cross = pos[1] + t * (cand[1] - pos[1])
        if not _in_gap(y_cross, cfg):
            side = -1.0 if x0 < cfg.wall_x else 1.0
            return np.array([cfg.wall_x + side * WALL_EPS, y_cross])
    return cand


def render(state: np.ndarray, cfg: WallEnvConfig) -> np.ndarray:
    """Deterministic grayscale observation, flattened row-major in [0, 1]."""
    side = cfg.image_side
    img = np.zeros((side, side), dtype=np.float64)
    wall_col = min(int(np.floor(cfg.wall_x * side)), side - 1)
    for r in range(side):
        y_center = (r + 0.5) / side
        if not _in_gap(y_center, cfg):
            img[r, wall_col] = 0.5
    r = min(int(np.floor(state[1] * side)), side - 1)
    c = min(int(np.floor(state[0] * side)), side - 1)
    img[r, c] = 1.0
    return img.reshape(-1)


def _uniform_on_side(gen: np.random.Generator, left: bool, cfg: WallEnvConfig) -> np.ndarray:
    if left:
        x = gen.uniform(0.0, cfg.wall_x)
    else:
        x = gen.uniform(cfg.wall_x, 1.0)
    y = gen.uniform(0.0, 1.0)
    return np.array([x, y])


def sample_episode_specs(
    seed: int, n_episodes: int, cfg: WallEnvConfig, master_seed: int = 0
) -> list[EpisodeSpec]:
    """Paired-goal episode specs; a pure function of (master_seed, seed).

    Never consumes randomness from anywhere else, so every variant and
    budget sees the identical list for a given seed.
    """
    if n_episodes < 1:
        raise ValidationError("n_episodes must be >= 1")
    specs = []
    for ep in range(n_episodes):
        gen = rng.stream(master_seed, "episode_spec", seed, ep)
        start_left = bool(gen.integers(0, 2))
        start = _uniform_on_side(gen, start_left, cfg)
        goal = _uniform_on_side(gen, not start_left, cfg)
        specs.append(
            EpisodeSpec(
                seed=seed,
                episode_id=ep,
                start=(float(start[0]), float(start[1])),
                goal=(float(goal[0]), float(goal[1])),
                initial_goal_distance=float(np.linalg.norm(start - goal)),
            )
        )
    return specs


def gen_dataset(
    n_traj: int, traj_len: int, seed: int, cfg: WallEnvConfig, master_seed: int = 0
) -> Dataset:
    """Random-policy rollouts from uniform starts, with ground-truth states."""
    if n_traj < 1 or traj_len < 1:
        raise ValidationError("n_traj and traj_len must be >= 1")
    obs, act, nobs, st, nst = [], [], [], [], []
    for k in range(n_traj):
        gen = rng.stream(master_seed, "dataset", seed, k)
        pos = gen.uniform(0.0, 1.0, size=2)
        o = render(pos, cfg)
        for _ in range(traj_len):
            a = gen.uniform(-cfg.max_step, cfg.max_step, size=2)
            nxt = step(pos, a, cfg)
            no = render(nxt, cfg)
            obs.append(o)
            act.append(a)
            nobs.append(no)
            st.append(pos)
            nst.append(nxt)
            pos, o = nxt, no
    return Dataset(
        obs=np.array(obs),
        action=np.array(act),
        next_obs=np.array(nobs),
        state=np.array(st),
        next_state=np.array(nst),
        cfg=cfg,
    )


def dataset_to_model(ds: Dataset) -> Model:
    """Pack a dataset into the manifest+blob persistence convention."""
    fields = [("obs", ds.obs), ("action", ds.action), ("next_obs", ds.next_obs),
              ("state", ds.state), ("next_state", ds.next_state)]
    tensors = [
        TensorRecord(f"dataset.{name}", "other", i, "non_linear_param", arr.shape, arr)
        for i, (name, arr) in enumerate(fields)
    ]
    extras = {"dataset": True, "image_side": ds.cfg.image_side}
    return Model(tensors=tensors, extras=extras)


def dataset_from_model(model: Model, cfg: WallEnvConfig) -> Dataset:
    get = lambda n: model.tensor(f"dataset.{n}").data.astype(np.float64)
    return Dataset(
        obs=get("obs"),
        action=get("action"),
        next_obs=get("next_obs"),
        state=get("state"),
        next_state=get("next_state"),
        cfg=cfg,
    )
