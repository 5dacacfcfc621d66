"""Grid pursuit environment with asymmetric sensing.

Observers see far (Chebyshev radius 6) but cannot capture; drones see close
(radius 2), pay one energy unit per executed move from a budget of 200, and
capture by sharing the target's cell. One stochastic target keeps its
heading with probability 0.8 and reflects at walls. Rewards are a single
team scalar broadcast to every agent: +100 on capture, -0.05 per step, and
+0.5 for each step the target sits inside some observer's radius.

Coordinates are (x, y) with x increasing rightward and y downward; actions
are 0 up, 1 down, 2 left, 3 right, 4 stay. Headings use the same encoding.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace

import numpy as np

OBSERVER = "observer"
DRONE = "drone"

N_ACTIONS = 5
UP, DOWN, LEFT, RIGHT, STAY = range(N_ACTIONS)
DELTAS = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0), STAY: (0, 0)}

OBSERVER_RADIUS = 6
DRONE_RADIUS = 2
DRONE_ENERGY = 200
KEEP_HEADING_PROB = 0.8

CAPTURE_REWARD = 100.0
STEP_PENALTY = 0.05
OBSERVE_BONUS = 0.5

DEFAULT_GRID = 15
EPISODE_LIMIT = 256


@dataclass(frozen=True)
class ArenaParams:
    """Every arena constant, overridable per run."""

    grid: int = DEFAULT_GRID
    episode_limit: int = EPISODE_LIMIT
    n_observers: int = 1
    n_drones: int = 1
    observer_radius: int = OBSERVER_RADIUS
    drone_radius: int = DRONE_RADIUS
    drone_energy: int = DRONE_ENERGY
    keep_heading_prob: float = KEEP_HEADING_PROB
    capture_reward: float = CAPTURE_REWARD
    step_penalty: float = STEP_PENALTY
    observe_bonus: float = OBSERVE_BONUS

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid must be at least 2")
        if self.episode_limit < 1:
            raise ValueError("episode limit must be positive")
        if self.n_drones < 1:
            raise ValueError("need at least one drone to capture")
        if self.n_observers < 0:
            raise ValueError("negative observer count")
        if self.observer_radius <= self.drone_radius:
            raise ValueError("observer radius must exceed drone radius")
        if self.drone_energy < 0:
            raise ValueError("negative drone energy")
        if not 0.0 <= self.keep_heading_prob <= 1.0:
            raise ValueError("keep-heading probability must be in [0, 1]")
        for r in (self.capture_reward, self.step_penalty, self.observe_bonus):
            if not math.isfinite(r):
                raise ValueError("non-finite reward constant")


def chebyshev(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


@dataclass(frozen=True)
class AgentSpec:
    """Fixed per-episode identity of one agent."""

    agent_id: str
    role: str
    sensing_radius: int
    move_cost: int
    initial_energy: int | None

    @classmethod
    def for_role(cls, agent_id: str, role: str,
                 params: ArenaParams | None = None) -> "AgentSpec":
        p = params or ArenaParams()
        if role == OBSERVER:
            return cls(agent_id, role, p.observer_radius, 0, None)
        if role == DRONE:
            return cls(agent_id, role, p.drone_radius, 1, p.drone_energy)
        raise ValueError(f"unknown role {role!r}")


@dataclass(frozen=True)
class SpawnConfig:
    """Start cells by role plus the target start, all validated at reset."""

    observer_cells: tuple[tuple[int, int], ...]
    drone_cells: tuple[tuple[int, int], ...]
    target_cell: tuple[int, int]
    identifier: int


@dataclass
class WorldState:
    grid: int
    agent_cells: dict[str, tuple[int, int]]
    drone_energy: dict[str, int]
    target_cell: tuple[int, int]
    target_heading: int
    step: int = 0
    config_index: int = 0


def target_step(state: WorldState, rng: np.random.Generator,
                keep_prob: float = KEEP_HEADING_PROB
                ) -> tuple[tuple[int, int], int, bool]:
    """One move of the target. Returns the new cell, the new heading, and
    whether the keep-heading branch was taken (the resample branch can land
    on the old heading too, so the flag is not readable from the heading)."""
    kept = bool(rng.random() < keep_prob)
    heading = state.target_heading if kept else int(rng.integers(4))
    x, y = state.target_cell
    dx, dy = DELTAS[heading]
    if not (0 <= x + dx < state.grid and 0 <= y + dy < state.grid):
        heading ^= 1  # up<->down, left<->right
        dx, dy = DELTAS[heading]
    return (x + dx, y + dy), heading, kept


def curriculum_next(configs: list[SpawnConfig], episode_index: int) -> SpawnConfig:
    """Cycle through the registered spawn configurations."""
    if not configs:
        raise ValueError("no spawn configs registered")
    return configs[episode_index % len(configs)]


def default_spawn_configs(n_observers: int = 1, n_drones: int = 1,
                          grid: int = DEFAULT_GRID) -> list[SpawnConfig]:
    """Four-entry curriculum: team split across corners with a central
    target, the target in each of two opposite corners with the team far
    away, and an adjacent team start on the bottom edge. Every config
    starts the target outside all sensing radii on the default grid."""
    g = grid - 1
    mid = grid // 2
    n = n_observers + n_drones

    def take(cells, count):
        out = []
        for c in cells:
            if c not in out:
                out.append(c)
            if len(out) == count:
                return out
        raise ValueError(f"cannot place {count} agents on a {grid}x{grid} grid")

    def split(cells):
        return tuple(cells[:n_observers]), tuple(cells[n_observers:])

    corners = [(0, 0), (g, g), (0, g), (g, 0)]
    edges = [(x, 0) for x in range(1, g)] + [(x, g) for x in range(1, g)]
    corner_cells = take(corners + edges, n)
    # small row-major clusters anchored in two opposite corners
    far_cells = take([(g - k % 3, g - k // 3) for k in range(3 * grid)], n)
    near_cells = take([(k % 3, k // 3) for k in range(3 * grid)], n)
    edge_cells = take([(x, 0) for x in range(mid, grid)] +
                      [(x, 0) for x in range(mid)] +
                      [(x, 1) for x in range(grid)], n)

    return [
        SpawnConfig(*split(corner_cells), (mid, mid), 0),
        SpawnConfig(*split(far_cells), (0, 0), 1),
        SpawnConfig(*split(near_cells), (g, g), 2),
        SpawnConfig(*split(edge_cells), (mid, g), 3),
    ]


class PursuitArena:
    """Episode runner for one team against one target.

    All randomness comes through the rng arguments; holding the rng outside
    keeps (seed, config, actions) -> trajectory fully reproducible.
    """

    def __init__(self, n_observers: int | None = None, n_drones: int | None = None,
                 grid: int | None = None, episode_limit: int | None = None,
                 params: ArenaParams | None = None):
        p = params or ArenaParams()
        direct = {k: v for k, v in [("n_observers", n_observers), ("n_drones", n_drones),
                                    ("grid", grid), ("episode_limit", episode_limit)]
                  if v is not None}
        if direct:
            p = replace(p, **direct)
        self.params = p
        self.grid = p.grid
        self.episode_limit = p.episode_limit
        self.specs = [AgentSpec.for_role(f"observer_{i}", OBSERVER, p)
                      for i in range(p.n_observers)]
        self.specs += [AgentSpec.for_role(f"drone_{i}", DRONE, p)
                       for i in range(p.n_drones)]
        self.agent_ids = [s.agent_id for s in self.specs]
        self.roles = {s.agent_id: s.role for s in self.specs}
        self._spec_by_id = {s.agent_id: s for s in self.specs}
        self.state: WorldState | None = None
        self._finished = True

    @property
    def n_agents(self) -> int:
        return len(self.specs)

    @property
    def obs_dim(self) -> int:
        return 9 + 3 * (self.n_agents - 1)

    # ------------------------------------------------------------ lifecycle

    def _validate_config(self, config: SpawnConfig) -> None:
        if len(config.observer_cells) != sum(s.role == OBSERVER for s in self.specs):
            raise ValueError("observer cell count does not match team")
        if len(config.drone_cells) != sum(s.role == DRONE for s in self.specs):
            raise ValueError("drone cell count does not match team")
        cells = list(config.observer_cells) + list(config.drone_cells)
        for cell in cells + [config.target_cell]:
            x, y = cell
            if not (0 <= x < self.grid and 0 <= y < self.grid):
                raise ValueError(f"cell {cell} outside {self.grid}x{self.grid} grid")
        if len(set(cells)) != len(cells):
            raise ValueError("agent start cells must be distinct")
        if config.target_cell in config.drone_cells:
            raise ValueError("target may not spawn on a drone")

    def reset(self, config: SpawnConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
        self._validate_config(config)
        cells = {}
        by_role = {OBSERVER: list(config.observer_cells), DRONE: list(config.drone_cells)}
        for spec in self.specs:
            cells[spec.agent_id] = tuple(by_role[spec.role].pop(0))
        energy = {s.agent_id: s.initial_energy for s in self.specs if s.role == DRONE}
        self.state = WorldState(
            grid=self.grid,
            agent_cells=cells,
            drone_energy=energy,
            target_cell=tuple(config.target_cell),
            target_heading=int(rng.integers(4)),
            step=0,
            config_index=config.identifier,
        )
        self._finished = False
        return {a: self._observe(a) for a in self.agent_ids}

    def step(self, actions: dict[str, int], rng: np.random.Generator):
        """Advance one tick: agents move, target moves, then capture and the
        shared reward are judged on the post-move state."""
        if self._finished or self.state is None:
            raise RuntimeError("episode is finished; call reset")
        if set(actions) != set(self.agent_ids):
            raise ValueError("need exactly one action per agent")
        for a, act in actions.items():
            if act not in DELTAS:
                raise ValueError(f"invalid action {act!r} for {a}")
        state = self.state
        for spec in self.specs:
            a = spec.agent_id
            act = int(actions[a])
            if spec.role == DRONE and state.drone_energy[a] == 0:
                act = STAY
            dx, dy = DELTAS[act]
            x, y = state.agent_cells[a]
            nx = min(max(x + dx, 0), self.grid - 1)
            ny = min(max(y + dy, 0), self.grid - 1)
            if (nx, ny) != (x, y):
                state.agent_cells[a] = (nx, ny)
                if spec.role == DRONE:
                    state.drone_energy[a] -= 1
        state.target_cell, state.target_heading, _ = target_step(
            state, rng, self.params.keep_heading_prob)
        state.step += 1

        observed = any(
            chebyshev(state.agent_cells[s.agent_id], state.target_cell) <= s.sensing_radius
            for s in self.specs if s.role == OBSERVER)
        captured = any(
            state.agent_cells[s.agent_id] == state.target_cell
            for s in self.specs if s.role == DRONE)
        p = self.params
        reward = -p.step_penalty + p.observe_bonus * observed + p.capture_reward * captured
        done = captured
        trunc = (not done) and state.step >= self.episode_limit
        self._finished = done or trunc
        obs = {a: self._observe(a) for a in self.agent_ids}
        return (obs,
                {a: reward for a in self.agent_ids},
                {a: done for a in self.agent_ids},
                {a: trunc for a in self.agent_ids})

    # ------------------------------------------------------------ sensing

    def visibility(self, agent_id: str) -> tuple[float, tuple[float, float]]:
        """Flag and normalized target offset under the agent's own radius."""
        spec = self._spec_by_id[agent_id]
        state = self.state
        cell = state.agent_cells[agent_id]
        if chebyshev(cell, state.target_cell) <= spec.sensing_radius:
            off = ((state.target_cell[0] - cell[0]) / self.grid,
                   (state.target_cell[1] - cell[1]) / self.grid)
            return 1.0, off
        return 0.0, (0.0, 0.0)

    def _observe(self, agent_id: str) -> np.ndarray:
        """Layout: own cell / G (2), energy fraction (1), role one-hot (2),
        target visible flag (1), target offset / G (2), then per teammate
        offset / G and a drone bit (3 each), remaining-time fraction (1)."""
        state = self.state
        spec = self._spec_by_id[agent_id]
        x, y = state.agent_cells[agent_id]
        g = self.grid
        out = np.empty(self.obs_dim)
        out[0] = x / g
        out[1] = y / g
        if spec.role == DRONE:
            full = spec.initial_energy
            out[2] = state.drone_energy[agent_id] / full if full else 0.0
        else:
            out[2] = 1.0
        out[3] = 1.0 if spec.role == OBSERVER else 0.0
        out[4] = 1.0 if spec.role == DRONE else 0.0
        visible, off = self.visibility(agent_id)
        out[5] = visible
        out[6] = off[0]
        out[7] = off[1]
        i = 8
        for other in self.specs:
            if other.agent_id == agent_id:
                continue
            ox, oy = state.agent_cells[other.agent_id]
            out[i] = (ox - x) / g
            out[i + 1] = (oy - y) / g
            out[i + 2] = 1.0 if other.role == DRONE else 0.0
            i += 3
        out[i] = (self.episode_limit - state.step) / self.episode_limit
        return out

    # ------------------------------------------------------------ export

    def snapshot(self) -> dict:
        """Plain-data view of the current state for trace records."""
        state = self.state
        return {
            "step": state.step,
            "config": state.config_index,
            "target": list(state.target_cell),
            "heading": state.target_heading,
            "agents": {
                s.agent_id: {
                    "role": s.role,
                    "cell": list(state.agent_cells[s.agent_id]),
                    "energy": state.drone_energy.get(s.agent_id),
                }
                for s in self.specs
            },
        }

    def clone_state(self) -> WorldState:
        return copy.deepcopy(self.state)
