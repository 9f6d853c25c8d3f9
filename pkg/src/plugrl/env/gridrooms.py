import numpy as np

from ..core import OBS_DTYPE, Box, Discrete
from .base import Env, EnvSpec, register_env

# up, down, left, right
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


def room_layout(size: int) -> np.ndarray:
    """Boolean wall mask: a cross of walls splitting the grid into 4 rooms.

    Each of the four wall segments has one door in its middle.
    """
    if size < 5:
        raise ValueError("gridrooms needs size >= 5")
    walls = np.zeros((size, size), dtype=bool)
    mid = size // 2
    walls[mid, :] = True
    walls[:, mid] = True
    near, far = mid // 2, mid + 1 + (size - mid - 1) // 2
    for door in (near, far):
        walls[mid, door] = False
        walls[door, mid] = False
    return walls


class GridRoomsEnv(Env):
    """Sparse-reward four-room gridworld.

    The agent starts in the top-left corner; the goal is drawn uniformly
    from the bottom-right room at every reset. Observation is two flattened
    one-hot planes ``[agent, goal]`` of shape ``size x size``.
    """

    def __init__(self, size: int = 21, max_episode_steps: int = 150):
        super().__init__()
        self.size = int(size)
        self.walls = room_layout(self.size)
        mid = self.size // 2
        self.start = (0, 0)
        self.goal_cells = [
            (r, c)
            for r in range(mid + 1, self.size)
            for c in range(mid + 1, self.size)
            if not self.walls[r, c]
        ]
        dim = 2 * self.size * self.size
        self.obs_layout = (2, self.size, self.size)
        self.spec = EnvSpec(
            "gridrooms-v0", Box((dim,), 0.0, 1.0), Discrete(4), int(max_episode_steps)
        )
        self.agent = self.start
        self.goal = self.goal_cells[-1]

    def _obs(self):
        planes = np.zeros(self.obs_layout, dtype=OBS_DTYPE)
        planes[0][self.agent] = 1.0
        planes[1][self.goal] = 1.0
        return planes.reshape(-1)

    def _reset(self, rng):
        self.agent = self.start
        self.goal = self.goal_cells[int(rng.integers(len(self.goal_cells)))]
        return self._obs()

    def _step(self, action):
        dr, dc = MOVES[int(action)]
        r, c = self.agent[0] + dr, self.agent[1] + dc
        if 0 <= r < self.size and 0 <= c < self.size and not self.walls[r, c]:
            self.agent = (r, c)
        reached = self.agent == self.goal
        return self._obs(), 1.0 if reached else 0.0, reached, {"reached_goal": reached}


register_env("gridrooms-v0", GridRoomsEnv, {"size": 21, "max_episode_steps": 150})
