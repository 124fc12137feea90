"""Receding-horizon rollout: predict a chunk, execute its prefix, re-plan."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..simworld import World, check_success, step
from .core import DiffusionPolicy, observation_from_sensors


@dataclass
class RolloutRecord:
    task: str
    scenario: str
    seed: int
    actions: list = field(default_factory=list)  # executed actions, in order
    inference_calls: int = 0
    success: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def actions_array(self) -> np.ndarray:
        return np.asarray(self.actions)


def receding_horizon_control(
    policy: DiffusionPolicy,
    world: World,
    episode_len: int | None = None,
    seed: int = 0,
    render: bool = True,
) -> RolloutRecord:
    """Closed-loop control of one episode.

    Each inference conditions on the previous and current observations (the
    first iteration duplicates the current one), then exactly
    ``exec_prefix`` of the predicted actions are executed.
    """
    episode_len = world.episode_len if episode_len is None else episode_len
    record = RolloutRecord(task=world.task, scenario=world.scenario, seed=world.seed)
    tree = world.tree
    obs_cur = observation_from_sensors(tree, world.observe(render=render))
    obs_prev = obs_cur
    executed = 0
    while executed < episode_len:
        tokens = policy.build_tokens(obs_prev, obs_cur)
        chunk = policy.sample_actions(tokens, seed=seed * 100003 + record.inference_calls)
        record.inference_calls += 1
        for action in chunk.executed:
            if executed >= episode_len:
                break
            _, sensors = step(world, action, render=render)
            record.actions.append(np.asarray(action, dtype=float))
            executed += 1
            obs_prev = obs_cur
            obs_cur = observation_from_sensors(tree, sensors)
    record.success = check_success(world)
    return record


def replay_actions(world: World, actions: np.ndarray, render: bool = False) -> dict:
    """Re-execute a recorded action sequence; returns the success metrics."""
    for action in np.asarray(actions):
        step(world, action, render=render)
    return check_success(world)
