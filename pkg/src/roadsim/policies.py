"""Built-in agent policies for headless runs and benchmarks.

Policies share one interface: act(view, agent_id) -> Action. They exist to
drive episodes without a learned model; randomness comes from the caller's
seeded substream so identical seeds give identical action sequences.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .agents import Action, RuleBasedModel, WorldView
from .errors import ConfigError

POLICY_NAMES = ("idle", "random", "idm")


class IdlePolicy:
    """Zero acceleration and steering every step."""

    def act(self, view: WorldView, agent_id: str) -> Action:
        return Action(0.0, 0.0)


class RandomPolicy:
    """Uniform actions within the agent's spec limits."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, view: WorldView, agent_id: str) -> Action:
        spec = view.specs[agent_id]
        accel = float(self.rng.uniform(-spec.max_decel, spec.max_accel))
        steer = float(self.rng.uniform(-spec.max_steer, spec.max_steer))
        return Action(accel, steer)


class IdmPolicy:
    """IDM car-following with pure-pursuit steering along the agent's path."""

    def __init__(self):
        self.model = RuleBasedModel()

    def act(self, view: WorldView, agent_id: str) -> Action:
        if agent_id not in view.paths:  # spawned off-lane: hold still
            return Action(0.0, 0.0)
        return self.model.decide(view, agent_id)


def make_policy(name: str, rng: Optional[np.random.Generator] = None):
    """Instantiate a built-in policy by name."""
    if name == "idle":
        return IdlePolicy()
    if name == "random":
        if rng is None:
            raise ConfigError("random policy needs a seeded rng")
        return RandomPolicy(rng)
    if name == "idm":
        return IdmPolicy()
    raise ConfigError(
        f"unknown policy {name!r}; expected one of {POLICY_NAMES}"
    )
