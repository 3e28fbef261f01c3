"""
    Scripted environment: replays a fixed sequence of observations and expert actions.
    Used as a deterministic oracle for changepoint scoring.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..utils.errors import ConfigurationError, UsageError
from .toycar import StepOutcome


@dataclass(frozen=True)
class ScriptConfig:
    """
        observations[t] is shown at step t, actions[t] is the expert action at step t
    """
    observations: Tuple[Tuple[float, ...], ...]
    actions: Tuple[Tuple[float, ...], ...]
    episode_seed: int = 0

    def validate(self):

        if len(self.actions) == 0:
            raise ConfigurationError('Script must contain at least one step')

        if len(self.observations) != len(self.actions):
            raise ConfigurationError(f'{len(self.observations)} observations but {len(self.actions)} actions in script')

        if len(set(len(o) for o in self.observations)) != 1 or len(set(len(a) for a in self.actions)) != 1:
            raise ConfigurationError('Script observations and actions must have constant dimensions')

    def __len__(self):
        return len(self.actions)

    def to_dict(self):
        return {
            'observations': [list(o) for o in self.observations],
            'actions': [list(a) for a in self.actions],
            'episode_seed': self.episode_seed
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            observations=tuple(tuple(float(v) for v in o) for o in d['observations']),
            actions=tuple(tuple(float(v) for v in a) for a in d['actions']),
            episode_seed=int(d.get('episode_seed', 0))
        )


@dataclass(frozen=True)
class ScriptState:
    step_index: int = 0
    terminal: bool = False

    def to_dict(self):
        return {'step_index': self.step_index, 'terminal': self.terminal}


def script_from_actions(actions, observations=None):
    """
        Builds a script from a list of scalar (or vector) actions. Observations default to the normalized step index.
    """

    actions = [tuple(np.atleast_1d(np.asarray(a, dtype=np.float64)).tolist()) for a in actions]
    if observations is None:
        n = len(actions)
        observations = [(t / max(n - 1, 1),) for t in range(n)]
    else:
        observations = [tuple(np.atleast_1d(np.asarray(o, dtype=np.float64)).tolist()) for o in observations]

    return ScriptConfig(tuple(observations), tuple(actions))


def constant_script(length, value=1.0):
    return script_from_actions([value] * length)


def single_switch_script(length, switch_index, before=-1.0, after=1.0):
    """
        Expert emits `before` until switch_index, then `after` from switch_index on
    """
    if not 0 < switch_index < length:
        raise ConfigurationError(f'switch_index must be in (0, {length}), got {switch_index}')
    return script_from_actions([before if t < switch_index else after for t in range(length)])


def alternating_script(length, first=1.0):
    return script_from_actions([first if t % 2 == 0 else -first for t in range(length)])


def scripted_reset(script):
    """Starts a replay

    Returns
    -------
        state : ScriptState
        observation : np.ndarray
    """

    # validate input
    script.validate()

    return ScriptState(0, False), np.asarray(script.observations[0], dtype=np.float64)


def scripted_step(state, action, script):
    """Advances the replay one step; the executed action has no effect on the script

    Returns
    -------
        state : ScriptState
        outcome : StepOutcome
    """

    if state.terminal or state.step_index >= len(script):
        raise UsageError(f'Stepping past the end of a script of length {len(script)}')

    step_index = state.step_index + 1
    done = step_index >= len(script)

    if done:
        observation = np.asarray(script.observations[-1], dtype=np.float64)
    else:
        observation = np.asarray(script.observations[step_index], dtype=np.float64)

    outcome = StepOutcome(
        observation=observation,
        reward=1.0 if done else 0.0,
        done=done,
        reached_goal=done
    )

    return ScriptState(step_index, done), outcome


def scripted_expert(state, script):
    return np.asarray(script.actions[state.step_index], dtype=np.float64)


class ScriptedEnv:
    """
        Stateful wrapper around scripted_reset / scripted_step
    """

    def __init__(self, config):
        config.validate()
        self.config = config
        self.obs_dim = len(config.observations[0])
        self.action_dim = len(config.actions[0])
        self.state = None

    def reset(self, episode_seed=None):
        self.state, observation = scripted_reset(self.config)
        return observation

    def step(self, action):
        if self.state is None:
            raise UsageError('Call reset before step')
        self.state, outcome = scripted_step(self.state, action, self.config)
        return outcome

    def expert_action(self):
        return scripted_expert(self.state, self.config)

    def snapshot(self):
        return self.state.to_dict()

    def progress(self):
        return float(self.state.step_index / len(self.config))

    def distance_travelled(self):
        return float(self.state.step_index)

    def elapsed_time(self):
        return float(self.state.step_index)
